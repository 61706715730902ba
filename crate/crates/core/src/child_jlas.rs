//! Joint localization and synchronization of a passive child agent.
//!
//! One frame gives the child a TOA from every parent it heard. Each TOA is
//! modeled against a reference parent `i`:
//!
//! ```text
//! ρ_j = v_c·(T_c^i + ω_c^i·Δt_j + T_i^j + τ_j + τ_c) + ‖x_j − x_c‖
//! ```
//!
//! where `T_i^j` is recovered from the clock tables the parents broadcast and
//! `Δt_j` is the time from the reference broadcast to parent `j`'s broadcast.

use crate::channel::ToaObservation;
use crate::protocol::Packet;
use crate::ranging::propagate_remote_offset;
use nalgebra::{Matrix4, Vector2, Vector4};
use std::collections::BTreeMap;
use thiserror::Error;

/// Fewest observations that determine offset, skew and a 2D position.
pub const MIN_OBSERVATIONS: usize = 4;
/// Frames whose scaled normal matrix is worse conditioned than this are
/// rejected.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JlasError {
    #[error("reference parent {0} was not heard this frame")]
    MissingReference(u8),
    #[error("no valid clock-table path between parents {0} and {1}")]
    NoOffsetPath(u8, u8),
    #[error("only {0} usable observations, need at least {MIN_OBSERVATIONS}")]
    TooFewObservations(usize),
    #[error("geometry is degenerate (condition number {0:e})")]
    Degenerate(f64),
    #[error("solver did not converge in {0} iterations")]
    NotConverged(usize),
}

/// One D-TDMA round as seen by a child.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// `(slot, observation)` with strictly increasing slots, one per parent.
    pub observations: Vec<(u8, ToaObservation)>,
    pub reference_id: u8,
}

/// Child clock and position relative to the reference parent.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChildState {
    /// `T_c^i` at the reference broadcast, seconds.
    pub offset: f64,
    /// `ω_c^i`, ratio.
    pub skew: f64,
    pub position: Vector2<f64>,
}

/// A received packet together with the receiver-clock time it was sent at
/// (reception timestamp, or nominal slot time).
#[derive(Debug, Clone, Copy)]
pub struct Heard<'a> {
    pub packet: &'a Packet,
    pub stamp: f64,
}

/// `T_a^b` at common-clock time `target`, from the mutual table entries of
/// `a` and `b`, each propagated from its own broadcast to `target`.
pub fn pair_offset(a: &Heard<'_>, b: &Heard<'_>, target: f64) -> Option<f64> {
    let ab = a.packet.entry(b.packet.sender_id)?;
    let ba = b.packet.entry(a.packet.sender_id)?;
    let ab_now = propagate_remote_offset(ab.pseudo_offset, ab.skew, target - a.stamp);
    let ba_now = propagate_remote_offset(ba.pseudo_offset, ba.skew, target - b.stamp);
    Some(0.5 * (ab_now - ba_now))
}

/// `T_i^j` at the broadcast of `j`, averaged over the direct path and every
/// available two-hop path `T_i^m + T_m^j`.
pub fn recover_relative_offset(heard: &BTreeMap<u8, Heard<'_>>, i: u8, j: u8) -> Result<f64, JlasError> {
    if i == j {
        return Ok(0.0);
    }
    let (hi, hj) = match (heard.get(&i), heard.get(&j)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(JlasError::NoOffsetPath(i, j)),
    };
    let target = hj.stamp;
    let mut sum = 0.0;
    let mut paths = 0usize;
    if let Some(direct) = pair_offset(hi, hj, target) {
        sum += direct;
        paths += 1;
    }
    for (&m, hm) in heard {
        if m == i || m == j {
            continue;
        }
        if let (Some(im), Some(mj)) = (pair_offset(hi, hm, target), pair_offset(hm, hj, target)) {
            sum += im + mj;
            paths += 1;
        }
    }
    if paths == 0 {
        return Err(JlasError::NoOffsetPath(i, j));
    }
    Ok(sum / paths as f64)
}

pub fn pseudorange(toa: f64, v_c: f64) -> f64 {
    v_c * toa
}

/// Everything the solver needs about one parent's broadcast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JlasObservation {
    pub parent_id: u8,
    /// Pseudo-range, meters.
    pub rho: f64,
    pub parent_position: Vector2<f64>,
    /// `T_i^j` at the broadcast of `j`, seconds.
    pub relative_offset: f64,
    /// Time since the reference broadcast, seconds.
    pub gap: f64,
    /// Transmit antenna delay of the parent, seconds.
    pub antenna_tx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GapSource {
    /// Child reception timestamps.
    Timestamps,
    /// `(j − i) mod P` slots.
    Nominal { slot_interval: f64, num_parents: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JlasOptions {
    pub max_iters: usize,
    /// Stop once the scaled step is below this.
    pub tol: f64,
    /// Include the `ω·Δt` term; off only for ablation.
    pub use_skew_term: bool,
    pub gaps: GapSource,
    pub v_c: f64,
    /// Receive antenna delay of the child, seconds.
    pub antenna_rx: f64,
}

impl Default for JlasOptions {
    fn default() -> Self {
        Self {
            max_iters: 20,
            tol: 1e-9,
            use_skew_term: true,
            gaps: GapSource::Timestamps,
            v_c: crate::channel::SPEED_OF_LIGHT,
            antenna_rx: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JlasSolution {
    pub state: ChildState,
    pub iterations: usize,
    /// Final `Σ (ρ_j − h_j)²`, m².
    pub cost: f64,
    pub used: usize,
}

/// Solver unknowns in meters: `[v_c·offset, v_c·skew, x, y]`.
type Unknowns = Vector4<f64>;

fn to_unknowns(s: &ChildState, v_c: f64) -> Unknowns {
    Vector4::new(v_c * s.offset, v_c * s.skew, s.position.x, s.position.y)
}

fn from_unknowns(u: &Unknowns, v_c: f64) -> ChildState {
    ChildState {
        offset: u[0] / v_c,
        skew: u[1] / v_c,
        position: Vector2::new(u[2], u[3]),
    }
}

/// Modeled pseudo-range for one observation.
pub fn predicted_pseudorange(state: &ChildState, o: &JlasObservation, opts: &JlasOptions) -> f64 {
    let gap = if opts.use_skew_term { o.gap } else { 0.0 };
    opts.v_c * (state.offset + state.skew * gap + o.relative_offset + o.antenna_tx + opts.antenna_rx)
        + (o.parent_position - state.position).norm()
}

/// Row of `∂h/∂[offset, skew, x, y]` in physical units.
pub fn jacobian_row(state: &ChildState, o: &JlasObservation, opts: &JlasOptions) -> Vector4<f64> {
    let gap = if opts.use_skew_term { o.gap } else { 0.0 };
    let diff = state.position - o.parent_position;
    let dist = diff.norm();
    let unit = if dist > 0.0 { diff / dist } else { Vector2::zeros() };
    Vector4::new(opts.v_c, opts.v_c * gap, unit.x, unit.y)
}

fn cost(obs: &[JlasObservation], u: &Unknowns, opts: &JlasOptions) -> f64 {
    let s = from_unknowns(u, opts.v_c);
    obs.iter()
        .map(|o| (o.rho - predicted_pseudorange(&s, o, opts)).powi(2))
        .sum()
}

/// Gauss–Newton with a halving line search, from `init`.
pub fn jlas_solve(obs: &[JlasObservation], init: &ChildState, opts: &JlasOptions) -> Result<JlasSolution, JlasError> {
    if obs.len() < MIN_OBSERVATIONS {
        return Err(JlasError::TooFewObservations(obs.len()));
    }
    let v_c = opts.v_c;
    let mut u = to_unknowns(init, v_c);
    let mut c = cost(obs, &u, opts);
    let mut iterations = 0;
    loop {
        if iterations >= opts.max_iters {
            return Err(JlasError::NotConverged(iterations));
        }
        iterations += 1;
        let s = from_unknowns(&u, v_c);
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for o in obs {
            // rows in unknown units: physical row with the clock columns divided by v_c
            let mut row = jacobian_row(&s, o, opts);
            row[0] /= v_c;
            row[1] /= v_c;
            let r = o.rho - predicted_pseudorange(&s, o, opts);
            jtj += row * row.transpose();
            jtr += row * r;
        }
        if !opts.use_skew_term {
            // skew is unobservable without its term; pin it
            jtj[(1, 1)] = 1.0;
            jtr[1] = 0.0;
        }
        let d = Vector4::from_iterator((0..4).map(|k| jtj[(k, k)].sqrt().max(f64::MIN_POSITIVE)));
        let scaled = Matrix4::from_fn(|a, b| jtj[(a, b)] / (d[a] * d[b]));
        let eig = scaled.symmetric_eigenvalues();
        let cond = eig.max() / eig.min();
        if !(eig.min() > 0.0) || cond > MAX_CONDITION {
            return Err(JlasError::Degenerate(if cond.is_finite() { cond } else { f64::INFINITY }));
        }
        let rhs = Vector4::from_fn(|k, _| jtr[k] / d[k]);
        let z = scaled
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .ok_or(JlasError::Degenerate(f64::INFINITY))?;
        let step = Vector4::from_fn(|k, _| z[k] / d[k]);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand = u + step * alpha;
            let cc = cost(obs, &cand, opts);
            if cc <= c {
                accepted = Some((cand, cc));
                break;
            }
            alpha *= 0.5;
        }
        let Some((cand, cc)) = accepted else {
            // no descent left along the Gauss–Newton direction
            break;
        };
        u = cand;
        c = cc;
        if (z * alpha).norm() < opts.tol {
            break;
        }
    }
    Ok(JlasSolution {
        state: from_unknowns(&u, v_c),
        iterations,
        cost: c,
        used: obs.len(),
    })
}

/// Build solver observations from a frame. Parents whose position is not yet
/// known, or whose offset to the reference cannot be recovered, are dropped.
pub fn frame_observations(
    frame: &Frame,
    antenna_tx: impl Fn(u8) -> f64,
    opts: &JlasOptions,
) -> Result<Vec<JlasObservation>, JlasError> {
    let i = frame.reference_id;
    let stamp_of = |slot: u8, o: &ToaObservation| match opts.gaps {
        GapSource::Timestamps => o.rx_timestamp,
        GapSource::Nominal {
            slot_interval,
            num_parents,
        } => {
            let slots = (slot as i64 - i as i64).rem_euclid(num_parents as i64);
            slots as f64 * slot_interval
        }
    };
    let heard: BTreeMap<u8, Heard<'_>> = frame
        .observations
        .iter()
        .map(|(slot, o)| {
            (
                *slot,
                Heard {
                    packet: &o.packet,
                    stamp: stamp_of(*slot, o),
                },
            )
        })
        .collect();
    let reference = heard.get(&i).ok_or(JlasError::MissingReference(i))?;
    let t_ref = reference.stamp;
    let mut out = Vec::with_capacity(frame.observations.len());
    for (slot, o) in &frame.observations {
        let pos = o.packet.position;
        if !(pos.x.is_finite() && pos.y.is_finite()) {
            continue;
        }
        let Ok(rel) = recover_relative_offset(&heard, i, *slot) else {
            continue;
        };
        out.push(JlasObservation {
            parent_id: *slot,
            rho: pseudorange(o.toa, opts.v_c),
            parent_position: pos,
            relative_offset: rel,
            gap: heard[slot].stamp - t_ref,
            antenna_tx: antenna_tx(*slot),
        });
    }
    Ok(out)
}

/// Cold-start state: zero clock at the centroid of the observed parents.
pub fn cold_start(obs: &[JlasObservation]) -> ChildState {
    let n = obs.len().max(1) as f64;
    let centroid = obs.iter().fold(Vector2::zeros(), |acc, o| acc + o.parent_position) / n;
    ChildState {
        offset: 0.0,
        skew: 0.0,
        position: centroid,
    }
}
