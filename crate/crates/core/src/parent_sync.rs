//! Per-neighbor pseudo-clock tracking in parent agents.
//!
//! Parent `i` keeps one two-state Kalman filter per neighbor `j`, tracking
//! `[T̃_i^j, ω_i^j]`: the relative clock offset plus the one-way propagation
//! delay, and the relative skew. The only measurement is the TOA of packets
//! from `j`, which observes the first state directly.

use crate::clock::{process_noise_cov, psd_factor, ClockNoiseSpec};
use crate::protocol::ClockEntry;
use nalgebra::{Matrix2, Matrix2x4, Vector2};
use thiserror::Error;

/// Initial state covariance used when none is configured.
pub const DEFAULT_INIT_COV: [f64; 2] = [0.1, 1.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("initial covariance must be symmetric positive definite")]
    NotPositiveDefinite,
    #[error("reception timestamp {now} does not follow the previous one {last}")]
    NonIncreasingTimestamp { last: f64, now: f64 },
    #[error("neighbor {0} is not tracked by this filter bank")]
    UnknownNeighbor(u8),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoClockFilter {
    pub neighbor_id: u8,
    /// `[pseudo-offset (s), skew (ratio)]`.
    pub state: Vector2<f64>,
    /// Lower-triangular factor `S` of the state covariance `S·Sᵀ`.
    pub sqrt_cov: Matrix2<f64>,
    /// Local reception time of the last update; `None` before the first one.
    pub last_rx_timestamp: Option<f64>,
    pub stale: bool,
}

impl PseudoClockFilter {
    pub fn cov(&self) -> Matrix2<f64> {
        let s = &self.sqrt_cov;
        let p = s * s.transpose();
        Matrix2::new(p[(0, 0)], p[(1, 0)], p[(1, 0)], p[(1, 1)])
    }
}

pub fn filter_init(
    neighbor_id: u8,
    init_state: Vector2<f64>,
    init_cov: Matrix2<f64>,
) -> Result<PseudoClockFilter, FilterError> {
    if !(init_cov.iter().all(|v| v.is_finite()) && init_cov[(0, 1)] == init_cov[(1, 0)]) {
        return Err(FilterError::NotPositiveDefinite);
    }
    let chol = init_cov.cholesky().ok_or(FilterError::NotPositiveDefinite)?;
    Ok(PseudoClockFilter {
        neighbor_id,
        state: init_state,
        sqrt_cov: chol.l(),
        last_rx_timestamp: None,
        stale: false,
    })
}

fn transition(dt: f64) -> Matrix2<f64> {
    Matrix2::new(1.0, dt, 0.0, 1.0)
}

/// Lower-triangular `L` with `L·Lᵀ = A·Aᵀ`, by QR of `Aᵀ`.
fn triangularize(a: Matrix2x4<f64>) -> Matrix2<f64> {
    let r = a.transpose().qr().r();
    let mut l = r.transpose();
    for c in 0..2 {
        if l[(c, c)] < 0.0 {
            l[(0, c)] = -l[(0, c)];
            l[(1, c)] = -l[(1, c)];
        }
    }
    l[(0, 1)] = 0.0;
    l
}

/// Predict over `dt` local seconds. The relative clock of two independent
/// oscillators is driven by twice the single-clock spectra.
fn predict(
    state: &Vector2<f64>,
    sqrt_cov: &Matrix2<f64>,
    dt: f64,
    noise: &ClockNoiseSpec,
) -> (Vector2<f64>, Matrix2<f64>) {
    let f = transition(dt);
    let q = psd_factor(&process_noise_cov(&noise.doubled(), dt));
    let fs = f * sqrt_cov;
    let a = Matrix2x4::from_columns(&[fs.column(0), fs.column(1), q.column(0), q.column(1)]);
    (f * state, triangularize(a))
}

/// One predict/update cycle on reception of a packet from the neighbor.
///
/// `noise` holds single-clock spectra. The first reception after
/// initialization updates without predicting. The covariance is carried as a
/// Cholesky factor: the prior skew variance is some twenty orders of magnitude
/// above what one TOA leaves behind, and the plain covariance update loses
/// all precision there.
pub fn filter_step(
    f: &PseudoClockFilter,
    toa: f64,
    rx_timestamp: f64,
    noise: &ClockNoiseSpec,
    xi: f64,
) -> Result<PseudoClockFilter, FilterError> {
    let (x, s) = match f.last_rx_timestamp {
        Some(last) => {
            let dt = rx_timestamp - last;
            if !(dt > 0.0) {
                return Err(FilterError::NonIncreasingTimestamp {
                    last,
                    now: rx_timestamp,
                });
            }
            predict(&f.state, &f.sqrt_cov, dt, noise)
        }
        None => (f.state, f.sqrt_cov),
    };
    // H = [1, 0], so H·S = [S00, 0] and the innovation variance is S00² + ξ².
    let innovation_var = s[(0, 0)] * s[(0, 0)] + xi * xi;
    if !(innovation_var > 0.0) {
        // a perfectly known offset with a noiseless measurement carries no news
        return Ok(PseudoClockFilter {
            state: x,
            sqrt_cov: s,
            last_rx_timestamp: Some(rx_timestamp),
            ..f.clone()
        });
    }
    let k = Vector2::new(s[(0, 0)] * s[(0, 0)], s[(1, 0)] * s[(0, 0)]) / innovation_var;
    let x = x + k * (toa - x[0]);
    // one Givens rotation of [ξ, H·S] folds the measurement into the factor
    let c = xi / innovation_var.sqrt();
    let s = Matrix2::new(c * s[(0, 0)], 0.0, c * s[(1, 0)], s[(1, 1)]);
    Ok(PseudoClockFilter {
        neighbor_id: f.neighbor_id,
        state: x,
        sqrt_cov: s,
        last_rx_timestamp: Some(rx_timestamp),
        stale: f.stale,
    })
}

/// Extrapolate the state to `local_now` for embedding in an outgoing packet.
pub fn propagate_for_broadcast(f: &PseudoClockFilter, local_now: f64) -> Vector2<f64> {
    let elapsed = f.last_rx_timestamp.map_or(0.0, |t| local_now - t);
    Vector2::new(f.state[0] + f.state[1] * elapsed, f.state[1])
}

/// State covariance extrapolated to `local_now` without an update.
pub fn predicted_cov(f: &PseudoClockFilter, local_now: f64, noise: &ClockNoiseSpec) -> Matrix2<f64> {
    match f.last_rx_timestamp {
        Some(t) if local_now > t => {
            let s = predict(&f.state, &f.sqrt_cov, local_now - t, noise).1;
            s * s.transpose()
        }
        _ => f.cov(),
    }
}

/// True when the offset variance exceeds `cov_threshold`.
pub fn staleness_check(f: &PseudoClockFilter, cov_threshold: f64) -> bool {
    f.cov()[(0, 0)] > cov_threshold
}

/// The `P - 1` filters held by one parent.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub owner: u8,
    filters: Vec<PseudoClockFilter>,
}

impl FilterBank {
    pub fn new(owner: u8, num_parents: usize, init_cov: Matrix2<f64>) -> Result<Self, FilterError> {
        let filters = (1..=num_parents as u8)
            .filter(|&j| j != owner)
            .map(|j| filter_init(j, Vector2::zeros(), init_cov))
            .collect::<Result<_, _>>()?;
        Ok(Self { owner, filters })
    }

    pub fn filters(&self) -> &[PseudoClockFilter] {
        &self.filters
    }

    pub fn get(&self, neighbor: u8) -> Option<&PseudoClockFilter> {
        self.filters.iter().find(|f| f.neighbor_id == neighbor)
    }

    /// Update the filter keyed by `sender`; other filters are untouched.
    pub fn update(
        &mut self,
        sender: u8,
        toa: f64,
        rx_timestamp: f64,
        noise: &ClockNoiseSpec,
        xi: f64,
    ) -> Result<&PseudoClockFilter, FilterError> {
        let f = self
            .filters
            .iter_mut()
            .find(|f| f.neighbor_id == sender)
            .ok_or(FilterError::UnknownNeighbor(sender))?;
        *f = filter_step(f, toa, rx_timestamp, noise, xi)?;
        f.stale = false;
        Ok(f)
    }

    /// Clock table for a broadcast at `local_now`. Filters that never heard
    /// their neighbor, or whose extrapolated offset variance exceeds the
    /// threshold, go out with `valid = false`.
    pub fn clock_table(&mut self, local_now: f64, noise: &ClockNoiseSpec, cov_threshold: f64) -> Vec<ClockEntry> {
        self.filters
            .iter_mut()
            .map(|f| {
                if f.last_rx_timestamp.is_none() {
                    return ClockEntry::invalid(f.neighbor_id);
                }
                f.stale = predicted_cov(f, local_now, noise)[(0, 0)] > cov_threshold;
                if f.stale {
                    return ClockEntry::invalid(f.neighbor_id);
                }
                let c = propagate_for_broadcast(f, local_now);
                ClockEntry {
                    neighbor_id: f.neighbor_id,
                    pseudo_offset: c[0],
                    skew: c[1],
                    valid: true,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    const TABLE1: ClockNoiseSpec = ClockNoiseSpec {
        offset_psd: 4.7e-20,
        skew_psd: 7.5e-20,
    };
    const XI: f64 = 1.5e-10;

    fn init_cov() -> Matrix2<f64> {
        Matrix2::from_diagonal(&Vector2::new(0.1, 1.0))
    }

    fn fresh() -> PseudoClockFilter {
        filter_init(1, Vector2::zeros(), init_cov()).unwrap()
    }

    #[test]
    fn init_validation() {
        assert!(filter_init(2, Vector2::zeros(), init_cov()).is_ok());
        let bad = Matrix2::from_diagonal(&Vector2::new(-0.1, 1.0));
        assert_eq!(filter_init(2, Vector2::zeros(), bad), Err(FilterError::NotPositiveDefinite));
        let asym = Matrix2::new(1.0, 0.1, 0.2, 1.0);
        assert!(filter_init(2, Vector2::zeros(), asym).is_err());
        let f = fresh();
        assert!(!f.stale);
        assert_eq!(f.state, Vector2::zeros());
    }

    #[test]
    fn noiseless_fixed_point() {
        let mut f = fresh();
        for k in 0..50 {
            f = filter_step(&f, 2e-7, 0.005 * k as f64, &ClockNoiseSpec::zero(), 0.0).unwrap();
        }
        assert!((f.state[0] - 2e-7).abs() < 1e-12);
        assert!(f.state[1].abs() < 1e-9);
        let again = filter_step(&f, 2e-7, 0.25, &ClockNoiseSpec::zero(), 0.0).unwrap();
        assert!((again.state[0] - 2e-7).abs() < 1e-12);
    }

    #[test]
    fn noiseless_drift_converges_to_truth() {
        let (offset, skew) = (3e-7, 4e-6);
        let mut f = fresh();
        for k in 0..200 {
            let t = 0.005 * k as f64;
            f = filter_step(&f, offset + skew * t, t, &ClockNoiseSpec::zero(), 1e-15).unwrap();
        }
        let t_end = 0.005 * 199.0;
        assert!((f.state[0] - (offset + skew * t_end)).abs() < 1e-12);
        assert!((f.state[1] - skew).abs() < 1e-10);
    }

    #[test]
    fn single_step_gain_near_one() {
        let mut f = fresh();
        f.last_rx_timestamp = Some(0.0);
        let g = filter_step(&f, 1e-7, 0.005, &TABLE1, XI).unwrap();
        assert!((g.state[0] - 1e-7).abs() < 1e-12);
        // hand-evaluated scalar gain on the predicted offset variance
        let p00 = 0.1 + 0.005f64.powi(2) * 1.0;
        let k = p00 / (p00 + XI * XI);
        assert!((g.state[0] - k * 1e-7).abs() < 1e-20);
    }

    #[test]
    fn rejects_non_increasing_timestamps() {
        let f = filter_step(&fresh(), 0.0, 1.0, &TABLE1, XI).unwrap();
        assert!(matches!(
            filter_step(&f, 0.0, 1.0, &TABLE1, XI),
            Err(FilterError::NonIncreasingTimestamp { .. })
        ));
        assert!(filter_step(&f, 0.0, 0.5, &TABLE1, XI).is_err());
    }

    #[test]
    fn broadcast_extrapolation() {
        let mut f = fresh();
        f.state = Vector2::new(1e-7, 2e-6);
        f.last_rx_timestamp = Some(3.0);
        let c = propagate_for_broadcast(&f, 3.002);
        assert!((c[0] - 1.04e-7).abs() < 1e-20);
        assert_eq!(c[1], 2e-6);
        assert_eq!(propagate_for_broadcast(&f, 3.0), f.state);
        f.state[1] = 0.0;
        assert_eq!(propagate_for_broadcast(&f, 9.0)[0], 1e-7);
    }

    /// Synthetic TOA sequence of a static pair: `offset + skew·t + ξ·n`,
    /// driven by doubled single-clock noise.
    fn run_synthetic(seed: u64, seconds: f64) -> Vec<(f64, Vector2<f64>, Vector2<f64>)> {
        let mut noise_rng = stream(seed, Purpose::ClockNoise, 1, 0);
        let mut meas_rng = stream(seed, Purpose::Stamping, 1, 0);
        let mut truth = crate::clock::ClockState::new(
            noise_rng.random_range(-1e-6..1e-6),
            noise_rng.random_range(-10e-6..10e-6),
        );
        let dt = 0.005;
        let mut f = fresh();
        let mut out = vec![];
        let steps = (seconds / dt) as usize;
        for k in 0..steps {
            let t = k as f64 * dt;
            if k > 0 {
                truth = crate::clock::propagate_clock(&truth, dt, &TABLE1.doubled(), &mut noise_rng).unwrap();
            }
            let z: f64 = meas_rng.sample(StandardNormal);
            f = filter_step(&f, truth.offset + XI * z, t, &TABLE1, XI).unwrap();
            out.push((t, f.state, Vector2::new(truth.offset, truth.skew)));
        }
        out
    }

    #[test]
    fn table1_steady_state_accuracy() {
        let mut sq_off = 0.0;
        let mut sq_skew = 0.0;
        let mut n = 0.0;
        for seed in 0..5 {
            for (t, est, truth) in run_synthetic(seed, 30.0) {
                if t >= 10.0 {
                    sq_off += (est[0] - truth[0]).powi(2);
                    sq_skew += (est[1] - truth[1]).powi(2);
                    n += 1.0;
                }
            }
        }
        let rmse_off = (sq_off / n).sqrt();
        let rmse_skew = (sq_skew / n).sqrt();
        assert!(rmse_off <= 0.3e-9, "offset rmse {rmse_off:e}");
        assert!(rmse_skew <= 0.01e-6, "skew rmse {rmse_skew:e}");
    }

    #[test]
    fn staleness_after_silence() {
        let samples = run_synthetic(3, 10.0);
        let (_, last_state, _) = samples.last().copied().unwrap();
        let mut f = fresh();
        for (t, _, truth) in &samples {
            f = filter_step(&f, truth[0], *t, &TABLE1, XI).unwrap();
        }
        assert!((f.state[0] - last_state[0]).abs() < 1e-6);
        let converged = f.cov()[(0, 0)];
        let threshold = 10.0 * converged;
        assert!(!staleness_check(&f, threshold));
        assert!(!staleness_check(&f, 1e-14));
        let t_last = f.last_rx_timestamp.unwrap();
        let ahead = predicted_cov(&f, t_last + 1.0, &TABLE1);
        assert!(ahead[(0, 0)] - converged >= 2.0 * TABLE1.offset_psd + 2.0 * TABLE1.skew_psd / 3.0);
        assert!(ahead[(0, 0)] > threshold);
        let mut bank = FilterBank { owner: 2, filters: vec![f.clone()] };
        assert!(bank.clock_table(t_last + 0.005, &TABLE1, threshold)[0].valid);
        assert!(!bank.clock_table(t_last + 1.0, &TABLE1, threshold)[0].valid);
        assert!(bank.clock_table(t_last + 1.0, &TABLE1, f64::INFINITY)[0].valid);
    }

    #[test]
    fn bank_updates_only_the_sender() {
        let mut bank = FilterBank::new(3, 5, init_cov()).unwrap();
        assert_eq!(bank.filters().len(), 4);
        assert!(bank.get(3).is_none());
        let before = bank.clone();
        bank.update(5, 1e-7, 0.01, &TABLE1, XI).unwrap();
        for j in [1u8, 2, 4] {
            assert_eq!(bank.get(j), before.get(j));
        }
        assert_ne!(bank.get(5), before.get(5));
        assert_eq!(bank.update(3, 0.0, 0.02, &TABLE1, XI).unwrap_err(), FilterError::UnknownNeighbor(3));
    }

    #[test]
    fn bank_table_marks_unheard_and_stale() {
        let mut bank = FilterBank::new(1, 3, init_cov()).unwrap();
        bank.update(2, 1e-7, 0.0, &TABLE1, XI).unwrap();
        bank.update(2, 1e-7, 0.005, &TABLE1, XI).unwrap();
        let table = bank.clock_table(0.006, &TABLE1, 1e-14);
        assert_eq!(table.len(), 2);
        assert!(table[0].valid && table[0].neighbor_id == 2);
        assert!(!table[1].valid && table[1].neighbor_id == 3);
        let table = bank.clock_table(0.006, &TABLE1, 1e-40);
        assert!(!table[0].valid);
        assert!(bank.get(2).unwrap().stale);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn covariance_stays_spd(seed in any::<u64>()) {
            let mut rng = stream(seed, Purpose::Stamping, 0, 0);
            let mut f = fresh();
            let mut t = 0.0;
            for _ in 0..10_000 / 16 + 1 {
                // reception gaps from one slot up to ten lost frames
                t += rng.random_range(1e-3..0.05);
                let toa = rng.random_range(-1e-6..1e-6);
                let xi = rng.random_range(5e-11..1e-9);
                f = filter_step(&f, toa, t, &TABLE1, xi).unwrap();
                let p = f.cov();
                prop_assert_eq!(p[(0, 1)], p[(1, 0)]);
                prop_assert!(f.sqrt_cov[(0, 0)] > 0.0 && f.sqrt_cov[(1, 1)] > 0.0);
                let eig = p.symmetric_eigenvalues();
                prop_assert!(eig.min() > 0.0, "eigenvalues {:?} cov {:?}", eig, p);
            }
        }
    }
}
