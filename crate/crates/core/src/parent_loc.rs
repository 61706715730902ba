//! Parent topology from pairwise ranges.
//!
//! The frame is anchored at agent 1, with the x axis through agent 2 and
//! agent 3 on the positive-y side. A closed-form trilateration seeds the
//! solution; block-coordinate Gauss–Newton sweeps then use every available
//! range.
//!
//! Agents are addressed by zero-based index here (agent `k` is index `k-1`).

use nalgebra::{DMatrix, Matrix2, Vector2};
use thiserror::Error;

/// Radicand tolerance for the closed-form square root, m².
pub const RADICAND_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocError {
    #[error("need at least 3 agents, got {0}")]
    TooFewAgents(usize),
    #[error("range between agents {0} and {1} is required but missing")]
    MissingPair(usize, usize),
    #[error("agents 1 and 2 coincide; the frame is undefined")]
    DegenerateBaseline,
    #[error("ranges for agent {agent} are inconsistent (radicand {radicand})")]
    Inconsistent { agent: usize, radicand: f64 },
    #[error("initial topology violates the gauge constraints")]
    GaugeViolated,
}

/// Symmetric range matrix with per-pair availability.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    d: DMatrix<f64>,
    mask: DMatrix<bool>,
}

impl DistanceMatrix {
    pub fn new(n: usize) -> Self {
        let mut mask = DMatrix::from_element(n, n, false);
        for i in 0..n {
            mask[(i, i)] = true;
        }
        Self {
            d: DMatrix::zeros(n, n),
            mask,
        }
    }

    pub fn from_positions(points: &[Vector2<f64>]) -> Self {
        let mut m = Self::new(points.len());
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                m.set(i, j, (points[i] - points[j]).norm());
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.d.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Set both `(i, j)` and `(j, i)`. Negative inputs are clamped to zero.
    pub fn set(&mut self, i: usize, j: usize, range: f64) {
        let r = range.max(0.0);
        self.d[(i, j)] = r;
        self.d[(j, i)] = r;
        self.mask[(i, j)] = true;
        self.mask[(j, i)] = true;
    }

    pub fn clear(&mut self, i: usize, j: usize) {
        if i != j {
            self.mask[(i, j)] = false;
            self.mask[(j, i)] = false;
            self.d[(i, j)] = 0.0;
            self.d[(j, i)] = 0.0;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.mask[(i, j)].then(|| self.d[(i, j)])
    }

    fn require(&self, i: usize, j: usize) -> Result<f64, LocError> {
        self.get(i, j).ok_or(LocError::MissingPair(i + 1, j + 1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub positions: Vec<Vector2<f64>>,
}

impl Topology {
    pub fn satisfies_gauge(&self) -> bool {
        let p = &self.positions;
        p.len() >= 3 && p[0].x == 0.0 && p[0].y == 0.0 && p[1].y == 0.0 && p[2].y >= 0.0
    }
}

/// Rigid map into the gauge frame fixed by three anchor points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeTransform {
    origin: Vector2<f64>,
    cos: f64,
    sin: f64,
    flip: bool,
}

impl GaugeTransform {
    /// `anchors[0]` maps to the origin, `anchors[1]` onto the positive x
    /// axis and `anchors[2]`, if given, to non-negative y.
    pub fn from_anchors(anchors: &[Vector2<f64>]) -> Self {
        let origin = anchors[0];
        let axis = anchors[1] - origin;
        let len = axis.norm();
        let (cos, sin) = if len > 0.0 { (axis.x / len, axis.y / len) } else { (1.0, 0.0) };
        let mut t = Self {
            origin,
            cos,
            sin,
            flip: false,
        };
        t.flip = anchors.len() > 2 && t.apply(anchors[2]).y < 0.0;
        t
    }

    pub fn apply(&self, p: Vector2<f64>) -> Vector2<f64> {
        let q = p - self.origin;
        let y = -self.sin * q.x + self.cos * q.y;
        Vector2::new(self.cos * q.x + self.sin * q.y, if self.flip { -y } else { y })
    }
}

/// Express `points` in the gauge frame: index 0 at the origin, index 1 on the
/// positive x axis, index 2 at non-negative y.
pub fn gauge_frame(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let t = GaugeTransform::from_anchors(points);
    let len = (points[1] - points[0]).norm();
    points
        .iter()
        .enumerate()
        .map(|(k, p)| match k {
            0 => Vector2::zeros(),
            1 => Vector2::new(len, 0.0),
            _ => t.apply(*p),
        })
        .collect()
}

/// Closed-form trilateration against agents 1 and 2, with the branch of each
/// later agent chosen by its range to agent 3.
pub fn closed_form_init(d: &DistanceMatrix) -> Result<Topology, LocError> {
    let n = d.len();
    if n < 3 {
        return Err(LocError::TooFewAgents(n));
    }
    let d21 = d.require(1, 0)?;
    if !(d21 > 0.0) {
        return Err(LocError::DegenerateBaseline);
    }
    let mut positions = vec![Vector2::zeros(), Vector2::new(d21, 0.0)];
    for i in 2..n {
        let di1 = d.require(i, 0)?;
        let di2 = d.require(i, 1)?;
        let x = (d21 * d21 + di1 * di1 - di2 * di2) / (2.0 * d21);
        let radicand = di1 * di1 - x * x;
        if radicand < -RADICAND_EPS {
            return Err(LocError::Inconsistent {
                agent: i + 1,
                radicand,
            });
        }
        let y = radicand.max(0.0).sqrt();
        let p = if i == 2 {
            Vector2::new(x, y)
        } else {
            let di3 = d.require(i, 2)?;
            let up = Vector2::new(x, y);
            let down = Vector2::new(x, -y);
            let miss = |q: Vector2<f64>| (di3 - (q - positions[2]).norm()).abs();
            if miss(down) < miss(up) {
                down
            } else {
                up
            }
        };
        positions.push(p);
    }
    Ok(Topology { positions })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    /// Maximum number of sweeps over all agents.
    pub max_iters: usize,
    /// Stop once the largest block step in a sweep is below this, meters.
    pub tol: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iters: 5,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub topology: Topology,
    pub converged: bool,
    /// Sweeps performed.
    pub iterations: usize,
    /// Cost of the initial and of every accepted sweep.
    pub cost_log: Vec<f64>,
}

/// `½ Σ (d_ij − ‖x_j − x_i‖)²` over available pairs.
pub fn topology_cost(d: &DistanceMatrix, positions: &[Vector2<f64>]) -> f64 {
    let n = positions.len();
    let mut cost = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            if let Some(r) = d.get(i, j) {
                cost += 0.5 * (r - (positions[j] - positions[i]).norm()).powi(2);
            }
        }
    }
    cost
}

fn block_cost(d: &DistanceMatrix, positions: &[Vector2<f64>], k: usize, at: Vector2<f64>) -> f64 {
    (0..positions.len())
        .filter(|&j| j != k)
        .filter_map(|j| d.get(k, j).map(|r| 0.5 * (r - (positions[j] - at).norm()).powi(2)))
        .sum()
}

/// Gauss–Newton step for agent `k` against the current neighbor estimates.
/// Agent index 1 moves along x only.
fn block_step(d: &DistanceMatrix, positions: &[Vector2<f64>], k: usize) -> Option<Vector2<f64>> {
    let xk = positions[k];
    let mut jtj = Matrix2::zeros();
    let mut jtr = Vector2::zeros();
    for (j, xj) in positions.iter().enumerate() {
        if j == k {
            continue;
        }
        let Some(r) = d.get(k, j) else { continue };
        let diff = xj - xk;
        let dist = diff.norm();
        if dist == 0.0 {
            continue;
        }
        // residual r_j = d_kj − ‖x_j − x_k‖; ∂r_j/∂x_k = (x_j − x_k)/‖·‖
        let g = diff / dist;
        let g = if k == 1 { Vector2::new(g.x, 0.0) } else { g };
        jtj += g * g.transpose();
        jtr += g * (r - dist);
    }
    if k == 1 {
        (jtj[(0, 0)] > 1e-12).then(|| Vector2::new(-jtr.x / jtj[(0, 0)], 0.0))
    } else {
        let det = jtj.determinant();
        if !(det.abs() > 1e-12 * jtj.norm_squared().max(1e-300)) {
            return None;
        }
        jtj.try_inverse().map(|inv| -(inv * jtr))
    }
}

/// Block-coordinate Gauss–Newton refinement with a halving line search per
/// block. Agent 1 and the y of agent 2 never move; if agent 3 ends below the
/// x axis the solution is mirrored.
pub fn refine_topology(d: &DistanceMatrix, init: &Topology, opts: RefineOptions) -> Result<Refinement, LocError> {
    if !init.satisfies_gauge() || init.positions.len() != d.len() {
        return Err(LocError::GaugeViolated);
    }
    let mut x = init.positions.clone();
    let cost = topology_cost(d, &x);
    let mut cost_log = vec![cost];
    let mut converged = cost == 0.0;
    let mut iterations = 0;
    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let mut largest = 0.0f64;
        for k in 1..x.len() {
            let Some(step) = block_step(d, &x, k) else { continue };
            let before = block_cost(d, &x, k, x[k]);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..30 {
                let cand = x[k] + step * alpha;
                if block_cost(d, &x, k, cand) <= before {
                    accepted = Some(cand);
                    break;
                }
                alpha *= 0.5;
            }
            if let Some(cand) = accepted {
                largest = largest.max((cand - x[k]).norm());
                x[k] = cand;
            }
        }
        cost_log.push(topology_cost(d, &x));
        if largest < opts.tol {
            converged = true;
        }
    }
    if x[2].y < 0.0 {
        for p in x.iter_mut().skip(2) {
            p.y = -p.y;
        }
    }
    Ok(Refinement {
        topology: Topology { positions: x },
        converged,
        iterations,
        cost_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: f64, y: f64) -> Vector2<f64> {
        Vector2::new(x, y)
    }

    fn five() -> Vec<Vector2<f64>> {
        vec![v(0.0, 0.0), v(40.0, 0.0), v(40.0, 56.4), v(13.0, 42.5), v(50.0, 15.0)]
    }

    #[test]
    fn closed_form_triangle() {
        let d = DistanceMatrix::from_positions(&five()[..3]);
        assert!((d.get(2, 0).unwrap() - 69.14449).abs() < 1e-5);
        let t = closed_form_init(&d).unwrap();
        assert!((t.positions[2] - v(40.0, 56.4)).norm() < 1e-12);
        assert!(t.satisfies_gauge());
    }

    #[test]
    fn closed_form_all_five() {
        let t = closed_form_init(&DistanceMatrix::from_positions(&five())).unwrap();
        for (est, truth) in t.positions.iter().zip(five()) {
            assert!((est - truth).norm() < 1e-9);
        }
        assert!(t.positions[3].y > 0.0);
    }

    #[test]
    fn closed_form_picks_lower_branch() {
        let mut pts = five();
        pts[4] = v(30.0, -12.0);
        let t = closed_form_init(&DistanceMatrix::from_positions(&pts)).unwrap();
        assert!((t.positions[4] - v(30.0, -12.0)).norm() < 1e-9);
    }

    #[test]
    fn collinear_at_clamp_boundary() {
        let d = DistanceMatrix::from_positions(&[v(0.0, 0.0), v(10.0, 0.0), v(20.0, 0.0)]);
        let t = closed_form_init(&d).unwrap();
        assert_eq!(t.positions[2], v(20.0, 0.0));
    }

    #[test]
    fn closed_form_errors() {
        let mut d = DistanceMatrix::from_positions(&five());
        d.set(2, 1, 1.0);
        assert!(matches!(closed_form_init(&d), Err(LocError::Inconsistent { agent: 3, .. })));
        let mut d = DistanceMatrix::from_positions(&five());
        d.clear(3, 1);
        assert_eq!(closed_form_init(&d), Err(LocError::MissingPair(4, 2)));
        let d = DistanceMatrix::from_positions(&[v(0.0, 0.0), v(0.0, 0.0), v(3.0, 4.0)]);
        assert_eq!(closed_form_init(&d), Err(LocError::DegenerateBaseline));
        assert_eq!(
            closed_form_init(&DistanceMatrix::new(2)),
            Err(LocError::TooFewAgents(2))
        );
    }

    #[test]
    fn refine_exact_is_fixed_point() {
        let d = DistanceMatrix::from_positions(&five());
        let init = Topology { positions: five() };
        let r = refine_topology(&d, &init, RefineOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
        assert_eq!(r.cost_log, vec![0.0]);
    }

    fn perturbed(points: &[Vector2<f64>], by: f64) -> Topology {
        let mut p = points.to_vec();
        for (k, q) in p.iter_mut().enumerate() {
            match k {
                0 => {}
                1 => q.x += by,
                _ => *q += v(by, if k % 2 == 0 { by } else { -by }),
            }
        }
        Topology { positions: p }
    }

    #[test]
    fn refine_recovers_from_half_meter() {
        let truth = five();
        let d = DistanceMatrix::from_positions(&truth);
        let opts = RefineOptions {
            max_iters: 2000,
            tol: 1e-12,
        };
        let r = refine_topology(&d, &perturbed(&truth, 0.5), opts).unwrap();
        assert!(r.converged);
        for (est, t) in r.topology.positions.iter().zip(&truth) {
            assert!((est - t).norm() < 1e-6, "{est} vs {t}");
        }
        assert!(r.cost_log.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn refine_gauge_is_pinned() {
        let truth = five();
        let mut d = DistanceMatrix::from_positions(&truth);
        d.set(3, 4, 30.0);
        let r = refine_topology(&d, &perturbed(&truth, 0.3), RefineOptions::default()).unwrap();
        let p = &r.topology.positions;
        assert_eq!(p[0].x.to_bits(), 0f64.to_bits());
        assert_eq!(p[0].y.to_bits(), 0f64.to_bits());
        assert_eq!(p[1].y.to_bits(), 0f64.to_bits());
        assert!(p[2].y >= 0.0);
    }

    #[test]
    fn refine_flags_non_convergence() {
        let truth = five();
        let d = DistanceMatrix::from_positions(&truth);
        let opts = RefineOptions {
            max_iters: 1,
            tol: 1e-15,
        };
        let r = refine_topology(&d, &perturbed(&truth, 2.0), opts).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.cost_log[1] < r.cost_log[0]);
    }

    #[test]
    fn refine_rejects_gauge_violation() {
        let d = DistanceMatrix::from_positions(&five());
        let mut bad = Topology { positions: five() };
        bad.positions[1].y = 0.1;
        assert_eq!(
            refine_topology(&d, &bad, RefineOptions::default()),
            Err(LocError::GaugeViolated)
        );
    }

    #[test]
    fn reflection_yields_same_topology() {
        let truth = five();
        let mirrored: Vec<_> = truth.iter().map(|p| v(p.x, -p.y)).collect();
        let a = closed_form_init(&DistanceMatrix::from_positions(&truth)).unwrap();
        let b = closed_form_init(&DistanceMatrix::from_positions(&mirrored)).unwrap();
        for (p, q) in a.positions.iter().zip(&b.positions) {
            assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn gauge_frame_of_rotated_scene() {
        let truth = five();
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let moved: Vec<_> = truth
            .iter()
            .map(|p| v(c * p.x - s * p.y + 7.0, s * p.x + c * p.y - 2.0))
            .collect();
        for (p, q) in gauge_frame(&moved).iter().zip(&truth) {
            assert!((p - q).norm() < 1e-9);
        }
    }

    fn arb_scene() -> impl Strategy<Value = Vec<Vector2<f64>>> {
        (4usize..8).prop_flat_map(|n| {
            prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), n).prop_map(|pts| {
                pts.into_iter().map(|(x, y)| v(x, y)).collect::<Vec<_>>()
            })
        })
        .prop_filter("well-spread anchors", |p| {
            let a = p[1] - p[0];
            let b = p[2] - p[0];
            let area = 0.5 * (a.x * b.y - a.y * b.x).abs();
            let separated = p.iter().enumerate().all(|(i, q)| {
                p.iter().skip(i + 1).all(|r| (q - r).norm() > 1.0)
            });
            // later agents must not sit near the 1–2 baseline, where the branch test is ambiguous
            let g = gauge_frame(p);
            area > 100.0 && separated && g.iter().skip(3).all(|q| q.y.abs() > 0.5)
        })
    }

    proptest! {
        #[test]
        fn noiseless_distances_are_reproduced(scene in arb_scene()) {
            let d = DistanceMatrix::from_positions(&scene);
            let init = closed_form_init(&d).unwrap();
            let r = refine_topology(&d, &init, RefineOptions { max_iters: 50, tol: 1e-12 }).unwrap();
            let out = DistanceMatrix::from_positions(&r.topology.positions);
            for i in 0..scene.len() {
                for j in 0..scene.len() {
                    prop_assert!((out.get(i, j).unwrap() - d.get(i, j).unwrap()).abs() < 1e-9);
                }
            }
            let truth = gauge_frame(&scene);
            for (est, t) in r.topology.positions.iter().zip(&truth) {
                prop_assert!((est - t).norm() < 1e-6);
            }
            prop_assert!(r.cost_log.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
