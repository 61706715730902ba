//! Parametric 2D agent trajectories.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("waypoint trajectory needs at least one point")]
    NoWaypoints,
    #[error("waypoint speed must be positive, got {0}")]
    NonPositiveSpeed(f64),
    #[error("circle radius must be non-negative, got {0}")]
    NegativeRadius(f64),
    #[error("trajectory parameters must be finite")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    Static {
        at: [f64; 2],
    },
    Linear {
        from: [f64; 2],
        velocity: [f64; 2],
    },
    /// `center + radius·(cos(phase + rate·t), sin(phase + rate·t))`, rate in rad/s.
    Circular {
        center: [f64; 2],
        radius: f64,
        rate: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Constant-speed polyline; clamps to the endpoints outside its span.
    Waypoints {
        points: Vec<[f64; 2]>,
        speed: f64,
    },
}

fn v(p: [f64; 2]) -> Vector2<f64> {
    Vector2::new(p[0], p[1])
}

impl Trajectory {
    pub fn fixed(x: f64, y: f64) -> Self {
        Trajectory::Static { at: [x, y] }
    }

    /// Circle through `start` at `t = 0`, with the center chosen at angle
    /// `phase + π` from it.
    pub fn circle_through(start: [f64; 2], radius: f64, rate: f64, phase: f64) -> Self {
        let center = [
            start[0] - radius * phase.cos(),
            start[1] - radius * phase.sin(),
        ];
        Trajectory::Circular {
            center,
            radius,
            rate,
            phase,
        }
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let finite = |p: &[f64; 2]| p.iter().all(|c| c.is_finite());
        match self {
            Trajectory::Static { at } => finite(at).then_some(()).ok_or(TrajectoryError::NonFinite),
            Trajectory::Linear { from, velocity } => (finite(from) && finite(velocity))
                .then_some(())
                .ok_or(TrajectoryError::NonFinite),
            Trajectory::Circular {
                center,
                radius,
                rate,
                phase,
            } => {
                if !(finite(center) && radius.is_finite() && rate.is_finite() && phase.is_finite())
                {
                    return Err(TrajectoryError::NonFinite);
                }
                if *radius < 0.0 {
                    return Err(TrajectoryError::NegativeRadius(*radius));
                }
                Ok(())
            }
            Trajectory::Waypoints { points, speed } => {
                if points.is_empty() {
                    return Err(TrajectoryError::NoWaypoints);
                }
                if !(*speed > 0.0) || !speed.is_finite() {
                    return Err(TrajectoryError::NonPositiveSpeed(*speed));
                }
                points
                    .iter()
                    .all(finite)
                    .then_some(())
                    .ok_or(TrajectoryError::NonFinite)
            }
        }
    }

    pub fn position_at(&self, t: f64) -> Vector2<f64> {
        match self {
            Trajectory::Static { at } => v(*at),
            Trajectory::Linear { from, velocity } => v(*from) + v(*velocity) * t,
            Trajectory::Circular {
                center,
                radius,
                rate,
                phase,
            } => {
                let a = phase + rate * t;
                v(*center) + Vector2::new(a.cos(), a.sin()) * *radius
            }
            Trajectory::Waypoints { points, speed } => {
                let mut remaining = (t.max(0.0)) * speed;
                for w in points.windows(2) {
                    let (a, b) = (v(w[0]), v(w[1]));
                    let len = (b - a).norm();
                    if remaining <= len {
                        if len == 0.0 {
                            return a;
                        }
                        return a + (b - a) * (remaining / len);
                    }
                    remaining -= len;
                }
                v(*points.last().expect("validated non-empty"))
            }
        }
    }
}

/// `position_at` as a free function.
pub fn position_at(traj: &Trajectory, t: f64) -> Vector2<f64> {
    traj.position_at(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn static_point() {
        let t = Trajectory::fixed(0.0, 0.0);
        assert_eq!(t.position_at(123.4), Vector2::zeros());
    }

    #[test]
    fn turntable_half_turn() {
        let t = Trajectory::Circular {
            center: [0.0, 0.0],
            radius: 0.8665,
            rate: 0.14,
            phase: 0.0,
        };
        let half = t.position_at(PI / 0.14);
        assert!((half - Vector2::new(-0.8665, 0.0)).norm() < 1e-12);
        let quarter = t.position_at(PI / 0.28);
        assert!((quarter - Vector2::new(0.0, 0.8665)).norm() < 1e-12);
    }

    #[test]
    fn linear_motion() {
        let t = Trajectory::Linear {
            from: [40.0, 0.0],
            velocity: [1.0, 0.0],
        };
        assert!((t.position_at(2.0) - Vector2::new(42.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn waypoints_clamp_and_interpolate() {
        let t = Trajectory::Waypoints {
            points: vec![[0.0, 0.0], [10.0, 0.0], [10.0, 5.0]],
            speed: 2.0,
        };
        assert_eq!(t.position_at(-3.0), Vector2::new(0.0, 0.0));
        assert!((t.position_at(2.5) - Vector2::new(5.0, 0.0)).norm() < 1e-12);
        assert!((t.position_at(6.0) - Vector2::new(10.0, 2.0)).norm() < 1e-12);
        assert_eq!(t.position_at(100.0), Vector2::new(10.0, 5.0));
    }

    #[test]
    fn circle_through_starts_at_point() {
        let t = Trajectory::circle_through([32.8, 25.0], 6.0, 0.18, 1.1);
        assert!((t.position_at(0.0) - Vector2::new(32.8, 25.0)).norm() < 1e-12);
    }

    #[test]
    fn continuity() {
        let trajs = [
            Trajectory::circle_through([1.0, 2.0], 3.0, 0.7, 0.2),
            Trajectory::Waypoints {
                points: vec![[0.0, 0.0], [3.0, 4.0], [3.0, -1.0]],
                speed: 1.3,
            },
        ];
        for t in &trajs {
            let mut prev = t.position_at(0.0);
            for k in 1..20_000 {
                let p = t.position_at(k as f64 * 1e-3);
                assert!((p - prev).norm() < 1e-2);
                prev = p;
            }
        }
    }

    #[test]
    fn validation() {
        assert_eq!(
            Trajectory::Waypoints {
                points: vec![],
                speed: 1.0
            }
            .validate(),
            Err(TrajectoryError::NoWaypoints)
        );
        assert!(Trajectory::Waypoints {
            points: vec![[0.0, 0.0]],
            speed: 0.0
        }
        .validate()
        .is_err());
        assert!(Trajectory::fixed(f64::NAN, 0.0).validate().is_err());
    }
}
