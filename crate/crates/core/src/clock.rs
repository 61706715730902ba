//! Drifting hardware clock model.
//!
//! An agent's clock reads `T(t) = t + offset(t)` where the offset integrates
//! the skew, and both are driven by white noise. Skew is stored as a pure
//! ratio throughout the library; ppm only appears at I/O boundaries.

use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One part per million, as a ratio.
pub const PPM: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum ClockError {
    #[error("propagation interval must be positive, got {0}")]
    NonPositiveInterval(f64),
}

/// Clock offset (seconds) and skew (ratio) relative to absolute time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClockState {
    pub offset: f64,
    pub skew: f64,
}

impl ClockState {
    pub fn new(offset: f64, skew: f64) -> Self {
        Self { offset, skew }
    }

    /// Noiseless evolution over `dt` seconds.
    pub fn extrapolate(&self, dt: f64) -> Self {
        Self {
            offset: self.offset + self.skew * dt,
            skew: self.skew,
        }
    }
}

/// White-noise power spectra driving the offset and skew.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClockNoiseSpec {
    #[serde(rename = "s_nT")]
    pub offset_psd: f64,
    #[serde(rename = "s_nW")]
    pub skew_psd: f64,
}

impl ClockNoiseSpec {
    pub fn new(offset_psd: f64, skew_psd: f64) -> Self {
        Self {
            offset_psd,
            skew_psd,
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Spectra of the difference of two independent clocks.
    pub fn doubled(&self) -> Self {
        Self::new(2.0 * self.offset_psd, 2.0 * self.skew_psd)
    }

    pub fn is_zero(&self) -> bool {
        self.offset_psd == 0.0 && self.skew_psd == 0.0
    }
}

/// Offset and skew of clock `i` with respect to clock `j`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RelativeClock {
    pub offset: f64,
    pub skew: f64,
}

impl RelativeClock {
    /// `T_i^j = T_i^0 - T_j^0`, `w_i^j = w_i^0 - w_j^0`.
    pub fn between(i: &ClockState, j: &ClockState) -> Self {
        Self {
            offset: i.offset - j.offset,
            skew: i.skew - j.skew,
        }
    }
}

impl std::ops::Neg for RelativeClock {
    type Output = Self;

    fn neg(self) -> Self {
        Self {
            offset: -self.offset,
            skew: -self.skew,
        }
    }
}

/// A clock state pinned to the absolute time at which it holds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TimedClock {
    pub epoch: f64,
    pub state: ClockState,
}

impl TimedClock {
    pub fn new(epoch: f64, state: ClockState) -> Self {
        Self { epoch, state }
    }

    /// Noiseless state at absolute time `t`.
    pub fn state_at(&self, t: f64) -> ClockState {
        self.state.extrapolate(t - self.epoch)
    }

    /// Local timestamp at absolute time `t`, extrapolating without noise.
    pub fn read(&self, t: f64) -> f64 {
        t + self.state_at(t).offset
    }

    /// Absolute time at which the local clock (extrapolated without noise)
    /// reads `local`.
    pub fn absolute_time_of(&self, local: f64) -> f64 {
        let now_local = self.read(self.epoch);
        self.epoch + (local - now_local) / (1.0 + self.state.skew)
    }

    /// Advance to absolute time `t` with process noise. A zero-length step is
    /// a no-op and draws nothing.
    pub fn advance<R: Rng + ?Sized>(
        &mut self,
        t: f64,
        noise: &ClockNoiseSpec,
        rng: &mut R,
    ) -> Result<(), ClockError> {
        let dt = t - self.epoch;
        if dt == 0.0 {
            return Ok(());
        }
        self.state = propagate_clock(&self.state, dt, noise, rng)?;
        self.epoch = t;
        Ok(())
    }
}

/// Local clock reading at absolute time `t` for a clock whose state is given
/// at `t = 0`.
pub fn read_clock(state: &ClockState, t: f64) -> f64 {
    TimedClock::new(0.0, *state).read(t)
}

/// Discrete-time process noise covariance over `dt`:
///
/// ```text
/// [[2 S_T dt + 2 S_w dt^3 / 3,  S_w dt^2],
///  [S_w dt^2,                   S_w dt  ]]
/// ```
///
/// This form is positive semi-definite only while `S_w dt^2 <= 6 S_T`.
pub fn process_noise_cov(noise: &ClockNoiseSpec, dt: f64) -> Matrix2<f64> {
    let st = noise.offset_psd;
    let sw = noise.skew_psd;
    let dt2 = dt * dt;
    let q00 = 2.0 * st * dt + 2.0 * sw * dt2 * dt / 3.0;
    let q01 = sw * dt2;
    let q11 = sw * dt;
    Matrix2::new(q00, q01, q01, q11)
}

/// Lower-triangular factor of `q`, with the Schur complement clamped at zero
/// when `q` is indefinite.
pub(crate) fn psd_factor(q: &Matrix2<f64>) -> Matrix2<f64> {
    let l00 = q[(0, 0)].max(0.0).sqrt();
    let l10 = if l00 > 0.0 { q[(1, 0)] / l00 } else { 0.0 };
    let l11 = (q[(1, 1)] - l10 * l10).max(0.0).sqrt();
    Matrix2::new(l00, 0.0, l10, l11)
}

/// One noisy step of the clock dynamics. Draws exactly two standard normals,
/// offset noise first, even when the noise spec is zero.
pub fn propagate_clock<R: Rng + ?Sized>(
    state: &ClockState,
    dt: f64,
    noise: &ClockNoiseSpec,
    rng: &mut R,
) -> Result<ClockState, ClockError> {
    if !(dt > 0.0) {
        return Err(ClockError::NonPositiveInterval(dt));
    }
    let z0: f64 = rng.sample(StandardNormal);
    let z1: f64 = rng.sample(StandardNormal);
    let l = psd_factor(&process_noise_cov(noise, dt));
    let w_offset = l[(0, 0)] * z0;
    let w_skew = l[(1, 0)] * z0 + l[(1, 1)] * z1;
    Ok(ClockState {
        offset: state.offset + state.skew * dt + w_offset,
        skew: state.skew + w_skew,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use proptest::prelude::*;

    const TABLE1: ClockNoiseSpec = ClockNoiseSpec {
        offset_psd: 4.7e-20,
        skew_psd: 7.5e-20,
    };

    #[test]
    fn perfect_clock_reads_absolute_time() {
        assert_eq!(read_clock(&ClockState::default(), 5.0), 5.0);
    }

    #[test]
    fn offset_adds_to_reading() {
        let s = ClockState::new(5e-7, 0.0);
        assert!((read_clock(&s, 10.0) - 10.0000005).abs() < 1e-15);
    }

    #[test]
    fn skew_integrates_into_offset() {
        let s = ClockState::new(0.0, 5.0 * PPM);
        assert!((read_clock(&s, 60.0) - (60.0 + 3.0e-4)).abs() < 1e-12);
    }

    #[test]
    fn noiseless_step() {
        let mut rng = stream(1, Purpose::ClockNoise, 0, 0);
        let s = propagate_clock(&ClockState::new(0.0, 1e-6), 1.0, &ClockNoiseSpec::zero(), &mut rng)
            .unwrap();
        assert_eq!(s, ClockState::new(1e-6, 1e-6));
        let z = propagate_clock(&ClockState::default(), 0.37, &ClockNoiseSpec::zero(), &mut rng)
            .unwrap();
        assert_eq!(z, ClockState::default());
    }

    #[test]
    fn rejects_non_positive_interval() {
        let mut rng = stream(1, Purpose::ClockNoise, 0, 0);
        let s = ClockState::default();
        assert_eq!(
            propagate_clock(&s, 0.0, &TABLE1, &mut rng),
            Err(ClockError::NonPositiveInterval(0.0))
        );
        assert!(propagate_clock(&s, -1.0, &TABLE1, &mut rng).is_err());
    }

    #[test]
    fn q_matrix_table1_values() {
        let q = process_noise_cov(&TABLE1, 0.005);
        // direct evaluation of each entry
        let q00: f64 = 2.0 * 4.7e-20 * 0.005 + 2.0 * 7.5e-20 * 1.25e-7 / 3.0;
        assert!((q00 - 4.7000625e-22).abs() < 1e-33);
        assert!((q[(0, 0)] - 4.7000625e-22).abs() / 4.7e-22 < 1e-12);
        assert!((q[(0, 1)] - 1.875e-24).abs() / 1.875e-24 < 1e-12);
        assert_eq!(q[(0, 1)], q[(1, 0)]);
        assert!((q[(1, 1)] - 3.75e-22).abs() / 3.75e-22 < 1e-12);
    }

    #[test]
    fn q_matrix_zero_spectra() {
        assert_eq!(process_noise_cov(&ClockNoiseSpec::zero(), 3.0), Matrix2::zeros());
    }

    #[test]
    fn q_matrix_indefinite_without_offset_noise() {
        // S_T = 0 leaves det = -S_w^2 dt^4 / 3 < 0.
        let q = process_noise_cov(&ClockNoiseSpec::new(0.0, 1e-20), 1.0);
        assert!(q.determinant() < 0.0);
        // sampling still works through the clamped factor
        let mut rng = stream(3, Purpose::ClockNoise, 0, 0);
        let s = propagate_clock(&ClockState::default(), 1.0, &ClockNoiseSpec::new(0.0, 1e-20), &mut rng)
            .unwrap();
        assert!(s.offset.is_finite() && s.skew.is_finite());
    }

    #[test]
    fn offset_increment_variance_matches_q() {
        let dt = 0.005;
        let q00 = process_noise_cov(&TABLE1, dt)[(0, 0)];
        let mut rng = stream(11, Purpose::ClockNoise, 1, 0);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let s = propagate_clock(&ClockState::default(), dt, &TABLE1, &mut rng).unwrap();
            sum += s.offset;
            sum2 += s.offset * s.offset;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!((var - q00).abs() / q00 < 0.05, "var {var:e} vs {q00:e}");
    }

    #[test]
    fn relative_clock_antisymmetry() {
        let a = ClockState::new(3e-7, 2e-6);
        let b = ClockState::new(-1e-7, -4e-6);
        let ab = RelativeClock::between(&a, &b);
        let ba = RelativeClock::between(&b, &a);
        assert_eq!(ab, -ba);
    }

    #[test]
    fn timed_clock_inverse_read() {
        let c = TimedClock::new(2.0, ClockState::new(4e-7, 3e-6));
        let t = c.absolute_time_of(7.25);
        assert!((c.read(t) - 7.25).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn noiseless_linearity(off in -1e-6f64..1e-6, skew in -2e-5f64..2e-5,
                               t1 in 0.0f64..30.0, span in 1e-3f64..30.0) {
            let mut rng = stream(5, Purpose::ClockNoise, 0, 0);
            let s0 = ClockState::new(off, skew);
            let at_t1 = s0.extrapolate(t1);
            let at_t2 = propagate_clock(&at_t1, span, &ClockNoiseSpec::zero(), &mut rng).unwrap();
            let t2 = t1 + span;
            let expected = off + skew * t2 + t2;
            prop_assert!((t2 + at_t2.offset - expected).abs() <= 1e-13);
        }

        #[test]
        fn q_symmetric_and_psd_where_defined(st in 0.0f64..1e-18, sw in 0.0f64..1e-18,
                                             dt in 1e-6f64..=10.0) {
            let q = process_noise_cov(&ClockNoiseSpec::new(st, sw), dt);
            prop_assert_eq!(q[(0, 1)], q[(1, 0)]);
            prop_assert!(q[(0, 0)] >= 0.0 && q[(1, 1)] >= 0.0);
            if sw * dt * dt <= 6.0 * st {
                let det = q.determinant();
                let scale = q[(0, 0)] * q[(1, 1)];
                prop_assert!(det >= -1e-12 * scale);
            }
        }

        #[test]
        fn seeded_trajectories_repeat(seed in any::<u64>()) {
            let run = |seed| {
                let mut rng = stream(seed, Purpose::ClockNoise, 4, 0);
                let mut s = ClockState::new(1e-7, 1e-6);
                let mut out = Vec::new();
                for _ in 0..20 {
                    s = propagate_clock(&s, 0.005, &TABLE1, &mut rng).unwrap();
                    out.push(s);
                }
                out
            };
            prop_assert_eq!(run(seed), run(seed));
        }
    }
}
