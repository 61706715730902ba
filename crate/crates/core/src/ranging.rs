//! Two-way range recovery from exchanged pseudo-clock offsets.
//!
//! Parent `i` tracks `T̃_i^j = T_i^j + τ_i^j` and parent `j` broadcasts
//! `T̃_j^i = T_j^i + τ_j^i`. The relative offsets cancel in the sum, leaving
//! twice the one-way delay.

use serde::{Deserialize, Serialize};

/// Result of one range computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeValue {
    /// Meters, never negative.
    pub range: f64,
    /// True when the raw value was negative and clamped to zero.
    pub clamped: bool,
}

/// `v_c·((local + remote)/2 − τ_tx − τ_rx)`, clamped at zero.
pub fn estimate_range(
    local_pseudo_offset: f64,
    remote_pseudo_offset: f64,
    antenna_tx: f64,
    antenna_rx: f64,
    v_c: f64,
) -> RangeValue {
    let raw = v_c * (0.5 * (local_pseudo_offset + remote_pseudo_offset) - antenna_tx - antenna_rx);
    if raw < 0.0 {
        RangeValue {
            range: 0.0,
            clamped: true,
        }
    } else {
        RangeValue {
            range: raw,
            clamped: false,
        }
    }
}

/// Align a broadcast `[pseudo_offset, skew]` entry to an instant `slot_gap`
/// seconds after it was stamped.
pub fn propagate_remote_offset(pseudo_offset: f64, skew: f64, slot_gap: f64) -> f64 {
    pseudo_offset + skew * slot_gap
}

/// Slot gap between the broadcasts of `from` and `to`, from measured
/// timestamps when given, else from nominal slot arithmetic.
pub fn slot_gap(from: u8, to: u8, num_parents: usize, slot_interval: f64, measured: Option<f64>) -> f64 {
    measured.unwrap_or_else(|| {
        let p = num_parents as i64;
        let slots = (to as i64 - from as i64).rem_euclid(p);
        slots as f64 * slot_interval
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeEstimate {
    /// Unordered pair, stored with the smaller id first.
    pub pair: (u8, u8),
    pub range: f64,
    pub at_frame: u64,
    /// Variance proxy in m²; grows with the local extrapolation gap.
    pub quality: f64,
    pub clamped: bool,
}

impl RangeEstimate {
    /// `offset_variance` is the variance of the locally tracked pseudo-offset
    /// at the ranging instant, `gap` how long it was extrapolated without an
    /// update and `skew_variance` the tracked skew variance.
    pub fn new(
        a: u8,
        b: u8,
        value: RangeValue,
        at_frame: u64,
        offset_variance: f64,
        skew_variance: f64,
        gap: f64,
        v_c: f64,
    ) -> Self {
        let var = offset_variance + skew_variance * gap * gap;
        Self {
            pair: (a.min(b), a.max(b)),
            range: value.range,
            at_frame,
            quality: 0.25 * v_c * v_c * var,
            clamped: value.clamped,
        }
    }
}
