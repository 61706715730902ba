//! Physical truth layer: when a broadcast arrives and what TOA the receiver
//! measures for it.
//!
//! The truth here is exact. Receiver timestamps are read through the
//! receiver's real clock at the arrival instant, so the small skew-times-
//! flight-time term that the estimators neglect is present in every
//! measurement.

use crate::clock::TimedClock;
use crate::protocol::Packet;
use crate::trajectory::Trajectory;
use nalgebra::Vector2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Propagation speed, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Additive delay on one directed link, e.g. a blocked line of sight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBias {
    pub from: u16,
    pub to: u16,
    /// Seconds.
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioSpec {
    /// Timestamping noise standard deviation, seconds.
    pub xi: f64,
    /// Per-link Bernoulli drop probability.
    #[serde(default)]
    pub loss_prob: f64,
    #[serde(default = "default_v_c")]
    pub v_c: f64,
    #[serde(default)]
    pub nlos: Vec<LinkBias>,
    /// On-air duration of one broadcast, seconds.
    #[serde(default = "default_airtime")]
    pub airtime: f64,
}

fn default_v_c() -> f64 {
    SPEED_OF_LIGHT
}

fn default_airtime() -> f64 {
    3e-4
}

impl Default for RadioSpec {
    fn default() -> Self {
        Self {
            xi: 0.0,
            loss_prob: 0.0,
            v_c: SPEED_OF_LIGHT,
            nlos: Vec::new(),
            airtime: default_airtime(),
        }
    }
}

impl RadioSpec {
    pub fn link_bias(&self, from: u16, to: u16) -> f64 {
        self.nlos
            .iter()
            .filter(|b| b.from == from && b.to == to)
            .map(|b| b.bias)
            .sum()
    }
}

/// Truth snapshot of one side of a link.
#[derive(Debug, Clone, Copy)]
pub struct Endpoint<'a> {
    pub id: u16,
    pub clock: TimedClock,
    pub trajectory: &'a Trajectory,
    pub antenna_delay_tx: f64,
    pub antenna_delay_rx: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToaObservation {
    pub sender_id: u16,
    pub receiver_id: u16,
    /// Receiver-local reception timestamp, seconds.
    pub rx_timestamp: f64,
    /// `rx_timestamp - packet.tx_timestamp` plus stamping noise, seconds.
    pub toa: f64,
    pub packet: Packet,
}

/// Arrival instant of a broadcast sent at `t_tx` from `tx_position`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub t_rx: f64,
    /// Geometric distance used for the flight time, meters.
    pub distance: f64,
}

/// Solve `t_rx = t_tx + delays + |x_tx(t_tx) - x_rx(t_rx)| / v_c`.
///
/// Two fixed-point passes; the residual is of order (v / v_c)² of the flight
/// time.
pub fn arrival(
    tx_position: Vector2<f64>,
    rx_trajectory: &Trajectory,
    t_tx: f64,
    fixed_delay: f64,
    v_c: f64,
) -> Arrival {
    let mut distance = (tx_position - rx_trajectory.position_at(t_tx)).norm();
    for _ in 0..2 {
        let t_rx = t_tx + fixed_delay + distance / v_c;
        distance = (tx_position - rx_trajectory.position_at(t_rx)).norm();
    }
    Arrival {
        t_rx: t_tx + fixed_delay + distance / v_c,
        distance,
    }
}

/// Bernoulli drop decision. Draws exactly one uniform.
pub fn is_lost<R: Rng + ?Sized>(loss_prob: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    u < loss_prob
}

/// Measured TOA. Draws exactly one standard normal.
pub fn measure_toa<R: Rng + ?Sized>(
    rx_timestamp: f64,
    tx_timestamp: f64,
    xi: f64,
    rng: &mut R,
) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    rx_timestamp - tx_timestamp + xi * z
}

/// Random streams owned by one directed link.
pub struct LinkStreams<'r, R: Rng + ?Sized> {
    pub stamping: &'r mut R,
    pub loss: &'r mut R,
}

/// Deliver `packet`, broadcast by `tx` at absolute `t_tx`, to `rx`.
///
/// Clocks are extrapolated without process noise from their epochs; the
/// simulator advances clocks itself and uses the pieces above directly.
pub fn propagate<R: Rng + ?Sized>(
    tx: &Endpoint<'_>,
    rx: &Endpoint<'_>,
    packet: &Packet,
    t_tx: f64,
    spec: &RadioSpec,
    streams: &mut LinkStreams<'_, R>,
) -> Option<ToaObservation> {
    if is_lost(spec.loss_prob, streams.loss) {
        return None;
    }
    let fixed = tx.antenna_delay_tx + rx.antenna_delay_rx + spec.link_bias(tx.id, rx.id);
    let a = arrival(tx.trajectory.position_at(t_tx), rx.trajectory, t_tx, fixed, spec.v_c);
    let rx_timestamp = rx.clock.read(a.t_rx);
    let toa = measure_toa(rx_timestamp, packet.tx_timestamp, spec.xi, streams.stamping);
    Some(ToaObservation {
        sender_id: tx.id,
        receiver_id: rx.id,
        rx_timestamp,
        toa,
        packet: packet.clone(),
    })
}

/// Size of the integration term dropped by the estimators' TOA model:
/// `|skew| · d / v_c`.
pub fn toa_error_budget(skew: f64, d: f64, v_c: f64) -> f64 {
    skew.abs() * d / v_c
}
