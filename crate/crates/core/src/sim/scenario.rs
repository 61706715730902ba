//! Declarative scenario description and its validation.

use crate::channel::RadioSpec;
use crate::clock::{ClockNoiseSpec, ClockState, PPM};
use crate::parent_sync::DEFAULT_INIT_COV;
use crate::trajectory::{Trajectory, TrajectoryError};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    /// TOML syntax or schema error; the message carries line and column.
    #[error("{0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("{role} {id}: {source}")]
    Trajectory {
        role: &'static str,
        id: u16,
        source: TrajectoryError,
    },
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

/// A fixed value or a uniform range `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Draw {
    Fixed(f64),
    Uniform { uniform: [f64; 2] },
}

impl Draw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Draw::Fixed(v) => v,
            Draw::Uniform { uniform: [lo, hi] } if lo == hi => lo,
            Draw::Uniform { uniform: [lo, hi] } => rng.random_range(lo..hi),
        }
    }

    fn check(&self, what: &str) -> Result<(), ScenarioError> {
        match *self {
            Draw::Fixed(v) if v.is_finite() => Ok(()),
            Draw::Uniform { uniform: [lo, hi] } if lo.is_finite() && hi.is_finite() && lo <= hi => Ok(()),
            _ => Err(invalid(format!("{what} must be finite with lo <= hi"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSection {
    /// Offset noise spectrum of one clock.
    #[serde(rename = "s_nT")]
    pub s_nt: f64,
    /// Skew noise spectrum of one clock.
    #[serde(rename = "s_nW")]
    pub s_nw: f64,
    /// Seconds.
    pub initial_offset: Draw,
    pub initial_skew_ppm: Draw,
}

impl ClockSection {
    pub fn noise(&self) -> ClockNoiseSpec {
        ClockNoiseSpec::new(self.s_nt, self.s_nw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GapMode {
    #[default]
    Timestamps,
    Nominal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    /// Diagonal of the initial pseudo-clock covariance `[s², 1]`.
    pub init_cov: [f64; 2],
    /// Offset variance above which a table entry is broadcast invalid, s².
    pub staleness_threshold: f64,
    pub refine_sweeps: usize,
    pub refine_tol: f64,
    pub jlas_max_iters: usize,
    pub jlas_tol: f64,
    /// Model the skew over the frame in the child solve.
    pub jlas_skew_term: bool,
    pub jlas_gaps: GapMode,
    pub reference_parent: u8,
}

/// Offset variance threshold for stale table entries, s². About 100 times
/// the median converged variance (5e-21 s²) at 1 ms slots with five parents
/// and the bundled noise levels; an entry goes stale after ~1.7 s unheard.
pub const DEFAULT_STALENESS_THRESHOLD: f64 = 5e-19;

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            init_cov: DEFAULT_INIT_COV,
            staleness_threshold: DEFAULT_STALENESS_THRESHOLD,
            refine_sweeps: 5,
            refine_tol: 1e-6,
            jlas_max_iters: 20,
            jlas_tol: 1e-9,
            jlas_skew_term: true,
            jlas_gaps: GapMode::Timestamps,
            reference_parent: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub trajectory: Trajectory,
    /// Overrides the `[clock]` draw.
    #[serde(default)]
    pub initial_offset: Option<Draw>,
    #[serde(default)]
    pub initial_skew_ppm: Option<Draw>,
    /// Absolute power-on time; parents default to a small id-based stagger.
    #[serde(default)]
    pub power_on: Option<f64>,
    #[serde(default)]
    pub antenna_delay_tx: f64,
    #[serde(default)]
    pub antenna_delay_rx: f64,
}

impl AgentSpec {
    pub fn new(trajectory: Trajectory) -> Self {
        Self {
            trajectory,
            initial_offset: None,
            initial_skew_ppm: None,
            power_on: None,
            antenna_delay_tx: 0.0,
            antenna_delay_rx: 0.0,
        }
    }
}

/// Injected jump of one agent's clock, for fault tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockStep {
    pub agent: u16,
    /// Absolute time of the jump, seconds.
    pub at: f64,
    /// Added to the clock offset, seconds.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub num_parents: usize,
    pub num_children: usize,
    /// D-TDMA slot length, seconds.
    pub slot_interval: f64,
    /// Simulated time, seconds.
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    /// Initial listening period; defaults to two frames.
    #[serde(default)]
    pub listen_window: Option<f64>,
    pub clock: ClockSection,
    pub radio: RadioSpec,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default, rename = "parent")]
    pub parents: Vec<AgentSpec>,
    #[serde(default, rename = "child")]
    pub children: Vec<AgentSpec>,
    #[serde(default, rename = "clock_step")]
    pub clock_steps: Vec<ClockStep>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ScenarioError::Parse(m) => ScenarioError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn num_agents(&self) -> usize {
        self.num_parents + self.num_children
    }

    /// Agent by 1-based id: parents first, then children.
    pub fn agent(&self, id: u16) -> &AgentSpec {
        let k = id as usize - 1;
        if k < self.num_parents {
            &self.parents[k]
        } else {
            &self.children[k - self.num_parents]
        }
    }

    pub fn is_parent(&self, id: u16) -> bool {
        (1..=self.num_parents as u16).contains(&id)
    }

    pub fn listen_window(&self) -> f64 {
        self.listen_window
            .unwrap_or(2.0 * self.num_parents as f64 * self.slot_interval)
    }

    /// Power-on time of agent `id`: explicit, else `id·Δt_s/10` for parents
    /// and zero for children.
    pub fn power_on(&self, id: u16) -> f64 {
        self.agent(id).power_on.unwrap_or(if self.is_parent(id) {
            id as f64 * self.slot_interval / 10.0
        } else {
            0.0
        })
    }

    /// Nominal estimation rate, one frame of `P` slots.
    pub fn frame_rate(&self) -> f64 {
        (1.0 / self.slot_interval) / self.num_parents as f64
    }

    /// Draw the initial clock of agent `id`.
    pub fn initial_clock<R: Rng + ?Sized>(&self, id: u16, rng: &mut R) -> ClockState {
        let a = self.agent(id);
        let offset = a.initial_offset.unwrap_or(self.clock.initial_offset).sample(rng);
        let skew = a.initial_skew_ppm.unwrap_or(self.clock.initial_skew_ppm).sample(rng);
        ClockState::new(offset, skew * PPM)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let (p, c) = (self.num_parents, self.num_children);
        if p < 3 {
            return Err(invalid(format!("num_parents must be at least 3, got {p}")));
        }
        if c > 0 && p < 4 {
            return Err(invalid("children need at least 4 parents"));
        }
        if p > 255 {
            return Err(invalid(format!("num_parents must fit a one-byte id, got {p}")));
        }
        if self.parents.len() != p {
            return Err(invalid(format!(
                "num_parents = {p} but {} [[parent]] entries",
                self.parents.len()
            )));
        }
        if self.children.len() != c {
            return Err(invalid(format!(
                "num_children = {c} but {} [[child]] entries",
                self.children.len()
            )));
        }
        if p + c > u16::MAX as usize {
            return Err(invalid("too many agents"));
        }
        if !(self.slot_interval.is_finite() && self.slot_interval > 0.0) {
            return Err(invalid("slot_interval must be positive"));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(invalid("duration must be non-negative"));
        }
        if let Some(w) = self.listen_window {
            if !(w.is_finite() && w > 0.0) {
                return Err(invalid("listen_window must be positive"));
            }
        }
        let ck = &self.clock;
        if !(ck.s_nt.is_finite() && ck.s_nt >= 0.0 && ck.s_nw.is_finite() && ck.s_nw >= 0.0) {
            return Err(invalid("clock spectra must be non-negative"));
        }
        ck.initial_offset.check("initial_offset")?;
        ck.initial_skew_ppm.check("initial_skew_ppm")?;
        let r = &self.radio;
        if !(r.xi.is_finite() && r.xi >= 0.0) {
            return Err(invalid("xi must be non-negative"));
        }
        if !(0.0..1.0).contains(&r.loss_prob) {
            return Err(invalid("loss_prob must be in [0, 1)"));
        }
        if !(r.v_c.is_finite() && r.v_c > 0.0) {
            return Err(invalid("v_c must be positive"));
        }
        if !(r.airtime.is_finite() && r.airtime >= 0.0 && r.airtime < self.slot_interval) {
            return Err(invalid("airtime must be in [0, slot_interval)"));
        }
        let total = (p + c) as u16;
        for b in &r.nlos {
            if !(1..=total).contains(&b.from) || !(1..=total).contains(&b.to) || !b.bias.is_finite() {
                return Err(invalid(format!("nlos entry {}->{} is out of range", b.from, b.to)));
            }
        }
        let e = &self.estimator;
        if !(e.init_cov.iter().all(|v| v.is_finite() && *v > 0.0)) {
            return Err(invalid("init_cov entries must be positive"));
        }
        if !(e.staleness_threshold > 0.0) {
            return Err(invalid("staleness_threshold must be positive"));
        }
        if !(1..=p as u8).contains(&e.reference_parent) {
            return Err(invalid(format!("reference_parent {} is not a parent", e.reference_parent)));
        }
        if e.jlas_max_iters == 0 {
            return Err(invalid("jlas_max_iters must be positive"));
        }
        for id in 1..=total {
            let a = self.agent(id);
            let role = if self.is_parent(id) { "parent" } else { "child" };
            a.trajectory
                .validate()
                .map_err(|source| ScenarioError::Trajectory { role, id, source })?;
            if let Some(d) = a.initial_offset {
                d.check("initial_offset")?;
            }
            if let Some(d) = a.initial_skew_ppm {
                d.check("initial_skew_ppm")?;
            }
            if let Some(t) = a.power_on {
                if !(t.is_finite() && t >= 0.0) {
                    return Err(invalid(format!("{role} {id}: power_on must be non-negative")));
                }
            }
            if !(a.antenna_delay_tx.is_finite() && a.antenna_delay_rx.is_finite()) {
                return Err(invalid(format!("{role} {id}: antenna delays must be finite")));
            }
        }
        for s in &self.clock_steps {
            if !(1..=total).contains(&s.agent) || !(s.at.is_finite() && s.at >= 0.0) || !s.offset.is_finite() {
                return Err(invalid(format!("clock_step for agent {} is out of range", s.agent)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::templates;

    #[test]
    fn table1_template_parses() {
        let s = Scenario::from_toml_str(templates::text("table1").unwrap()).unwrap();
        assert_eq!((s.num_parents, s.num_children), (5, 3));
        assert_eq!(s.radio.xi, 1.5e-10);
        assert_eq!(s.slot_interval, 0.001);
        assert_eq!(s.clock.s_nt, 4.7e-20);
        assert_eq!(s.clock.s_nw, 7.5e-20);
        assert_eq!(s.estimator.init_cov, [0.1, 1.0]);
        assert_eq!(s.frame_rate(), 200.0);
    }

    #[test]
    fn round_trips_through_toml() {
        let s = Scenario::from_toml_str(templates::text("table1").unwrap()).unwrap();
        let again = Scenario::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn rejects_too_few_parents() {
        let mut s = templates::scenario("table1").unwrap();
        s.num_parents = 3;
        s.parents.truncate(3);
        let e = s.validate().unwrap_err().to_string();
        assert!(e.contains("4 parents"), "{e}");
        s.num_children = 0;
        s.children.clear();
        s.validate().unwrap();
        s.num_parents = 2;
        s.parents.truncate(2);
        assert!(s.validate().is_err());
    }

    #[test]
    fn count_mismatch_is_reported() {
        let mut s = templates::scenario("table1").unwrap();
        s.children.pop();
        assert!(s.validate().unwrap_err().to_string().contains("[[child]]"));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = templates::text("table1").unwrap().replace("slot_interval = 0.001", "slot_interval = ");
        let e = Scenario::from_toml_str(&text).unwrap_err().to_string();
        assert!(e.contains("line"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("bogus = 1\n{}", templates::text("table1").unwrap());
        assert!(Scenario::from_toml_str(&text).is_err());
    }

    #[test]
    fn draws() {
        let mut rng = crate::rng::stream(1, crate::rng::Purpose::InitialClock, 1, 0);
        assert_eq!(Draw::Fixed(2.5).sample(&mut rng), 2.5);
        assert_eq!(Draw::Uniform { uniform: [1.0, 1.0] }.sample(&mut rng), 1.0);
        for _ in 0..1000 {
            let v = Draw::Uniform { uniform: [-5.0, 5.0] }.sample(&mut rng);
            assert!((-5.0..5.0).contains(&v));
        }
        assert!(Draw::Uniform { uniform: [1.0, 0.0] }.check("x").is_err());
    }

    #[test]
    fn defaults() {
        let s = templates::scenario("table1").unwrap();
        assert!((s.listen_window() - 0.01).abs() < 1e-15);
        assert!((s.power_on(3) - 0.0003).abs() < 1e-15);
        assert_eq!(s.power_on(6), 0.0);
    }
}
