//! Error statistics over a run: per-agent clock and position errors, per-pair
//! range errors and the frame rate.

use super::runlog::{check_aligned, Flag, LogError, Quantity, Record, Role};
use crate::clock::PPM;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no estimates after the {0} s warm-up")]
    EmptyWindow(f64),
    #[error(transparent)]
    Log(#[from] LogError),
}

/// RMSE and sample standard deviation of an error series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub rmse: f64,
    pub std: f64,
    pub max_abs: f64,
    pub samples: usize,
}

impl Stat {
    pub fn of(errors: &[f64]) -> Option<Stat> {
        if errors.is_empty() {
            return None;
        }
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let ms = errors.iter().map(|e| e * e).sum::<f64>() / n;
        let var = if errors.len() > 1 {
            errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Stat {
            rmse: ms.sqrt(),
            std: var.sqrt(),
            max_abs: errors.iter().fold(0.0f64, |m, e| m.max(e.abs())),
            samples: errors.len(),
        })
    }

    fn scaled(self, k: f64) -> Stat {
        Stat {
            rmse: self.rmse * k,
            std: self.std * k,
            max_abs: self.max_abs * k,
            samples: self.samples,
        }
    }
}

/// Errors of one agent, in report units: ns, 10⁻³ ppm and cm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentMetrics {
    pub agent: u16,
    pub role: Role,
    pub offset_ns: Option<Stat>,
    pub skew_mppm: Option<Stat>,
    /// Statistics of the Euclidean position error.
    pub position_cm: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairMetrics {
    pub pair: (u16, u16),
    /// Meters.
    pub range_m: Stat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub warmup: f64,
    pub agents: Vec<AgentMetrics>,
    pub ranges: Vec<PairMetrics>,
    /// Scheduled frame rate, `1/(P·Δt_s)`, when known.
    pub frame_rate: Option<f64>,
    /// Reference-parent broadcasts per second over the window.
    pub measured_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsOptions {
    /// Leading seconds excluded from every statistic.
    pub warmup: f64,
    /// Parent whose pseudo-clock entries are reported for the other parents.
    pub reference: u16,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            warmup: 5.0,
            reference: 1,
        }
    }
}

#[derive(Default)]
struct Series {
    offset: Vec<f64>,
    skew: Vec<f64>,
    position: Vec<f64>,
}

pub fn compute_metrics(
    estimates: &[Record],
    truth: &[Record],
    opts: &MetricsOptions,
) -> Result<MetricsReport, MetricsError> {
    check_aligned(estimates, truth)?;
    let mut agents: BTreeMap<(Role, u16), Series> = BTreeMap::new();
    let mut pairs: BTreeMap<(u16, u16), Vec<f64>> = BTreeMap::new();
    let mut ref_times = Vec::new();
    let mut used = 0usize;
    for (e, t) in estimates.iter().zip(truth) {
        if e.time < opts.warmup || e.flag != Flag::Ok {
            continue;
        }
        used += 1;
        let series = || (e.role, e.agent);
        match e.quantity {
            Quantity::Clock => {
                let own_reference = e.role == Role::Parent && e.peer != opts.reference;
                if own_reference {
                    continue;
                }
                let s = agents.entry(series()).or_default();
                s.offset.push(e.value1 - t.value1);
                s.skew.push(e.value2 - t.value2);
            }
            Quantity::Position => {
                if e.role == Role::Parent && e.agent == opts.reference {
                    ref_times.push(e.time);
                }
                let err = ((e.value1 - t.value1).powi(2) + (e.value2 - t.value2).powi(2)).sqrt();
                agents.entry(series()).or_default().position.push(err);
            }
            Quantity::Range => {
                let key = (e.agent.min(e.peer), e.agent.max(e.peer));
                pairs.entry(key).or_default().push(e.value1 - t.value1);
            }
        }
    }
    if used == 0 {
        return Err(MetricsError::EmptyWindow(opts.warmup));
    }
    let measured_rate = match (ref_times.first(), ref_times.last()) {
        (Some(a), Some(b)) if b > a => Some((ref_times.len() - 1) as f64 / (b - a)),
        _ => None,
    };
    Ok(MetricsReport {
        warmup: opts.warmup,
        agents: agents
            .into_iter()
            .map(|((role, agent), s)| AgentMetrics {
                agent,
                role,
                offset_ns: Stat::of(&s.offset).map(|x| x.scaled(1e9)),
                skew_mppm: Stat::of(&s.skew).map(|x| x.scaled(1e3 / PPM)),
                position_cm: Stat::of(&s.position).map(|x| x.scaled(100.0)),
            })
            .collect(),
        ranges: pairs
            .into_iter()
            .filter_map(|(pair, errs)| Stat::of(&errs).map(|range_m| PairMetrics { pair, range_m }))
            .collect(),
        frame_rate: None,
        measured_rate,
    })
}

fn role_name(r: Role) -> &'static str {
    match r {
        Role::Parent => "parent",
        Role::Child => "child",
    }
}

#[derive(Serialize)]
struct MetricRow<'a> {
    subject: String,
    quantity: &'a str,
    statistic: &'a str,
    value: f64,
    unit: &'a str,
}

impl MetricsReport {
    pub fn agent(&self, role: Role, id: u16) -> Option<&AgentMetrics> {
        self.agents.iter().find(|a| a.role == role && a.agent == id)
    }

    pub fn role(&self, role: Role) -> impl Iterator<Item = &AgentMetrics> {
        self.agents.iter().filter(move |a| a.role == role)
    }

    /// Long-format CSV: `subject,quantity,statistic,value,unit`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), LogError> {
        let mut wr = csv::Writer::from_writer(w);
        let mut put = |subject: String, quantity: &str, unit: &str, st: &Stat| -> Result<(), csv::Error> {
            for (statistic, value) in [
                ("rmse", st.rmse),
                ("std", st.std),
                ("max", st.max_abs),
                ("samples", st.samples as f64),
            ] {
                wr.serialize(MetricRow {
                    subject: subject.clone(),
                    quantity,
                    statistic,
                    value,
                    unit: if statistic == "samples" { "count" } else { unit },
                })?;
            }
            Ok(())
        };
        for a in &self.agents {
            let subject = format!("{} {}", role_name(a.role), a.agent);
            if let Some(st) = &a.offset_ns {
                put(subject.clone(), "clock_offset", "ns", st)?;
            }
            if let Some(st) = &a.skew_mppm {
                put(subject.clone(), "clock_skew", "1e-3 ppm", st)?;
            }
            if let Some(st) = &a.position_cm {
                put(subject.clone(), "position", "cm", st)?;
            }
        }
        for p in &self.ranges {
            put(format!("pair {}-{}", p.pair.0, p.pair.1), "range", "m", &p.range_m)?;
        }
        drop(put);
        for (statistic, v) in [("nominal", self.frame_rate), ("measured", self.measured_rate)] {
            if let Some(value) = v {
                wr.serialize(MetricRow {
                    subject: "system".into(),
                    quantity: "frame_rate",
                    statistic,
                    value,
                    unit: "Hz",
                })?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Plain-text table with one row per agent and RMSE / std columns.
    pub fn to_table(&self) -> String {
        let cell = |s: &Option<Stat>, prec: usize| match s {
            Some(st) => format!("{:.prec$} / {:.prec$}", st.rmse, st.std),
            None => "-".to_string(),
        };
        let mut out = String::new();
        let _ = writeln!(out, "Estimation errors, RMSE / STD, after {} s warm-up", self.warmup);
        let _ = writeln!(
            out,
            "{:<8} {:>6} {:>22} {:>24} {:>20} {:>10}",
            "role", "agent", "clock offset (ns)", "clock skew (1e-3 ppm)", "position (cm)", "max (cm)"
        );
        for a in &self.agents {
            let max = a.position_cm.map_or("-".to_string(), |s| format!("{:.2}", s.max_abs));
            let _ = writeln!(
                out,
                "{:<8} {:>6} {:>22} {:>24} {:>20} {:>10}",
                role_name(a.role),
                a.agent,
                cell(&a.offset_ns, 3),
                cell(&a.skew_mppm, 2),
                cell(&a.position_cm, 2),
                max
            );
        }
        if !self.ranges.is_empty() {
            let _ = writeln!(out, "\nrange errors (m)");
            for p in &self.ranges {
                let _ = writeln!(
                    out,
                    "  {}-{}: RMSE {:.4}  STD {:.4}",
                    p.pair.0, p.pair.1, p.range_m.rmse, p.range_m.std
                );
            }
        }
        let _ = writeln!(out);
        if let Some(r) = self.frame_rate {
            let _ = writeln!(out, "frame rate: {r} Hz");
        }
        if let Some(r) = self.measured_rate {
            let _ = writeln!(out, "measured broadcast rate: {r:.3} Hz");
        }
        out
    }
}
