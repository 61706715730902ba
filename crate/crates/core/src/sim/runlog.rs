//! Per-frame estimate and truth records, the event trace, and their CSV form.
//!
//! Estimates and truth are kept as two row-aligned tables with identical keys
//! so that `runlog.csv` and `truth.csv` can be diffed and joined line by line.

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Parent,
    Child,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// `value1` offset in seconds, `value2` skew as a ratio. Parents log the
    /// pseudo-clock of each neighbor, children the clock relative to the
    /// reference parent.
    Clock,
    /// `value1`, `value2`: x, y in the relative frame, meters.
    Position,
    /// `value1`: range to `peer`, meters.
    Range,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Ok,
    /// Estimate not available (stale or never-heard entry, unsolved topology).
    Invalid,
    /// Solver failed this frame; the previous estimate is carried forward.
    Held,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub frame: u64,
    /// Absolute time the value refers to, seconds.
    pub time: f64,
    pub agent: u16,
    pub role: Role,
    /// Neighbor, reference parent or range partner; 0 when not applicable.
    pub peer: u16,
    pub quantity: Quantity,
    pub value1: f64,
    pub value2: f64,
    pub flag: Flag,
}

impl Record {
    pub fn same_key(&self, other: &Record) -> bool {
        self.frame == other.frame
            && self.agent == other.agent
            && self.role == other.role
            && self.peer == other.peer
            && self.quantity == other.quantity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Broadcast,
    Reception,
    Loss,
    /// Arrived while the receiver was not yet powered on.
    Missed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Absolute time of the event, seconds.
    pub time: f64,
    pub kind: TraceKind,
    pub tx: u16,
    /// 0 for broadcasts.
    pub rx: u16,
    pub frame: u64,
    /// Absolute broadcast time of the packet.
    pub t_tx: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub estimates: Vec<Record>,
    pub truth: Vec<Record>,
    pub trace: Vec<TraceEvent>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("estimate and truth tables differ at row {0}")]
    Misaligned(usize),
}

impl RunLog {
    pub fn push(&mut self, estimate: Record, truth: Record) {
        debug_assert!(estimate.same_key(&truth));
        self.estimates.push(estimate);
        self.truth.push(truth);
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty() && self.trace.is_empty()
    }

    pub fn write_trace<W: Write>(&self, w: W) -> Result<(), LogError> {
        write_rows(&self.trace, w)
    }
}

/// Write records with a header line, even when empty.
pub fn write_records<W: Write>(records: &[Record], w: W) -> Result<(), LogError> {
    write_rows(records, w)
}

/// Column names, written explicitly so empty tables still get a header.
trait CsvRow: Serialize {
    const HEADER: &'static [&'static str];
}

impl CsvRow for Record {
    const HEADER: &'static [&'static str] = &[
        "frame", "time", "agent", "role", "peer", "quantity", "value1", "value2", "flag",
    ];
}

impl CsvRow for TraceEvent {
    const HEADER: &'static [&'static str] = &["time", "kind", "tx", "rx", "frame", "t_tx"];
}

fn write_rows<T: CsvRow, W: Write>(rows: &[T], w: W) -> Result<(), LogError> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(T::HEADER)?;
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<Record>, LogError> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize().map(|row| row.map_err(LogError::from)).collect()
}

/// Check that estimate and truth tables pair up row by row.
pub fn check_aligned(estimates: &[Record], truth: &[Record]) -> Result<(), LogError> {
    if estimates.len() != truth.len() {
        return Err(LogError::Misaligned(estimates.len().min(truth.len())));
    }
    match estimates.iter().zip(truth).position(|(e, t)| !e.same_key(t)) {
        Some(k) => Err(LogError::Misaligned(k)),
        None => Ok(()),
    }
}
