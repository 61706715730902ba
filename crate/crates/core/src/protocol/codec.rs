//! Broadcast packet wire format.
//!
//! Little-endian, fixed layout:
//!
//! | field           | type        | bytes |
//! |-----------------|-------------|-------|
//! | sender_id       | u8          | 1     |
//! | tx_timestamp    | f64         | 8     |
//! | position x, y   | 2 × f64     | 16    |
//! | table length n  | u8          | 1     |
//! | per entry: neighbor_id u8, pseudo_offset f64, skew f64, valid u8 | | 18·n |
//! | CRC-32 (IEEE) over all prior bytes | u32 | 4 |
//!
//! Decoding checks, in order: buffer length, declared length, ids and flags,
//! then the CRC.

use nalgebra::Vector2;
use thiserror::Error;

pub const HEADER_LEN: usize = 1 + 8 + 16 + 1;
pub const ENTRY_LEN: usize = 1 + 8 + 8 + 1;
pub const CRC_LEN: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PacketError {
    #[error("buffer too short: need {needed} bytes, got {got}")]
    ShortBuffer { needed: usize, got: usize },
    #[error("buffer has {got} bytes but the packet declares {expected}")]
    TrailingBytes { expected: usize, got: usize },
    #[error("agent id {id} out of range for {num_parents} parents")]
    IdOutOfRange { id: u8, num_parents: usize },
    #[error("neighbor id {0} appears more than once in the clock table")]
    DuplicateNeighbor(u8),
    #[error("invalid valid-flag byte {0:#04x}")]
    InvalidFlag(u8),
    #[error("crc mismatch: packet carries {carried:#010x}, computed {computed:#010x}")]
    CrcMismatch { carried: u32, computed: u32 },
    #[error("clock table has {0} entries, at most 254 fit the wire format")]
    TableTooLarge(usize),
}

impl PacketError {
    /// Stable machine-readable name, used by the conformance vectors.
    pub fn kind(&self) -> &'static str {
        match self {
            PacketError::ShortBuffer { .. } => "short_buffer",
            PacketError::TrailingBytes { .. } => "trailing_bytes",
            PacketError::IdOutOfRange { .. } => "id_out_of_range",
            PacketError::DuplicateNeighbor(_) => "duplicate_neighbor",
            PacketError::InvalidFlag(_) => "invalid_flag",
            PacketError::CrcMismatch { .. } => "crc_mismatch",
            PacketError::TableTooLarge(_) => "table_too_large",
        }
    }
}

/// One row of a sender's pseudo-clock table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockEntry {
    pub neighbor_id: u8,
    /// Pseudo-clock offset of the sender w.r.t. the neighbor, seconds.
    pub pseudo_offset: f64,
    /// Relative skew of the sender w.r.t. the neighbor, ratio.
    pub skew: f64,
    /// False when the filter behind the entry is uninitialized or stale.
    pub valid: bool,
}

impl ClockEntry {
    pub fn invalid(neighbor_id: u8) -> Self {
        Self {
            neighbor_id,
            pseudo_offset: 0.0,
            skew: 0.0,
            valid: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub sender_id: u8,
    /// Sender-local broadcast timestamp, seconds.
    pub tx_timestamp: f64,
    pub position: Vector2<f64>,
    pub clock_table: Vec<ClockEntry>,
}

impl Packet {
    /// Number of parents implied by the table size.
    pub fn num_parents(&self) -> usize {
        self.clock_table.len() + 1
    }

    /// The valid table entry for `neighbor`, if any.
    pub fn entry(&self, neighbor: u8) -> Option<&ClockEntry> {
        self.clock_table
            .iter()
            .find(|e| e.neighbor_id == neighbor && e.valid)
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + ENTRY_LEN * self.clock_table.len() + CRC_LEN
    }

    pub fn validate(&self) -> Result<(), PacketError> {
        if self.clock_table.len() > 254 {
            return Err(PacketError::TableTooLarge(self.clock_table.len()));
        }
        check_ids(
            self.sender_id,
            self.clock_table.iter().map(|e| e.neighbor_id),
            self.num_parents(),
        )
    }
}

fn check_ids(
    sender: u8,
    neighbors: impl Iterator<Item = u8>,
    num_parents: usize,
) -> Result<(), PacketError> {
    let in_range = |id: u8| id >= 1 && (id as usize) <= num_parents;
    if !in_range(sender) {
        return Err(PacketError::IdOutOfRange {
            id: sender,
            num_parents,
        });
    }
    let mut seen = vec![false; num_parents + 1];
    for id in neighbors {
        if !in_range(id) || id == sender {
            return Err(PacketError::IdOutOfRange { id, num_parents });
        }
        if seen[id as usize] {
            return Err(PacketError::DuplicateNeighbor(id));
        }
        seen[id as usize] = true;
    }
    Ok(())
}

pub fn encode_packet(p: &Packet) -> Result<Vec<u8>, PacketError> {
    p.validate()?;
    let mut buf = Vec::with_capacity(p.encoded_len());
    buf.push(p.sender_id);
    buf.extend_from_slice(&p.tx_timestamp.to_le_bytes());
    buf.extend_from_slice(&p.position.x.to_le_bytes());
    buf.extend_from_slice(&p.position.y.to_le_bytes());
    buf.push(p.clock_table.len() as u8);
    for e in &p.clock_table {
        buf.push(e.neighbor_id);
        buf.extend_from_slice(&e.pseudo_offset.to_le_bytes());
        buf.extend_from_slice(&e.skew.to_le_bytes());
        buf.push(e.valid as u8);
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

fn f64_at(bytes: &[u8], at: usize) -> f64 {
    let mut raw = [0u8; 8];
    raw.copy_from_slice(&bytes[at..at + 8]);
    f64::from_le_bytes(raw)
}

pub fn decode_packet(bytes: &[u8]) -> Result<Packet, PacketError> {
    if bytes.len() < HEADER_LEN + CRC_LEN {
        return Err(PacketError::ShortBuffer {
            needed: HEADER_LEN + CRC_LEN,
            got: bytes.len(),
        });
    }
    let n = bytes[HEADER_LEN - 1] as usize;
    let total = HEADER_LEN + ENTRY_LEN * n + CRC_LEN;
    if bytes.len() < total {
        return Err(PacketError::ShortBuffer {
            needed: total,
            got: bytes.len(),
        });
    }
    if bytes.len() > total {
        return Err(PacketError::TrailingBytes {
            expected: total,
            got: bytes.len(),
        });
    }

    let sender_id = bytes[0];
    let entry_at = |k: usize| HEADER_LEN + ENTRY_LEN * k;
    check_ids(sender_id, (0..n).map(|k| bytes[entry_at(k)]), n + 1)?;
    for k in 0..n {
        let flag = bytes[entry_at(k) + ENTRY_LEN - 1];
        if flag > 1 {
            return Err(PacketError::InvalidFlag(flag));
        }
    }

    let body = total - CRC_LEN;
    let carried = u32::from_le_bytes([
        bytes[body],
        bytes[body + 1],
        bytes[body + 2],
        bytes[body + 3],
    ]);
    let computed = crc32fast::hash(&bytes[..body]);
    if carried != computed {
        return Err(PacketError::CrcMismatch { carried, computed });
    }

    let clock_table = (0..n)
        .map(|k| {
            let at = entry_at(k);
            ClockEntry {
                neighbor_id: bytes[at],
                pseudo_offset: f64_at(bytes, at + 1),
                skew: f64_at(bytes, at + 9),
                valid: bytes[at + 17] == 1,
            }
        })
        .collect();
    Ok(Packet {
        sender_id,
        tx_timestamp: f64_at(bytes, 1),
        position: Vector2::new(f64_at(bytes, 9), f64_at(bytes, 17)),
        clock_table,
    })
}
