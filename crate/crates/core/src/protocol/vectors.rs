//! Golden packets for cross-implementation conformance.

use super::codec::{
    decode_packet, encode_packet, ClockEntry, Packet, CRC_LEN, ENTRY_LEN, HEADER_LEN,
};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryFields {
    pub neighbor_id: u8,
    pub pseudo_offset: f64,
    pub skew: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketFields {
    pub sender_id: u8,
    pub tx_timestamp: f64,
    pub position: [f64; 2],
    pub clock_table: Vec<EntryFields>,
}

impl From<&Packet> for PacketFields {
    fn from(p: &Packet) -> Self {
        Self {
            sender_id: p.sender_id,
            tx_timestamp: p.tx_timestamp,
            position: [p.position.x, p.position.y],
            clock_table: p
                .clock_table
                .iter()
                .map(|e| EntryFields {
                    neighbor_id: e.neighbor_id,
                    pseudo_offset: e.pseudo_offset,
                    skew: e.skew,
                    valid: e.valid,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Expectation {
    Valid { packet: PacketFields },
    /// `kind` is a [`super::PacketError::kind`] name.
    Error { kind: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecVector {
    pub name: String,
    pub hex: String,
    pub expect: Expectation,
}

fn entry(neighbor_id: u8, pseudo_offset: f64, skew: f64) -> ClockEntry {
    ClockEntry {
        neighbor_id,
        pseudo_offset,
        skew,
        valid: true,
    }
}

fn table(sender: u8, parents: u8, f: impl Fn(u8) -> ClockEntry) -> Vec<ClockEntry> {
    (1..=parents).filter(|&j| j != sender).map(f).collect()
}

fn reseal(mut bytes: Vec<u8>) -> Vec<u8> {
    let body = bytes.len() - CRC_LEN;
    let crc = crc32fast::hash(&bytes[..body]);
    bytes[body..].copy_from_slice(&crc.to_le_bytes());
    bytes
}

fn valid(name: &str, p: Packet) -> CodecVector {
    let bytes = encode_packet(&p).expect("golden packet encodes");
    CodecVector {
        name: name.into(),
        hex: hex::encode(bytes),
        expect: Expectation::Valid {
            packet: PacketFields::from(&p),
        },
    }
}

fn invalid(name: &str, bytes: Vec<u8>, kind: &str) -> CodecVector {
    CodecVector {
        name: name.into(),
        hex: hex::encode(bytes),
        expect: Expectation::Error { kind: kind.into() },
    }
}

/// The conformance set: valid packets, including stale entries, and corrupted
/// ones with the error each must produce.
pub fn golden_vectors() -> Vec<CodecVector> {
    let three = Packet {
        sender_id: 1,
        tx_timestamp: 0.0101,
        position: Vector2::new(0.0, 0.0),
        clock_table: vec![entry(2, 1.334e-7, 2.5e-6), entry(3, -3.2e-7, -4.1e-6)],
    };
    let five = Packet {
        sender_id: 2,
        tx_timestamp: 12.345678,
        position: Vector2::new(41.25, 0.0),
        clock_table: table(2, 5, |j| entry(j, 1e-7 * j as f64, 1e-6 * j as f64)),
    };
    let mut stale = five.clone();
    stale.clock_table[2] = ClockEntry::invalid(4);
    let startup = Packet {
        sender_id: 3,
        tx_timestamp: 0.0103,
        position: Vector2::new(0.0, 0.0),
        clock_table: table(3, 5, ClockEntry::invalid),
    };
    let negative = Packet {
        sender_id: 4,
        tx_timestamp: -1.5e-3,
        position: Vector2::new(-12.5, -7.75),
        clock_table: table(4, 4, |j| entry(j, -9.9e-7, -4.999e-6)),
    };
    let ten = Packet {
        sender_id: 10,
        tx_timestamp: 59.999,
        position: Vector2::new(55.0, 52.0),
        clock_table: table(10, 10, |j| entry(j, 2.5e-8 * j as f64 - 1e-7, 3.1e-7 * j as f64)),
    };

    let base = encode_packet(&five).expect("encodes");
    let mut crc_flip = base.clone();
    *crc_flip.last_mut().expect("non-empty") ^= 0x01;
    let mut payload_flip = base.clone();
    payload_flip[3] ^= 0x40;
    let mut bad_flag = base.clone();
    bad_flag[HEADER_LEN + ENTRY_LEN - 1] = 2;
    let mut duplicate = base.clone();
    duplicate[HEADER_LEN + ENTRY_LEN] = duplicate[HEADER_LEN];
    let mut bad_sender = encode_packet(&three).expect("encodes");
    bad_sender[0] = 9;
    let mut trailing = base.clone();
    trailing.push(0);

    vec![
        valid("three_parents", three),
        valid("five_parents", five),
        valid("stale_entry", stale),
        valid("all_entries_stale", startup),
        valid("negative_values", negative),
        valid("ten_parents", ten),
        invalid("crc_bit_flip", crc_flip, "crc_mismatch"),
        invalid("payload_bit_flip", payload_flip, "crc_mismatch"),
        invalid("truncated_tail", base[..base.len() - 3].to_vec(), "short_buffer"),
        invalid("truncated_header", base[..10].to_vec(), "short_buffer"),
        invalid("empty", Vec::new(), "short_buffer"),
        invalid("trailing_byte", trailing, "trailing_bytes"),
        invalid("bad_valid_flag", reseal(bad_flag), "invalid_flag"),
        invalid("duplicate_neighbor", reseal(duplicate), "duplicate_neighbor"),
        invalid("sender_out_of_range", reseal(bad_sender), "id_out_of_range"),
    ]
}

/// Decode a vector and compare against its expectation, field by field.
pub fn check_vector(v: &CodecVector) -> Result<(), String> {
    let bytes = hex::decode(&v.hex).map_err(|e| format!("{}: bad hex: {e}", v.name))?;
    match (decode_packet(&bytes), &v.expect) {
        (Ok(p), Expectation::Valid { packet }) => {
            let got = PacketFields::from(&p);
            let same_bits = |a: f64, b: f64| a.to_bits() == b.to_bits();
            let equal = got.sender_id == packet.sender_id
                && same_bits(got.tx_timestamp, packet.tx_timestamp)
                && same_bits(got.position[0], packet.position[0])
                && same_bits(got.position[1], packet.position[1])
                && got.clock_table.len() == packet.clock_table.len()
                && got.clock_table.iter().zip(&packet.clock_table).all(|(a, b)| {
                    a.neighbor_id == b.neighbor_id
                        && same_bits(a.pseudo_offset, b.pseudo_offset)
                        && same_bits(a.skew, b.skew)
                        && a.valid == b.valid
                });
            if equal {
                Ok(())
            } else {
                Err(format!("{}: decoded {got:?}, expected {packet:?}", v.name))
            }
        }
        (Err(e), Expectation::Error { kind }) if e.kind() == kind => Ok(()),
        (got, want) => Err(format!("{}: decoded {got:?}, expected {want:?}", v.name)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_golden_vector_checks() {
        let all = golden_vectors();
        assert!(all.len() >= 10);
        for v in &all {
            check_vector(v).unwrap();
        }
        let kinds = |f: fn(&Expectation) -> bool| all.iter().filter(|v| f(&v.expect)).count();
        assert!(kinds(|e| matches!(e, Expectation::Valid { .. })) >= 5);
        assert!(all.iter().any(|v| v.name.contains("stale")));
        assert!(all.iter().any(|v| matches!(&v.expect, Expectation::Error { kind } if kind == "crc_mismatch")));
        assert!(all.iter().any(|v| v.name.starts_with("truncated")));
    }

    #[test]
    fn mismatched_expectation_is_reported() {
        let mut v = golden_vectors().remove(0);
        if let Expectation::Valid { packet } = &mut v.expect {
            packet.tx_timestamp += 1e-12;
        }
        assert!(check_vector(&v).is_err());
    }
}
