//! Broadcast packet format and distributed slot scheduling.

pub mod codec;
pub mod tdma;
pub mod vectors;

pub use codec::{decode_packet, encode_packet, ClockEntry, Packet, PacketError};
pub use tdma::{
    scheduler_step, tdma_adjust_delay, tdma_initial_delay, BroadcastCommand, Phase,
    SchedulerEvent, SchedulerState, TdmaError,
};
