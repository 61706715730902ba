//! Distributed TDMA slot scheduling.
//!
//! Each parent owns slot `id` of a `P`-slot frame. It never consults a shared
//! clock: after every reception from parent `j` it re-anchors its next
//! broadcast to `(i - j) mod P` slots after the reception, and after its own
//! broadcast it falls back to one full frame.

use thiserror::Error;

/// Slack allowed between a timer wake-up and the scheduled local time.
pub const TIMER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TdmaError {
    #[error("parent {0} cannot schedule against its own packet")]
    HeardSelf(u8),
    #[error("parent id {id} out of range for {num_parents} parents")]
    IdOutOfRange { id: u8, num_parents: usize },
}

fn check_id(id: u8, num_parents: usize) -> Result<(), TdmaError> {
    if id == 0 || id as usize > num_parents {
        Err(TdmaError::IdOutOfRange { id, num_parents })
    } else {
        Ok(())
    }
}

/// Delay until the first own broadcast after power-on listening.
pub fn tdma_initial_delay(
    my_id: u8,
    first_heard: Option<u8>,
    num_parents: usize,
    slot_interval: f64,
) -> Result<f64, TdmaError> {
    check_id(my_id, num_parents)?;
    match first_heard {
        None => Ok(num_parents as f64 * slot_interval),
        Some(j) => tdma_adjust_delay(my_id, j, num_parents, slot_interval),
    }
}

/// Delay from a reception of parent `heard` to the own next broadcast.
pub fn tdma_adjust_delay(
    my_id: u8,
    heard: u8,
    num_parents: usize,
    slot_interval: f64,
) -> Result<f64, TdmaError> {
    check_id(my_id, num_parents)?;
    check_id(heard, num_parents)?;
    let (i, j, p) = (my_id as usize, heard as usize, num_parents);
    let slots = match j.cmp(&i) {
        std::cmp::Ordering::Less => i - j,
        std::cmp::Ordering::Greater => i + p - j,
        std::cmp::Ordering::Equal => return Err(TdmaError::HeardSelf(my_id)),
    };
    Ok(slots as f64 * slot_interval)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phase {
    /// Powered on, waiting to hear an existing schedule until the local
    /// deadline.
    Listening { until: f64 },
    Joined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchedulerEvent {
    OwnBroadcast { local: f64 },
    Reception { sender: u8, local: f64 },
    Timer { local: f64 },
}

/// Request to broadcast now, at the given local time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroadcastCommand {
    pub local: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerState {
    pub my_id: u8,
    pub num_parents: usize,
    pub slot_interval: f64,
    /// Local time of the next broadcast; `None` while listening or while a
    /// commanded broadcast has not been confirmed yet.
    pub next_tx: Option<f64>,
    pub last_tx: Option<f64>,
    pub phase: Phase,
}

impl SchedulerState {
    pub fn power_on(
        my_id: u8,
        num_parents: usize,
        slot_interval: f64,
        local_now: f64,
        listen_window: f64,
    ) -> Self {
        Self {
            my_id,
            num_parents,
            slot_interval,
            next_tx: None,
            last_tx: None,
            phase: Phase::Listening {
                until: local_now + listen_window,
            },
        }
    }

    /// Local time at which the owner should deliver the next `Timer` event.
    pub fn wake_time(&self) -> Option<f64> {
        match self.phase {
            Phase::Listening { until } => Some(until),
            Phase::Joined => self.next_tx,
        }
    }

    pub fn frame_length(&self) -> f64 {
        self.num_parents as f64 * self.slot_interval
    }
}

/// Advance the scheduler by one event.
pub fn scheduler_step(
    state: SchedulerState,
    event: SchedulerEvent,
) -> (SchedulerState, Option<BroadcastCommand>) {
    let mut s = state;
    match (s.phase, event) {
        (Phase::Listening { .. }, SchedulerEvent::Reception { sender, local }) => {
            if let Ok(delay) =
                tdma_initial_delay(s.my_id, Some(sender), s.num_parents, s.slot_interval)
            {
                s.phase = Phase::Joined;
                s.next_tx = Some(local + delay);
            }
            (s, None)
        }
        (Phase::Listening { until }, SchedulerEvent::Timer { local }) => {
            if local + TIMER_TOLERANCE >= until {
                // nobody on air: first powered on, broadcast right away
                s.phase = Phase::Joined;
                s.next_tx = None;
                (s, Some(BroadcastCommand { local }))
            } else {
                (s, None)
            }
        }
        (Phase::Joined, SchedulerEvent::Reception { sender, local }) => {
            if let Ok(delay) = tdma_adjust_delay(s.my_id, sender, s.num_parents, s.slot_interval)
            {
                s.next_tx = Some(local + delay);
            }
            (s, None)
        }
        (Phase::Joined, SchedulerEvent::Timer { local }) => match s.next_tx {
            Some(due) if local + TIMER_TOLERANCE >= due => {
                s.next_tx = None;
                (s, Some(BroadcastCommand { local }))
            }
            _ => (s, None),
        },
        (_, SchedulerEvent::OwnBroadcast { local }) => {
            s.phase = Phase::Joined;
            s.last_tx = Some(local);
            s.next_tx = Some(local + s.frame_length());
            (s, None)
        }
    }
}
