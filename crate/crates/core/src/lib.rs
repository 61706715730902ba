//! Broadcast-based relative localization and clock synchronization for
//! multi-agent networks.
//!
//! Parent agents broadcast on a self-organizing TDMA schedule, track each
//! other's clocks with per-neighbor Kalman filters and solve for their shared
//! topology. Child agents only listen, and solve for their own position and
//! clock state from one frame of broadcasts. The [`sim`] module ties all of it
//! to a deterministic discrete-event truth model.

pub mod channel;
pub mod clock;
pub mod protocol;
pub mod rng;
pub mod trajectory;
pub mod parent_loc;
pub mod parent_sync;
pub mod ranging;
pub mod child_jlas;
pub mod sim;
