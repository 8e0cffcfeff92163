//! Event-driven long-poll SCADA gateway.
//!
//! The crate is organised around an in-process [`hub::TagHub`] that
//! behaves like an OPC DA group: writes raise data-change events, and
//! monitor requests block until a change arrives. Around it sit the plant
//! simulator, the HTTP gateway, the security policy and the benchmark
//! harness that compares fixed-timer polling against event-driven polling.

pub mod bench;
pub mod client;
pub mod clock;
pub mod gateway;
pub mod hub;
pub mod security;
pub mod sim;
pub mod wire;

pub use clock::{Clock, ManualClock, ScaledClock};
pub use hub::{Handle, Sequence, Snapshot, TagHub, TagRecord, TagWrite, WaitOutcome};
