//! Discrete-event simulator for duty-cycled, priority-aware MAC protocols on
//! a linear body-area sensor chain.
//!
//! Three MACs share one engine: a receiver-initiated polling MAC with
//! traffic-adaptive polling intervals, its priority-aware extension with
//! urgent-traffic interruption, and a beacon-enabled superframe baseline with
//! guaranteed slots for urgent data.

pub mod channel;
pub mod config;
pub mod engine;
pub mod error;
pub mod mac;
pub mod metrics;
pub mod sim;
pub mod sweep;
pub mod topology;
pub mod traffic;

pub use config::SimConfig;
pub use engine::{Termination, VirtualTime};
pub use error::{Result, SimError};
pub use mac::Protocol;
pub use metrics::{summarize, RunOutput, SummaryRow};
pub use sim::{run, run_traced, SimReport, TraceOptions};
