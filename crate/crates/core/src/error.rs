use std::path::PathBuf;

use thiserror::Error;

use crate::engine::VirtualTime;

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("event scheduled in the past: now={now}, at={at}")]
    ScheduleInPast { now: VirtualTime, at: VirtualTime },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("node {node} started a transmission while already transmitting")]
    DoubleTransmit { node: u32 },

    #[error("radio state change for node {node} out of order: last={last}, at={at}")]
    RadioOutOfOrder { node: u32, last: VirtualTime, at: VirtualTime },

    #[error("bit rate must be positive, got {0}")]
    InvalidRate(f64),

    #[error("the sink has no next hop")]
    SinkHasNoNextHop,

    #[error("unknown node {0}")]
    UnknownNode(u32),

    #[error("unexpected event {event} in state {state} at node {node}")]
    UnexpectedEvent { node: u32, state: String, event: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    ConfigLine { path: String, line: usize, message: String },

    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("no data: {0}")]
    NoData(String),
}

impl SimError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io { path: path.into(), source }
    }
}
