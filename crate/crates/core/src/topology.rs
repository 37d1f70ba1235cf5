//! Linear chain of sensor nodes with the sink at its head.

use crate::channel::NodeId;
use crate::error::{Result, SimError};

pub const SINK: NodeId = 0;

/// Nodes `1..=node_count` forwarding to `i - 1`; node 0 is the sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Topology {
    node_count: u32,
}

impl Default for Topology {
    fn default() -> Self {
        Topology { node_count: 8 }
    }
}

impl Topology {
    pub fn chain(node_count: u32) -> Self {
        assert!(node_count >= 1, "chain needs at least one sensor node");
        Topology { node_count }
    }

    pub fn node_count(&self) -> u32 {
        self.node_count
    }

    pub fn sink(&self) -> NodeId {
        SINK
    }

    /// Sensor nodes, excluding the sink.
    pub fn sensors(&self) -> impl Iterator<Item = NodeId> {
        1..=self.node_count
    }

    /// Every radio, sink first.
    pub fn all(&self) -> impl Iterator<Item = NodeId> {
        0..=self.node_count
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node <= self.node_count
    }

    pub fn next_hop(&self, node: NodeId) -> Result<NodeId> {
        if node == SINK {
            return Err(SimError::SinkHasNoNextHop);
        }
        if !self.contains(node) {
            return Err(SimError::UnknownNode(node));
        }
        Ok(node - 1)
    }

    /// The node that forwards into `node`, if any.
    pub fn upstream(&self, node: NodeId) -> Option<NodeId> {
        (node < self.node_count).then_some(node + 1)
    }

    pub fn hops_to_sink(&self, node: NodeId) -> u32 {
        node
    }

    /// Radio range covers adjacent chain positions only.
    pub fn in_range(&self, a: NodeId, b: NodeId) -> bool {
        a.abs_diff(b) == 1
    }
}
