//! Shared half-duplex radio medium.
//!
//! One channel is shared by every node. Any two transmissions that overlap
//! in time corrupt each other; there is no capture effect. A frame is
//! delivered to a node only if that node was listening for the whole
//! airtime and sits within radio range of the sender.

use std::collections::BTreeMap;
use std::fmt;

use crate::engine::VirtualTime;
use crate::error::{Result, SimError};
use crate::traffic::PacketId;

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Priority {
    Urgent,
    Normal,
    None,
}

impl Priority {
    pub fn as_str(self) -> &'static str {
        match self {
            Priority::Urgent => "urgent",
            Priority::Normal => "normal",
            Priority::None => "none",
        }
    }
}

impl fmt::Display for Priority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameKind {
    PreambleStrobe,
    EarlyAck,
    Data,
    Ack,
    BlockAck,
    Beacon,
    Interrupt,
}

impl FrameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::PreambleStrobe => "STROBE",
            FrameKind::EarlyAck => "EA",
            FrameKind::Data => "DATA",
            FrameKind::Ack => "ACK",
            FrameKind::BlockAck => "BACK",
            FrameKind::Beacon => "BEACON",
            FrameKind::Interrupt => "INTERRUPT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dest {
    Node(NodeId),
    Broadcast,
}

impl Dest {
    pub fn is(self, node: NodeId) -> bool {
        match self {
            Dest::Node(n) => n == node,
            Dest::Broadcast => true,
        }
    }
}

impl fmt::Display for Dest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dest::Node(n) => write!(f, "{n}"),
            Dest::Broadcast => f.write_str("*"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: FrameKind,
    pub src: NodeId,
    pub dst: Dest,
    pub priority: Priority,
    /// Microseconds on air.
    pub airtime: u64,
    pub payload: Vec<PacketId>,
    /// Position within a concatenated burst (Data frames only).
    pub burst_index: u16,
    pub burst_len: u16,
}

impl Frame {
    pub fn control(kind: FrameKind, src: NodeId, dst: Dest, priority: Priority, airtime: u64) -> Self {
        Frame { kind, src, dst, priority, airtime, payload: Vec::new(), burst_index: 0, burst_len: 0 }
    }

    pub fn is_last_in_burst(&self) -> bool {
        self.burst_index + 1 >= self.burst_len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RadioState {
    Sleep,
    Idle,
    Listen,
    Receive,
    Transmit,
}

impl RadioState {
    pub const ALL: [RadioState; 5] =
        [RadioState::Sleep, RadioState::Idle, RadioState::Listen, RadioState::Receive, RadioState::Transmit];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn hears(self) -> bool {
        matches!(self, RadioState::Listen | RadioState::Receive)
    }
}

/// Fixed frame durations in microseconds plus the base bit rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTimings {
    pub t_pre: u64,
    pub t_pre_pause: u64,
    pub t_ea: u64,
    pub t_data: u64,
    pub t_ack: u64,
    pub t_detect: u64,
    /// Bits per second.
    pub bit_rate: f64,
}

impl Default for FrameTimings {
    fn default() -> Self {
        FrameTimings {
            t_pre: 10_000,
            t_pre_pause: 10_000,
            t_ea: 10_000,
            t_data: 25_000,
            t_ack: 10_050,
            t_detect: 7_000,
            bit_rate: 18_780.0,
        }
    }
}

impl FrameTimings {
    /// Data airtime at `rate`. At the base rate this is exactly `t_data`;
    /// other rates scale it inversely.
    pub fn data_airtime(&self, rate: f64) -> u64 {
        if rate == self.bit_rate {
            self.t_data
        } else {
            (self.t_data as f64 * self.bit_rate / rate).round().max(1.0) as u64
        }
    }
}

/// Airtime of `bytes` at `rate` bits per second, rounded to the nearest µs.
pub fn airtime(bytes: u64, rate: f64) -> Result<u64> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(SimError::InvalidRate(rate));
    }
    Ok((bytes as f64 * 8.0 * 1e6 / rate).round() as u64)
}

/// Time-in-state accounting class for energy attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activity {
    Urgent,
    Normal,
    Overhead,
}

impl Activity {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_priority(p: Priority) -> Activity {
        match p {
            Priority::Urgent => Activity::Urgent,
            Priority::Normal => Activity::Normal,
            Priority::None => Activity::Overhead,
        }
    }
}

/// A closed radio-state interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateInterval {
    pub state: RadioState,
    pub activity: Activity,
    pub start: VirtualTime,
    pub end: VirtualTime,
}

/// Per-node radio-state history. Durations are accumulated per
/// `(state, activity)`; full intervals are kept only when recording is on.
#[derive(Debug, Clone)]
pub struct RadioTimeline {
    node: NodeId,
    state: RadioState,
    activity: Activity,
    since: VirtualTime,
    /// Start of the current uninterrupted Listen/Receive stretch.
    hearing_since: Option<VirtualTime>,
    totals: [[u64; 3]; 5],
    intervals: Option<Vec<StateInterval>>,
}

impl RadioTimeline {
    pub fn new(node: NodeId, initial: RadioState, record: bool) -> Self {
        RadioTimeline {
            node,
            state: initial,
            activity: Activity::Overhead,
            since: VirtualTime::ZERO,
            hearing_since: initial.hears().then_some(VirtualTime::ZERO),
            totals: [[0; 3]; 5],
            intervals: record.then(Vec::new),
        }
    }

    pub fn state(&self) -> RadioState {
        self.state
    }

    pub fn activity(&self) -> Activity {
        self.activity
    }

    pub fn hearing_since(&self) -> Option<VirtualTime> {
        self.hearing_since
    }

    /// Close the current interval at `at` and open `state`.
    pub fn set(&mut self, state: RadioState, activity: Activity, at: VirtualTime) -> Result<()> {
        if at < self.since {
            return Err(SimError::RadioOutOfOrder { node: self.node, last: self.since, at });
        }
        self.close(at);
        if !state.hears() {
            self.hearing_since = None;
        } else if self.hearing_since.is_none() {
            self.hearing_since = Some(at);
        }
        self.state = state;
        self.activity = activity;
        self.since = at;
        Ok(())
    }

    fn close(&mut self, at: VirtualTime) {
        let d = at.since(self.since);
        self.totals[self.state.index()][self.activity.index()] += d;
        if let Some(iv) = self.intervals.as_mut() {
            if d > 0 {
                iv.push(StateInterval { state: self.state, activity: self.activity, start: self.since, end: at });
            }
        }
    }

    /// Close the open interval at the end of the run.
    pub fn finish(&mut self, at: VirtualTime) {
        if at >= self.since {
            self.close(at);
            self.since = at;
        }
    }

    pub fn total_in(&self, state: RadioState, activity: Activity) -> u64 {
        self.totals[state.index()][activity.index()]
    }

    pub fn total_time(&self) -> u64 {
        self.totals.iter().flatten().sum()
    }

    pub fn intervals(&self) -> Option<&[StateInterval]> {
        self.intervals.as_deref()
    }
}

pub type TxId = u64;

#[derive(Debug, Clone)]
pub struct Transmission {
    pub id: TxId,
    pub frame: Frame,
    pub start: VirtualTime,
    pub end: VirtualTime,
    pub corrupted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SenseResult {
    Busy,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Delivered,
    Corrupted,
    Unheard,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Delivered => "delivered",
            Outcome::Corrupted => "corrupted",
            Outcome::Unheard => "unheard",
        }
    }
}

/// One line of the frame trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub start: VirtualTime,
    pub end: VirtualTime,
    pub kind: FrameKind,
    pub src: NodeId,
    pub dst: Dest,
    pub priority: Priority,
    pub outcome: Outcome,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.start.0,
            self.kind.as_str(),
            self.src,
            self.dst,
            self.priority,
            self.outcome.as_str()
        )
    }
}

/// Activity window opened by a node (carrier sense or poll).
#[derive(Debug, Clone, Copy)]
struct Watch {
    end: VirtualTime,
    busy: bool,
}

#[derive(Debug, Default)]
pub struct Channel {
    next_id: TxId,
    active: BTreeMap<TxId, Transmission>,
    watches: BTreeMap<NodeId, Watch>,
    trace: Option<Vec<TraceRecord>>,
    last_end: VirtualTime,
}

impl Channel {
    pub fn new(trace: bool) -> Self {
        Channel { trace: trace.then(Vec::new), ..Default::default() }
    }

    pub fn is_busy(&self, at: VirtualTime) -> bool {
        self.active.values().any(|t| t.start <= at && t.end > at)
    }

    /// End of the last transmission on air, or `at` when the channel is idle.
    pub fn busy_until(&self, at: VirtualTime) -> VirtualTime {
        self.active.values().filter(|t| t.end > at).map(|t| t.end).max().unwrap_or(at)
    }

    pub fn is_transmitting(&self, node: NodeId) -> bool {
        self.active.values().any(|t| t.frame.src == node)
    }

    /// Put `frame` on air from `at`. Any overlap corrupts every party.
    pub fn begin_transmission(&mut self, frame: Frame, at: VirtualTime) -> Result<Transmission> {
        if self.is_transmitting(frame.src) {
            return Err(SimError::DoubleTransmit { node: frame.src });
        }
        debug_assert!(frame.airtime > 0, "zero-length frame");
        let end = at + frame.airtime;
        let mut corrupted = false;
        for other in self.active.values_mut() {
            if other.end > at && other.start < end {
                other.corrupted = true;
                corrupted = true;
            }
        }
        for w in self.watches.values_mut() {
            if at < w.end {
                w.busy = true;
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        let tx = Transmission { id, frame, start: at, end, corrupted };
        self.active.insert(id, tx.clone());
        Ok(tx)
    }

    /// Remove a finished transmission and report whether it survived.
    pub fn end_transmission(&mut self, id: TxId) -> Option<Transmission> {
        let tx = self.active.remove(&id)?;
        self.last_end = self.last_end.max(tx.end);
        Some(tx)
    }

    pub fn record(&mut self, tx: &Transmission, outcome: Outcome) {
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRecord {
                start: tx.start,
                end: tx.end,
                kind: tx.frame.kind,
                src: tx.frame.src,
                dst: tx.frame.dst,
                priority: tx.frame.priority,
                outcome,
            });
        }
    }

    pub fn trace(&self) -> Option<&[TraceRecord]> {
        self.trace.as_deref()
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Open an activity window `[at, at + len)` for `node`. The window is
    /// immediately busy if a transmission is already on air.
    pub fn open_watch(&mut self, node: NodeId, at: VirtualTime, len: u64) {
        let busy = self.active.values().any(|t| t.end > at);
        self.watches.insert(node, Watch { end: at + len, busy });
    }

    /// Close `node`'s window and report whether any transmission overlapped it.
    pub fn close_watch(&mut self, node: NodeId) -> SenseResult {
        match self.watches.remove(&node) {
            Some(Watch { busy: true, .. }) => SenseResult::Busy,
            _ => SenseResult::Idle,
        }
    }

    pub fn peek_watch(&self, node: NodeId) -> Option<SenseResult> {
        self.watches.get(&node).map(|w| if w.busy { SenseResult::Busy } else { SenseResult::Idle })
    }
}

/// Brute-force overlap test used to cross-check collision marking.
pub fn intervals_overlap(a: (u64, u64), b: (u64, u64)) -> bool {
    a.0 < b.1 && b.0 < a.1
}
