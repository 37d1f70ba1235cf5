//! One simulation run: the event loop, node state and the shared channel.
//!
//! The polling MACs live in `polling`, the superframe baseline in
//! `superframe`. Everything here is protocol-agnostic plumbing: packet
//! generation, forwarding with duplicate suppression, radio bookkeeping,
//! frame delivery and the stop condition.

mod polling;
mod superframe;

use std::collections::{HashSet, VecDeque};

use crate::channel::{
    Activity, Channel, Dest, Frame, NodeId, Outcome, Priority, RadioState, RadioTimeline, TraceRecord,
    TxId,
};
use crate::config::SimConfig;
use crate::engine::{EventHandle, EventQueue, RngStream, StreamPurpose, Termination, VirtualTime};
use crate::error::Result;
use crate::mac::adp::{AckKind, PollingPolicy, ReceiverState, SenderState};
use crate::mac::adp2::PriorityQueues;
use crate::mac::mvdr::Superframe;
use crate::mac::Protocol;
use crate::metrics::{DeliveryRecord, EnergyLedger, RunOutput};
use crate::topology::Topology;
use crate::traffic::{ArrivalHistory, Generator, Packet, PacketId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SenderTimer {
    SenseDone,
    BackoffDone,
    PauseEnd,
    GapEnd,
    AckTimeout,
    FreezeEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ReceiverTimer {
    Wake,
    ListenEnd,
    DataTimeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Ev {
    Generate { node: NodeId, urgent: bool },
    Scripted(usize),
    FrameEnd(TxId),
    Sender(NodeId, SenderTimer),
    Receiver(NodeId, ReceiverTimer),
    Beacon(u64),
    CapStart(u64),
    CapEnd(u64),
    GtsStart(u64, usize),
    GtsEnd(u64, usize),
    ActiveEnd(u64),
}

/// A protocol decision worth seeing in a trace (not a frame).
#[derive(Debug, Clone, PartialEq)]
pub struct MacDecision {
    pub at: VirtualTime,
    pub node: NodeId,
    pub peer: NodeId,
    pub kind: DecisionKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionKind {
    /// Early ACK withheld from a normal strobe.
    WithheldEa,
    /// Normal burst stopped at a frame boundary.
    InterruptedBurst,
    /// Normal sender froze after overhearing an urgent strobe.
    Froze,
}

impl DecisionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionKind::WithheldEa => "WITHHOLD_EA",
            DecisionKind::InterruptedBurst => "INTERRUPT",
            DecisionKind::Froze => "FREEZE",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalRecord {
    pub at: VirtualTime,
    pub node: NodeId,
    pub priority: Priority,
    pub packet: PacketId,
}

/// Superframe-MAC role of a node at the current instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Phase {
    Asleep,
    Beacon,
    Cap,
    GtsTx,
    GtsRx,
}

#[derive(Debug)]
pub(crate) struct Node {
    pub next_hop: Option<NodeId>,
    pub is_sink: bool,

    pub queues: PriorityQueues,
    /// Single FIFO for the class-blind protocol.
    pub fifo: VecDeque<Packet>,

    pub snd: SenderState,
    pub snd_timer: Option<EventHandle>,
    /// Class served by the current access attempt.
    pub snd_class: Priority,
    pub burst: Vec<Packet>,
    pub burst_ack: AckKind,
    pub strobe_started: Option<VirtualTime>,
    pub retries: u32,
    pub urgent_deferrals: u32,
    pub backoff_then_sense: bool,
    pub tx_activity: Activity,

    pub rcv: ReceiverState,
    pub rcv_timer: Option<EventHandle>,
    pub poll_pending: bool,
    pub extended: bool,
    pub rx_peer: Option<NodeId>,
    pub rx_class: Priority,
    pub rx_got: Vec<PacketId>,
    pub rx_interrupting: bool,
    /// Classes already logged as arrivals during this exchange.
    pub rx_recorded: [bool; 2],
    pub watch_until: VirtualTime,

    pub seen: HashSet<PacketId>,
    pub hist_all: ArrivalHistory,
    pub hist_urgent: ArrivalHistory,
    pub hist_normal: ArrivalHistory,
    pub last_urgent_arrival: Option<VirtualTime>,
    pub pol_all: PollingPolicy,
    pub pol_urgent: PollingPolicy,
    pub pol_normal: PollingPolicy,
    pub consumed_prediction: Option<VirtualTime>,

    pub backoff_rng: RngStream,
    pub poll_rng: RngStream,

    pub phase: Phase,
}

impl Node {
    pub fn head_priority(&self, protocol: Protocol) -> Option<Priority> {
        match protocol {
            Protocol::Adp => self.fifo.front().map(|p| p.priority),
            _ => self.queues.head_class(),
        }
    }

    pub fn enqueue(&mut self, protocol: Protocol, p: Packet) {
        match protocol {
            Protocol::Adp => self.fifo.push_back(p),
            _ => self.queues.push(p),
        }
    }

    pub fn requeue(&mut self, protocol: Protocol, packets: Vec<Packet>) {
        match protocol {
            Protocol::Adp => {
                for p in packets.into_iter().rev() {
                    self.fifo.push_front(p);
                }
            }
            _ => self.queues.requeue(packets),
        }
    }

    /// Sender role is mid-attempt (anything but idle or blocked).
    pub fn sender_active(&self) -> bool {
        !matches!(self.snd, SenderState::IdleQueueEmpty | SenderState::Blocked)
    }
}

/// Everything a run produces, including optional traces.
#[derive(Debug)]
pub struct SimReport {
    pub output: RunOutput,
    pub frames: Vec<TraceRecord>,
    pub arrivals: Vec<ArrivalRecord>,
    pub decisions: Vec<MacDecision>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TraceOptions {
    pub frames: bool,
    pub arrivals: bool,
    /// Keep every radio state interval (for tiling checks).
    pub intervals: bool,
}

pub struct Simulation {
    pub(crate) cfg: SimConfig,
    pub(crate) topo: Topology,
    pub(crate) queue: EventQueue<Ev>,
    pub(crate) channel: Channel,
    pub(crate) nodes: Vec<Node>,
    pub(crate) radios: Vec<RadioTimeline>,
    generators: Vec<Generator>,
    next_packet: PacketId,
    deliveries: Vec<DeliveryRecord>,
    delivered: HashSet<PacketId>,
    generated_urgent: u64,
    generated_normal: u64,
    pub(crate) dropped: u64,
    arrivals: Option<Vec<ArrivalRecord>>,
    pub(crate) decisions: Vec<MacDecision>,
    pub(crate) flows: Vec<NodeId>,
    pub(crate) superframe: Option<Superframe>,
    stopped: bool,
}

impl Simulation {
    pub fn new(cfg: SimConfig, trace: TraceOptions) -> Result<Self> {
        cfg.validate()?;
        let topo = cfg.topology.clone();
        let protocol = cfg.protocol;
        let mut nodes = Vec::new();
        let mut radios = Vec::new();
        for id in topo.all() {
            let is_sink = id == topo.sink();
            let initial_pol = match cfg.initial_poll {
                crate::mac::adp::PollDistribution::Deterministic => PollingPolicy::deterministic(cfg.t_pi),
                crate::mac::adp::PollDistribution::Exponential => PollingPolicy::exponential(cfg.t_pi),
            };
            let pol = PollingPolicy { mode: cfg.poll_mode, mean_cap: cfg.poll_mean_cap.max(cfg.t_pi), ..initial_pol };
            nodes.push(Node {
                next_hop: if is_sink { None } else { Some(topo.next_hop(id)?) },
                is_sink,
                queues: PriorityQueues::default(),
                fifo: VecDeque::new(),
                snd: SenderState::IdleQueueEmpty,
                snd_timer: None,
                snd_class: Priority::Normal,
                burst: Vec::new(),
                burst_ack: AckKind::Ack,
                strobe_started: None,
                retries: 0,
                urgent_deferrals: 0,
                backoff_then_sense: false,
                tx_activity: Activity::Overhead,
                rcv: if is_sink { ReceiverState::AlwaysOn } else { ReceiverState::Sleeping { until: VirtualTime::ZERO } },
                rcv_timer: None,
                poll_pending: false,
                extended: false,
                rx_peer: None,
                rx_class: Priority::Normal,
                rx_got: Vec::new(),
                rx_interrupting: false,
                rx_recorded: [false; 2],
                watch_until: VirtualTime::ZERO,
                seen: HashSet::new(),
                hist_all: ArrivalHistory::new(cfg.history_window),
                hist_urgent: ArrivalHistory::new(cfg.history_window),
                hist_normal: ArrivalHistory::new(cfg.history_window),
                last_urgent_arrival: None,
                pol_all: pol,
                pol_urgent: pol,
                pol_normal: pol,
                consumed_prediction: None,
                backoff_rng: RngStream::new(cfg.seed, id, StreamPurpose::Backoff),
                poll_rng: RngStream::new(cfg.seed, id, StreamPurpose::Polling),
                phase: if is_sink { Phase::Cap } else { Phase::Asleep },
            });
            let initial = if is_sink { RadioState::Listen } else { RadioState::Sleep };
            radios.push(RadioTimeline::new(id, initial, trace.intervals));
        }

        let mut sim = Simulation {
            channel: Channel::new(trace.frames),
            queue: EventQueue::new(),
            nodes,
            radios,
            generators: Vec::new(),
            next_packet: 0,
            deliveries: Vec::new(),
            delivered: HashSet::new(),
            generated_urgent: 0,
            generated_normal: 0,
            dropped: 0,
            arrivals: trace.arrivals.then(Vec::new),
            decisions: Vec::new(),
            flows: topo.sensors().collect(),
            superframe: None,
            stopped: false,
            topo,
            cfg,
        };
        sim.seed_traffic()?;
        match protocol {
            Protocol::Mvdr => sim.mvdr_init()?,
            _ => sim.polling_init()?,
        }
        Ok(sim)
    }

    fn seed_traffic(&mut self) -> Result<()> {
        let sensors: Vec<NodeId> = self.topo.sensors().collect();
        for node in sensors {
            for (urgent, flow) in [(true, self.cfg.urgent), (false, self.cfg.normal)] {
                let Some(pattern) = flow.pattern else { continue };
                let (purpose, priority) = if urgent {
                    (StreamPurpose::UrgentTraffic, Priority::Urgent)
                } else {
                    (StreamPurpose::NormalTraffic, Priority::Normal)
                };
                let mut rng = RngStream::new(self.cfg.seed, node, purpose);
                let (first, g) = if self.cfg.random_phase {
                    // first arrival somewhere inside the first interval so nodes are not in lockstep
                    let first = VirtualTime(rng.uniform_int(flow.mean_interval) + 1);
                    (first, Generator::new(pattern, flow.mean_interval, priority, node, first, rng))
                } else {
                    let mut g = Generator::new(pattern, flow.mean_interval, priority, node, VirtualTime::ZERO, rng);
                    (g.next_arrival(), g)
                };
                let idx = self.generators.len();
                self.generators.push(g);
                debug_assert_eq!(idx, self.generator_index(node, urgent).unwrap());
                self.queue.schedule(first, Ev::Generate { node, urgent })?;
            }
        }
        for (i, s) in self.cfg.script.iter().enumerate() {
            self.queue.schedule(s.at, Ev::Scripted(i))?;
        }
        Ok(())
    }

    fn generator_index(&self, node: NodeId, urgent: bool) -> Option<usize> {
        self.generators.iter().position(|g| g.node == node && (g.priority == Priority::Urgent) == urgent)
    }

    pub(crate) fn now(&self) -> VirtualTime {
        self.queue.now()
    }

    pub(crate) fn protocol(&self) -> Protocol {
        self.cfg.protocol
    }

    /// Run until the stop condition, starvation or the time limit.
    pub fn run(mut self) -> Result<SimReport> {
        let target = self.cfg.stop_delivered;
        let limit = VirtualTime(self.cfg.max_time);
        let termination = loop {
            if self.stopped {
                break Termination::Completed;
            }
            let Some(next) = self.queue.peek_time() else {
                break Termination::Starved { delivered: self.deliveries.len() as u64, target };
            };
            if next > limit {
                break Termination::TimeLimit { delivered: self.deliveries.len() as u64, target };
            }
            let (_, handle, ev) = self.queue.pop().expect("peeked");
            self.dispatch(handle, ev)?;
        };
        let end = self.now();
        Ok(self.finish(termination, end))
    }

    fn dispatch(&mut self, handle: EventHandle, ev: Ev) -> Result<()> {
        match ev {
            Ev::Generate { node, urgent } => {
                let idx = self.generator_index(node, urgent).expect("generator exists");
                let priority = self.generators[idx].priority;
                self.new_packet(node, priority)?;
                let next = self.generators[idx].next_arrival();
                self.queue.schedule(next, ev)?;
            }
            Ev::Scripted(i) => {
                let s = self.cfg.script[i];
                self.new_packet(s.node, s.priority)?;
            }
            Ev::FrameEnd(tx) => self.frame_end(tx)?,
            Ev::Sender(node, t) => {
                if self.nodes[node as usize].snd_timer == Some(handle) {
                    self.nodes[node as usize].snd_timer = None;
                    match self.protocol() {
                        Protocol::Mvdr => self.mvdr_sender_timer(node, t)?,
                        _ => self.sender_timer(node, t)?,
                    }
                }
            }
            Ev::Receiver(node, t) => {
                if self.nodes[node as usize].rcv_timer == Some(handle) {
                    self.nodes[node as usize].rcv_timer = None;
                    match self.protocol() {
                        Protocol::Mvdr => self.mvdr_receiver_timer(node, t)?,
                        _ => self.receiver_timer(node, t)?,
                    }
                }
            }
            Ev::Beacon(k) => self.mvdr_beacon(k)?,
            Ev::CapStart(k) => self.mvdr_cap_start(k)?,
            Ev::CapEnd(k) => self.mvdr_cap_end(k)?,
            Ev::GtsStart(k, j) => self.mvdr_gts_start(k, j)?,
            Ev::GtsEnd(k, j) => self.mvdr_gts_end(k, j)?,
            Ev::ActiveEnd(k) => self.mvdr_active_end(k)?,
        }
        Ok(())
    }

    fn new_packet(&mut self, node: NodeId, priority: Priority) -> Result<()> {
        let now = self.now();
        let id = self.next_packet;
        self.next_packet += 1;
        match priority {
            Priority::Urgent => self.generated_urgent += 1,
            _ => self.generated_normal += 1,
        }
        if let Some(a) = self.arrivals.as_mut() {
            a.push(ArrivalRecord { at: now, node, priority, packet: id });
        }
        let packet =
            Packet { id, origin: node, priority, generated_at: now, size: self.cfg.packet_bytes, hops: 0, retransmissions: 0 };
        let n = &mut self.nodes[node as usize];
        n.seen.insert(id);
        self.enqueue(node, packet)
    }

    /// Hand a packet (new or forwarded) to `node`'s MAC.
    pub(crate) fn enqueue(&mut self, node: NodeId, packet: Packet) -> Result<()> {
        let protocol = self.protocol();
        self.nodes[node as usize].enqueue(protocol, packet);
        match protocol {
            Protocol::Mvdr => self.mvdr_packet_queued(node),
            _ => self.try_start_sender(node),
        }
    }

    /// Record a first-time arrival at the sink. Returns whether it was new.
    pub(crate) fn deliver(&mut self, packet: &Packet) -> bool {
        if !self.delivered.insert(packet.id) {
            return false;
        }
        self.deliveries.push(DeliveryRecord {
            packet: packet.id,
            origin: packet.origin,
            priority: packet.priority,
            generated_at: packet.generated_at,
            delivered_at: self.now(),
            hops: packet.hops,
            retransmissions: packet.retransmissions,
        });
        if self.deliveries.len() as u64 >= self.cfg.stop_delivered {
            self.stopped = true;
        }
        true
    }

    // ---- timers ----

    pub(crate) fn set_sender_timer(&mut self, node: NodeId, delay: u64, t: SenderTimer) {
        self.clear_sender_timer(node);
        let h = self.queue.schedule_in(delay, Ev::Sender(node, t));
        self.nodes[node as usize].snd_timer = Some(h);
    }

    pub(crate) fn clear_sender_timer(&mut self, node: NodeId) {
        if let Some(h) = self.nodes[node as usize].snd_timer.take() {
            self.queue.cancel(h);
        }
    }

    pub(crate) fn set_receiver_timer(&mut self, node: NodeId, delay: u64, t: ReceiverTimer) {
        self.clear_receiver_timer(node);
        let h = self.queue.schedule_in(delay, Ev::Receiver(node, t));
        self.nodes[node as usize].rcv_timer = Some(h);
    }

    pub(crate) fn clear_receiver_timer(&mut self, node: NodeId) {
        if let Some(h) = self.nodes[node as usize].rcv_timer.take() {
            self.queue.cancel(h);
        }
    }

    // ---- radio and channel ----

    pub(crate) fn set_radio(&mut self, node: NodeId, state: RadioState, activity: Activity) -> Result<()> {
        let now = self.now();
        let r = &mut self.radios[node as usize];
        if r.state() != state || r.activity() != activity {
            r.set(state, activity, now)?;
        }
        Ok(())
    }

    /// Re-derive `node`'s radio state from its MAC roles.
    pub(crate) fn refresh_radio(&mut self, node: NodeId) -> Result<()> {
        let (state, activity) = if self.channel.is_transmitting(node) {
            (RadioState::Transmit, self.nodes[node as usize].tx_activity)
        } else {
            match self.protocol() {
                Protocol::Mvdr => self.mvdr_radio(node),
                _ => self.polling_radio(node),
            }
        };
        self.set_radio(node, state, activity)
    }

    /// Put a frame on air from `node` now.
    pub(crate) fn transmit(&mut self, frame: Frame, activity: Activity) -> Result<()> {
        let src = frame.src;
        let now = self.now();
        let airtime = frame.airtime;
        let tx = self.channel.begin_transmission(frame, now)?;
        self.queue.schedule(now + airtime, Ev::FrameEnd(tx.id))?;
        self.nodes[src as usize].tx_activity = activity;
        self.set_radio(src, RadioState::Transmit, activity)
    }

    /// Whether `node` hears a frame that started at `start`: in range,
    /// listening or receiving continuously since then.
    fn hears(&self, node: NodeId, src: NodeId, start: VirtualTime) -> bool {
        if node == src || !self.topo.in_range(node, src) {
            return false;
        }
        let r = &self.radios[node as usize];
        r.state().hears() && r.hearing_since().is_some_and(|h| h <= start)
    }

    fn frame_end(&mut self, id: TxId) -> Result<()> {
        let Some(tx) = self.channel.end_transmission(id) else { return Ok(()) };
        let src = tx.frame.src;
        let hearers: Vec<NodeId> = if tx.corrupted {
            Vec::new()
        } else {
            self.topo.all().filter(|&n| self.hears(n, src, tx.start)).collect()
        };
        let outcome = if tx.corrupted {
            Outcome::Corrupted
        } else {
            let reached = match tx.frame.dst {
                Dest::Node(d) => hearers.contains(&d),
                Dest::Broadcast => !hearers.is_empty(),
            };
            if reached {
                Outcome::Delivered
            } else {
                Outcome::Unheard
            }
        };
        self.channel.record(&tx, outcome);
        // receivers react before the sender learns its frame is done
        for n in hearers {
            match self.protocol() {
                Protocol::Mvdr => self.mvdr_hear(n, &tx.frame)?,
                _ => self.polling_hear(n, &tx.frame)?,
            }
            if self.stopped {
                return Ok(());
            }
        }
        match self.protocol() {
            Protocol::Mvdr => self.mvdr_tx_done(src, &tx.frame)?,
            _ => self.polling_tx_done(src, &tx.frame)?,
        }
        self.refresh_radio(src)
    }

    /// A copy of the packet at `index` of `node`'s in-flight burst.
    pub(crate) fn burst_packet(&self, node: NodeId, index: usize) -> Option<Packet> {
        self.nodes[node as usize].burst.get(index).cloned()
    }

    /// Accept a data packet at `node`. Returns true if it was new there.
    pub(crate) fn accept_packet(&mut self, node: NodeId, mut packet: Packet) -> Result<bool> {
        if !self.nodes[node as usize].seen.insert(packet.id) {
            return Ok(false);
        }
        packet.hops += 1;
        if self.nodes[node as usize].is_sink {
            self.deliver(&packet);
        } else {
            self.enqueue(node, packet)?;
        }
        Ok(true)
    }

    pub(crate) fn drop_packets(&mut self, n: usize) {
        self.dropped += n as u64;
    }

    pub(crate) fn decide(&mut self, node: NodeId, peer: NodeId, kind: DecisionKind) {
        let at = self.now();
        self.decisions.push(MacDecision { at, node, peer, kind });
    }

    fn finish(mut self, termination: Termination, end: VirtualTime) -> SimReport {
        for r in &mut self.radios {
            r.finish(end);
        }
        let output = RunOutput {
            protocol: self.cfg.protocol,
            mean_interval_urgent: self.cfg.urgent.mean_interval,
            mean_interval_normal: self.cfg.normal.mean_interval,
            seed: self.cfg.seed,
            end_time: end,
            termination,
            generated_urgent: self.generated_urgent,
            generated_normal: self.generated_normal,
            dropped: self.dropped,
            deliveries: std::mem::take(&mut self.deliveries),
            ledger: EnergyLedger { power: self.cfg.power, timelines: std::mem::take(&mut self.radios) },
            sensors: self.topo.sensors().collect(),
        };
        SimReport {
            output,
            frames: self.channel.take_trace(),
            arrivals: self.arrivals.take().unwrap_or_default(),
            decisions: std::mem::take(&mut self.decisions),
        }
    }
}

/// Build and run one configuration.
pub fn run(cfg: &SimConfig) -> Result<RunOutput> {
    Ok(Simulation::new(cfg.clone(), TraceOptions::default())?.run()?.output)
}

/// Build and run one configuration with tracing.
pub fn run_traced(cfg: &SimConfig, trace: TraceOptions) -> Result<SimReport> {
    Simulation::new(cfg.clone(), trace)?.run()
}
