//! Superframe baseline: beacon, slotted CSMA for normal traffic in the CAP,
//! one urgent frame per guaranteed slot at the higher rate, sleep otherwise.

use super::{Phase, ReceiverTimer, SenderTimer, Simulation};
use crate::channel::{Activity, Dest, Frame, FrameKind, NodeId, Priority, RadioState, SenseResult};
use crate::engine::VirtualTime;
use crate::error::Result;
use crate::mac::adp::SenderState;
use crate::mac::mvdr::{cap_access, superframe, Access};

impl Simulation {
    pub(crate) fn mvdr_init(&mut self) -> Result<()> {
        self.queue.schedule(VirtualTime::ZERO, super::Ev::Beacon(0))?;
        Ok(())
    }

    pub(crate) fn mvdr_radio(&self, node: NodeId) -> (RadioState, Activity) {
        let n = &self.nodes[node as usize];
        if n.is_sink {
            // the coordinator is up for the whole active portion
            let state = if n.phase == Phase::Asleep { RadioState::Sleep } else { RadioState::Listen };
            return (state, Activity::Overhead);
        }
        match n.phase {
            Phase::Asleep => (RadioState::Sleep, Activity::Overhead),
            Phase::Beacon => (RadioState::Listen, Activity::Overhead),
            Phase::Cap => {
                let contending = !matches!(n.snd, SenderState::IdleQueueEmpty | SenderState::Deferred);
                (RadioState::Listen, if contending { Activity::Normal } else { Activity::Overhead })
            }
            Phase::GtsTx | Phase::GtsRx => (RadioState::Listen, Activity::Urgent),
        }
    }

    fn sensors(&self) -> Vec<NodeId> {
        self.topo.sensors().collect()
    }

    fn set_sink_phase(&mut self, phase: Phase) -> Result<()> {
        let sink = self.topo.sink();
        self.nodes[sink as usize].phase = phase;
        self.refresh_radio(sink)
    }

    fn set_phase(&mut self, node: NodeId, phase: Phase) -> Result<()> {
        if self.nodes[node as usize].is_sink {
            return Ok(());
        }
        self.nodes[node as usize].phase = phase;
        self.refresh_radio(node)
    }

    pub(crate) fn mvdr_beacon(&mut self, k: u64) -> Result<()> {
        let cfg = self.cfg.superframe();
        let sf = superframe(&cfg, k, &self.flows);
        for node in self.sensors() {
            self.set_phase(node, Phase::Beacon)?;
        }
        self.set_sink_phase(Phase::Beacon)?;
        let sink = self.topo.sink();
        if !self.channel.is_transmitting(sink) {
            let beacon = Frame::control(FrameKind::Beacon, sink, Dest::Broadcast, Priority::None, sf.beacon_dur);
            self.transmit(beacon, Activity::Overhead)?;
        }
        self.queue.schedule(sf.cap.start, super::Ev::CapStart(k))?;
        self.queue.schedule(sf.cap.end, super::Ev::CapEnd(k))?;
        for (j, slot) in sf.gts.iter().enumerate() {
            self.queue.schedule(slot.interval.start, super::Ev::GtsStart(k, j))?;
            self.queue.schedule(slot.interval.end, super::Ev::GtsEnd(k, j))?;
        }
        self.queue.schedule(sf.active_end(), super::Ev::ActiveEnd(k))?;
        self.queue.schedule(sf.next_beacon(), super::Ev::Beacon(k + 1))?;
        self.superframe = Some(sf);
        Ok(())
    }

    pub(crate) fn mvdr_cap_start(&mut self, _k: u64) -> Result<()> {
        for node in self.sensors() {
            self.set_phase(node, Phase::Cap)?;
        }
        for node in self.sensors() {
            self.cap_try(node)?;
        }
        Ok(())
    }

    /// Draw a backoff and schedule a contention attempt for the head normal
    /// packet, or defer to the next CAP if the exchange no longer fits.
    fn cap_try(&mut self, node: NodeId) -> Result<()> {
        let now = self.now();
        let Some(sf) = self.superframe.clone() else { return Ok(()) };
        let tm = self.cfg.timings;
        let slot = self.cfg.slot;
        let cw = self.cfg.cw.cw_normal as u64;
        let n = &mut self.nodes[node as usize];
        if n.is_sink || n.phase != Phase::Cap || !matches!(n.snd, SenderState::IdleQueueEmpty | SenderState::Deferred) {
            return Ok(());
        }
        if n.queues.normal.is_empty() {
            n.snd = SenderState::IdleQueueEmpty;
            return self.refresh_radio(node);
        }
        let slots = n.backoff_rng.uniform_int(cw) as u32;
        // keep a slot of margin so the ACK ends strictly inside the CAP
        let exchange = tm.t_data + tm.t_ack + slot;
        match cap_access(now, &sf, slots, slot, tm.t_detect, exchange) {
            Access::Transmit(at) => {
                n.snd_class = Priority::Normal;
                n.snd = SenderState::Backoff { slots };
                let sense_at = at.since(now) - tm.t_detect;
                self.set_sender_timer(node, sense_at, SenderTimer::BackoffDone);
            }
            Access::Deferred => n.snd = SenderState::Deferred,
        }
        self.refresh_radio(node)
    }

    pub(crate) fn mvdr_sender_timer(&mut self, node: NodeId, t: SenderTimer) -> Result<()> {
        let now = self.now();
        let tm = self.cfg.timings;
        let snd = self.nodes[node as usize].snd.clone();
        match (t, snd) {
            (SenderTimer::BackoffDone, SenderState::Backoff { .. }) => {
                self.nodes[node as usize].snd = SenderState::CarrierSense;
                self.channel.open_watch(node, now, tm.t_detect);
                self.set_sender_timer(node, tm.t_detect, SenderTimer::SenseDone);
                Ok(())
            }
            (SenderTimer::SenseDone, SenderState::CarrierSense) => {
                let busy = self.channel.close_watch(node) == SenseResult::Busy
                    || self.channel.is_transmitting(node)
                    || self.nodes[node as usize].phase != Phase::Cap;
                if busy {
                    self.nodes[node as usize].snd = SenderState::IdleQueueEmpty;
                    return self.cap_try(node);
                }
                let n = &mut self.nodes[node as usize];
                let Some(packet) = n.queues.normal.pop_front() else {
                    n.snd = SenderState::IdleQueueEmpty;
                    return self.refresh_radio(node);
                };
                n.burst = vec![packet];
                self.send_single(node, tm.t_data)
            }
            (SenderTimer::AckTimeout, SenderState::AwaitAck) => {
                let limit = self.cfg.retry_limit;
                let n = &mut self.nodes[node as usize];
                let mut burst = std::mem::take(&mut n.burst);
                n.retries += 1;
                let mut dropped = 0;
                if n.retries > limit {
                    n.retries = 0;
                    dropped = burst.len();
                    burst.clear();
                }
                for p in &mut burst {
                    p.retransmissions += 1;
                }
                n.queues.requeue(burst);
                n.snd = SenderState::IdleQueueEmpty;
                self.drop_packets(dropped);
                self.after_exchange(node)
            }
            _ => Ok(()),
        }
    }

    /// Send the single packet in `node`'s burst.
    fn send_single(&mut self, node: NodeId, airtime: u64) -> Result<()> {
        let n = &mut self.nodes[node as usize];
        let packet = &n.burst[0];
        let frame = Frame {
            kind: FrameKind::Data,
            src: node,
            dst: Dest::Node(n.next_hop.expect("sensor has a next hop")),
            priority: packet.priority,
            airtime,
            payload: vec![packet.id],
            burst_index: 0,
            burst_len: 1,
        };
        let activity = Activity::from_priority(packet.priority);
        n.snd = SenderState::SendingData { index: 0 };
        self.transmit(frame, activity)
    }

    fn after_exchange(&mut self, node: NodeId) -> Result<()> {
        let n = &mut self.nodes[node as usize];
        if n.phase == Phase::Cap {
            return self.cap_try(node);
        }
        n.snd = if n.queues.normal.is_empty() { SenderState::IdleQueueEmpty } else { SenderState::Deferred };
        self.refresh_radio(node)
    }

    pub(crate) fn mvdr_packet_queued(&mut self, node: NodeId) -> Result<()> {
        self.cap_try(node)
    }

    pub(crate) fn mvdr_cap_end(&mut self, _k: u64) -> Result<()> {
        for node in self.sensors() {
            let n = &self.nodes[node as usize];
            if matches!(n.snd, SenderState::Backoff { .. } | SenderState::CarrierSense) {
                self.clear_sender_timer(node);
                self.channel.close_watch(node);
                self.nodes[node as usize].snd = SenderState::Deferred;
            }
            if !matches!(self.nodes[node as usize].snd, SenderState::SendingData { .. } | SenderState::AwaitAck) {
                self.set_phase(node, Phase::Asleep)?;
            }
        }
        Ok(())
    }

    pub(crate) fn mvdr_gts_start(&mut self, _k: u64, j: usize) -> Result<()> {
        let Some(sf) = self.superframe.clone() else { return Ok(()) };
        let Some(slot) = sf.gts.get(j) else { return Ok(()) };
        let owner = slot.owner;
        let rx = self.nodes[owner as usize].next_hop.expect("sensor has a next hop");
        let slot_len = slot.interval.end.since(slot.interval.start);
        // the receiver cannot know whether the owner has data: it listens
        self.set_phase(rx, Phase::GtsRx)?;
        let has_urgent = !self.nodes[owner as usize].queues.urgent.is_empty();
        if !has_urgent {
            // nothing heard after one detection time: back to sleep
            if !self.nodes[rx as usize].is_sink {
                let t = self.cfg.timings.t_detect.min(slot_len);
                self.set_receiver_timer(rx, t, ReceiverTimer::ListenEnd);
            }
            return Ok(());
        }
        self.set_phase(owner, Phase::GtsTx)?;
        let airtime = self.cfg.timings.data_airtime(self.cfg.urgent_rate());
        let n = &mut self.nodes[owner as usize];
        let packet = n.queues.urgent.pop_front().expect("checked non-empty");
        // a deferred normal attempt resumes next CAP; park it
        n.burst = vec![packet];
        n.snd_class = Priority::Urgent;
        self.send_single(owner, airtime)
    }

    pub(crate) fn mvdr_gts_end(&mut self, _k: u64, j: usize) -> Result<()> {
        let Some(sf) = self.superframe.clone() else { return Ok(()) };
        let Some(slot) = sf.gts.get(j) else { return Ok(()) };
        let owner = slot.owner;
        let rx = self.nodes[owner as usize].next_hop.expect("sensor has a next hop");
        for node in [owner, rx] {
            if self.nodes[node as usize].phase != Phase::Asleep {
                self.set_phase(node, Phase::Asleep)?;
            }
        }
        Ok(())
    }

    pub(crate) fn mvdr_active_end(&mut self, _k: u64) -> Result<()> {
        for node in self.sensors() {
            self.set_phase(node, Phase::Asleep)?;
        }
        self.set_sink_phase(Phase::Asleep)
    }

    pub(crate) fn mvdr_receiver_timer(&mut self, node: NodeId, t: ReceiverTimer) -> Result<()> {
        if t == ReceiverTimer::ListenEnd && self.nodes[node as usize].phase == Phase::GtsRx {
            self.set_phase(node, Phase::Asleep)?;
        }
        Ok(())
    }

    pub(crate) fn mvdr_hear(&mut self, node: NodeId, frame: &Frame) -> Result<()> {
        if !frame.dst.is(node) {
            return Ok(());
        }
        match frame.kind {
            FrameKind::Data => {
                let Some(packet) = self.burst_packet(frame.src, 0) else { return Ok(()) };
                let id = packet.id;
                self.accept_packet(node, packet)?;
                if self.channel.is_transmitting(node) {
                    return Ok(());
                }
                let ack = Frame {
                    kind: FrameKind::Ack,
                    src: node,
                    dst: Dest::Node(frame.src),
                    priority: frame.priority,
                    airtime: self.cfg.timings.t_ack,
                    payload: vec![id],
                    burst_index: 0,
                    burst_len: 0,
                };
                self.transmit(ack, Activity::from_priority(frame.priority))
            }
            FrameKind::Ack => {
                let n = &mut self.nodes[node as usize];
                if n.snd != SenderState::AwaitAck || n.next_hop != Some(frame.src) {
                    return Ok(());
                }
                self.clear_sender_timer(node);
                let n = &mut self.nodes[node as usize];
                n.burst.retain(|p| !frame.payload.contains(&p.id));
                n.retries = 0;
                n.snd = SenderState::IdleQueueEmpty;
                self.after_exchange(node)
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn mvdr_tx_done(&mut self, node: NodeId, frame: &Frame) -> Result<()> {
        if frame.kind == FrameKind::Data {
            if let SenderState::SendingData { .. } = self.nodes[node as usize].snd {
                self.nodes[node as usize].snd = SenderState::AwaitAck;
                self.set_sender_timer(node, self.cfg.timings.t_ack + 1_000, SenderTimer::AckTimeout);
            }
        }
        Ok(())
    }
}
