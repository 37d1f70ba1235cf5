//! Sender and receiver state machines of the two polling MACs.
//!
//! Both roles share one half-duplex radio. The receiver role blocks the
//! sender while it polls, lingers, watches for urgent traffic or is inside an
//! exchange; a poll that comes due while the sender is busy runs as soon as
//! the sender goes idle. In the priority variant, frame priorities drive
//! queue selection, contention windows, freezing and interruption.

use std::collections::HashSet;

use super::{DecisionKind, ReceiverTimer, SenderTimer, Simulation};
use crate::channel::{Activity, Dest, Frame, FrameKind, NodeId, Priority, RadioState, SenseResult};
use crate::error::Result;
use crate::mac::adp::{concatenate, draw_polling_interval, update_policy, AckKind, ReceiverState, SenderState};
use crate::mac::adp2::{schedule_poll, select_cw, should_interrupt};
use crate::mac::Protocol;
use crate::traffic::{predict_next_urgent, UrgentPrediction};

impl Simulation {
    pub(crate) fn polling_init(&mut self) -> Result<()> {
        let sensors: Vec<NodeId> = self.topo.sensors().collect();
        for id in sensors {
            // desynchronize the first wake-ups
            let first = self.nodes[id as usize].poll_rng.uniform_int(self.cfg.t_pi) + 1;
            self.nodes[id as usize].rcv = ReceiverState::Sleeping { until: self.now() + first };
            self.set_receiver_timer(id, first, ReceiverTimer::Wake);
        }
        Ok(())
    }

    fn is_adp2(&self) -> bool {
        self.protocol() == Protocol::Adp2
    }

    pub(crate) fn polling_radio(&self, node: NodeId) -> (RadioState, Activity) {
        let n = &self.nodes[node as usize];
        let class = Activity::from_priority(n.snd_class);
        match n.snd {
            SenderState::CarrierSense
            | SenderState::Backoff { .. }
            | SenderState::Strobing { .. }
            | SenderState::AwaitEa { .. }
            | SenderState::SendingData { .. }
            | SenderState::BurstGap { .. }
            | SenderState::AwaitAck => return (RadioState::Listen, class),
            SenderState::Frozen { .. } => return (RadioState::Idle, class),
            _ => {}
        }
        match n.rcv {
            ReceiverState::Polling { .. }
            | ReceiverState::Lingering { .. }
            | ReceiverState::UrgentWatch { .. }
            | ReceiverState::AlwaysOn => (RadioState::Listen, Activity::Overhead),
            ReceiverState::SendingEa | ReceiverState::ReceivingData | ReceiverState::SendingAck => {
                (RadioState::Receive, Activity::from_priority(n.rx_class))
            }
            ReceiverState::Sleeping { .. } => (RadioState::Sleep, Activity::Overhead),
        }
    }

    // ---------------------------------------------------------------- sender

    /// Start a channel access if the queue is non-empty and the radio is free.
    pub(crate) fn try_start_sender(&mut self, node: NodeId) -> Result<()> {
        let p = self.protocol();
        let n = &self.nodes[node as usize];
        if n.is_sink || n.sender_active() {
            return Ok(());
        }
        if n.poll_pending && matches!(n.rcv, ReceiverState::Sleeping { .. }) {
            self.start_poll(node)?;
        }
        let n = &mut self.nodes[node as usize];
        let Some(head) = n.head_priority(p) else {
            n.snd = SenderState::IdleQueueEmpty;
            return self.refresh_radio(node);
        };
        match n.rcv {
            ReceiverState::Sleeping { .. } => {}
            ReceiverState::Lingering { .. }
                if p == Protocol::Adp2 && self.cfg.urgent_preempts_linger && head == Priority::Urgent =>
            {
                self.channel.close_watch(node);
                self.clear_receiver_timer(node);
                self.sleep_receiver(node)?;
            }
            _ => {
                n.snd = SenderState::Blocked;
                return self.refresh_radio(node);
            }
        }
        self.begin_sense(node)
    }

    fn begin_sense(&mut self, node: NodeId) -> Result<()> {
        let p = self.protocol();
        let now = self.now();
        let t_detect = self.cfg.timings.t_detect;
        let n = &mut self.nodes[node as usize];
        let Some(head) = n.head_priority(p) else {
            return self.sender_idle(node);
        };
        n.snd_class = head;
        n.snd = SenderState::CarrierSense;
        self.channel.open_watch(node, now, t_detect);
        self.set_sender_timer(node, t_detect, SenderTimer::SenseDone);
        self.refresh_radio(node)
    }

    fn start_backoff(&mut self, node: NodeId) -> Result<()> {
        let now = self.now();
        let n = &mut self.nodes[node as usize];
        let cw = match self.cfg.protocol {
            Protocol::Adp2 => select_cw(n.snd_class, &self.cfg.cw, n.urgent_deferrals),
            _ => self.cfg.cw.cw_normal,
        };
        let slots = n.backoff_rng.uniform_int(cw as u64) as u32;
        n.snd = SenderState::Backoff { slots };
        if slots == 0 {
            return self.backoff_done(node, false);
        }
        let len = slots as u64 * self.cfg.slot;
        self.channel.open_watch(node, now, len);
        self.set_sender_timer(node, len, SenderTimer::BackoffDone);
        self.refresh_radio(node)
    }

    fn note_deferral(&mut self, node: NodeId) {
        let n = &mut self.nodes[node as usize];
        if n.snd_class == Priority::Urgent {
            n.urgent_deferrals += 1;
        }
    }

    fn backoff_done(&mut self, node: NodeId, busy: bool) -> Result<()> {
        if self.nodes[node as usize].backoff_then_sense {
            return self.begin_sense(node);
        }
        if busy || self.channel.is_transmitting(node) {
            self.note_deferral(node);
            self.nodes[node as usize].backoff_then_sense = true;
            return self.start_backoff(node);
        }
        self.start_strobe(node)
    }

    /// Strobes announce the class of the burst they will carry, so the burst
    /// is fixed at the first strobe. An urgent arrival mid-train upgrades it.
    fn start_strobe(&mut self, node: NodeId) -> Result<()> {
        let p = self.protocol();
        let now = self.now();
        let t_pre = self.cfg.timings.t_pre;
        let max_burst = self.cfg.max_burst;
        let n = &mut self.nodes[node as usize];
        if p == Protocol::Adp2
            && !n.burst.is_empty()
            && n.snd_class == Priority::Normal
            && n.queues.head_class() == Some(Priority::Urgent)
        {
            let held = std::mem::take(&mut n.burst);
            n.queues.requeue(held);
        }
        if n.burst.is_empty() {
            let (burst, ack, class) = match p {
                Protocol::Adp => {
                    let (b, a) = concatenate(&mut n.fifo, max_burst);
                    let class = b.first().map(|x| x.priority).unwrap_or(Priority::Normal);
                    (b, a, class)
                }
                _ => match n.queues.take_burst(max_burst) {
                    Some(t) => t,
                    None => (Vec::new(), AckKind::Ack, Priority::Normal),
                },
            };
            if burst.is_empty() {
                return self.sender_idle(node);
            }
            n.burst = burst;
            n.burst_ack = ack;
            n.snd_class = class;
        }
        let class = n.snd_class;
        n.strobe_started.get_or_insert(now);
        n.snd = SenderState::Strobing { strobes: 0 };
        let next_hop = n.next_hop.expect("sensor has a next hop");
        let flag = if p == Protocol::Adp2 { class } else { Priority::None };
        let frame = Frame::control(FrameKind::PreambleStrobe, node, Dest::Node(next_hop), flag, t_pre);
        self.transmit(frame, Activity::from_priority(class))
    }

    /// Put a held, never-sent burst back at the head of its queue.
    fn release_burst(&mut self, node: NodeId) {
        let p = self.protocol();
        let n = &mut self.nodes[node as usize];
        let held = std::mem::take(&mut n.burst);
        n.requeue(p, held);
    }

    fn send_data(&mut self, node: NodeId, index: usize) -> Result<()> {
        let p = self.protocol();
        let n = &mut self.nodes[node as usize];
        let packet = &n.burst[index];
        let frame = Frame {
            kind: FrameKind::Data,
            src: node,
            dst: Dest::Node(n.next_hop.expect("sensor has a next hop")),
            priority: if p == Protocol::Adp2 { packet.priority } else { Priority::None },
            airtime: self.cfg.timings.t_data,
            payload: vec![packet.id],
            burst_index: index as u16,
            burst_len: n.burst.len() as u16,
        };
        let activity = Activity::from_priority(packet.priority);
        n.snd = SenderState::SendingData { index: index as u16 };
        self.transmit(frame, activity)
    }

    pub(crate) fn sender_timer(&mut self, node: NodeId, t: SenderTimer) -> Result<()> {
        let now = self.now();
        let snd = self.nodes[node as usize].snd.clone();
        match (t, snd) {
            (SenderTimer::SenseDone, SenderState::CarrierSense) => {
                let busy = self.channel.close_watch(node) == SenseResult::Busy;
                if busy {
                    self.note_deferral(node);
                }
                self.nodes[node as usize].backoff_then_sense = busy;
                self.start_backoff(node)
            }
            (SenderTimer::BackoffDone, SenderState::Backoff { .. }) => {
                let busy = self.channel.close_watch(node) == SenseResult::Busy;
                self.backoff_done(node, busy)
            }
            (SenderTimer::PauseEnd, SenderState::AwaitEa { .. }) => {
                let started = self.nodes[node as usize].strobe_started.unwrap_or(now);
                if now.since(started) >= self.cfg.max_strobe_time() {
                    self.nodes[node as usize].strobe_started = None;
                    self.fail_attempt(node)
                } else {
                    self.start_strobe(node)
                }
            }
            (SenderTimer::GapEnd, SenderState::BurstGap { next }) => {
                if self.channel.is_busy(now) {
                    // the receiver may be interrupting: hear it out
                    let wait = self.channel.busy_until(now).since(now) + 1_000;
                    self.nodes[node as usize].snd = SenderState::AwaitAck;
                    self.set_sender_timer(node, wait, SenderTimer::AckTimeout);
                    self.refresh_radio(node)
                } else {
                    self.send_data(node, next as usize)
                }
            }
            (SenderTimer::AckTimeout, SenderState::AwaitAck) => {
                let p = self.protocol();
                let n = &mut self.nodes[node as usize];
                let mut burst = std::mem::take(&mut n.burst);
                for pkt in &mut burst {
                    pkt.retransmissions += 1;
                }
                n.requeue(p, burst);
                self.fail_attempt(node)
            }
            (SenderTimer::FreezeEnd, SenderState::Frozen { .. }) => self.begin_sense(node),
            _ => Ok(()),
        }
    }

    /// One access attempt failed; drop the head packet once retries run out.
    fn fail_attempt(&mut self, node: NodeId) -> Result<()> {
        self.release_burst(node);
        let p = self.protocol();
        let limit = self.cfg.retry_limit;
        let n = &mut self.nodes[node as usize];
        n.retries += 1;
        if n.retries > limit {
            n.retries = 0;
            n.urgent_deferrals = 0;
            let dropped = match p {
                Protocol::Adp => n.fifo.pop_front(),
                _ => match n.queues.head_class() {
                    Some(Priority::Urgent) => n.queues.urgent.pop_front(),
                    _ => n.queues.normal.pop_front(),
                },
            };
            if dropped.is_some() {
                self.drop_packets(1);
            }
        }
        self.sender_idle(node)
    }

    fn sender_idle(&mut self, node: NodeId) -> Result<()> {
        self.clear_sender_timer(node);
        let n = &mut self.nodes[node as usize];
        n.snd = SenderState::IdleQueueEmpty;
        n.strobe_started = None;
        debug_assert!(n.burst.is_empty());
        self.refresh_radio(node)?;
        self.try_start_sender(node)
    }

    /// Give up the current attempt so the receiver role can take the radio.
    fn abort_attempt(&mut self, node: NodeId) {
        self.clear_sender_timer(node);
        let n = &mut self.nodes[node as usize];
        if matches!(n.snd, SenderState::CarrierSense | SenderState::Backoff { .. }) {
            self.channel.close_watch(node);
        }
        n.snd = SenderState::Blocked;
        n.strobe_started = None;
        self.release_burst(node);
    }

    fn on_early_ack(&mut self, node: NodeId) -> Result<()> {
        self.clear_sender_timer(node);
        let n = &mut self.nodes[node as usize];
        n.strobe_started = None;
        if n.burst.is_empty() {
            return self.sender_idle(node);
        }
        self.send_data(node, 0)
    }

    fn on_ack(&mut self, node: NodeId, frame: &Frame) -> Result<()> {
        self.clear_sender_timer(node);
        let p = self.protocol();
        let n = &mut self.nodes[node as usize];
        let acked: HashSet<u64> = frame.payload.iter().copied().collect();
        let (done, mut missing): (Vec<_>, Vec<_>) =
            std::mem::take(&mut n.burst).into_iter().partition(|pkt| acked.contains(&pkt.id));
        if frame.kind != FrameKind::Interrupt {
            for pkt in &mut missing {
                pkt.retransmissions += 1;
            }
        }
        if !done.is_empty() {
            n.retries = 0;
            if n.snd_class == Priority::Urgent {
                n.urgent_deferrals = 0;
            }
        }
        n.requeue(p, missing);
        self.sender_idle(node)
    }

    // -------------------------------------------------------------- receiver

    fn start_poll(&mut self, node: NodeId) -> Result<()> {
        let now = self.now();
        let t_poll = self.cfg.t_poll;
        self.clear_receiver_timer(node);
        let n = &mut self.nodes[node as usize];
        n.poll_pending = false;
        n.extended = false;
        n.rcv = ReceiverState::Polling { until: now + t_poll };
        self.channel.open_watch(node, now, t_poll);
        self.set_receiver_timer(node, t_poll, ReceiverTimer::ListenEnd);
        self.refresh_radio(node)
    }

    /// Put the receiver to sleep until its next poll.
    fn sleep_receiver(&mut self, node: NodeId) -> Result<()> {
        let now = self.now();
        let adp2 = self.is_adp2();
        let n = &mut self.nodes[node as usize];
        let interval = if adp2 {
            schedule_poll(&n.pol_urgent, &n.pol_normal, &mut n.poll_rng)
        } else {
            draw_polling_interval(&n.pol_all, &mut n.poll_rng)
        };
        n.rcv = ReceiverState::Sleeping { until: now + interval };
        self.set_receiver_timer(node, interval, ReceiverTimer::Wake);
        self.refresh_radio(node)
    }

    fn go_sleep(&mut self, node: NodeId) -> Result<()> {
        self.channel.close_watch(node);
        self.sleep_receiver(node)?;
        self.try_start_sender(node)
    }

    fn start_linger(&mut self, node: NodeId) -> Result<()> {
        let now = self.now();
        let t_add = self.cfg.t_add;
        let n = &mut self.nodes[node as usize];
        n.extended = false;
        n.rcv = ReceiverState::Lingering { until: now + t_add };
        self.channel.open_watch(node, now, t_add);
        self.set_receiver_timer(node, t_add, ReceiverTimer::ListenEnd);
        self.refresh_radio(node)
    }

    /// After an exchange: sink keeps listening, sensors linger.
    fn finish_exchange(&mut self, node: NodeId) -> Result<()> {
        self.clear_receiver_timer(node);
        let n = &mut self.nodes[node as usize];
        n.rx_peer = None;
        n.rx_interrupting = false;
        if n.is_sink {
            n.rcv = ReceiverState::AlwaysOn;
            return self.refresh_radio(node);
        }
        self.start_linger(node)?;
        self.try_start_sender(node)
    }

    fn enter_urgent_watch(&mut self, node: NodeId, until: crate::engine::VirtualTime) -> Result<()> {
        let now = self.now();
        let until = until.max(now + 1);
        self.channel.close_watch(node);
        let n = &mut self.nodes[node as usize];
        n.rx_peer = None;
        n.rcv = ReceiverState::UrgentWatch { until };
        self.set_receiver_timer(node, until.since(now), ReceiverTimer::ListenEnd);
        self.refresh_radio(node)
    }

    pub(crate) fn receiver_timer(&mut self, node: NodeId, t: ReceiverTimer) -> Result<()> {
        let now = self.now();
        let rcv = self.nodes[node as usize].rcv.clone();
        match (t, rcv) {
            (ReceiverTimer::Wake, ReceiverState::Sleeping { .. }) => {
                if self.nodes[node as usize].sender_active() {
                    self.nodes[node as usize].poll_pending = true;
                    Ok(())
                } else {
                    self.start_poll(node)
                }
            }
            (ReceiverTimer::ListenEnd, ReceiverState::Polling { .. } | ReceiverState::Lingering { .. }) => {
                let busy = self.channel.close_watch(node) == SenseResult::Busy;
                if busy && !self.nodes[node as usize].extended {
                    // activity seen: stay up long enough to catch one more strobe
                    let tm = self.cfg.timings;
                    let until = self.channel.busy_until(now).max(now) + tm.t_pre_pause + tm.t_pre;
                    let n = &mut self.nodes[node as usize];
                    n.extended = true;
                    n.rcv = match n.rcv {
                        ReceiverState::Polling { .. } => ReceiverState::Polling { until },
                        _ => ReceiverState::Lingering { until },
                    };
                    self.channel.open_watch(node, now, until.since(now));
                    self.set_receiver_timer(node, until.since(now), ReceiverTimer::ListenEnd);
                    Ok(())
                } else {
                    self.go_sleep(node)
                }
            }
            (ReceiverTimer::ListenEnd, ReceiverState::UrgentWatch { .. }) => {
                if self.nodes[node as usize].is_sink {
                    self.nodes[node as usize].rcv = ReceiverState::AlwaysOn;
                    self.refresh_radio(node)
                } else {
                    // resume normal service straight away
                    self.start_poll(node)
                }
            }
            (ReceiverTimer::DataTimeout, ReceiverState::ReceivingData) => self.finish_exchange(node),
            _ => Ok(()),
        }
    }

    fn prediction(&self, node: NodeId) -> UrgentPrediction {
        let n = &self.nodes[node as usize];
        match n.last_urgent_arrival {
            Some(last) => {
                let pred = predict_next_urgent(&n.hist_urgent, last, &self.cfg.prediction);
                if n.consumed_prediction == Some(pred.expected_at) {
                    UrgentPrediction::INVALID
                } else {
                    pred
                }
            }
            None => UrgentPrediction::INVALID,
        }
    }

    fn on_strobe_for_me(&mut self, node: NodeId, frame: &Frame) -> Result<()> {
        let now = self.now();
        let adp2 = self.is_adp2();
        let n = &self.nodes[node as usize];
        let urgent = frame.priority == Priority::Urgent;
        // own attempt in progress: only yield if it has not committed yet,
        // or (priority variant) to an urgent strobe while our class is normal
        let yielded = match n.snd {
            SenderState::IdleQueueEmpty | SenderState::Blocked => false,
            SenderState::CarrierSense | SenderState::Backoff { .. } => true,
            SenderState::AwaitEa { .. } | SenderState::Frozen { .. }
                if adp2 && urgent && n.snd_class == Priority::Normal && self.cfg.interrupt_on_urgent_strobe =>
            {
                true
            }
            _ => return Ok(()),
        };
        if yielded {
            self.abort_attempt(node);
        }
        let n = &self.nodes[node as usize];
        let accept = yielded || match n.rcv {
            ReceiverState::Polling { .. } | ReceiverState::Lingering { .. } | ReceiverState::AlwaysOn => true,
            ReceiverState::UrgentWatch { .. } => urgent,
            ReceiverState::ReceivingData => n.rx_peer == Some(frame.src),
            _ => false,
        };
        if !accept {
            return self.try_start_sender(node);
        }
        if adp2 && frame.priority == Priority::Normal && self.cfg.interrupt_predicted && n.rcv != ReceiverState::ReceivingData {
            let tm = self.cfg.timings;
            let b = self.cfg.max_burst as u64;
            let busy_until = now + tm.t_ea + b * tm.t_data + (b - 1) * tm.t_detect + tm.t_ack;
            let pred = self.prediction(node);
            if should_interrupt(now, busy_until, &pred, false).interrupt {
                self.nodes[node as usize].consumed_prediction = Some(pred.expected_at);
                self.decide(node, frame.src, DecisionKind::WithheldEa);
                let until = pred.window().1.min(now + self.cfg.t_add);
                self.clear_receiver_timer(node);
                return self.enter_urgent_watch(node, until);
            }
        }
        // answer with an early ACK
        self.channel.close_watch(node);
        self.clear_receiver_timer(node);
        let n = &mut self.nodes[node as usize];
        n.rx_peer = Some(frame.src);
        n.rx_class = frame.priority;
        n.rx_got.clear();
        n.rx_recorded = [false; 2];
        n.rcv = ReceiverState::SendingEa;
        let ea = Frame::control(FrameKind::EarlyAck, node, Dest::Node(frame.src), frame.priority, self.cfg.timings.t_ea);
        self.transmit(ea, Activity::from_priority(frame.priority))
    }

    /// Log an arrival for the polling-interval and urgent predictors.
    fn record_arrival(&mut self, node: NodeId, priority: Priority) {
        let now = self.now();
        let adapt = self.cfg.adapt_polling;
        let th = self.cfg.cv_threshold;
        let n = &mut self.nodes[node as usize];
        let slot = usize::from(priority != Priority::Urgent);
        if n.rx_recorded[slot] {
            return;
        }
        n.rx_recorded[slot] = true;
        n.hist_all.record(now);
        if priority == Priority::Urgent {
            n.hist_urgent.record(now);
            n.last_urgent_arrival = Some(now);
        } else {
            n.hist_normal.record(now);
        }
        if adapt {
            n.pol_all = update_policy(&n.hist_all, &n.pol_all, th);
            n.pol_urgent = update_policy(&n.hist_urgent, &n.pol_urgent, th);
            n.pol_normal = update_policy(&n.hist_normal, &n.pol_normal, th);
        }
    }

    fn on_data(&mut self, node: NodeId, frame: &Frame) -> Result<()> {
        let now = self.now();
        let Some(packet) = self.burst_packet(frame.src, frame.burst_index as usize) else {
            return Ok(());
        };
        debug_assert_eq!(frame.payload.first(), Some(&packet.id));
        let priority = packet.priority;
        {
            let n = &mut self.nodes[node as usize];
            n.rx_class = priority;
            n.rx_got.push(packet.id);
        }
        self.refresh_radio(node)?;
        if self.accept_packet(node, packet)? {
            self.record_arrival(node, priority);
        }
        let tm = self.cfg.timings;
        if frame.is_last_in_burst() {
            let kind = if frame.burst_len > 1 { FrameKind::BlockAck } else { FrameKind::Ack };
            return self.send_ack(node, frame.src, kind, tm.t_ack);
        }
        if self.is_adp2() && priority == Priority::Normal {
            let remaining = (frame.burst_len - frame.burst_index - 1) as u64;
            let busy_until = now + remaining * (tm.t_detect + tm.t_data) + tm.t_ack;
            let pred = if self.cfg.interrupt_predicted { self.prediction(node) } else { UrgentPrediction::INVALID };
            if should_interrupt(now, busy_until, &pred, false).interrupt {
                let until = pred.window().1.min(now + tm.t_ea + self.cfg.t_add);
                let n = &mut self.nodes[node as usize];
                n.consumed_prediction = Some(pred.expected_at);
                n.rx_interrupting = true;
                n.watch_until = until;
                self.decide(node, frame.src, DecisionKind::InterruptedBurst);
                return self.send_ack(node, frame.src, FrameKind::Interrupt, tm.t_ea);
            }
        }
        let gap = if self.is_adp2() && priority == Priority::Normal { tm.t_detect } else { 0 };
        self.set_receiver_timer(node, gap + tm.t_data + 2_000, ReceiverTimer::DataTimeout);
        Ok(())
    }

    fn send_ack(&mut self, node: NodeId, peer: NodeId, kind: FrameKind, airtime: u64) -> Result<()> {
        self.clear_receiver_timer(node);
        let p = self.protocol();
        let n = &mut self.nodes[node as usize];
        n.rcv = ReceiverState::SendingAck;
        let class = n.rx_class;
        let frame = Frame {
            kind,
            src: node,
            dst: Dest::Node(peer),
            priority: if p == Protocol::Adp2 { class } else { Priority::None },
            airtime,
            payload: n.rx_got.clone(),
            burst_index: 0,
            burst_len: 0,
        };
        self.transmit(frame, Activity::from_priority(class))
    }

    fn freeze(&mut self, node: NodeId, urgent_src: NodeId) -> Result<()> {
        let tm = self.cfg.timings;
        self.clear_sender_timer(node);
        self.channel.close_watch(node);
        let n = &mut self.nodes[node as usize];
        n.snd = SenderState::Frozen { slots: 0 };
        self.decide(node, urgent_src, DecisionKind::Froze);
        // sit out roughly one urgent exchange, then contend again
        let hold = tm.t_pre_pause + tm.t_ea + tm.t_data + tm.t_ack;
        self.set_sender_timer(node, hold, SenderTimer::FreezeEnd);
        self.refresh_radio(node)
    }

    pub(crate) fn polling_hear(&mut self, node: NodeId, frame: &Frame) -> Result<()> {
        let for_me = frame.dst.is(node);
        match frame.kind {
            FrameKind::PreambleStrobe if for_me => self.on_strobe_for_me(node, frame),
            FrameKind::PreambleStrobe => {
                let n = &self.nodes[node as usize];
                if self.is_adp2()
                    && self.cfg.interrupt_on_urgent_strobe
                    && frame.priority == Priority::Urgent
                    && n.snd_class == Priority::Normal
                    && matches!(n.snd, SenderState::Backoff { .. } | SenderState::CarrierSense)
                {
                    return self.freeze(node, frame.src);
                }
                if !n.is_sink && !n.sender_active() && matches!(n.rcv, ReceiverState::Polling { .. }) {
                    // someone else's strobe: nothing for us this round
                    return self.go_sleep(node);
                }
                Ok(())
            }
            FrameKind::EarlyAck if for_me => {
                let n = &self.nodes[node as usize];
                if matches!(n.snd, SenderState::AwaitEa { .. }) && n.next_hop == Some(frame.src) {
                    self.on_early_ack(node)?;
                }
                Ok(())
            }
            FrameKind::Data if for_me => {
                let n = &self.nodes[node as usize];
                if n.rcv == ReceiverState::ReceivingData && n.rx_peer == Some(frame.src) {
                    self.on_data(node, frame)?;
                }
                Ok(())
            }
            FrameKind::Ack | FrameKind::BlockAck | FrameKind::Interrupt if for_me => {
                let n = &self.nodes[node as usize];
                if matches!(n.snd, SenderState::AwaitAck | SenderState::BurstGap { .. }) && n.next_hop == Some(frame.src)
                {
                    self.on_ack(node, frame)?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn polling_tx_done(&mut self, node: NodeId, frame: &Frame) -> Result<()> {
        let tm = self.cfg.timings;
        let snd = self.nodes[node as usize].snd.clone();
        match frame.kind {
            FrameKind::PreambleStrobe => {
                if let SenderState::Strobing { strobes } = snd {
                    self.nodes[node as usize].snd = SenderState::AwaitEa { strobes: strobes + 1 };
                    self.set_sender_timer(node, tm.t_pre_pause, SenderTimer::PauseEnd);
                }
                Ok(())
            }
            FrameKind::Data => {
                let SenderState::SendingData { index } = snd else { return Ok(()) };
                if frame.is_last_in_burst() {
                    self.nodes[node as usize].snd = SenderState::AwaitAck;
                    self.set_sender_timer(node, tm.t_ack + 1_000, SenderTimer::AckTimeout);
                } else if self.is_adp2() && self.nodes[node as usize].snd_class == Priority::Normal {
                    self.nodes[node as usize].snd = SenderState::BurstGap { next: index + 1 };
                    self.set_sender_timer(node, tm.t_detect, SenderTimer::GapEnd);
                } else {
                    self.send_data(node, index as usize + 1)?;
                }
                Ok(())
            }
            FrameKind::EarlyAck => {
                if self.nodes[node as usize].rcv == ReceiverState::SendingEa {
                    self.nodes[node as usize].rcv = ReceiverState::ReceivingData;
                    let gap = if self.is_adp2() { tm.t_detect } else { 0 };
                    self.set_receiver_timer(node, tm.t_data + gap + 2_000, ReceiverTimer::DataTimeout);
                }
                Ok(())
            }
            FrameKind::Ack | FrameKind::BlockAck | FrameKind::Interrupt => {
                let n = &mut self.nodes[node as usize];
                if n.rcv != ReceiverState::SendingAck {
                    return Ok(());
                }
                if n.rx_interrupting {
                    n.rx_interrupting = false;
                    let until = n.watch_until;
                    self.enter_urgent_watch(node, until)
                } else {
                    self.finish_exchange(node)
                }
            }
            _ => Ok(()),
        }
    }
}
