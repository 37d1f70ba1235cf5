//! Priority extensions on top of the polling MAC: per-class queues,
//! class-dependent contention windows, merged per-class polling schedules
//! and interruption of normal transfers around expected urgent arrivals.

use std::collections::VecDeque;

use crate::channel::Priority;
use crate::engine::{RngStream, VirtualTime};
use crate::error::{Result, SimError};
use crate::mac::adp::{concatenate, draw_polling_interval, AckKind, PollingPolicy};
use crate::traffic::{Packet, UrgentPrediction};

#[derive(Debug, Clone, Default)]
pub struct PriorityQueues {
    pub urgent: VecDeque<Packet>,
    pub normal: VecDeque<Packet>,
}

impl PriorityQueues {
    pub fn push(&mut self, p: Packet) {
        match p.priority {
            Priority::Urgent => self.urgent.push_back(p),
            _ => self.normal.push_back(p),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.urgent.is_empty() && self.normal.is_empty()
    }

    pub fn len(&self) -> usize {
        self.urgent.len() + self.normal.len()
    }

    /// Class that the next channel access serves.
    pub fn head_class(&self) -> Option<Priority> {
        if !self.urgent.is_empty() {
            Some(Priority::Urgent)
        } else if !self.normal.is_empty() {
            Some(Priority::Normal)
        } else {
            None
        }
    }

    /// Next burst, drawn from the urgent queue whenever it is non-empty.
    pub fn take_burst(&mut self, max_burst: usize) -> Option<(Vec<Packet>, AckKind, Priority)> {
        let class = self.head_class()?;
        let q = match class {
            Priority::Urgent => &mut self.urgent,
            _ => &mut self.normal,
        };
        let (burst, ack) = concatenate(q, max_burst);
        Some((burst, ack, class))
    }

    /// Put unacknowledged packets back at the head of their queue, in order.
    pub fn requeue(&mut self, packets: Vec<Packet>) {
        for p in packets.into_iter().rev() {
            match p.priority {
                Priority::Urgent => self.urgent.push_front(p),
                _ => self.normal.push_front(p),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CwPolicy {
    pub cw_normal: u32,
    pub cw_urgent: u32,
    /// Halve the urgent window after each consecutive deferral.
    pub adaptive: bool,
}

impl Default for CwPolicy {
    fn default() -> Self {
        CwPolicy { cw_normal: 32, cw_urgent: 8, adaptive: true }
    }
}

impl CwPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.cw_urgent && self.cw_urgent <= self.cw_normal && self.cw_normal <= 32) {
            return Err(SimError::Config(format!(
                "contention windows must satisfy 1 <= cw_urgent ({}) <= cw_normal ({}) <= 32",
                self.cw_urgent, self.cw_normal
            )));
        }
        Ok(())
    }

    /// Mean backoff in slots for a uniform draw over `[0, cw)`.
    pub fn expected_backoff(&self, priority: Priority) -> f64 {
        (select_cw(priority, self, 0) as f64 - 1.0) / 2.0
    }
}

/// Window size for `priority` after `urgent_deferrals` consecutive deferrals.
pub fn select_cw(priority: Priority, policy: &CwPolicy, urgent_deferrals: u32) -> u32 {
    match priority {
        Priority::Urgent if policy.adaptive => (policy.cw_urgent >> urgent_deferrals.min(31)).max(1),
        Priority::Urgent => policy.cw_urgent,
        _ => policy.cw_normal,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterruptReason {
    PredictedUrgentOverlap,
    UrgentStrobeHeard,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterruptDecision {
    pub interrupt: bool,
    pub reason: InterruptReason,
}

impl InterruptDecision {
    pub const NO: InterruptDecision = InterruptDecision { interrupt: false, reason: InterruptReason::None };
}

/// Whether a normal transfer occupying `[now, normal_busy_until]` should
/// yield. A heard urgent strobe always wins; otherwise the predicted urgent
/// window must overlap the transfer.
pub fn should_interrupt(
    now: VirtualTime,
    normal_busy_until: VirtualTime,
    prediction: &UrgentPrediction,
    urgent_strobe_heard: bool,
) -> InterruptDecision {
    if urgent_strobe_heard {
        return InterruptDecision { interrupt: true, reason: InterruptReason::UrgentStrobeHeard };
    }
    if !prediction.valid {
        return InterruptDecision::NO;
    }
    let (lo, hi) = prediction.window();
    if lo <= normal_busy_until && now <= hi {
        InterruptDecision { interrupt: true, reason: InterruptReason::PredictedUrgentOverlap }
    } else {
        InterruptDecision::NO
    }
}

/// Sleep before the next poll: the earlier of one draw from each policy.
pub fn schedule_poll(urgent: &PollingPolicy, normal: &PollingPolicy, rng: &mut RngStream) -> u64 {
    let u = draw_polling_interval(urgent, rng);
    let n = draw_polling_interval(normal, rng);
    u.min(n)
}
