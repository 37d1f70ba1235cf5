//! Receiver-initiated polling MAC with preamble strobes and early ACK.
//!
//! The pieces here are pure: interval draws, burst assembly, and policy
//! adaptation. The per-node state machines that use them are driven by
//! [`crate::sim`].

use std::collections::VecDeque;

use crate::engine::{RngStream, VirtualTime};
use crate::traffic::{classify, coefficient_of_variation, ArrivalHistory, Packet, Pattern};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PollDistribution {
    Deterministic,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PollMode {
    /// Only the distribution adapts.
    FixedMean,
    /// Distribution and mean both follow the observed traffic.
    TrafficAdaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PollingPolicy {
    pub distribution: PollDistribution,
    /// Mean sleep between polls, microseconds.
    pub mean: u64,
    pub mode: PollMode,
    /// Upper bound on `mean` in traffic-adaptive mode.
    pub mean_cap: u64,
}

impl PollingPolicy {
    pub fn deterministic(mean: u64) -> Self {
        PollingPolicy { distribution: PollDistribution::Deterministic, mean, mode: PollMode::FixedMean, mean_cap: mean }
    }

    pub fn exponential(mean: u64) -> Self {
        PollingPolicy { distribution: PollDistribution::Exponential, mean, mode: PollMode::FixedMean, mean_cap: mean }
    }
}

pub fn draw_polling_interval(policy: &PollingPolicy, rng: &mut RngStream) -> u64 {
    match policy.distribution {
        PollDistribution::Deterministic => policy.mean,
        PollDistribution::Exponential => {
            let x = rng.exponential(policy.mean.max(1) as f64).expect("positive mean");
            (x.round() as u64).max(1)
        }
    }
}

/// Re-derive the policy from the observed arrivals. With fewer than two
/// samples the policy is returned unchanged.
pub fn update_policy(history: &ArrivalHistory, policy: &PollingPolicy, cv_threshold: f64) -> PollingPolicy {
    let Some(cv) = coefficient_of_variation(history) else {
        return *policy;
    };
    let distribution = match classify(cv, cv_threshold) {
        Pattern::Cbr => PollDistribution::Deterministic,
        Pattern::Poisson => PollDistribution::Exponential,
    };
    let mean = match policy.mode {
        PollMode::FixedMean => policy.mean,
        PollMode::TrafficAdaptive => {
            let (m, _) = history.moments().expect("cv implies moments");
            (m.round() as u64).clamp(1, policy.mean_cap)
        }
    };
    PollingPolicy { distribution, mean, ..*policy }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckKind {
    Ack,
    BlockAck,
}

/// Take up to `max_burst` packets from the front of `queue` for one channel
/// access. Returns the burst and the acknowledgment it expects.
pub fn concatenate(queue: &mut VecDeque<Packet>, max_burst: usize) -> (Vec<Packet>, AckKind) {
    let n = queue.len().min(max_burst.max(1));
    let burst: Vec<Packet> = queue.drain(..n).collect();
    let ack = if burst.len() > 1 { AckKind::BlockAck } else { AckKind::Ack };
    (burst, ack)
}

/// Sender side of a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SenderState {
    IdleQueueEmpty,
    /// Waiting for the node's receiver role to free the radio.
    Blocked,
    CarrierSense,
    Backoff { slots: u32 },
    /// Backoff suspended after hearing an urgent strobe.
    Frozen { slots: u32 },
    Strobing { strobes: u32 },
    AwaitEa { strobes: u32 },
    SendingData { index: u16 },
    /// Listening for an interrupt between burst frames.
    BurstGap { next: u16 },
    AwaitAck,
    /// MVDR: waiting for the next contention or guaranteed slot.
    Deferred,
}

/// Receiver side of a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReceiverState {
    Sleeping { until: VirtualTime },
    Polling { until: VirtualTime },
    SendingEa,
    ReceivingData,
    SendingAck,
    Lingering { until: VirtualTime },
    /// Holding off normal traffic while an urgent arrival is expected.
    UrgentWatch { until: VirtualTime },
    /// Always listening (sink, MVDR active period).
    AlwaysOn,
}

impl ReceiverState {
    /// Whether the receiver is inside an exchange and owns the radio.
    pub fn in_exchange(&self) -> bool {
        matches!(self, ReceiverState::SendingEa | ReceiverState::ReceivingData | ReceiverState::SendingAck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Priority;
    use crate::engine::StreamPurpose;

    fn pkt(id: u64) -> Packet {
        Packet {
            id,
            origin: 1,
            priority: Priority::Normal,
            generated_at: VirtualTime::ZERO,
            size: 58,
            hops: 0,
            retransmissions: 0,
        }
    }

    #[test]
    fn deterministic_interval_is_the_mean() {
        let mut rng = RngStream::new(0, 0, StreamPurpose::Polling);
        let p = PollingPolicy::deterministic(50_000);
        for _ in 0..10 {
            assert_eq!(draw_polling_interval(&p, &mut rng), 50_000);
        }
    }

    #[test]
    fn exponential_interval_mean_and_floor() {
        let mut rng = RngStream::new(3, 2, StreamPurpose::Polling);
        let p = PollingPolicy::exponential(50_000);
        let n = 100_000;
        let mut sum = 0u64;
        for _ in 0..n {
            let d = draw_polling_interval(&p, &mut rng);
            assert!(d >= 1);
            sum += d;
        }
        let mean_ms = sum as f64 / n as f64 / 1000.0;
        assert!((49.0..=51.0).contains(&mean_ms), "{mean_ms}");
    }

    #[test]
    fn concatenation_bounds() {
        let mut q: VecDeque<Packet> = (0..3).map(pkt).collect();
        let (b, ack) = concatenate(&mut q, 4);
        assert_eq!((b.len(), ack, q.len()), (3, AckKind::BlockAck, 0));

        let mut q: VecDeque<Packet> = (0..1).map(pkt).collect();
        let (b, ack) = concatenate(&mut q, 4);
        assert_eq!((b.len(), ack), (1, AckKind::Ack));

        let mut q: VecDeque<Packet> = (0..5).map(pkt).collect();
        let (b, _) = concatenate(&mut q, 4);
        assert_eq!(b.iter().map(|p| p.id).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(q.front().unwrap().id, 4);
    }

    #[test]
    fn policy_follows_traffic_class() {
        let base = PollingPolicy::exponential(50_000);
        let cbr = ArrivalHistory::from_samples(10, &[2_000_000; 10]);
        assert_eq!(update_policy(&cbr, &base, 0.5).distribution, PollDistribution::Deterministic);

        let base = PollingPolicy::deterministic(50_000);
        let poisson = ArrivalHistory::from_samples(10, &[100, 3_000, 250_000, 40_000, 1_200_000, 9_000]);
        let p = update_policy(&poisson, &base, 0.5);
        assert_eq!(p.distribution, PollDistribution::Exponential);
        assert_eq!(p.mean, 50_000);

        let one = ArrivalHistory::from_samples(10, &[1_000]);
        assert_eq!(update_policy(&one, &base, 0.5), base);
    }

    #[test]
    fn adaptive_mean_is_capped() {
        let base = PollingPolicy { mode: PollMode::TrafficAdaptive, mean_cap: 100_000, ..PollingPolicy::deterministic(50_000) };
        let slow = ArrivalHistory::from_samples(10, &[2_000_000; 4]);
        assert_eq!(update_policy(&slow, &base, 0.5).mean, 100_000);
        let fast = ArrivalHistory::from_samples(10, &[30_000; 4]);
        assert_eq!(update_policy(&fast, &base, 0.5).mean, 30_000);
    }
}
