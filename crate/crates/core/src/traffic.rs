//! Packet generation and inter-arrival statistics.

use std::collections::VecDeque;

use crate::channel::{NodeId, Priority};
use crate::engine::{RngStream, VirtualTime};

pub type PacketId = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: PacketId,
    pub origin: NodeId,
    pub priority: Priority,
    pub generated_at: VirtualTime,
    pub size: u32,
    pub hops: u32,
    pub retransmissions: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pattern {
    Cbr,
    Poisson,
}

impl Pattern {
    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::Cbr => "CBR",
            Pattern::Poisson => "Poisson",
        }
    }
}

/// Arrival process for one `(node, priority)` flow.
#[derive(Debug, Clone)]
pub struct Generator {
    pub pattern: Pattern,
    /// Mean inter-arrival in microseconds.
    pub mean_interval: u64,
    pub priority: Priority,
    pub node: NodeId,
    last: VirtualTime,
    rng: RngStream,
}

impl Generator {
    /// `offset` is the time origin of the flow; the first arrival comes one
    /// interval after it.
    pub fn new(
        pattern: Pattern,
        mean_interval: u64,
        priority: Priority,
        node: NodeId,
        offset: VirtualTime,
        rng: RngStream,
    ) -> Self {
        assert!(mean_interval > 0, "mean interval must be positive");
        Generator { pattern, mean_interval, priority, node, last: offset, rng }
    }

    /// Next arrival instant. Intervals are at least 1 µs.
    pub fn next_arrival(&mut self) -> VirtualTime {
        let gap = match self.pattern {
            Pattern::Cbr => self.mean_interval,
            Pattern::Poisson => {
                let x = self.rng.exponential(self.mean_interval as f64).expect("mean checked at construction");
                (x.round() as u64).max(1)
            }
        };
        self.last = self.last + gap;
        self.last
    }
}

/// Sliding window of the most recent inter-arrival durations.
#[derive(Debug, Clone)]
pub struct ArrivalHistory {
    window: usize,
    samples: VecDeque<u64>,
    last_arrival: Option<VirtualTime>,
}

impl ArrivalHistory {
    pub fn new(window: usize) -> Self {
        assert!(window >= 1);
        ArrivalHistory { window, samples: VecDeque::with_capacity(window), last_arrival: None }
    }

    pub fn from_samples(window: usize, samples: &[u64]) -> Self {
        let mut h = ArrivalHistory::new(window);
        for &s in samples {
            h.push_interval(s);
        }
        h
    }

    /// Record an arrival at `at`; a zero-length gap is ignored.
    pub fn record(&mut self, at: VirtualTime) {
        if let Some(prev) = self.last_arrival {
            let gap = at.since(prev);
            if gap > 0 {
                self.push_interval(gap);
            }
        }
        self.last_arrival = Some(at);
    }

    pub fn push_interval(&mut self, gap: u64) {
        if gap == 0 {
            return;
        }
        if self.samples.len() == self.window {
            self.samples.pop_front();
        }
        self.samples.push_back(gap);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last_arrival(&self) -> Option<VirtualTime> {
        self.last_arrival
    }

    pub fn samples(&self) -> impl Iterator<Item = u64> + '_ {
        self.samples.iter().copied()
    }

    /// Mean and population standard deviation, if at least two samples.
    pub fn moments(&self) -> Option<(f64, f64)> {
        if self.samples.len() < 2 {
            return None;
        }
        let n = self.samples.len() as f64;
        let mean = self.samples.iter().map(|&s| s as f64).sum::<f64>() / n;
        let var = self.samples.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / n;
        Some((mean, var.sqrt()))
    }
}

/// Population standard deviation over mean. `None` with fewer than two samples.
pub fn coefficient_of_variation(history: &ArrivalHistory) -> Option<f64> {
    history.moments().map(|(mean, sd)| sd / mean)
}

pub const DEFAULT_CV_THRESHOLD: f64 = 0.5;

/// Below the threshold is CBR; the threshold itself counts as Poisson.
pub fn classify(cv: f64, threshold: f64) -> Pattern {
    if cv < threshold {
        Pattern::Cbr
    } else {
        Pattern::Poisson
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionParams {
    /// Guard in units of the standard deviation.
    pub k: f64,
    pub guard_min: u64,
    pub guard_cap: u64,
}

impl Default for PredictionParams {
    fn default() -> Self {
        PredictionParams { k: 1.0, guard_min: 50_000, guard_cap: 2_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UrgentPrediction {
    pub expected_at: VirtualTime,
    pub guard_before: u64,
    pub guard_after: u64,
    pub valid: bool,
}

impl UrgentPrediction {
    pub const INVALID: UrgentPrediction =
        UrgentPrediction { expected_at: VirtualTime::ZERO, guard_before: 0, guard_after: 0, valid: false };

    /// `[expected_at - guard_before, expected_at + guard_after]`, clipped at zero.
    pub fn window(&self) -> (VirtualTime, VirtualTime) {
        (
            VirtualTime(self.expected_at.0.saturating_sub(self.guard_before)),
            self.expected_at + self.guard_after,
        )
    }
}

pub fn predict_next_urgent(
    history: &ArrivalHistory,
    last_urgent: VirtualTime,
    params: &PredictionParams,
) -> UrgentPrediction {
    let Some((mean, sd)) = history.moments() else {
        return UrgentPrediction::INVALID;
    };
    let guard = ((params.k * sd).round() as u64).max(params.guard_min).min(params.guard_cap.max(params.guard_min));
    UrgentPrediction {
        expected_at: last_urgent + mean.round() as u64,
        guard_before: guard,
        guard_after: guard,
        valid: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::StreamPurpose;

    #[test]
    fn cbr_arrivals_are_exact_multiples() {
        let rng = RngStream::new(1, 1, StreamPurpose::NormalTraffic);
        let mut g = Generator::new(Pattern::Cbr, 2_000_000, Priority::Normal, 1, VirtualTime::ZERO, rng);
        let ts: Vec<u64> = (0..3).map(|_| g.next_arrival().0).collect();
        assert_eq!(ts, vec![2_000_000, 4_000_000, 6_000_000]);
    }

    #[test]
    fn poisson_mean_interval() {
        let rng = RngStream::new(11, 4, StreamPurpose::UrgentTraffic);
        let mut g = Generator::new(Pattern::Poisson, 2_000_000, Priority::Urgent, 4, VirtualTime::ZERO, rng);
        let mut prev = VirtualTime::ZERO;
        let mut sum = 0u64;
        for _ in 0..10_000 {
            let t = g.next_arrival();
            assert!(t > prev);
            sum += t.0 - prev.0;
            prev = t;
        }
        let mean_s = sum as f64 / 10_000.0 / 1e6;
        assert!((1.94..=2.06).contains(&mean_s), "{mean_s}");
    }

    #[test]
    fn cv_examples() {
        assert_eq!(coefficient_of_variation(&ArrivalHistory::from_samples(10, &[10, 10, 10, 10])), Some(0.0));
        let cv = coefficient_of_variation(&ArrivalHistory::from_samples(10, &[5, 15])).unwrap();
        assert!((cv - 0.5).abs() < 1e-12);
        assert_eq!(coefficient_of_variation(&ArrivalHistory::from_samples(10, &[7])), None);
    }

    #[test]
    fn cv_of_exponential_samples() {
        let mut rng = RngStream::new(5, 0, StreamPurpose::Harness);
        let samples: Vec<u64> = (0..1000).map(|_| (rng.exponential(1e6).unwrap().round() as u64).max(1)).collect();
        let cv = coefficient_of_variation(&ArrivalHistory::from_samples(1000, &samples)).unwrap();
        assert!((0.9..=1.1).contains(&cv), "{cv}");
    }

    #[test]
    fn classification_boundary() {
        assert_eq!(classify(0.0, DEFAULT_CV_THRESHOLD), Pattern::Cbr);
        assert_eq!(classify(1.0, DEFAULT_CV_THRESHOLD), Pattern::Poisson);
        assert_eq!(classify(0.5, DEFAULT_CV_THRESHOLD), Pattern::Poisson);
        assert_eq!(classify(0.4999, DEFAULT_CV_THRESHOLD), Pattern::Cbr);
    }

    #[test]
    fn history_window_is_bounded() {
        let mut h = ArrivalHistory::new(3);
        for t in [0, 10, 30, 60, 100] {
            h.record(VirtualTime(t));
        }
        assert_eq!(h.samples().collect::<Vec<_>>(), vec![20, 30, 40]);
    }

    #[test]
    fn prediction_examples() {
        let p = PredictionParams::default();
        let mut h = ArrivalHistory::new(10);
        for s in [0, 10, 20] {
            h.record(VirtualTime::from_secs(s));
        }
        let pred = predict_next_urgent(&h, VirtualTime::from_secs(20), &p);
        assert!(pred.valid);
        assert_eq!(pred.expected_at, VirtualTime::from_secs(30));
        assert_eq!((pred.guard_before, pred.guard_after), (50_000, 50_000));

        let mut single = ArrivalHistory::new(10);
        single.record(VirtualTime::from_secs(3));
        assert!(!predict_next_urgent(&single, VirtualTime::from_secs(3), &p).valid);

        // mean 10 s, population sd 2 s
        let h = ArrivalHistory::from_samples(10, &[8_000_000, 12_000_000]);
        let pred = predict_next_urgent(&h, VirtualTime::ZERO, &p);
        assert_eq!(pred.guard_before, 2_000_000);
        assert_eq!(pred.expected_at, VirtualTime::from_secs(10));
    }

    #[test]
    fn guard_is_capped() {
        let p = PredictionParams::default();
        let h = ArrivalHistory::from_samples(10, &[1_000_000, 19_000_000]);
        let pred = predict_next_urgent(&h, VirtualTime::ZERO, &p);
        assert_eq!(pred.guard_after, 2_000_000);
    }
}
