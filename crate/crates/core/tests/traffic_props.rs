use proptest::prelude::*;

use wbanmac::channel::Priority;
use wbanmac::engine::{RngStream, StreamPurpose};
use wbanmac::mac::adp::{update_policy, PollDistribution, PollingPolicy};
use wbanmac::traffic::{
    classify, coefficient_of_variation, predict_next_urgent, ArrivalHistory, Generator, Pattern, PredictionParams,
};
use wbanmac::VirtualTime;

/// Population Cv computed the slow way.
fn cv_oracle(xs: &[u64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

proptest! {
    #[test]
    fn history_keeps_the_last_w_samples(w in 1usize..20, xs in prop::collection::vec(1u64..1_000_000, 0..60)) {
        let mut h = ArrivalHistory::new(w);
        for &x in &xs {
            h.push_interval(x);
            prop_assert!(h.len() <= w);
        }
        let tail: Vec<u64> = xs.iter().copied().skip(xs.len().saturating_sub(w)).collect();
        prop_assert_eq!(h.samples().collect::<Vec<_>>(), tail);
    }

    #[test]
    fn cv_matches_oracle(xs in prop::collection::vec(1u64..10_000_000, 2..50)) {
        let h = ArrivalHistory::from_samples(xs.len(), &xs);
        let got = coefficient_of_variation(&h).unwrap();
        prop_assert!((got - cv_oracle(&xs)).abs() < 1e-9);
        prop_assert!(got >= 0.0);
    }

    #[test]
    fn cv_is_scale_invariant(xs in prop::collection::vec(1u64..100_000, 2..30), k in 1u64..50) {
        let a = coefficient_of_variation(&ArrivalHistory::from_samples(64, &xs)).unwrap();
        let scaled: Vec<u64> = xs.iter().map(|x| x * k).collect();
        let b = coefficient_of_variation(&ArrivalHistory::from_samples(64, &scaled)).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn prediction_guards_respect_floor_and_cap(
        xs in prop::collection::vec(1u64..5_000_000, 2..10),
        last in 0u64..100_000_000,
        k in 0.0f64..3.0,
    ) {
        let params = PredictionParams { k, guard_min: 50_000, guard_cap: 2_000_000 };
        let h = ArrivalHistory::from_samples(10, &xs);
        let p = predict_next_urgent(&h, VirtualTime(last), &params);
        prop_assert!(p.valid);
        prop_assert!(p.guard_before >= 50_000 && p.guard_before <= 2_000_000);
        prop_assert_eq!(p.guard_before, p.guard_after);
        let mean = xs.iter().sum::<u64>() as f64 / xs.len() as f64;
        prop_assert_eq!(p.expected_at.0, last + mean.round() as u64);
    }
}

#[test]
fn cv_examples() {
    assert_eq!(coefficient_of_variation(&ArrivalHistory::from_samples(4, &[10, 10, 10, 10])), Some(0.0));
    let cv = coefficient_of_variation(&ArrivalHistory::from_samples(2, &[5, 15])).unwrap();
    assert!((cv - 0.5).abs() < 1e-12);
    assert_eq!(coefficient_of_variation(&ArrivalHistory::from_samples(4, &[7])), None);
}

#[test]
fn classification_boundary() {
    assert_eq!(classify(0.0, 0.5), Pattern::Cbr);
    assert_eq!(classify(0.4999, 0.5), Pattern::Cbr);
    assert_eq!(classify(0.5, 0.5), Pattern::Poisson);
    assert_eq!(classify(1.0, 0.5), Pattern::Poisson);
}

#[test]
fn prediction_examples() {
    let params = PredictionParams::default();
    // arrivals at 0, 10, 20 s
    let mut h = ArrivalHistory::new(10);
    for s in [0, 10, 20] {
        h.record(VirtualTime::from_secs(s));
    }
    let p = predict_next_urgent(&h, VirtualTime::from_secs(20), &params);
    assert_eq!(p.expected_at, VirtualTime::from_secs(30));
    assert_eq!((p.guard_before, p.guard_after), (50_000, 50_000));

    // mean 10 s, sigma 2 s
    let h = ArrivalHistory::from_samples(10, &[8_000_000, 12_000_000]);
    let p = predict_next_urgent(&h, VirtualTime::ZERO, &params);
    assert_eq!(p.guard_before, 2_000_000);

    let single = ArrivalHistory::from_samples(10, &[8_000_000]);
    assert!(!predict_next_urgent(&single, VirtualTime::ZERO, &params).valid);
}

#[test]
fn observed_pattern_selects_polling_distribution() {
    let base = PollingPolicy::deterministic(50_000);
    let steady = ArrivalHistory::from_samples(10, &[1_000_000; 10]);
    assert_eq!(update_policy(&steady, &base, 0.5).distribution, PollDistribution::Deterministic);

    let rng = RngStream::new(3, 2, StreamPurpose::UrgentTraffic);
    let mut g = Generator::new(Pattern::Poisson, 1_000_000, Priority::Urgent, 2, VirtualTime::ZERO, rng);
    let mut h = ArrivalHistory::new(50);
    for _ in 0..51 {
        h.record(g.next_arrival());
    }
    assert_eq!(update_policy(&h, &base, 0.5).distribution, PollDistribution::Exponential);
    // too little history leaves the policy alone
    assert_eq!(update_policy(&ArrivalHistory::new(10), &base, 0.5), base);
}

#[test]
fn poisson_generator_mean_and_support() {
    let rng = RngStream::new(17, 3, StreamPurpose::UrgentTraffic);
    let mut g = Generator::new(Pattern::Poisson, 2_000_000, Priority::Urgent, 3, VirtualTime::ZERO, rng);
    let mut prev = VirtualTime::ZERO;
    let n = 10_000;
    let mut sum = 0;
    for _ in 0..n {
        let t = g.next_arrival();
        assert!(t > prev);
        sum += t.since(prev);
        prev = t;
    }
    let mean = sum as f64 / n as f64;
    assert!((1_940_000.0..=2_060_000.0).contains(&mean), "mean {mean}");
}
