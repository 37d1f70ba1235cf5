//! Whole-run properties checked on small simulations.

use proptest::prelude::*;

use wbanmac::channel::{FrameKind, Priority, RadioState, TraceRecord};
use wbanmac::mac::mvdr::superframe;
use wbanmac::metrics::energy_of;
use wbanmac::{summarize, Protocol, SimConfig, SimReport, TraceOptions, VirtualTime};

const ALL_TRACES: TraceOptions = TraceOptions { frames: true, arrivals: true, intervals: true };

fn config(protocol: Protocol, seed: u64, extra: &str) -> SimConfig {
    let text = format!("protocol = {protocol}\nseed = {seed}\nstop_delivered = 120\n{extra}");
    SimConfig::parse_str(&text, "<test>").unwrap()
}

fn traced(cfg: &SimConfig) -> SimReport {
    wbanmac::run_traced(cfg, ALL_TRACES).unwrap()
}

fn protocol() -> impl Strategy<Value = Protocol> {
    prop_oneof![Just(Protocol::Adp), Just(Protocol::Adp2), Just(Protocol::Mvdr)]
}

fn interval() -> impl Strategy<Value = u64> {
    prop_oneof![Just(1u64), Just(2), Just(5)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn radio_timelines_tile_the_run(p in protocol(), seed in 1u64..1000, iv in interval()) {
        let cfg = config(p, seed, &format!("urgent_interval_s = {iv}\nnormal_interval_s = {iv}\n"));
        let r = traced(&cfg);
        let end = r.output.end_time;
        for tl in &r.output.ledger.timelines {
            let iv = tl.intervals().unwrap();
            let mut cursor = VirtualTime::ZERO;
            for i in iv {
                prop_assert_eq!(i.start, cursor);
                prop_assert!(i.end > i.start);
                cursor = i.end;
            }
            prop_assert_eq!(cursor, end);
            prop_assert_eq!(tl.total_time(), end.0);

            // energy from the accumulated totals equals the interval sum
            let power = &r.output.ledger.power;
            let oracle: f64 = iv.iter().map(|i| power.mw(i.state) * 1e-3 * i.end.since(i.start) as f64 * 1e-6).sum();
            prop_assert!((energy_of(tl, power) - oracle).abs() < 1e-9);
        }
        let row = summarize(&r.output);
        let sum: f64 = row.energy_per_node_j.iter().sum();
        prop_assert!((row.energy_total_j - sum).abs() < 1e-9);
        prop_assert_eq!(row.delivered, 120);
        prop_assert!(row.delivered <= row.generated);
        prop_assert!((0.0..=1.0).contains(&row.pdr));
    }

    #[test]
    fn runs_are_reproducible(p in protocol(), seed in 1u64..1000) {
        let cfg = config(p, seed, "");
        let (a, b) = (traced(&cfg), traced(&cfg));
        prop_assert_eq!(&a.frames, &b.frames);
        prop_assert_eq!(&a.arrivals, &b.arrivals);
        prop_assert_eq!(summarize(&a.output), summarize(&b.output));
    }

    #[test]
    fn polling_delays_respect_per_hop_floor(adp2: bool, seed in 1u64..1000) {
        let p = if adp2 { Protocol::Adp2 } else { Protocol::Adp };
        let cfg = config(p, seed, "");
        // a burst is fixed when strobing starts, so every hop costs at least
        // one strobe, the early ack and the data frame itself
        let t = &cfg.timings;
        let floor = t.t_pre + t.t_ea + t.t_data;
        let out = wbanmac::run(&cfg).unwrap();
        for d in &out.deliveries {
            prop_assert!(d.delivered_at >= d.generated_at);
            prop_assert!(d.hops >= 1);
            prop_assert!(d.delay() >= floor * d.hops as u64, "{:?}", d);
        }
    }
}

#[test]
fn different_seeds_differ() {
    let a = wbanmac::run(&config(Protocol::Adp2, 1, "")).unwrap();
    let b = wbanmac::run(&config(Protocol::Adp2, 2, "")).unwrap();
    assert_ne!(summarize(&a).end_time_s, summarize(&b).end_time_s);
}

fn frames_overlapping<'a>(frames: &'a [TraceRecord], lo: VirtualTime, hi: VirtualTime) -> impl Iterator<Item = &'a TraceRecord> {
    frames.iter().filter(move |f| f.start < hi && lo < f.end)
}

#[test]
fn superframe_discipline() {
    for seed in 1..4 {
        let cfg = config(Protocol::Mvdr, seed, "stop_delivered = 40\nurgent_interval_s = 2\nnormal_interval_s = 2\n");
        let r = traced(&cfg);
        let sf_cfg = cfg.superframe();
        let flows: Vec<u32> = cfg.topology.sensors().collect();
        let last = r.output.end_time.0 / sf_cfg.period;
        for k in 0..=last {
            let sf = superframe(&sf_cfg, k, &flows);
            // only the beacon occupies the beacon interval
            for f in frames_overlapping(&r.frames, sf.beacon_at, sf.beacon_at + sf.beacon_dur) {
                assert_eq!(f.kind, FrameKind::Beacon, "{f:?}");
            }
            // inside a slot only the owner and its next hop speak
            for slot in &sf.gts {
                for f in frames_overlapping(&r.frames, slot.interval.start, slot.interval.end) {
                    assert!(f.start >= slot.interval.start && f.end <= slot.interval.end, "{f:?} crosses {slot:?}");
                    assert!(f.src == slot.owner || f.src + 1 == slot.owner, "{f:?} in slot of {}", slot.owner);
                }
            }
            // everyone sleeps through the inactive part
            let (lo, hi) = (sf.active_end(), sf.next_beacon().min(r.output.end_time));
            for tl in &r.output.ledger.timelines {
                for i in tl.intervals().unwrap().iter().filter(|i| i.start < hi && lo < i.end) {
                    assert_eq!(i.state, RadioState::Sleep, "{i:?} in inactive part of superframe {k}");
                }
            }
        }
        let bad = r
            .frames
            .iter()
            .filter(|f| f.kind == FrameKind::Data && f.priority == Priority::Urgent)
            .filter(|f| f.outcome.as_str() == "corrupted")
            .count();
        assert_eq!(bad, 0, "urgent data collided");
    }
}

#[test]
fn arrivals_trace_matches_generated_count() {
    let cfg = config(Protocol::Adp, 3, "");
    let r = traced(&cfg);
    let generated = r.output.generated_urgent + r.output.generated_normal;
    assert_eq!(r.arrivals.len() as u64, generated);
    assert!(r.arrivals.windows(2).all(|w| w[0].at <= w[1].at));
    let mut ids: Vec<u64> = r.arrivals.iter().map(|a| a.packet).collect();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), r.arrivals.len());
}

#[test]
fn adp_frames_carry_no_priority() {
    let r = traced(&config(Protocol::Adp, 5, "stop_delivered = 30\n"));
    assert!(r.frames.iter().all(|f| f.priority == Priority::None));
    let r = traced(&config(Protocol::Adp2, 5, "stop_delivered = 30\n"));
    assert!(r.frames.iter().any(|f| f.priority == Priority::Urgent));
}
