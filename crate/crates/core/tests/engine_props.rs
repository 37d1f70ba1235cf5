use proptest::prelude::*;

use wbanmac::engine::EventQueue;
use wbanmac::VirtualTime;

#[derive(Debug, Clone)]
enum Op {
    Schedule(u64),
    Cancel(usize),
    Pop,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0u64..500).prop_map(Op::Schedule),
        1 => (0usize..64).prop_map(Op::Cancel),
        2 => Just(Op::Pop),
    ]
}

proptest! {
    // The heap must agree with a naive sorted list: earliest time first,
    // insertion order among equal times, cancelled events never fire.
    #[test]
    fn queue_matches_sorted_list(ops in prop::collection::vec(op(), 1..200)) {
        let mut q: EventQueue<usize> = EventQueue::new();
        let mut handles = Vec::new();
        let mut oracle: Vec<(u64, usize)> = Vec::new(); // (time, seq) still live
        let mut seq = 0usize;
        for o in ops {
            match o {
                Op::Schedule(delay) => {
                    let at = q.now().0 + delay;
                    let h = q.schedule(VirtualTime(at), seq).unwrap();
                    handles.push((h, seq));
                    oracle.push((at, seq));
                    seq += 1;
                }
                Op::Cancel(i) if !handles.is_empty() => {
                    let (h, s) = handles[i % handles.len()];
                    let was_live = oracle.iter().any(|&(_, x)| x == s);
                    prop_assert_eq!(q.cancel(h), was_live);
                    oracle.retain(|&(_, x)| x != s);
                    prop_assert!(!q.cancel(h));
                }
                Op::Cancel(_) => {}
                Op::Pop => {
                    oracle.sort();
                    let want = if oracle.is_empty() { None } else { Some(oracle.remove(0)) };
                    let got = q.pop().map(|(t, _, s)| (t.0, s));
                    prop_assert_eq!(got, want);
                }
            }
            prop_assert_eq!(q.len(), oracle.len());
        }
        // drain: time never goes backwards
        let mut last = q.now();
        while let Some((t, _, _)) = q.pop() {
            prop_assert!(t >= last);
            last = t;
        }
    }
}

#[test]
fn scheduling_in_the_past_is_rejected() {
    let mut q = EventQueue::new();
    q.schedule(VirtualTime(10), ()).unwrap();
    q.pop();
    assert!(q.schedule(VirtualTime(9), ()).is_err());
    assert!(q.schedule(VirtualTime(10), ()).is_ok());
}

#[test]
fn equal_times_fire_in_insertion_order() {
    let mut q = EventQueue::new();
    for i in 0..5 {
        q.schedule(VirtualTime(7), i).unwrap();
    }
    let order: Vec<i32> = std::iter::from_fn(|| q.pop().map(|(_, _, p)| p)).collect();
    assert_eq!(order, vec![0, 1, 2, 3, 4]);
}
