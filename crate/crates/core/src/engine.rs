//! Virtual-time event queue and seeded random streams.
//!
//! Time is kept in integer microseconds. Events are ordered by
//! `(fire_at, seq)` where `seq` is a counter bumped on every `schedule`,
//! so simultaneous events fire in the order they were scheduled.
//!
//! Random streams use ChaCha8 (`rand_chacha`) seeded with the run seed and
//! selected with `set_stream` from a `(node, purpose)` pair. ChaCha8 output
//! is fully specified and identical on every platform.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimError};

/// Microseconds since simulation start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct VirtualTime(pub u64);

impl VirtualTime {
    pub const ZERO: VirtualTime = VirtualTime(0);

    pub fn from_millis(ms: u64) -> Self {
        VirtualTime(ms * 1_000)
    }

    pub fn from_secs(s: u64) -> Self {
        VirtualTime(s * 1_000_000)
    }

    pub fn micros(self) -> u64 {
        self.0
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1_000.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1_000_000.0
    }

    /// Duration from `earlier` to `self`, zero if `earlier` is later.
    pub fn since(self, earlier: VirtualTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl Add<u64> for VirtualTime {
    type Output = VirtualTime;
    fn add(self, rhs: u64) -> VirtualTime {
        VirtualTime(self.0 + rhs)
    }
}

impl Sub<u64> for VirtualTime {
    type Output = VirtualTime;
    fn sub(self, rhs: u64) -> VirtualTime {
        VirtualTime(self.0 - rhs)
    }
}

impl fmt::Display for VirtualTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

/// Handle returned by [`EventQueue::schedule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(u64);

struct Entry<E> {
    fire_at: VirtualTime,
    seq: u64,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // min-heap on (fire_at, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}

/// Deterministic priority queue of timestamped events.
pub struct EventQueue<E> {
    now: VirtualTime,
    next_seq: u64,
    heap: BinaryHeap<Entry<E>>,
    pending: HashSet<u64>,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            now: VirtualTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            pending: HashSet::new(),
        }
    }

    pub fn now(&self) -> VirtualTime {
        self.now
    }

    /// Number of events that will still fire.
    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Schedule `payload` at `fire_at`. Scheduling before `now` is an error.
    pub fn schedule(&mut self, fire_at: VirtualTime, payload: E) -> Result<EventHandle> {
        if fire_at < self.now {
            return Err(SimError::ScheduleInPast { now: self.now, at: fire_at });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry { fire_at, seq, payload });
        self.pending.insert(seq);
        Ok(EventHandle(seq))
    }

    /// Schedule `payload` `delay` microseconds from now.
    pub fn schedule_in(&mut self, delay: u64, payload: E) -> EventHandle {
        let at = self.now + delay;
        // cannot fail: at >= now
        self.schedule(at, payload).expect("relative schedule is never in the past")
    }

    /// Returns true iff the event was still pending. Idempotent.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.0)
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.pending.contains(&handle.0)
    }

    /// Time of the next live event.
    pub fn peek_time(&mut self) -> Option<VirtualTime> {
        self.skip_cancelled();
        self.heap.peek().map(|e| e.fire_at)
    }

    /// Pop the next live event and advance `now` to its timestamp.
    pub fn pop(&mut self) -> Option<(VirtualTime, EventHandle, E)> {
        self.skip_cancelled();
        let entry = self.heap.pop()?;
        self.pending.remove(&entry.seq);
        debug_assert!(entry.fire_at >= self.now);
        self.now = entry.fire_at;
        Some((entry.fire_at, EventHandle(entry.seq), entry.payload))
    }

    fn skip_cancelled(&mut self) {
        while let Some(top) = self.heap.peek() {
            if self.pending.contains(&top.seq) {
                break;
            }
            self.heap.pop();
        }
    }
}

/// Purpose tag separating random streams of one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamPurpose {
    UrgentTraffic,
    NormalTraffic,
    Backoff,
    Polling,
    Harness,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::UrgentTraffic => 1,
            StreamPurpose::NormalTraffic => 2,
            StreamPurpose::Backoff => 3,
            StreamPurpose::Polling => 4,
            StreamPurpose::Harness => 5,
        }
    }
}

/// Distribution accepted by [`RngStream::draw`]. Values are microseconds
/// (or plain integers for `UniformInt`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dist {
    /// Uniform over `[0, n)`.
    UniformInt(u64),
    /// Exponential with the given mean.
    Exponential(f64),
    Deterministic(u64),
}

/// A seeded random stream identified by `(seed, node, purpose)`.
#[derive(Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl fmt::Debug for RngStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RngStream").field("word_pos", &self.rng.get_word_pos()).finish()
    }
}

impl RngStream {
    pub fn new(seed: u64, node: u32, purpose: StreamPurpose) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((node as u64) << 8) | purpose.tag());
        RngStream { rng }
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.rng.gen::<u64>() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_int(&mut self, n: u64) -> u64 {
        if n <= 1 {
            return 0;
        }
        self.rng.gen_range(0..n)
    }

    /// Exponential sample by inversion. Returns a real number (microseconds
    /// when `mean` is in microseconds).
    pub fn exponential(&mut self, mean: f64) -> Result<f64> {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(SimError::InvalidDistribution(format!("exponential mean must be > 0, got {mean}")));
        }
        let u = self.unit();
        Ok(-mean * (1.0 - u).ln())
    }

    /// Draw from `dist`; real-valued draws are rounded to whole microseconds.
    pub fn draw(&mut self, dist: Dist) -> Result<u64> {
        match dist {
            Dist::UniformInt(n) => {
                if n == 0 {
                    return Err(SimError::InvalidDistribution("uniform range must be non-empty".into()));
                }
                Ok(self.uniform_int(n))
            }
            Dist::Exponential(mean) => Ok(self.exponential(mean)?.round() as u64),
            Dist::Deterministic(v) => Ok(v),
        }
    }
}

/// Why a run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Termination {
    /// The stop condition was met.
    Completed,
    /// The queue emptied before the stop condition held.
    Starved { delivered: u64, target: u64 },
    /// The virtual-time safety limit was reached.
    TimeLimit { delivered: u64, target: u64 },
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::Completed => "ok",
            Termination::Starved { .. } => "starved",
            Termination::TimeLimit { .. } => "time_limit",
        }
    }
}
