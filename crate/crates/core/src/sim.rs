//! Discrete-event engine: fixed-point virtual clock, cancellable event queue
//! ordered by `(due, seq)`, and named RNG sub-streams.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Virtual time (or a duration) with microsecond resolution.
///
/// Serialized as seconds so configuration files stay readable; parsing rounds
/// to the nearest microsecond.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    /// Rounds to the nearest microsecond. Negative or non-finite input is clamped to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if !s.is_finite() || s <= 0.0 {
            return SimTime::ZERO;
        }
        SimTime((s * 1e6).round() as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        *self = *self + rhs;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.checked_sub(rhs.0).expect("SimTime subtraction underflow"))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

impl Serialize for SimTime {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_secs_f64())
    }
}

impl<'de> Deserialize<'de> for SimTime {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let secs = f64::deserialize(deserializer)?;
        if !secs.is_finite() || secs < 0.0 {
            return Err(serde::de::Error::custom("time must be a non-negative number of seconds"));
        }
        Ok(SimTime::from_secs_f64(secs))
    }
}

/// Handle returned by [`Scheduler::schedule`]; used for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle {
    due: SimTime,
    seq: u64,
}

impl EventHandle {
    pub fn due(&self) -> SimTime {
        self.due
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }
}

/// An event popped from the queue.
#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent<E> {
    pub due: SimTime,
    pub seq: u64,
    pub kind: E,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("event due at {due} is before the current clock {now}")]
    InThePast { due: SimTime, now: SimTime },
}

/// Outcome of [`Scheduler::run_until_quiescent`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    Quiescent(SimTime),
    LimitHit,
}

/// What [`Scheduler::next_event`] found.
#[derive(Debug)]
pub enum Step<E> {
    Event(SimEvent<E>),
    Quiescent(SimTime),
    LimitHit,
}

type Classifier<E> = Box<dyn Fn(&E) -> bool + Send>;

/// Priority event queue plus virtual clock.
///
/// Events are ordered by `(due, seq)`; `seq` is assigned at insertion and never
/// reused. A classifier decides which event kinds change state; quiescence is
/// reached when none of those remain queued.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    queue: BTreeMap<(SimTime, u64), E>,
    classifier: Classifier<E>,
    state_changing: usize,
}

impl<E> fmt::Debug for Scheduler<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scheduler")
            .field("now", &self.now)
            .field("next_seq", &self.next_seq)
            .field("queued", &self.queue.len())
            .field("state_changing", &self.state_changing)
            .finish()
    }
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BTreeMap::new(),
            classifier: Box::new(|_| true),
            state_changing: 0,
        }
    }

    /// Register the predicate telling which events change routing state.
    /// Must be set before anything is scheduled.
    pub fn with_classifier(mut self, classifier: impl Fn(&E) -> bool + Send + 'static) -> Self {
        assert!(self.queue.is_empty(), "classifier must be registered on an empty queue");
        self.classifier = Box::new(classifier);
        self
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Number of queued events the classifier considers state-changing.
    pub fn pending_state_changes(&self) -> usize {
        self.state_changing
    }

    pub fn schedule(&mut self, due: SimTime, kind: E) -> Result<EventHandle, ScheduleError> {
        if due < self.now {
            return Err(ScheduleError::InThePast { due, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        if (self.classifier)(&kind) {
            self.state_changing += 1;
        }
        self.queue.insert((due, seq), kind);
        Ok(EventHandle { due, seq })
    }

    pub fn schedule_in(&mut self, delay: SimTime, kind: E) -> EventHandle {
        let due = self.now + delay;
        self.schedule(due, kind).expect("relative schedule is never in the past")
    }

    /// Returns `true` if the event was still pending and has been removed.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        match self.queue.remove(&(handle.due, handle.seq)) {
            Some(kind) => {
                if (self.classifier)(&kind) {
                    self.state_changing -= 1;
                }
                true
            }
            None => false,
        }
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.queue.contains_key(&(handle.due, handle.seq))
    }

    /// Due time of the earliest queued event, of any kind.
    pub fn peek_due(&self) -> Option<SimTime> {
        self.queue.first_key_value().map(|(&(due, _), _)| due)
    }

    /// Pops the next event if the simulation is not yet quiescent and the
    /// event is due no later than `limit`. Advances the clock.
    pub fn next_event(&mut self, limit: SimTime) -> Step<E> {
        if self.state_changing == 0 {
            return Step::Quiescent(self.now);
        }
        let Some((&(due, seq), _)) = self.queue.first_key_value() else {
            return Step::Quiescent(self.now);
        };
        if due > limit {
            return Step::LimitHit;
        }
        let kind = self.queue.remove(&(due, seq)).expect("key just observed");
        if (self.classifier)(&kind) {
            self.state_changing -= 1;
        }
        self.now = due;
        Step::Event(SimEvent { due, seq, kind })
    }

    /// Pops the next event due no later than `until`, regardless of whether it
    /// changes state. Used for wall-clock paced execution.
    pub fn next_event_until(&mut self, until: SimTime) -> Option<SimEvent<E>> {
        let (&(due, seq), _) = self.queue.first_key_value()?;
        if due > until {
            return None;
        }
        let kind = self.queue.remove(&(due, seq)).expect("key just observed");
        if (self.classifier)(&kind) {
            self.state_changing -= 1;
        }
        self.now = due;
        Some(SimEvent { due, seq, kind })
    }

    /// Moves the clock forward without processing anything. Panics if an
    /// event due before `to` is still queued.
    pub fn advance_to(&mut self, to: SimTime) {
        if let Some((&(due, _), _)) = self.queue.first_key_value() {
            assert!(due >= to, "advance_to({to}) would skip an event due at {due}");
        }
        if to > self.now {
            self.now = to;
        }
    }

    /// Processes events in `(due, seq)` order until no state-changing events
    /// remain or the next one is due after `limit`.
    pub fn run_until_quiescent<F>(&mut self, limit: SimTime, mut handler: F) -> RunOutcome
    where
        F: FnMut(&mut Self, SimEvent<E>),
    {
        loop {
            match self.next_event(limit) {
                Step::Event(ev) => handler(self, ev),
                Step::Quiescent(t) => return RunOutcome::Quiescent(t),
                Step::LimitHit => return RunOutcome::LimitHit,
            }
        }
    }
}

/// Root of all randomness for one run. Named sub-streams are independent, so
/// adding a consumer never perturbs the draws of another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStreams {
    seed: u64,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        RngStreams { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fork(&self, name: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.derive(name))
    }

    /// Deterministic 64-bit sub-seed for `name`.
    pub fn derive(&self, name: &str) -> u64 {
        splitmix64(self.seed ^ fnv1a(name.as_bytes()))
    }

    pub fn child(&self, name: &str) -> RngStreams {
        RngStreams::new(self.derive(name))
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
