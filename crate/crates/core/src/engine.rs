//! Discrete-event scheduler.
//!
//! Events are ordered by `(fire_at, seq)`, where `seq` is an insertion counter
//! that is unique per scheduled event. Simultaneous events therefore fire in the
//! order they were scheduled, which keeps every run reproducible.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::error::SimError;
use crate::time::SimTime;

/// Handle returned by [`Scheduler::schedule`], usable for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub payload: P,
}

struct Queued<P>(Event<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.seq == other.0.seq
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    // Reversed so the max-heap pops the earliest (fire_at, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.fire_at, other.0.seq).cmp(&(self.0.fire_at, self.0.seq))
    }
}

pub struct Scheduler<P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Queued<P>>,
    cancelled: HashSet<u64>,
}

impl<P> Default for Scheduler<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Scheduler<P> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn schedule(&mut self, fire_at: SimTime, payload: P) -> Result<EventHandle, SimError> {
        if fire_at < self.now {
            return Err(SimError::SchedulingInPast {
                fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Queued(Event {
            fire_at,
            seq,
            payload,
        }));
        Ok(EventHandle(seq))
    }

    /// Marks a scheduled event so it is skipped. Returns false if the handle
    /// was already cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.cancelled.insert(handle.0)
    }

    /// Number of queued events that have not been cancelled.
    pub fn pending(&self) -> usize {
        self.live().count()
    }

    /// Queued, non-cancelled events in unspecified order.
    pub fn live(&self) -> impl Iterator<Item = &Event<P>> {
        self.queue
            .iter()
            .map(|q| &q.0)
            .filter(|e| !self.cancelled.contains(&e.seq))
    }

    /// Pops the next live event due at or before `limit`, advancing the clock.
    pub fn pop_due(&mut self, limit: SimTime) -> Option<Event<P>> {
        loop {
            let due = self.queue.peek().is_some_and(|q| q.0.fire_at <= limit);
            if !due {
                return None;
            }
            let Queued(event) = self.queue.pop().expect("peeked");
            if self.cancelled.remove(&event.seq) {
                continue;
            }
            debug_assert!(event.fire_at >= self.now, "causality violated");
            self.now = event.fire_at;
            return Some(event);
        }
    }

    /// Processes every event with `fire_at <= limit` in order, then parks the
    /// clock at `limit`. Returns the number of events handed to `handler`.
    pub fn run_until<F>(&mut self, limit: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, Event<P>),
    {
        if limit < self.now {
            return 0;
        }
        let mut count = 0;
        while let Some(event) = self.pop_due(limit) {
            handler(self, event);
            count += 1;
        }
        self.now = limit;
        count
    }
}
