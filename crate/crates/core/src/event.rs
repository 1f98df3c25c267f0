//! Deterministic future-event set.
//!
//! Events pop in `(time, entity, kind, insertion order)` order, so runs with
//! the same inputs replay identically regardless of heap internals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scheduled<E> {
    pub time: f64,
    pub entity: u32,
    pub kind: u8,
    seq: u64,
    pub event: E,
}

impl<E> Scheduled<E> {
    fn key(&self) -> (u32, u8, u64) {
        (self.entity, self.kind, self.seq)
    }
}

impl<E: PartialEq> Eq for Scheduled<E> {}

impl<E: PartialEq> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E: PartialEq> Ord for Scheduled<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap: invert so the earliest event is on top.
        other.time.total_cmp(&self.time).then_with(|| other.key().cmp(&self.key()))
    }
}

#[derive(Debug)]
pub struct EventQueue<E> {
    heap: BinaryHeap<Scheduled<E>>,
    next_seq: u64,
    now: f64,
}

impl<E: PartialEq> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: PartialEq> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue { heap: BinaryHeap::new(), next_seq: 0, now: 0.0 }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Schedule `event` at absolute `time`, which must not precede `now`.
    pub fn schedule(&mut self, time: f64, entity: u32, kind: u8, event: E) {
        debug_assert!(time >= self.now, "scheduling into the past: {time} < {}", self.now);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Scheduled { time, entity, kind, seq, event });
    }

    pub fn pop(&mut self) -> Option<Scheduled<E>> {
        let next = self.heap.pop()?;
        self.now = next.time;
        Some(next)
    }
}
