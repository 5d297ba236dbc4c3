//! Time-ordered event queue. Events at the same timestamp pop in insertion order.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::types::Timestamp;

struct Entry<T> {
    ts: Timestamp,
    seq: u64,
    item: T,
}

impl<T> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        (self.ts, self.seq) == (other.ts, other.seq)
    }
}

impl<T> Eq for Entry<T> {}

impl<T> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Entry<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.ts, self.seq).cmp(&(other.ts, other.seq))
    }
}

pub struct EventQueue<T> {
    heap: BinaryHeap<Reverse<Entry<T>>>,
    next_seq: u64,
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        EventQueue { heap: BinaryHeap::new(), next_seq: 0 }
    }
}

impl<T> EventQueue<T> {
    pub fn push(&mut self, ts: Timestamp, item: T) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Entry { ts, seq, item }));
    }

    pub fn peek_time(&self) -> Option<Timestamp> {
        self.heap.peek().map(|Reverse(e)| e.ts)
    }

    pub fn pop(&mut self) -> Option<(Timestamp, T)> {
        self.heap.pop().map(|Reverse(e)| (e.ts, e.item))
    }

    /// Pops every event with `ts <= horizon`, in order.
    pub fn pop_until(&mut self, horizon: Timestamp) -> Vec<(Timestamp, T)> {
        let mut out = Vec::new();
        while self.peek_time().is_some_and(|t| t <= horizon) {
            out.extend(self.pop());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_break_by_insertion() {
        let mut q = EventQueue::default();
        q.push(5, "b");
        q.push(1, "a");
        q.push(5, "c");
        q.push(9, "d");
        assert_eq!(q.pop_until(5), vec![(1, "a"), (5, "b"), (5, "c")]);
        assert_eq!(q.len(), 1);
        assert!(q.pop_until(8).is_empty());
    }
}
