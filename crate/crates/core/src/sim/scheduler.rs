use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::domain::RewardEvent;

/// Min-priority queue of pending reward events keyed by
/// `(observe_day, lead_id)`, carrying a caller payload per event.
#[derive(Debug)]
pub struct RewardScheduler<P> {
    heap: BinaryHeap<Reverse<(u32, u64, usize)>>,
    slots: Vec<Option<(RewardEvent, P)>>,
    pushed: usize,
    popped: usize,
}

impl<P> Default for RewardScheduler<P> {
    fn default() -> Self {
        RewardScheduler {
            heap: BinaryHeap::new(),
            slots: Vec::new(),
            pushed: 0,
            popped: 0,
        }
    }
}

impl<P> RewardScheduler<P> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: RewardEvent, payload: P) {
        let slot = self.slots.len();
        self.heap.push(Reverse((event.observe_day, event.lead_id, slot)));
        self.slots.push(Some((event, payload)));
        self.pushed += 1;
    }

    pub fn peek_day(&self) -> Option<u32> {
        self.heap.peek().map(|Reverse((d, _, _))| *d)
    }

    /// Pop every event with `observe_day <= day`, in queue order.
    pub fn pop_due(&mut self, day: u32) -> Vec<(RewardEvent, P)> {
        let mut out = Vec::new();
        while let Some(Reverse((d, _, slot))) = self.heap.peek().copied() {
            if d > day {
                break;
            }
            self.heap.pop();
            if let Some(item) = self.slots[slot].take() {
                self.popped += 1;
                out.push(item);
            }
        }
        out
    }

    pub fn pending(&self) -> usize {
        self.pushed - self.popped
    }

    pub fn pushed(&self) -> usize {
        self.pushed
    }

    pub fn popped(&self) -> usize {
        self.popped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Action;
    use proptest::prelude::*;

    #[test]
    fn pops_in_day_then_lead_order() {
        let mut s = RewardScheduler::new();
        s.push(RewardEvent::new(3, Action::A, 1, 1, 5), ());
        s.push(RewardEvent::new(1, Action::B, 0, 2, 4), ());
        s.push(RewardEvent::new(2, Action::C, 1, 1, 0), ());
        assert_eq!(s.peek_day(), Some(1));
        let first: Vec<u64> = s.pop_due(1).iter().map(|(e, _)| e.lead_id).collect();
        assert_eq!(first, vec![2]);
        assert!(s.pop_due(5).is_empty());
        let rest: Vec<u64> = s.pop_due(6).iter().map(|(e, _)| e.lead_id).collect();
        assert_eq!(rest, vec![1, 3]);
        assert_eq!(s.pending(), 0);
    }

    proptest! {
        #[test]
        fn pops_are_sorted_and_exactly_once(events in prop::collection::vec((0u32..50, 0u32..40), 0..200)) {
            let mut s = RewardScheduler::new();
            for (i, (arrival, delay)) in events.iter().enumerate() {
                s.push(RewardEvent::new(i as u64, Action::A, 0, *arrival, *delay), i);
            }
            let mut seen = vec![false; events.len()];
            let mut last = 0u32;
            for day in 0..100 {
                for (e, idx) in s.pop_due(day) {
                    prop_assert!(e.observe_day <= day);
                    prop_assert!(e.observe_day >= last);
                    last = e.observe_day;
                    prop_assert!(!seen[idx]);
                    seen[idx] = true;
                }
            }
            prop_assert!(seen.iter().all(|&b| b));
            prop_assert_eq!(s.pending(), 0);
        }
    }
}
