use alloc::collections::BTreeMap;

use crate::time::SimTime;

/// Events ordered by time, ties broken by insertion order.
#[derive(Debug)]
pub struct EventQueue<E> {
    events: BTreeMap<(SimTime, u64), E>,
    next_seq: u64,
    now: SimTime,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        EventQueue { events: BTreeMap::new(), next_seq: 0, now: SimTime::ZERO }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Times in the past are clamped to the current time.
    pub fn schedule(&mut self, at: SimTime, event: E) {
        let at = at.max(self.now);
        self.events.insert((at, self.next_seq), event);
        self.next_seq += 1;
    }

    pub fn pop(&mut self) -> Option<(SimTime, E)> {
        let ((at, _), event) = self.events.pop_first()?;
        self.now = at.max(self.now);
        Some((self.now, event))
    }

    /// Moves the clock forward to `to`. Events already due before `to` fire
    /// at `to`.
    pub fn advance_to(&mut self, to: SimTime) {
        self.now = self.now.max(to);
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.events.keys().next().map(|(t, _)| *t)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SimTime, &E)> {
        self.events.iter().map(|((t, _), e)| (t, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_times_pop_in_insertion_order() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(5), 'b');
        q.schedule(SimTime(1), 'a');
        q.schedule(SimTime(5), 'c');
        let order: alloc::vec::Vec<char> = core::iter::from_fn(|| q.pop().map(|(_, e)| e)).collect();
        assert_eq!(order, ['a', 'b', 'c']);
        assert_eq!(q.now(), SimTime(5));
        q.schedule(SimTime(0), 'd');
        assert_eq!(q.pop(), Some((SimTime(5), 'd')));
    }

    #[test]
    fn advancing_never_moves_backwards() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(10), 'a');
        q.advance_to(SimTime(50));
        assert_eq!(q.pop(), Some((SimTime(50), 'a')));
        q.advance_to(SimTime(20));
        assert_eq!(q.now(), SimTime(50));
    }
}
