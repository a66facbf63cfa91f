use std::collections::VecDeque;

use rand::seq::index;

use crate::seed::SimRng;

/// Bounded FIFO store with uniform sampling without replacement.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    items: VecDeque<T>,
    capacity: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        Self { items: VecDeque::new(), capacity }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest entry when full.
    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// `n` distinct entries, or `None` when fewer than `n` are stored.
    pub fn sample(&self, n: usize, rng: &mut SimRng) -> Option<Vec<&T>> {
        if n > self.items.len() {
            return None;
        }
        Some(index::sample(rng, self.items.len(), n).into_iter().map(|k| &self.items[k]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream;

    #[test]
    fn evicts_oldest_first() {
        let mut b = ReplayBuffer::new(3);
        for k in 0..5 {
            b.push(k);
        }
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![2, 3, 4]);
    }

    #[test]
    fn sampling_is_distinct_and_bounded() {
        let mut b = ReplayBuffer::new(100);
        (0..10).for_each(|k| b.push(k));
        let mut rng = stream(0, 0, 0);
        assert!(b.sample(11, &mut rng).is_none());
        let mut s: Vec<i32> = b.sample(10, &mut rng).unwrap().into_iter().copied().collect();
        s.sort();
        assert_eq!(s, (0..10).collect::<Vec<_>>());
        let a: Vec<i32> = b.sample(4, &mut stream(1, 0, 0)).unwrap().into_iter().copied().collect();
        let c: Vec<i32> = b.sample(4, &mut stream(1, 0, 0)).unwrap().into_iter().copied().collect();
        assert_eq!(a, c);
    }
}
