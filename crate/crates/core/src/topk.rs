//! Bounded top-k selection over `(distance, id)` pairs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// A search hit. Lists of neighbors are ordered by ascending distance, ties by lower id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u64,
    pub distance: f32,
}

impl Neighbor {
    pub fn new(id: u64, distance: f32) -> Self {
        Self { id, distance }
    }

    /// Total order used for every ranking in the crate.
    #[inline]
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.id.cmp(&other.id))
    }
}

#[derive(Debug, Clone, Copy)]
struct HeapEntry(Neighbor);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

/// Keeps the `k` best neighbors seen so far in a max-heap whose root is the
/// current worst kept entry.
#[derive(Debug, Clone)]
pub struct TopK {
    k: usize,
    heap: BinaryHeap<HeapEntry>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k.saturating_add(1).min(1 << 20)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Worst kept entry once the collector is full.
    #[inline]
    pub fn threshold(&self) -> Option<Neighbor> {
        if self.heap.len() < self.k {
            None
        } else {
            self.heap.peek().map(|e| e.0)
        }
    }

    #[inline]
    pub fn push(&mut self, id: u64, distance: f32) {
        if self.k == 0 {
            return;
        }
        let candidate = Neighbor::new(id, distance);
        if self.heap.len() < self.k {
            self.heap.push(HeapEntry(candidate));
            return;
        }
        // peek is Some: heap is full and k > 0
        let worst = self.heap.peek().unwrap().0;
        if candidate.rank_cmp(&worst) == Ordering::Less {
            self.heap.pop();
            self.heap.push(HeapEntry(candidate));
        }
    }

    pub fn into_sorted_vec(self) -> Vec<Neighbor> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|e| e.0)
            .collect()
    }
}
