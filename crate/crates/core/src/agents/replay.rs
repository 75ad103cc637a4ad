use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Transition;

/// Fixed-capacity ring buffer; once full the oldest entry is overwritten.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<Transition>,
    next: usize,
    #[serde(skip)]
    marks: Vec<u32>,
    #[serde(skip)]
    generation: u32,
}

impl PartialEq for ReplayBuffer {
    fn eq(&self, other: &Self) -> bool {
        self.capacity == other.capacity && self.entries == other.entries && self.next == other.next
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        ReplayBuffer {
            capacity,
            entries: Vec::new(),
            next: 0,
            marks: Vec::new(),
            generation: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.entries.len() < self.capacity {
            self.entries.push(t);
        } else {
            self.entries[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Entries from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.entries.len() < self.capacity {
            0
        } else {
            self.next
        };
        self.entries[split..].iter().chain(&self.entries[..split])
    }

    /// `size` distinct entries chosen uniformly at random.
    pub fn sample<R: Rng + ?Sized>(&mut self, size: usize, rng: &mut R) -> Vec<Transition> {
        let len = self.entries.len();
        assert!(size <= len, "batch of {size} from a buffer of {len}");
        if 2 * size > len {
            // dense draw: partial Fisher-Yates over all indices
            let mut idx: Vec<usize> = (0..len).collect();
            for j in 0..size {
                let s = rng.gen_range(j..len);
                idx.swap(j, s);
            }
            return idx[..size].iter().map(|&j| self.entries[j]).collect();
        }
        if self.marks.len() < len {
            self.marks.resize(self.capacity, 0);
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.marks.iter_mut().for_each(|m| *m = 0);
            self.generation = 1;
        }
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            let j = rng.gen_range(0..len);
            if self.marks[j] != self.generation {
                self.marks[j] = self.generation;
                out.push(self.entries[j]);
            }
        }
        out
    }
}
