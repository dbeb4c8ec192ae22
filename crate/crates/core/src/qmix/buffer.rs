use std::collections::VecDeque;

use crate::env::EpochRecord;
use crate::rng::Rng;

/// First-in first-out store of episode step records.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<(u64, Vec<EpochRecord>)>,
    next_id: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), episodes: VecDeque::new(), next_id: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Inserts an episode, evicting the oldest one when full. Returns the
    /// insertion id of the new episode.
    pub fn push(&mut self, episode: Vec<EpochRecord>) -> u64 {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        let id = self.next_id;
        self.next_id += 1;
        self.episodes.push_back((id, episode));
        id
    }

    /// Insertion ids currently held, oldest first.
    pub fn ids(&self) -> Vec<u64> {
        self.episodes.iter().map(|e| e.0).collect()
    }

    /// `min(k, len)` distinct episodes chosen uniformly.
    pub fn sample(&self, k: usize, rng: &mut Rng) -> Vec<&[EpochRecord]> {
        let mut idx: Vec<usize> = (0..self.episodes.len()).collect();
        rng.shuffle(&mut idx);
        idx.truncate(k);
        idx.into_iter().map(|i| self.episodes[i].1.as_slice()).collect()
    }
}
