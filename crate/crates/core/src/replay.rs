//! Experience replay memories.
//!
//! One buffer covers both the uniform and the rank-based prioritized
//! variants: priority of an item is the reciprocal of its rank when
//! ordered by absolute TD error (descending, ties broken oldest first),
//! sampling probability is `P(i) = p_i^alpha / sum_k p_k^alpha`, and the
//! importance-sampling weight is `w_i = (1/(M * P(i)))^beta`, normalized
//! by the largest weight in the buffer. `alpha = 0` reduces every formula
//! to the uniform buffer, sharing the exact same sampling path.
//!
//! Ranks only matter at sampling time, so the sorted order is recomputed
//! lazily when the buffer is dirty rather than on every push or priority
//! update; observable behavior is identical to an always-sorted buffer.
//! Because `(1/rank)^alpha` depends on the rank alone, the cumulative
//! sampling weights depend only on the current size and are kept as an
//! incrementally extended prefix-sum table.

use rand::Rng;

/// A stored experience: the decision state, the action taken, its reward,
/// and the follow-up decision state with its feasibility mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub next_mask: Vec<bool>,
    pub terminal: bool,
}

/// Stable reference to a sampled slot; detects eviction between sampling
/// and the priority update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleHandle {
    slot: u32,
    seq: u64,
}

impl SampleHandle {
    /// Storage slot of the referenced transition (stable until eviction).
    pub fn slot(&self) -> usize {
        self.slot as usize
    }
}

pub struct SampleBatch {
    pub transitions: Vec<Transition>,
    pub handles: Vec<SampleHandle>,
    /// Max-normalized importance-sampling weights, each in (0, 1].
    pub weights: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("buffer holds {len} transitions, need {need}")]
    NotEnough { len: usize, need: usize },
}

struct Slot {
    transition: Transition,
    seq: u64,
    td_abs: f64,
}

pub struct ReplayBuffer {
    capacity: usize,
    alpha: f64,
    slots: Vec<Slot>,
    next_seq: u64,
    /// Slot indices ordered by (td_abs desc, seq asc); stale when `dirty`.
    sorted: Vec<u32>,
    dirty: bool,
    /// `prefix[k] = sum_{j=1..=k} j^{-alpha}`, extended as the buffer grows.
    prefix: Vec<f64>,
}

impl ReplayBuffer {
    /// `alpha = 0` yields the uniform buffer.
    pub fn new(capacity: usize, alpha: f64) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        assert!(alpha >= 0.0 && alpha.is_finite());
        Self {
            capacity,
            alpha,
            slots: Vec::new(),
            next_seq: 0,
            sorted: Vec::new(),
            dirty: true,
            prefix: vec![0.0],
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Inserts with the maximal current |TD| so fresh experiences surface
    /// quickly. Evicts the oldest transition when full.
    pub fn push(&mut self, transition: Transition) {
        let max_td = self
            .slots
            .iter()
            .map(|s| s.td_abs)
            .fold(f64::NEG_INFINITY, f64::max);
        let td_abs = if max_td.is_finite() { max_td } else { 1.0 };
        let seq = self.next_seq;
        self.next_seq += 1;
        let slot = Slot {
            transition,
            seq,
            td_abs,
        };
        if self.slots.len() < self.capacity {
            self.slots.push(slot);
            let k = self.slots.len() as f64;
            let last = *self.prefix.last().unwrap();
            self.prefix.push(last + k.powf(-self.alpha));
        } else {
            // Ring eviction: seq determines the slot of its successor.
            let idx = (seq % self.capacity as u64) as usize;
            self.slots[idx] = slot;
        }
        self.dirty = true;
    }

    fn resort(&mut self) {
        if !self.dirty {
            return;
        }
        if self.sorted.len() != self.slots.len() {
            self.sorted = (0..self.slots.len() as u32).collect();
        }
        let slots = &self.slots;
        self.sorted.sort_unstable_by(|&a, &b| {
            let (sa, sb) = (&slots[a as usize], &slots[b as usize]);
            sb.td_abs
                .partial_cmp(&sa.td_abs)
                .expect("priorities are finite")
                .then(sa.seq.cmp(&sb.seq))
        });
        self.dirty = false;
    }

    /// Sampling probability of the item currently at 1-based `rank`.
    fn rank_probability(&self, rank: usize) -> f64 {
        (rank as f64).powf(-self.alpha) / self.prefix[self.slots.len()]
    }

    /// Draws `batch` indices i.i.d. from the rank-power distribution and
    /// returns the transitions with their max-normalized IS weights.
    pub fn sample<R: Rng>(
        &mut self,
        batch: usize,
        beta: f64,
        rng: &mut R,
    ) -> Result<SampleBatch, ReplayError> {
        let len = self.slots.len();
        if len < batch {
            return Err(ReplayError::NotEnough { len, need: batch });
        }
        self.resort();
        let total = self.prefix[len];
        // The largest weight in the buffer belongs to the lowest-priority
        // rank; dividing by it keeps every weight in (0, 1].
        let w_max = (len as f64 * self.rank_probability(len)).powf(-beta);

        let mut transitions = Vec::with_capacity(batch);
        let mut handles = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for _ in 0..batch {
            let u = rng.random::<f64>() * total;
            // Smallest rank whose cumulative weight exceeds u.
            let rank = self.prefix[1..=len].partition_point(|&c| c <= u) + 1;
            let rank = rank.min(len);
            let slot = self.sorted[rank - 1];
            let s = &self.slots[slot as usize];
            let w = (len as f64 * self.rank_probability(rank)).powf(-beta) / w_max;
            transitions.push(s.transition.clone());
            handles.push(SampleHandle { slot, seq: s.seq });
            weights.push(w);
        }
        Ok(SampleBatch {
            transitions,
            handles,
            weights,
        })
    }

    /// Re-keys the sampled transitions by their fresh |TD errors|. A stale
    /// handle means the caller held it across an eviction, which is a
    /// logic bug; it panics.
    pub fn update_priorities(&mut self, handles: &[SampleHandle], td_abs: &[f64]) {
        assert_eq!(handles.len(), td_abs.len());
        for (h, &td) in handles.iter().zip(td_abs) {
            assert!(
                td.is_finite() && td >= 0.0,
                "priorities must be finite and nonnegative"
            );
            let slot = &mut self.slots[h.slot as usize];
            assert_eq!(
                slot.seq, h.seq,
                "stale sample handle: transition was evicted before its priority update"
            );
            slot.td_abs = td;
        }
        self.dirty = true;
    }

    /// Current sampling distribution over slots, in insertion-slot order.
    /// Test and diagnostic helper.
    pub fn probabilities(&mut self) -> Vec<f64> {
        self.resort();
        let mut probs = vec![0.0; self.slots.len()];
        for (rank0, &slot) in self.sorted.iter().enumerate() {
            probs[slot as usize] = self.rank_probability(rank0 + 1);
        }
        probs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn transition(tag: f64) -> Transition {
        Transition {
            state: vec![tag],
            action: 0,
            reward: tag,
            next_state: vec![tag + 0.5],
            next_mask: vec![true],
            terminal: false,
        }
    }

    fn filled(n: usize, capacity: usize, alpha: f64) -> ReplayBuffer {
        let mut buf = ReplayBuffer::new(capacity, alpha);
        for i in 0..n {
            buf.push(transition(i as f64));
        }
        buf
    }

    #[test]
    fn push_grows_and_evicts_oldest() {
        let mut buf = ReplayBuffer::new(3, 0.6);
        buf.push(transition(0.0));
        assert_eq!(buf.len(), 1);
        for i in 1..4 {
            buf.push(transition(i as f64));
        }
        assert_eq!(buf.len(), 3);
        let rewards: Vec<f64> = buf.slots.iter().map(|s| s.transition.reward).collect();
        assert!(!rewards.contains(&0.0), "oldest transition evicted");
        assert!(rewards.contains(&3.0));
    }

    #[test]
    fn exact_rank_probabilities_alpha_one() {
        let mut buf = filled(3, 10, 1.0);
        // Distinct errors: slot 0 ranks first, slot 2 last.
        let handles: Vec<SampleHandle> = (0..3)
            .map(|slot| SampleHandle {
                slot,
                seq: slot as u64,
            })
            .collect();
        buf.update_priorities(&handles, &[3.0, 2.0, 1.0]);
        let probs = buf.probabilities();
        assert!((probs[0] - 6.0 / 11.0).abs() < 1e-12);
        assert!((probs[1] - 3.0 / 11.0).abs() < 1e-12);
        assert!((probs[2] - 2.0 / 11.0).abs() < 1e-12);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_zero_samples_uniformly() {
        let mut buf = filled(6, 10, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 100_000;
        let mut counts = vec![0u64; 6];
        for _ in 0..draws / 5 {
            let batch = buf.sample(5, 0.0, &mut rng).unwrap();
            for h in batch.handles {
                counts[h.slot as usize] += 1;
            }
        }
        let tv: f64 = counts
            .iter()
            .map(|&c| (c as f64 / draws as f64 - 1.0 / 6.0).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "TV from uniform {tv}");
    }

    #[test]
    fn beta_one_uniform_probabilities_give_unit_weights() {
        let mut buf = filled(4, 10, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = buf.sample(4, 1.0, &mut rng).unwrap();
        for w in batch.weights {
            assert!((w - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn priority_update_promotes_to_rank_one() {
        let mut buf = filled(5, 10, 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch = buf.sample(5, 0.4, &mut rng).unwrap();
        // Set every sampled copy low, then one far above all.
        let mut seen = std::collections::HashSet::new();
        let mut handles = Vec::new();
        let mut tds = Vec::new();
        for h in batch.handles {
            if seen.insert(h.slot) {
                handles.push(h);
                tds.push(if h.slot == 3 { 100.0 } else { 0.5 });
            }
        }
        buf.update_priorities(&handles, &tds);
        buf.resort();
        assert_eq!(buf.sorted[0], 3, "highest |TD| ranks first");
    }

    #[test]
    fn equal_errors_rank_older_first() {
        let mut buf = filled(4, 10, 0.6);
        let handles: Vec<SampleHandle> = (0..4)
            .map(|slot| SampleHandle {
                slot,
                seq: slot as u64,
            })
            .collect();
        buf.update_priorities(&handles, &[1.0, 1.0, 1.0, 1.0]);
        buf.resort();
        assert_eq!(
            buf.sorted,
            vec![0, 1, 2, 3],
            "ties break by insertion order"
        );
        // Mixed case: ties inside a band, order by seq within the band.
        buf.update_priorities(&handles, &[1.0, 5.0, 5.0, 1.0]);
        buf.resort();
        assert_eq!(buf.sorted, vec![1, 2, 0, 3]);
    }

    #[test]
    fn fresh_item_is_sampled_at_least_at_uniform_share() {
        let mut buf = filled(50, 100, 0.6);
        let handles: Vec<SampleHandle> = (0..50)
            .map(|slot| SampleHandle {
                slot,
                seq: slot as u64,
            })
            .collect();
        let tds: Vec<f64> = (0..50).map(|i| 0.01 + 0.01 * i as f64).collect();
        buf.update_priorities(&handles, &tds);
        buf.push(transition(999.0)); // slot 50, at max priority
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut hits = 0u64;
        let samplings = 10_000;
        for _ in 0..samplings {
            let batch = buf.sample(8, 0.4, &mut rng).unwrap();
            if batch.handles.iter().any(|h| h.slot == 50) {
                hits += 1;
            }
        }
        // Uniform share of appearing in an 8-item batch from 51 items.
        let uniform = 1.0 - (1.0 - 1.0 / 51.0f64).powi(8);
        assert!(
            hits as f64 / samplings as f64 >= uniform,
            "fresh item hit rate {} below uniform share {uniform}",
            hits as f64 / samplings as f64
        );
    }

    #[test]
    fn sample_requires_enough_items() {
        let mut buf = filled(3, 10, 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(matches!(
            buf.sample(4, 0.4, &mut rng),
            Err(ReplayError::NotEnough { len: 3, need: 4 })
        ));
    }

    #[test]
    #[should_panic(expected = "stale sample handle")]
    fn stale_handle_panics() {
        let mut buf = filled(2, 2, 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let batch = buf.sample(1, 0.4, &mut rng).unwrap();
        // Evict everything.
        for i in 0..4 {
            buf.push(transition(100.0 + i as f64));
        }
        buf.update_priorities(&batch.handles, &[1.0]);
    }

    #[test]
    fn probabilities_sum_to_one_after_updates() {
        let mut buf = filled(37, 100, 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let batch = buf.sample(16, 0.4, &mut rng).unwrap();
        let tds: Vec<f64> = (0..16).map(|i| (i as f64) * 0.3).collect();
        let mut seen = std::collections::HashSet::new();
        let mut handles = Vec::new();
        let mut vals = Vec::new();
        for (h, td) in batch.handles.into_iter().zip(tds) {
            if seen.insert(h.slot) {
                handles.push(h);
                vals.push(td);
            }
        }
        buf.update_priorities(&handles, &vals);
        let sum: f64 = buf.probabilities().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empirical_frequencies_match_rank_distribution() {
        // 100 items with distinct priorities, alpha = 0.6.
        let mut buf = filled(100, 100, 0.6);
        let handles: Vec<SampleHandle> = (0..100)
            .map(|slot| SampleHandle {
                slot,
                seq: slot as u64,
            })
            .collect();
        let tds: Vec<f64> = (0..100).map(|i| 1.0 + (i as f64) * 0.37).collect();
        buf.update_priorities(&handles, &tds);
        let expected = buf.probabilities();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = 100_000usize;
        let mut counts = vec![0u64; 100];
        for _ in 0..draws / 20 {
            let batch = buf.sample(20, 0.4, &mut rng).unwrap();
            for h in batch.handles {
                counts[h.slot as usize] += 1;
            }
        }
        let tv: f64 = counts
            .iter()
            .zip(&expected)
            .map(|(&c, &p)| (c as f64 / draws as f64 - p).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "TV distance {tv} from the rank distribution");
    }
}
