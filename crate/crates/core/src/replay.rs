//! Prioritized experience replay over a sum tree, with priority amplification
//! for advisor-generated transitions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stored priority: `|delta| * (1 + eps_llm * llm_flag) + eps_floor`.
///
/// The floor keeps every transition sampleable; the flag multiplies the
/// magnitude of advisor-generated experience.
pub fn priority(td_error: f64, llm_flag: bool, eps_llm: f64, eps_floor: f64) -> f64 {
    td_error.abs() * (1.0 + eps_llm * llm_flag as u8 as f64) + eps_floor
}

/// One replay record. Both action masks are stored: the current-state mask
/// anchors the dueling mean when the sample is replayed, and the successor
/// mask restricts the bootstrap to the actions that were legal there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub features: Vec<f64>,
    pub mask: Vec<bool>,
    pub action: usize,
    pub reward: f64,
    pub next_features: Vec<f64>,
    pub next_mask: Vec<bool>,
    pub done: bool,
    /// True when the executed action came from the advisor-intersected set.
    /// Set at storage time, never changed afterwards.
    pub llm_flag: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub capacity: usize,
    /// Prioritization exponent; 0 gives uniform sampling.
    pub alpha: f64,
    /// Advisor replay weight.
    pub eps_llm: f64,
    /// Additive priority floor.
    pub eps_floor: f64,
    /// Re-apply the advisor boost when priorities are refreshed after a
    /// learning step; off restricts the boost to storage time.
    pub boost_on_refresh: bool,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            capacity: 100_000,
            alpha: 0.6,
            eps_llm: 1.5,
            eps_floor: 1e-3,
            boost_on_refresh: true,
        }
    }
}

/// A prioritized sample with everything needed for weighted updates and a
/// later priority refresh.
#[derive(Debug, Clone)]
pub struct SampledBatch {
    pub transitions: Vec<Transition>,
    /// Slot/stamp pairs; the stamp detects eviction between sample and update.
    pub indices: Vec<(usize, u64)>,
    pub probabilities: Vec<f64>,
    /// Importance weights, normalized by the batch maximum.
    pub weights: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("buffer holds {len} transitions, {requested} requested")]
    Underfilled { len: usize, requested: usize },
    #[error("slot {slot} was overwritten since it was sampled")]
    StaleIndex { slot: usize },
    #[error("replay capacity must be positive")]
    ZeroCapacity,
}

/// Flat binary sum tree; leaf `i` sits at `capacity + i`.
#[derive(Debug, Clone)]
struct SumTree {
    nodes: Vec<f64>,
    capacity: usize,
}

impl SumTree {
    fn new(capacity: usize) -> Self {
        SumTree { nodes: vec![0.0; 2 * capacity], capacity }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn leaf(&self, i: usize) -> f64 {
        self.nodes[self.capacity + i]
    }

    fn set(&mut self, i: usize, value: f64) {
        let mut idx = self.capacity + i;
        let delta = value - self.nodes[idx];
        self.nodes[idx] = value;
        while idx > 1 {
            idx /= 2;
            self.nodes[idx] += delta;
        }
    }

    /// Leaf index holding the prefix mass `target`.
    fn descend(&self, mut target: f64) -> usize {
        let mut idx = 1;
        while idx < self.capacity {
            let left = 2 * idx;
            if target <= self.nodes[left] || self.nodes[left + 1] == 0.0 {
                idx = left;
            } else {
                target -= self.nodes[left];
                idx = left + 1;
            }
        }
        idx - self.capacity
    }
}

struct Slot {
    transition: Transition,
    /// Raw (un-exponentiated) priority.
    priority: f64,
    stamp: u64,
}

/// Ring buffer with priority-proportional stratified sampling.
pub struct ReplayBuffer {
    cfg: ReplayConfig,
    slots: Vec<Slot>,
    write: usize,
    tree: SumTree,
    max_priority: f64,
    next_stamp: u64,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(cfg: ReplayConfig, seed: u64) -> Result<Self, ReplayError> {
        if cfg.capacity == 0 {
            return Err(ReplayError::ZeroCapacity);
        }
        Ok(ReplayBuffer {
            tree: SumTree::new(cfg.capacity),
            cfg,
            slots: Vec::new(),
            write: 0,
            max_priority: 0.0,
            next_stamp: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.cfg.capacity
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.cfg
    }

    /// Store a transition, evicting the oldest when full. A known TD error
    /// prices the slot by the priority formula; `None` bootstraps with the
    /// largest priority seen so far so fresh experience gets sampled at least
    /// once.
    pub fn push(&mut self, transition: Transition, td_error: Option<f64>) -> f64 {
        let p = match td_error {
            Some(delta) => {
                priority(delta, transition.llm_flag, self.cfg.eps_llm, self.cfg.eps_floor)
            }
            None => {
                if self.max_priority > 0.0 {
                    self.max_priority
                } else {
                    1.0
                }
            }
        };
        self.max_priority = self.max_priority.max(p);
        let stamp = self.next_stamp;
        self.next_stamp += 1;
        let slot = Slot { transition, priority: p, stamp };
        if self.slots.len() < self.cfg.capacity {
            self.slots.push(slot);
            let i = self.slots.len() - 1;
            self.tree.set(i, p.powf(self.cfg.alpha));
        } else {
            self.slots[self.write] = slot;
            self.tree.set(self.write, p.powf(self.cfg.alpha));
        }
        self.write = (self.write + 1) % self.cfg.capacity;
        p
    }

    /// Stratified priority-proportional sample of `batch_size` transitions.
    pub fn sample(&mut self, batch_size: usize, beta: f64) -> Result<SampledBatch, ReplayError> {
        if self.slots.len() < batch_size {
            return Err(ReplayError::Underfilled { len: self.slots.len(), requested: batch_size });
        }
        let total = self.tree.total();
        let segment = total / batch_size as f64;
        let n = self.slots.len() as f64;

        let mut transitions = Vec::with_capacity(batch_size);
        let mut indices = Vec::with_capacity(batch_size);
        let mut probabilities = Vec::with_capacity(batch_size);
        let mut weights = Vec::with_capacity(batch_size);
        for k in 0..batch_size {
            let target = (k as f64 + self.rng.gen::<f64>()) * segment;
            let mut i = self.tree.descend(target.min(total));
            if i >= self.slots.len() {
                i = self.slots.len() - 1;
            }
            let p_i = self.tree.leaf(i) / total;
            transitions.push(self.slots[i].transition.clone());
            indices.push((i, self.slots[i].stamp));
            probabilities.push(p_i);
            weights.push((n * p_i).powf(-beta));
        }
        let w_max = weights.iter().fold(0.0f64, |a, &b| a.max(b));
        for w in weights.iter_mut() {
            *w /= w_max;
        }
        Ok(SampledBatch { transitions, indices, probabilities, weights })
    }

    /// Re-price sampled slots with fresh TD errors. Each slot keeps its stored
    /// advisor flag; with `boost_on_refresh` off the flag is ignored here and
    /// only ever amplifies the initial store.
    pub fn update_priorities(
        &mut self,
        indices: &[(usize, u64)],
        td_errors: &[f64],
    ) -> Result<(), ReplayError> {
        assert_eq!(indices.len(), td_errors.len());
        for (&(slot, stamp), &delta) in indices.iter().zip(td_errors) {
            if slot >= self.slots.len() || self.slots[slot].stamp != stamp {
                return Err(ReplayError::StaleIndex { slot });
            }
            let flag = self.cfg.boost_on_refresh && self.slots[slot].transition.llm_flag;
            let p = priority(delta, flag, self.cfg.eps_llm, self.cfg.eps_floor);
            self.slots[slot].priority = p;
            self.max_priority = self.max_priority.max(p);
            self.tree.set(slot, p.powf(self.cfg.alpha));
        }
        Ok(())
    }

    /// Raw stored priority of a slot, for inspection and tests.
    pub fn stored_priority(&self, slot: usize) -> Option<f64> {
        self.slots.get(slot).map(|s| s.priority)
    }

    /// Exponentiated leaf mass of a slot as the tree sees it.
    pub fn leaf_mass(&self, slot: usize) -> Option<f64> {
        (slot < self.slots.len()).then(|| self.tree.leaf(slot))
    }

    pub fn tree_total(&self) -> f64 {
        self.tree.total()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.slots.iter().map(|s| &s.transition)
    }

    /// Debug snapshot of (priority, llm_flag) per slot; not a stable format.
    pub fn snapshot(&self) -> Vec<(f64, bool)> {
        self.slots.iter().map(|s| (s.priority, s.transition.llm_flag)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(llm_flag: bool) -> Transition {
        Transition {
            features: vec![0.0, 1.0],
            mask: vec![true, true],
            action: 0,
            reward: -1.0,
            next_features: vec![1.0, 0.0],
            next_mask: vec![true, false],
            done: false,
            llm_flag,
        }
    }

    fn buffer(capacity: usize, alpha: f64) -> ReplayBuffer {
        let cfg = ReplayConfig { capacity, alpha, ..ReplayConfig::default() };
        ReplayBuffer::new(cfg, 7).unwrap()
    }

    #[test]
    fn priority_formula_hand_values() {
        assert_eq!(priority(2.0, true, 1.5, 1e-3), 5.001);
        assert_eq!(priority(2.0, false, 1.5, 1e-3), 2.001);
        assert_eq!(priority(0.0, true, 1.5, 1e-3), 1e-3);
        assert_eq!(priority(-2.0, true, 1.5, 1e-3), 5.001);
    }

    #[test]
    fn equal_priorities_sample_uniformly_with_unit_weights() {
        let mut buf = buffer(8, 0.6);
        for _ in 0..4 {
            buf.push(t(false), Some(1.0));
        }
        let batch = buf.sample(4, 0.7).unwrap();
        for &p in &batch.probabilities {
            assert!((p - 0.25).abs() < 1e-12);
        }
        assert!(batch.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn two_item_probabilities() {
        let mut buf = buffer(4, 1.0);
        buf.push(t(false), Some(1.0 - 1e-3));
        buf.push(t(false), Some(3.0 - 1e-3));
        let batch = buf.sample(2, 0.0).unwrap();
        // With alpha = 1, P must be 0.25 / 0.75 whichever slots were drawn.
        for (k, &(slot, _)) in batch.indices.iter().enumerate() {
            let expect = if slot == 0 { 0.25 } else { 0.75 };
            assert!((batch.probabilities[k] - expect).abs() < 1e-12);
        }
        // beta = 0 makes all weights 1 regardless of skew.
        assert!(batch.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn alpha_zero_is_uniform_regardless_of_priorities() {
        let mut buf = buffer(8, 0.0);
        buf.push(t(false), Some(0.01));
        buf.push(t(false), Some(100.0));
        buf.push(t(false), Some(5.0));
        let batch = buf.sample(3, 1.0).unwrap();
        for &p in &batch.probabilities {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!(batch.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn llm_boost_ratio_is_exact() {
        let cfg = ReplayConfig { capacity: 8, ..ReplayConfig::default() };
        let mut buf = ReplayBuffer::new(cfg, 1).unwrap();
        let delta = 2.0;
        buf.push(t(true), Some(delta));
        buf.push(t(false), Some(delta));
        let flagged = buf.leaf_mass(0).unwrap();
        let plain = buf.leaf_mass(1).unwrap();
        let expected = ((1.0 + cfg.eps_llm) * delta + cfg.eps_floor).powf(cfg.alpha)
            / (delta + cfg.eps_floor).powf(cfg.alpha);
        assert_eq!(flagged / plain, expected);
    }

    #[test]
    fn sampling_frequencies_follow_the_distribution() {
        let mut buf = buffer(8, 1.0);
        let raws = [0.5, 0.2, 0.8, 1.5];
        for &r in &raws {
            buf.push(t(false), Some(r - 1e-3));
        }
        let total: f64 = raws.iter().sum();
        let mut counts = [0usize; 4];
        let draws = 1000;
        for _ in 0..draws {
            let batch = buf.sample(4, 1.0).unwrap();
            for &(slot, _) in &batch.indices {
                counts[slot] += 1;
            }
        }
        let n = (draws * 4) as f64;
        for (i, &r) in raws.iter().enumerate() {
            let p = r / total;
            let sigma = (p * (1.0 - p) / n).sqrt();
            let emp = counts[i] as f64 / n;
            assert!(
                (emp - p).abs() <= 3.0 * sigma,
                "slot {i}: empirical {emp}, expected {p}, sigma {sigma}"
            );
        }
    }

    #[test]
    fn update_to_zero_error_leaves_the_floor() {
        let mut buf = buffer(4, 1.0);
        buf.push(t(false), Some(2.0));
        let batch = buf.sample(1, 0.4).unwrap();
        buf.update_priorities(&batch.indices, &[0.0]).unwrap();
        assert_eq!(buf.stored_priority(batch.indices[0].0), Some(1e-3));
    }

    #[test]
    fn refresh_keeps_the_stored_flag() {
        let mut buf = buffer(4, 1.0);
        buf.push(t(true), Some(2.0));
        assert_eq!(buf.stored_priority(0), Some(5.001));
        buf.update_priorities(&[(0, 0)], &[3.0]).unwrap();
        assert_eq!(buf.stored_priority(0), Some(3.0 * 2.5 + 1e-3));
    }

    #[test]
    fn refresh_boost_can_be_disabled() {
        let cfg = ReplayConfig { capacity: 4, boost_on_refresh: false, ..ReplayConfig::default() };
        let mut buf = ReplayBuffer::new(cfg, 3).unwrap();
        buf.push(t(true), Some(2.0));
        assert_eq!(buf.stored_priority(0), Some(5.001));
        buf.update_priorities(&[(0, 0)], &[2.0]).unwrap();
        assert_eq!(buf.stored_priority(0), Some(2.001));
        assert!(buf.iter().next().unwrap().llm_flag);
    }

    #[test]
    fn eviction_invalidates_old_indices() {
        let mut buf = buffer(2, 1.0);
        buf.push(t(false), Some(1.0));
        buf.push(t(false), Some(1.0));
        let batch = buf.sample(2, 0.4).unwrap();
        buf.push(t(false), Some(1.0));
        let stale = batch.indices.iter().find(|&&(slot, _)| slot == 0).unwrap();
        assert!(matches!(
            buf.update_priorities(&[*stale], &[1.0]),
            Err(ReplayError::StaleIndex { slot: 0 })
        ));
    }

    #[test]
    fn bootstrap_push_uses_max_priority() {
        let mut buf = buffer(4, 1.0);
        let first = buf.push(t(false), None);
        assert_eq!(first, 1.0);
        buf.push(t(false), Some(7.0));
        let boosted = buf.push(t(false), None);
        assert_eq!(boosted, 7.001);
    }

    #[test]
    fn underfilled_sampling_is_an_error() {
        let mut buf = buffer(4, 1.0);
        buf.push(t(false), Some(1.0));
        assert!(matches!(
            buf.sample(2, 0.4),
            Err(ReplayError::Underfilled { len: 1, requested: 2 })
        ));
    }

    proptest! {
        /// Root equals the naive re-sum of leaves under arbitrary op orders.
        #[test]
        fn tree_root_matches_naive_sum(ops in prop::collection::vec((0usize..64, 0.0f64..10.0), 1..200)) {
            let mut buf = buffer(64, 0.6);
            for _ in 0..16 {
                buf.push(t(false), Some(1.0));
            }
            for (slot, delta) in ops {
                if slot < buf.len() {
                    let stamp = buf.slots[slot].stamp;
                    buf.update_priorities(&[(slot, stamp)], &[delta]).unwrap();
                } else {
                    buf.push(t(false), Some(delta));
                }
            }
            let naive: f64 = (0..buf.len()).map(|i| buf.leaf_mass(i).unwrap()).sum();
            prop_assert!((buf.tree_total() - naive).abs() <= 1e-9 * naive.max(1.0));
        }
    }
}
