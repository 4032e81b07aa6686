//! Proportional prioritized replay over a ring buffer.

use rand::Rng;

use crate::{Error, Result};

/// One agent step. States are stored as the action prefix that built them;
/// `s′` is the prefix extended by `action`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub prefix: Vec<u16>,
    pub action: usize,
    pub reward: f64,
    pub done: bool,
}

impl Transition {
    pub fn next_prefix(&self) -> Vec<u16> {
        let mut p = self.prefix.clone();
        p.push(self.action as u16);
        p
    }
}

/// Binary tree of partial sums over leaf priorities.
#[derive(Clone, Debug)]
struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(capacity: usize) -> Self {
        let leaves = capacity.next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    fn set(&mut self, i: usize, value: f64) {
        let mut k = self.leaves + i;
        self.nodes[k] = value;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf whose cumulative interval contains `u`.
    fn find(&self, mut u: f64, filled: usize) -> usize {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            if u < left {
                k *= 2;
            } else {
                u -= left;
                k = 2 * k + 1;
            }
        }
        // rounding can step past the last filled leaf
        (k - self.leaves).min(filled - 1)
    }
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
    tree: SumTree,
    max_priority: f64,
    pub alpha: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub indices: Vec<usize>,
    /// Importance weights `(N·P(i))^(−β)`, divided by the batch maximum.
    pub weights: Vec<f64>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, alpha: f64, eps: f64) -> Result<Self> {
        if capacity == 0 || !(alpha >= 0.0) || !(eps > 0.0) {
            return Err(Error::Config(format!(
                "replay needs capacity > 0, α ≥ 0, ε > 0 (got {capacity}, {alpha}, {eps})"
            )));
        }
        Ok(Self {
            capacity,
            items: Vec::new(),
            next: 0,
            tree: SumTree::new(capacity),
            max_priority: 1.0,
            alpha,
            eps,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.items.get(index)
    }

    /// Sampling mass `(|δ| + ε)^α` of slot `index`.
    pub fn priority(&self, index: usize) -> f64 {
        self.tree.get(index)
    }

    /// Stores with the largest priority seen so far, evicting the oldest when full.
    pub fn push(&mut self, t: Transition) -> usize {
        let slot = self.next;
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[slot] = t;
        }
        self.tree.set(slot, self.max_priority.powf(self.alpha));
        self.next = (self.next + 1) % self.capacity;
        slot
    }

    pub fn per_sample(&self, k: usize, beta: f64, rng: &mut impl Rng) -> Result<Sample> {
        let n = self.items.len();
        if n < k || k == 0 {
            return Err(Error::Underfilled { have: n, need: k });
        }
        let total = self.tree.total();
        let indices: Vec<usize> = (0..k).map(|_| self.tree.find(rng.random::<f64>() * total, n)).collect();
        let raw: Vec<f64> = indices
            .iter()
            .map(|&i| (n as f64 * self.tree.get(i) / total).powf(-beta))
            .collect();
        let max = raw.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
        Ok(Sample {
            indices,
            weights: raw.iter().map(|w| w / max).collect(),
        })
    }

    pub fn per_update(&mut self, indices: &[usize], td_errors: &[f64]) {
        for (&i, &d) in indices.iter().zip(td_errors) {
            let p = if d.is_finite() { d.abs() + self.eps } else { self.max_priority };
            self.max_priority = self.max_priority.max(p);
            self.tree.set(i, p.powf(self.alpha));
        }
    }
}
