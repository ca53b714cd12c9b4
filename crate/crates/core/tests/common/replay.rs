//! Reference statement of the CNEPR insertion rule and pool builders.

#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sesim_core::cnepr::{CneprConfig, LabeledTransition, Labels, PoolSet, Transition};

pub fn tr(id: usize, reward: f64, labels: Labels) -> LabeledTransition {
    LabeledTransition {
        transition: Transition {
            state: vec![id as f64],
            action: [0.0; 4],
            reward,
            next_state: vec![],
            done: false,
        },
        labels,
    }
}

pub fn ids<'a>(it: impl Iterator<Item = &'a std::sync::Arc<LabeledTransition>>) -> Vec<usize> {
    it.map(|t| t.transition.state[0] as usize).collect()
}

/// Straight re-statement of the insertion rule: per (axis, label) running
/// mean; strictly above the mean goes high, otherwise low; then the mean decays.
#[derive(Default)]
pub struct Oracle {
    pub mean: HashMap<(usize, usize), f64>,
    pub high: HashMap<(usize, usize), Vec<usize>>,
    pub low: HashMap<(usize, usize), Vec<usize>>,
}

impl Oracle {
    pub fn insert(&mut self, id: usize, reward: f64, labels: Labels, decay: f64, cap: usize) {
        for (a, label) in [(0, labels.l), (1, labels.m), (2, labels.n)] {
            let key = (a, label);
            let mean = self.mean.entry(key).or_insert(0.0);
            let pool = if reward > *mean { self.high.entry(key).or_default() } else { self.low.entry(key).or_default() };
            pool.push(id);
            if pool.len() > cap {
                pool.remove(0);
            }
            *mean = decay * *mean + (1.0 - decay) * reward;
        }
    }
}

pub fn adversarial(kind: usize, i: usize, rng: &mut ChaCha8Rng) -> f64 {
    match kind {
        0 => 1.0,
        1 => 0.0,
        2 => if i.is_multiple_of(2) { 5.0 } else { -5.0 },
        3 => i as f64,
        4 => -(i as f64),
        5 => if i.is_multiple_of(50) { 1e6 } else { 0.01 },
        6 => rng.random_range(-1.0..1.0),
        _ => (i % 3) as f64 - 1.0,
    }
}

pub fn filled(rng: &mut ChaCha8Rng, n: usize) -> PoolSet {
    let mut pools = PoolSet::new(CneprConfig::default()).unwrap();
    for i in 0..n {
        let labels = Labels { l: rng.random_range(1..=5), m: rng.random_range(1..=5), n: rng.random_range(1..=5) };
        pools.insert(tr(i, rng.random_range(-1.0..1.0), labels)).unwrap();
    }
    pools
}
