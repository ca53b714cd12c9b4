//! Combined neighboring experience pool replay (CNEPR).
//!
//! Every transition is labeled by which equal-width bin its state factors
//! fall into on each of the three axes (SDR, SOC, AO). Each label owns a
//! coupled pair of pools: rewards above the pair's running mean go to the
//! high-value pool, the rest to the low-value pool. Sampling recombines each
//! pair with a bias toward the high-value side, picks one label per axis
//! whose distance to the current state's labels is within τ, merges those
//! three pools and draws a uniform minibatch from the result.
//!
//! A plain uniform ring buffer is provided as the baseline replay.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;

use crate::env::ACTION_DIM;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Raw agent output in [−1, 1]^4.
    pub action: [f64; ACTION_DIM],
    /// Scaled reward as seen by the learner.
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// 1-based sub-label indices (l, m, n) on the SDR, SOC and AO axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Labels {
    pub l: usize,
    pub m: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Sdr,
    Soc,
    Ao,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Sdr, Axis::Soc, Axis::Ao];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Sdr => "sdr",
            Axis::Soc => "soc",
            Axis::Ao => "ao",
        }
    }
}

impl Labels {
    pub fn get(&self, axis: Axis) -> usize {
        match axis {
            Axis::Sdr => self.l,
            Axis::Soc => self.m,
            Axis::Ao => self.n,
        }
    }
}

/// Equal-width bin of `f` ∈ [0, 1] among `bins`, 1-based. f = 1 lands in the last bin.
pub fn bin(f: f64, bins: usize) -> usize {
    let f = if f.is_nan() { 0.0 } else { f.clamp(0.0, 1.0) };
    (libm::floor(f * bins as f64) as usize).min(bins - 1) + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTransition {
    pub transition: Transition,
    pub labels: Labels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CneprConfig {
    pub l: usize,
    pub m: usize,
    pub n: usize,
    /// Capacity of each individual pool.
    pub capacity: usize,
    /// Probability of drawing a recombination slot from the high-value pool.
    pub rho_high: f64,
    /// Bound on the normalized label distance.
    pub tau: f64,
    /// Decay of the running mean reward of each coupled pair.
    pub ema_decay: f64,
    pub max_retries: usize,
}

impl Default for CneprConfig {
    fn default() -> Self {
        Self { l: 5, m: 5, n: 5, capacity: 10_000, rho_high: 0.8, tau: 0.6, ema_decay: 0.99, max_retries: 100 }
    }
}

impl CneprConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.m == 0 || self.n == 0 {
            return Err(Error::Config("label counts must be >= 1".into()));
        }
        if self.capacity == 0 {
            return Err(Error::Config("pool capacity must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.rho_high) {
            return Err(Error::Config(format!("rho_high must lie in [0, 1], got {}", self.rho_high)));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::Config("tau must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Config("ema_decay must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn bins(&self, axis: Axis) -> usize {
        match axis {
            Axis::Sdr => self.l,
            Axis::Soc => self.m,
            Axis::Ao => self.n,
        }
    }

    pub fn labels(&self, f_sdr: f64, f_soc: f64, f_ao: f64) -> Labels {
        Labels { l: bin(f_sdr, self.l), m: bin(f_soc, self.m), n: bin(f_ao, self.n) }
    }

    /// |l'−l|/L + |m'−m|/M + |n'−n|/N.
    pub fn distance(&self, a: Labels, b: Labels) -> f64 {
        Axis::ALL
            .iter()
            .map(|&ax| a.get(ax).abs_diff(b.get(ax)) as f64 / self.bins(ax) as f64)
            .sum()
    }

    fn offset(&self, axis: Axis) -> usize {
        match axis {
            Axis::Sdr => 0,
            Axis::Soc => self.l,
            Axis::Ao => self.l + self.m,
        }
    }

    fn check(&self, labels: Labels) -> Result<()> {
        for ax in Axis::ALL {
            let v = labels.get(ax);
            if v == 0 || v > self.bins(ax) {
                return Err(Error::OutOfRange(format!(
                    "{} label {v} outside 1..={}",
                    ax.name(),
                    self.bins(ax)
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct PoolPair {
    high: VecDeque<Arc<LabeledTransition>>,
    low: VecDeque<Arc<LabeledTransition>>,
    mean: f64,
}

/// The (L+M+N) coupled pool pairs.
#[derive(Debug, Clone)]
pub struct PoolSet {
    cfg: CneprConfig,
    pairs: Vec<PoolPair>,
    inserted: u64,
}

/// Occupancy of one coupled pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOccupancy {
    pub axis: Axis,
    pub label: usize,
    pub high: usize,
    pub low: usize,
    pub mean_reward: f64,
}

impl PoolSet {
    pub fn new(cfg: CneprConfig) -> Result<Self> {
        cfg.validate()?;
        let pairs = (0..cfg.l + cfg.m + cfg.n).map(|_| PoolPair::default()).collect();
        Ok(Self { cfg, pairs, inserted: 0 })
    }

    pub fn config(&self) -> &CneprConfig {
        &self.cfg
    }

    pub fn pool_count(&self) -> usize {
        2 * self.pairs.len()
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn is_empty(&self) -> bool {
        self.inserted == 0
    }

    fn pair(&self, axis: Axis, label: usize) -> &PoolPair {
        &self.pairs[self.cfg.offset(axis) + label - 1]
    }

    /// (high pool, low pool, running mean) of one label.
    pub fn pools(
        &self,
        axis: Axis,
        label: usize,
    ) -> (&VecDeque<Arc<LabeledTransition>>, &VecDeque<Arc<LabeledTransition>>, f64) {
        let p = self.pair(axis, label);
        (&p.high, &p.low, p.mean)
    }

    /// Files the transition once per axis. Equal-to-mean rewards go low.
    pub fn insert(&mut self, t: LabeledTransition) -> Result<()> {
        self.cfg.check(t.labels)?;
        let reward = t.transition.reward;
        let labels = t.labels;
        let rec = Arc::new(t);
        for ax in Axis::ALL {
            let idx = self.cfg.offset(ax) + labels.get(ax) - 1;
            let pair = &mut self.pairs[idx];
            let pool = if reward > pair.mean { &mut pair.high } else { &mut pair.low };
            pool.push_back(Arc::clone(&rec));
            if pool.len() > self.cfg.capacity {
                pool.pop_front();
            }
            pair.mean = self.cfg.ema_decay * pair.mean + (1.0 - self.cfg.ema_decay) * reward;
        }
        self.inserted += 1;
        Ok(())
    }

    pub fn occupancy(&self) -> Vec<PairOccupancy> {
        let mut out = Vec::with_capacity(self.pairs.len());
        for ax in Axis::ALL {
            for label in 1..=self.cfg.bins(ax) {
                let p = self.pair(ax, label);
                out.push(PairOccupancy { axis: ax, label, high: p.high.len(), low: p.low.len(), mean_reward: p.mean });
            }
        }
        out
    }

    /// Builds one combined pool of `slots` draws per label.
    pub fn recombine<R: Rng + ?Sized>(&self, slots: usize, rng: &mut R) -> CombinedPools<'_> {
        let mut pools = Vec::with_capacity(self.pairs.len());
        let mut high_draws = 0;
        let mut draws = 0;
        for pair in &self.pairs {
            let mut pool = Vec::new();
            if !(pair.high.is_empty() && pair.low.is_empty()) {
                pool.reserve(slots);
                for _ in 0..slots {
                    let want_high = rng.random::<f64>() < self.cfg.rho_high;
                    let src = match (want_high, pair.high.is_empty(), pair.low.is_empty()) {
                        (true, false, _) | (false, false, true) => &pair.high,
                        _ => &pair.low,
                    };
                    if core::ptr::eq(src, &pair.high) {
                        high_draws += 1;
                    }
                    draws += 1;
                    pool.push(&*src[rng.random_range(0..src.len())]);
                }
            }
            pools.push(pool);
        }
        CombinedPools { cfg: &self.cfg, pools, high_draws, draws }
    }

    /// Recombine, reconstruct around `current` and draw a minibatch.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        current: Labels,
        batch: usize,
        rng: &mut R,
    ) -> Result<Vec<&LabeledTransition>> {
        let combined = self.recombine(batch, rng);
        let rec = combined.reconstruct(current, rng)?;
        sample_minibatch(&rec.pool, batch, rng)
    }
}

/// One recombined pool per label, holding references into the pool set.
#[derive(Debug, Clone)]
pub struct CombinedPools<'a> {
    cfg: &'a CneprConfig,
    pools: Vec<Vec<&'a LabeledTransition>>,
    /// Slots filled from high-value pools, out of `draws`.
    pub high_draws: usize,
    pub draws: usize,
}

#[derive(Debug, Clone)]
pub struct Reconstruction<'a> {
    pub selected: Labels,
    pub pool: Vec<&'a LabeledTransition>,
    /// True when the random search failed and the nearest labels were used.
    pub fallback: bool,
}

impl<'a> CombinedPools<'a> {
    /// Number of non-empty combined pools.
    pub fn len(&self) -> usize {
        self.pools.iter().filter(|p| !p.is_empty()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pool(&self, axis: Axis, label: usize) -> &[&'a LabeledTransition] {
        &self.pools[self.cfg.offset(axis) + label - 1]
    }

    fn nonempty(&self, axis: Axis) -> Vec<usize> {
        (1..=self.cfg.bins(axis)).filter(|&k| !self.pool(axis, k).is_empty()).collect()
    }

    /// Picks one label per axis within distance τ of `current` by repeated
    /// random selection, then merges the three pools.
    ///
    /// After `max_retries` rejections the choice is made uniformly among all
    /// admissible combinations; if none exists the nearest label on each axis
    /// is used and the result is flagged.
    pub fn reconstruct<R: Rng + ?Sized>(&self, current: Labels, rng: &mut R) -> Result<Reconstruction<'a>> {
        let cand = [self.nonempty(Axis::Sdr), self.nonempty(Axis::Soc), self.nonempty(Axis::Ao)];
        if cand.iter().any(|c| c.is_empty()) {
            return Err(Error::Empty("combined pools"));
        }
        let tau = self.cfg.tau + 1e-12;
        let mut chosen = None;
        for _ in 0..self.cfg.max_retries {
            let pick = Labels {
                l: cand[0][rng.random_range(0..cand[0].len())],
                m: cand[1][rng.random_range(0..cand[1].len())],
                n: cand[2][rng.random_range(0..cand[2].len())],
            };
            if self.cfg.distance(current, pick) <= tau {
                chosen = Some(pick);
                break;
            }
        }
        let mut fallback = false;
        let selected = match chosen {
            Some(s) => s,
            None => {
                let mut admissible = Vec::new();
                for &l in &cand[0] {
                    for &m in &cand[1] {
                        for &n in &cand[2] {
                            let s = Labels { l, m, n };
                            if self.cfg.distance(current, s) <= tau {
                                admissible.push(s);
                            }
                        }
                    }
                }
                if admissible.is_empty() {
                    fallback = true;
                    let nearest = |c: &[usize], want: usize| {
                        *c.iter().min_by_key(|&&k| (k.abs_diff(want), k)).expect("nonempty")
                    };
                    let s = Labels {
                        l: nearest(&cand[0], current.l),
                        m: nearest(&cand[1], current.m),
                        n: nearest(&cand[2], current.n),
                    };
                    log::debug!("no label set within tau of {current:?}; using nearest {s:?}");
                    s
                } else {
                    admissible[rng.random_range(0..admissible.len())]
                }
            }
        };
        let mut pool = Vec::new();
        for ax in Axis::ALL {
            pool.extend_from_slice(self.pool(ax, selected.get(ax)));
        }
        Ok(Reconstruction { selected, pool, fallback })
    }
}

/// Uniform draws with replacement.
pub fn sample_minibatch<'a, T: ?Sized, R: Rng + ?Sized>(
    pool: &[&'a T],
    batch: usize,
    rng: &mut R,
) -> Result<Vec<&'a T>> {
    if pool.is_empty() {
        return Err(Error::Empty("training pool"));
    }
    Ok((0..batch).map(|_| pool[rng.random_range(0..pool.len())]).collect())
}

/// FIFO ring buffer sampled uniformly: the plain replay baseline.
#[derive(Debug, Clone)]
pub struct UniformReplay {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl UniformReplay {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be >= 1".into()));
        }
        Ok(Self { capacity, items: Vec::new(), next: 0 })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if self.items.is_empty() {
            return Err(Error::Empty("replay buffer"));
        }
        Ok((0..batch).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect())
    }
}
