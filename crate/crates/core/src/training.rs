//! Training loops, baseline policies and evaluation.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cnepr::{CneprConfig, LabeledTransition, PairOccupancy, PoolSet, Transition, UniformReplay};
use crate::domain::HOURS_PER_DAY;
use crate::env::{Env, Policy, ACTION_DIM};
use crate::td3::{Td3Agent, Td3Config};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ReplayKind {
    Cnepr(CneprConfig),
    Uniform { capacity: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Steps of uniformly random actions before learning starts.
    pub warmup_steps: usize,
    pub batch_size: usize,
    pub exploration_sigma: f64,
    pub seed: u64,
    pub replay: ReplayKind,
    pub td3: Td3Config,
}

impl TrainConfig {
    pub fn cnepr(episodes: usize, seed: u64) -> Self {
        Self {
            episodes,
            warmup_steps: 1000,
            batch_size: 32,
            exploration_sigma: 0.1,
            seed,
            replay: ReplayKind::Cnepr(CneprConfig::default()),
            td3: Td3Config::default(),
        }
    }

    /// Plain TD3 with a single uniform buffer.
    pub fn uniform(episodes: usize, seed: u64) -> Self {
        Self { replay: ReplayKind::Uniform { capacity: 100_000 }, ..Self::cnepr(episodes, seed) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStat {
    pub episode: usize,
    pub day: usize,
    /// Unscaled episode return ($), i.e. the day's objective.
    pub ret: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Td3Agent,
    pub curve: Vec<EpisodeStat>,
    /// Final pool occupancy; empty for the uniform buffer.
    pub occupancy: Vec<PairOccupancy>,
}

enum Replay {
    Cnepr(PoolSet),
    Uniform(UniformReplay),
}

fn random_action<R: Rng + ?Sized>(rng: &mut R) -> [f64; ACTION_DIM] {
    core::array::from_fn(|_| rng.random_range(-1.0..=1.0))
}

/// Trains a TD3 agent on one-day episodes drawn uniformly from the scenario.
pub fn train(env: &mut Env, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut agent = Td3Agent::new(env.state_dim(), cfg.td3.clone(), cfg.seed.wrapping_add(0x9e37_79b9))?;
    let mut replay = match &cfg.replay {
        ReplayKind::Cnepr(c) => Replay::Cnepr(PoolSet::new(c.clone())?),
        ReplayKind::Uniform { capacity } => Replay::Uniform(UniformReplay::new(*capacity)?),
    };
    let scale = env.config().reward_scale;
    let mut curve = Vec::with_capacity(cfg.episodes);
    let mut steps = 0usize;

    for episode in 0..cfg.episodes {
        let day = rng.random_range(0..env.days());
        let mut state = env.reset_day(day)?;
        let (mut ret, mut closs, mut aloss, mut nc, mut na) = (0.0, 0.0, 0.0, 0usize, 0usize);
        for _ in 0..HOURS_PER_DAY {
            let action = if steps < cfg.warmup_steps {
                random_action(&mut rng)
            } else {
                agent.act_explore(&state, cfg.exploration_sigma)?
            };
            let out = env.step(&action)?;
            ret += out.reward;
            let t = Transition {
                state: core::mem::take(&mut state),
                action,
                reward: out.reward * scale,
                next_state: out.state.clone(),
                done: out.done,
            };
            steps += 1;
            let learn = steps >= cfg.warmup_steps;
            let losses = match &mut replay {
                Replay::Cnepr(pools) => {
                    let c = pools.config();
                    let labels = c.labels(t.state[0], t.state[1], t.state[2]);
                    let current = c.labels(out.factors.f_sdr, out.factors.f_soc, out.factors.f_ao);
                    pools.insert(LabeledTransition { transition: t, labels })?;
                    if learn {
                        let batch = pools.sample(current, cfg.batch_size, &mut rng)?;
                        let batch: Vec<&Transition> = batch.iter().map(|lt| &lt.transition).collect();
                        Some(agent.train_step(&batch)?)
                    } else {
                        None
                    }
                }
                Replay::Uniform(buf) => {
                    buf.push(t);
                    if learn {
                        let batch = buf.sample(cfg.batch_size, &mut rng)?;
                        Some(agent.train_step(&batch)?)
                    } else {
                        None
                    }
                }
            };
            if let Some(l) = losses {
                closs += l.critic;
                nc += 1;
                if let Some(a) = l.actor {
                    aloss += a;
                    na += 1;
                }
            }
            state = out.state;
        }
        curve.push(EpisodeStat {
            episode,
            day,
            ret,
            critic_loss: if nc > 0 { closs / nc as f64 } else { 0.0 },
            actor_loss: if na > 0 { aloss / na as f64 } else { 0.0 },
        });
    }
    if !agent.actor.is_finite() {
        return Err(Error::Contract("training diverged: non-finite actor parameters".into()));
    }
    let occupancy = match &replay {
        Replay::Cnepr(pools) => pools.occupancy(),
        Replay::Uniform(_) => Vec::new(),
    };
    Ok(TrainOutcome { agent, curve, occupancy })
}

/// Uniformly random actions in [−1, 1]^4.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _state: &[f64]) -> [f64; ACTION_DIM] {
        random_action(&mut self.rng)
    }
}

/// Neutral coefficients, no trading.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdlePolicy;

impl Policy for IdlePolicy {
    fn act(&mut self, _state: &[f64]) -> [f64; ACTION_DIM] {
        [-1.0, 1.0, -1.0, -1.0]
    }
}

/// Runs one episode per listed day and returns each day's objective.
pub fn evaluate(env: &mut Env, policy: &mut dyn Policy, days: &[usize]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(days.len());
    for &d in days {
        let mut state = env.reset_day(d)?;
        let mut ret = 0.0;
        for _ in 0..HOURS_PER_DAY {
            let s = env.step(&policy.act(&state))?;
            ret += s.reward;
            state = s.state;
        }
        out.push(ret);
    }
    Ok(out)
}

/// Episode returns of a random policy, in the same layout as a training curve.
pub fn random_curve(env: &mut Env, episodes: usize, seed: u64) -> Result<Vec<EpisodeStat>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = RandomPolicy::new(seed.wrapping_add(1));
    let mut curve = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let day = rng.random_range(0..env.days());
        let ret = evaluate(env, &mut policy, &[day])?[0];
        curve.push(EpisodeStat { episode, day, ret, critic_loss: 0.0, actor_loss: 0.0 });
    }
    Ok(curve)
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}
