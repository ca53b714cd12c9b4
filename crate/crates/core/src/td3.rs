//! Twin-delayed deterministic policy gradient learner.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cnepr::Transition;
use crate::env::{Policy, ACTION_DIM};
use crate::nn::{Activation, Cache, Gradients, Mlp, Momentum};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Td3Config {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub momentum: f64,
    /// Critic updates per actor update.
    pub policy_delay: u64,
    pub target_noise: f64,
    pub noise_clip: f64,
    /// Polyak rate of the target networks.
    pub tau: f64,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            gamma: 0.9,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            momentum: 0.9,
            policy_delay: 2,
            target_noise: 0.2,
            noise_clip: 0.5,
            tau: 0.005,
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be nonempty and > 0");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.policy_delay == 0 {
            return bad("policy_delay must be >= 1");
        }
        if !(self.target_noise >= 0.0 && self.noise_clip >= 0.0) {
            return bad("target noise parameters must be >= 0");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    /// Mean squared TD error averaged over both critics.
    pub critic: f64,
    /// −mean Q₁(s, π(s)), present on actor-update steps.
    pub actor: Option<f64>,
}

#[derive(Debug, Clone, Default)]
struct Scratch {
    caches: [Cache; 4],
    states: Vec<f64>,
    next_states: Vec<f64>,
    sa: Vec<f64>,
    targets: Vec<f64>,
    grad_out: Vec<f64>,
    grad_in: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Td3Agent {
    cfg: Td3Config,
    state_dim: usize,
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critics: [Mlp; 2],
    pub critic_targets: [Mlp; 2],
    actor_opt: Momentum,
    critic_opts: [Momentum; 2],
    actor_grads: Gradients,
    critic_grads: [Gradients; 2],
    rng: ChaCha8Rng,
    updates: u64,
    scratch: Scratch,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

impl Td3Agent {
    pub fn new(state_dim: usize, cfg: Td3Config, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if state_dim == 0 {
            return Err(Error::Config("state_dim must be > 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Mlp::new(&sizes(state_dim, &cfg.hidden, ACTION_DIM), Activation::Tanh, 0.1, &mut rng)?;
        let critic_sizes = sizes(state_dim + ACTION_DIM, &cfg.hidden, 1);
        let c1 = Mlp::new(&critic_sizes, Activation::Linear, 1.0, &mut rng)?;
        let c2 = Mlp::new(&critic_sizes, Activation::Linear, 1.0, &mut rng)?;
        Ok(Self {
            actor_opt: Momentum::new(&actor, cfg.actor_lr, cfg.momentum),
            critic_opts: [
                Momentum::new(&c1, cfg.critic_lr, cfg.momentum),
                Momentum::new(&c2, cfg.critic_lr, cfg.momentum),
            ],
            actor_grads: actor.zero_gradients(),
            critic_grads: [c1.zero_gradients(), c2.zero_gradients()],
            actor_target: actor.clone(),
            critic_targets: [c1.clone(), c2.clone()],
            actor,
            critics: [c1, c2],
            cfg,
            state_dim,
            rng,
            updates: 0,
            scratch: Scratch::default(),
        })
    }

    pub fn config(&self) -> &Td3Config {
        &self.cfg
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn set_updates(&mut self, n: u64) {
        self.updates = n;
    }

    /// Every network with a stable name, in checkpoint order.
    pub fn networks(&self) -> [(&'static str, &Mlp); 6] {
        [
            ("actor", &self.actor),
            ("actor_target", &self.actor_target),
            ("critic1", &self.critics[0]),
            ("critic2", &self.critics[1]),
            ("critic1_target", &self.critic_targets[0]),
            ("critic2_target", &self.critic_targets[1]),
        ]
    }

    pub fn networks_mut(&mut self) -> [(&'static str, &mut Mlp); 6] {
        let [c1, c2] = &mut self.critics;
        let [t1, t2] = &mut self.critic_targets;
        [
            ("actor", &mut self.actor),
            ("actor_target", &mut self.actor_target),
            ("critic1", c1),
            ("critic2", c2),
            ("critic1_target", t1),
            ("critic2_target", t2),
        ]
    }

    /// Deterministic action in [−1, 1]^4.
    pub fn act(&self, state: &[f64]) -> Result<[f64; ACTION_DIM]> {
        let y = self.actor.forward(state)?;
        let mut a = [0.0; ACTION_DIM];
        a.copy_from_slice(&y);
        Ok(a)
    }

    /// Deterministic action plus clipped Gaussian exploration noise.
    pub fn act_explore(&mut self, state: &[f64], sigma: f64) -> Result<[f64; ACTION_DIM]> {
        let mut a = self.act(state)?;
        if sigma > 0.0 {
            let noise = Normal::new(0.0, sigma).map_err(|_| Error::Config("invalid exploration sigma".into()))?;
            for x in &mut a {
                *x = (*x + noise.sample(&mut self.rng)).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }

    pub fn q_value(&self, critic: usize, state: &[f64], action: &[f64; ACTION_DIM]) -> Result<f64> {
        let mut x = state.to_vec();
        x.extend_from_slice(action);
        Ok(self.critics[critic].forward(&x)?[0])
    }

    /// One TD3 update on `batch`.
    pub fn train_step(&mut self, batch: &[&Transition]) -> Result<Losses> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        let b = batch.len();
        let (sd, ad) = (self.state_dim, ACTION_DIM);
        let sc = &mut self.scratch;
        sc.states.clear();
        sc.next_states.clear();
        for t in batch {
            if t.state.len() != sd || t.next_state.len() != sd {
                return Err(Error::Dimension { expected: sd, got: t.state.len() });
            }
            sc.states.extend_from_slice(&t.state);
            sc.next_states.extend_from_slice(&t.next_state);
        }

        // Smoothed target actions and clipped double-Q targets.
        let [c_actor, c_q1, c_q2, c_pi] = &mut sc.caches;
        let next_actions = self.actor_target.forward_batch(&sc.next_states, b, c_actor);
        let noise = Normal::new(0.0, self.cfg.target_noise.max(1e-300)).expect("valid sigma");
        sc.sa.clear();
        for s in 0..b {
            sc.sa.extend_from_slice(&sc.next_states[s * sd..(s + 1) * sd]);
            for k in 0..ad {
                let eps = if self.cfg.target_noise > 0.0 {
                    noise.sample(&mut self.rng).clamp(-self.cfg.noise_clip, self.cfg.noise_clip)
                } else {
                    0.0
                };
                sc.sa.push((next_actions[s * ad + k] + eps).clamp(-1.0, 1.0));
            }
        }
        let q1n = self.critic_targets[0].forward_batch(&sc.sa, b, c_q1);
        let q2n = self.critic_targets[1].forward_batch(&sc.sa, b, c_q2);
        sc.targets.clear();
        for (s, t) in batch.iter().enumerate() {
            let bootstrap = if t.done { 0.0 } else { self.cfg.gamma * q1n[s].min(q2n[s]) };
            sc.targets.push(t.reward + bootstrap);
        }

        // Critic regression.
        sc.sa.clear();
        for (s, t) in batch.iter().enumerate() {
            sc.sa.extend_from_slice(&sc.states[s * sd..(s + 1) * sd]);
            sc.sa.extend_from_slice(&t.action);
        }
        let scale = 1.0 / b as f64;
        let mut critic_loss = 0.0;
        for i in 0..2 {
            let q = self.critics[i].forward_batch(&sc.sa, b, c_q1);
            sc.grad_out.clear();
            for (qs, y) in q.iter().zip(&sc.targets) {
                let e = qs - y;
                critic_loss += e * e * scale * 0.5;
                sc.grad_out.push(2.0 * e);
            }
            self.critic_grads[i].zero();
            self.critics[i].backward(c_q1, &sc.grad_out, &mut self.critic_grads[i], None);
            self.critic_opts[i].step(&mut self.critics[i], &self.critic_grads[i], scale);
        }

        self.updates += 1;
        let mut actor_loss = None;
        if self.updates.is_multiple_of(self.cfg.policy_delay) {
            let pi = self.actor.forward_batch(&sc.states, b, c_pi);
            sc.sa.clear();
            for s in 0..b {
                sc.sa.extend_from_slice(&sc.states[s * sd..(s + 1) * sd]);
                sc.sa.extend_from_slice(&pi[s * ad..(s + 1) * ad]);
            }
            let q = self.critics[0].forward_batch(&sc.sa, b, c_q1);
            actor_loss = Some(-q.iter().sum::<f64>() * scale);
            sc.grad_out.clear();
            sc.grad_out.resize(b, -1.0);
            // Parameter gradients of the critic are discarded here.
            self.critic_grads[0].zero();
            self.critics[0].backward(c_q1, &sc.grad_out, &mut self.critic_grads[0], Some(&mut sc.grad_in));
            sc.grad_out.clear();
            for s in 0..b {
                let row = s * (sd + ad);
                sc.grad_out.extend_from_slice(&sc.grad_in[row + sd..row + sd + ad]);
            }
            self.actor_grads.zero();
            self.actor.backward(c_pi, &sc.grad_out, &mut self.actor_grads, None);
            self.actor_opt.step(&mut self.actor, &self.actor_grads, scale);

            let tau = self.cfg.tau;
            self.actor_target.soft_update_from(&self.actor, tau);
            for i in 0..2 {
                self.critic_targets[i].soft_update_from(&self.critics[i], tau);
            }
        }
        Ok(Losses { critic: critic_loss, actor: actor_loss })
    }
}

/// Acts greedily with a trained agent.
pub struct Greedy<'a>(pub &'a Td3Agent);

impl Policy for Greedy<'_> {
    fn act(&mut self, state: &[f64]) -> [f64; ACTION_DIM] {
        self.0.act(state).expect("state dimension matches the agent")
    }
}
