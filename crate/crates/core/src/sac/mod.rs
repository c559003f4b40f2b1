//! Soft actor-critic with a fixed entropy temperature, one independent
//! learner per agent.
//!
//! The actor outputs a mean and a log standard deviation per action
//! dimension. Samples are squashed with `tanh` and rescaled to `[0, 1]`, the
//! range the environment consumes. Two critics score `state ‖ action`, and
//! each has a Polyak-averaged target copy used for the bootstrapped target.

mod replay;

pub use replay::{Batch, ReplayBuffer, Transition};

use std::f64::consts::{LN_2, PI};

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::codec::{Reader, Writer};
use crate::env::Action;
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamState, GradBundle, Mlp};

const ACTION_DIM: usize = 2;
const SQUASH_EPS: f64 = 1e-6;
const AGENT_MAGIC: &[u8; 8] = b"PSSAC\0\0\0";
const AGENT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau: f64,
    /// Fixed entropy temperature.
    pub alpha: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub updates_per_env_step: usize,
    /// Transitions an agent must hold before it starts learning.
    pub warmup_steps: usize,
    pub log_std_min: f64,
    pub log_std_max: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            alpha: 0.2,
            batch_size: 256,
            buffer_capacity: 100_000,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            updates_per_env_step: 1,
            warmup_steps: 1000,
            log_std_min: -20.0,
            log_std_max: 2.0,
            hidden: vec![128, 128],
            activation: Activation::Relu,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(format!("sac: {msg}")));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("gamma must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail("tau must lie in (0, 1]");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail("alpha must be finite and >= 0");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return fail("batch_size and buffer_capacity must be at least 1");
        }
        if self.batch_size > self.buffer_capacity {
            return fail("batch_size must not exceed buffer_capacity");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return fail("learning rates must be > 0");
        }
        if self.log_std_min.partial_cmp(&self.log_std_max) != Some(std::cmp::Ordering::Less) {
            return fail("log_std_min must be below log_std_max");
        }
        if self.hidden.contains(&0) {
            return fail("hidden layer widths must be at least 1");
        }
        Ok(())
    }
}

/// Maps an executed action component back to the pre-squash Gaussian sample.
pub fn presquash(a: f64) -> f64 {
    let bound = 1.0 - SQUASH_EPS;
    (2.0 * a - 1.0).clamp(-bound, bound).atanh()
}

/// Per-sample quantities of the squashed Gaussian policy.
struct Squashed {
    /// Executed actions in `[0, 1]`, `B × 2`.
    actions: Array2<f64>,
    log_probs: Array1<f64>,
    tanh: Array2<f64>,
    std: Array2<f64>,
    /// 1 where the raw log-std lies inside its bounds, else 0.
    std_active: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
}

/// One agent's networks, optimizers and private replay buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct SacAgent {
    pub actor: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub target1: Mlp,
    pub target2: Mlp,
    pub actor_opt: AdamState,
    pub critic1_opt: AdamState,
    pub critic2_opt: AdamState,
    pub buffer: ReplayBuffer,
    config: SacConfig,
    obs_dim: usize,
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut v = Vec::with_capacity(hidden.len() + 2);
    v.push(input);
    v.extend_from_slice(hidden);
    v.push(output);
    v
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, config: SacConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let actor = Mlp::new(&layer_sizes(obs_dim, &config.hidden, 2 * ACTION_DIM), config.activation, rng)?;
        let critic_sizes = layer_sizes(obs_dim + ACTION_DIM, &config.hidden, 1);
        let critic1 = Mlp::new(&critic_sizes, config.activation, rng)?;
        let critic2 = Mlp::new(&critic_sizes, config.activation, rng)?;
        Ok(Self {
            actor_opt: AdamState::new(&actor, config.actor_lr),
            critic1_opt: AdamState::new(&critic1, config.critic_lr),
            critic2_opt: AdamState::new(&critic2, config.critic_lr),
            target1: critic1.clone(),
            target2: critic2.clone(),
            actor,
            critic1,
            critic2,
            buffer: ReplayBuffer::new(config.buffer_capacity),
            config,
            obs_dim,
        })
    }

    pub fn config(&self) -> &SacConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut SacConfig {
        &mut self.config
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    fn check_obs(&self, width: usize) -> Result<()> {
        if width != self.obs_dim {
            return Err(Error::Dimension { expected: self.obs_dim, got: width });
        }
        Ok(())
    }

    /// Mean and clamped log-std columns of the actor output.
    fn policy_head(&self, out: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy output"));
        }
        let (lo, hi) = (self.config.log_std_min, self.config.log_std_max);
        let mean = out.slice(s![.., ..ACTION_DIM]).to_owned();
        let raw = out.slice(s![.., ACTION_DIM..]);
        let log_std = raw.mapv(|v| v.clamp(lo, hi));
        let active = raw.mapv(|v| if v > lo && v < hi { 1.0 } else { 0.0 });
        Ok((mean, log_std, active))
    }

    fn squash(&self, out: &Array2<f64>, noise: ArrayView2<f64>) -> Result<Squashed> {
        let (mean, log_std, std_active) = self.policy_head(out)?;
        let std = log_std.mapv(f64::exp);
        let u = &mean + &(&std * &noise);
        let tanh = u.mapv(f64::tanh);
        let actions = tanh.mapv(|t| 0.5 * (t + 1.0));
        let half_ln_2pi = 0.5 * (2.0 * PI).ln();
        let mut log_probs = Array1::zeros(out.nrows());
        for b in 0..out.nrows() {
            let mut lp = ACTION_DIM as f64 * LN_2;
            for d in 0..ACTION_DIM {
                let xi = noise[[b, d]];
                let t = tanh[[b, d]];
                lp += -0.5 * xi * xi - log_std[[b, d]] - half_ln_2pi - (1.0 - t * t + SQUASH_EPS).ln();
            }
            log_probs[b] = lp;
        }
        Ok(Squashed { actions, log_probs, tanh, std, std_active })
    }

    fn draw_noise<R: Rng + ?Sized>(rows: usize, rng: &mut R) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, ACTION_DIM), || rng.sample(StandardNormal))
    }

    /// Samples an executed action in `(0, 1)²` and its log-density.
    pub fn sample_action<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Action, f64)> {
        let xi: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        self.sample_action_with_noise(obs, xi)
    }

    /// Same as [`SacAgent::sample_action`] with the standard-normal draw supplied.
    pub fn sample_action_with_noise(&self, obs: &[f64], noise: [f64; 2]) -> Result<(Action, f64)> {
        self.check_obs(obs.len())?;
        let out = Array2::from_shape_vec((1, 2 * ACTION_DIM), self.actor.forward(obs)?).expect("actor output width");
        let noise = ArrayView2::from_shape((1, ACTION_DIM), &noise).expect("two noise values");
        let sq = self.squash(&out, noise)?;
        Ok((Action { lin: sq.actions[[0, 0]], ang: sq.actions[[0, 1]] }, sq.log_probs[0]))
    }

    /// The squashed mean action, used for evaluation.
    pub fn act_greedy(&self, obs: &[f64]) -> Result<Action> {
        self.sample_action_with_noise(obs, [0.0, 0.0]).map(|(a, _)| a)
    }

    /// Mean action and standard deviation of the pre-squash Gaussian.
    pub fn policy_params(&self, obs: &[f64]) -> Result<([f64; 2], [f64; 2])> {
        self.check_obs(obs.len())?;
        let out = Array2::from_shape_vec((1, 2 * ACTION_DIM), self.actor.forward(obs)?).expect("actor output width");
        let (mean, log_std, _) = self.policy_head(&out)?;
        Ok(([mean[[0, 0]], mean[[0, 1]]], [log_std[[0, 0]].exp(), log_std[[0, 1]].exp()]))
    }

    /// Log-density of a stored executed action under the current policy.
    pub fn log_prob_of(&self, obs: &[f64], action: &Action) -> Result<f64> {
        let (mean, std) = self.policy_params(obs)?;
        let u = [presquash(action.lin), presquash(action.ang)];
        let noise = [(u[0] - mean[0]) / std[0], (u[1] - mean[1]) / std[1]];
        self.sample_action_with_noise(obs, noise).map(|(_, lp)| lp)
    }

    fn critic_input(states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array2<f64> {
        concatenate![Axis(1), states, actions]
    }

    /// Bootstrapped targets `r + γ(1 − done)(min Q̄(s', a') − α log π(a'|s'))`
    /// with `a'` produced from the given standard-normal noise.
    pub fn critic_targets(&self, batch: &Batch, noise: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_obs(batch.next_states.ncols())?;
        let out = self.actor.forward_batch(batch.next_states.view())?;
        let sq = self.squash(out.output(), noise)?;
        let input = Self::critic_input(batch.next_states.view(), sq.actions.view());
        let q1 = self.target1.forward_batch(input.view())?;
        let q2 = self.target2.forward_batch(input.view())?;
        let (g, a) = (self.config.gamma, self.config.alpha);
        let mut y = Array1::zeros(batch.len());
        for b in 0..batch.len() {
            let soft = q1.output()[[b, 0]].min(q2.output()[[b, 0]]) - a * sq.log_probs[b];
            y[b] = batch.rewards[b] + g * (1.0 - batch.dones[b]) * soft;
        }
        Ok(y)
    }

    /// Regresses both critics onto the targets (one Adam step each) and
    /// returns the mean of the two mean-squared errors.
    pub fn critic_update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<f64> {
        let noise = Self::draw_noise(batch.len(), rng);
        self.critic_update_with_noise(batch, noise.view())
    }

    pub fn critic_update_with_noise(&mut self, batch: &Batch, noise: ArrayView2<f64>) -> Result<f64> {
        let y = self.critic_targets(batch, noise)?;
        self.check_obs(batch.states.ncols())?;
        let input = Self::critic_input(batch.states.view(), batch.actions.view());
        let n = batch.len() as f64;
        let mut total = 0.0;
        for (critic, opt) in [(&mut self.critic1, &mut self.critic1_opt), (&mut self.critic2, &mut self.critic2_opt)] {
            let tape = critic.forward_batch(input.view())?;
            let diff = &tape.output().column(0) - &y;
            total += diff.mapv(|d| d * d).sum() / n;
            let upstream = diff.mapv(|d| 2.0 * d / n).insert_axis(Axis(1));
            let grads = critic.backward_batch(&tape, upstream.view())?;
            opt.step(critic, &grads)?;
        }
        Ok(0.5 * total)
    }

    /// Loss `mean(α log π(a|s) − min(Q1, Q2)(s, a))` with `a` reparameterized
    /// from `noise`, and its gradient with respect to the actor parameters.
    pub fn actor_loss_and_grad(&self, states: ArrayView2<f64>, noise: ArrayView2<f64>) -> Result<(f64, GradBundle)> {
        self.check_obs(states.ncols())?;
        let rows = states.nrows();
        let n = rows as f64;
        let alpha = self.config.alpha;
        let tape = self.actor.forward_batch(states)?;
        let sq = self.squash(tape.output(), noise)?;
        let input = Self::critic_input(states, sq.actions.view());
        let t1 = self.critic1.forward_batch(input.view())?;
        let t2 = self.critic2.forward_batch(input.view())?;

        let mut loss = 0.0;
        let mut up1 = Array2::zeros((rows, 1));
        let mut up2 = Array2::zeros((rows, 1));
        for b in 0..rows {
            let (q1, q2) = (t1.output()[[b, 0]], t2.output()[[b, 0]]);
            if q1 <= q2 {
                up1[[b, 0]] = -1.0 / n;
            } else {
                up2[[b, 0]] = -1.0 / n;
            }
            loss += (alpha * sq.log_probs[b] - q1.min(q2)) / n;
        }
        let dq = self.critic1.input_gradient(&t1, up1.view())? + self.critic2.input_gradient(&t2, up2.view())?;

        let mut upstream = Array2::zeros((rows, 2 * ACTION_DIM));
        for b in 0..rows {
            for d in 0..ACTION_DIM {
                let t = sq.tanh[[b, d]];
                let one_minus = 1.0 - t * t;
                // Through the critic: a = (tanh u + 1) / 2.
                let via_q = dq[[b, self.obs_dim + d]] * 0.5 * one_minus;
                // Through the squash correction −ln(1 − tanh²u + ε).
                let via_entropy = alpha / n * 2.0 * t * one_minus / (one_minus + SQUASH_EPS);
                let du = via_q + via_entropy;
                upstream[[b, d]] = du;
                // u = μ + σξ and the −log σ term of the Gaussian density.
                let xi = noise[[b, d]];
                upstream[[b, ACTION_DIM + d]] = (du * sq.std[[b, d]] * xi - alpha / n) * sq.std_active[[b, d]];
            }
        }
        let grads = self.actor.backward_batch(&tape, upstream.view())?;
        Ok((loss, grads))
    }

    pub fn actor_update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<f64> {
        let noise = Self::draw_noise(batch.len(), rng);
        let (loss, grads) = self.actor_loss_and_grad(batch.states.view(), noise.view())?;
        self.actor_opt.step(&mut self.actor, &grads)?;
        Ok(loss)
    }

    /// Polyak-averages both target critics towards the online critics.
    pub fn target_update(&mut self) {
        let tau = self.config.tau;
        self.target1.soft_update_from(&self.critic1, tau);
        self.target2.soft_update_from(&self.critic2, tau);
    }

    pub fn remember(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    pub fn ready(&self) -> bool {
        let need = self.config.batch_size.max(self.config.warmup_steps);
        self.buffer.len() >= need
    }

    /// Runs the configured number of critic/actor/target updates once the
    /// buffer is past warm-up. Returns the stats of the last update.
    pub fn learn<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<UpdateStats>> {
        if !self.ready() {
            return Ok(None);
        }
        let mut last = None;
        for _ in 0..self.config.updates_per_env_step {
            let batch = self.buffer.sample(self.config.batch_size, rng)?;
            let critic_loss = self.critic_update(&batch, rng)?;
            let actor_loss = self.actor_update(&batch, rng)?;
            self.target_update();
            last = Some(UpdateStats { critic_loss, actor_loss });
        }
        Ok(last)
    }

    /// Versioned container with the config, the five networks and the three
    /// optimizer states. The replay buffer is not saved.
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut w = Writer::new(AGENT_MAGIC, AGENT_VERSION);
        w.u64(self.obs_dim as u64);
        w.f64s([c.gamma, c.tau, c.alpha].iter());
        w.u64(c.batch_size as u64);
        w.u64(c.buffer_capacity as u64);
        w.f64s([c.actor_lr, c.critic_lr].iter());
        w.u64(c.updates_per_env_step as u64);
        w.u64(c.warmup_steps as u64);
        w.f64s([c.log_std_min, c.log_std_max].iter());
        w.u32(c.hidden.len() as u32);
        for &h in &c.hidden {
            w.u64(h as u64);
        }
        w.bytes(c.activation.name().as_bytes());
        for net in [&self.actor, &self.critic1, &self.critic2, &self.target1, &self.target2] {
            w.bytes(&net.to_bytes());
        }
        for opt in [&self.actor_opt, &self.critic1_opt, &self.critic2_opt] {
            w.bytes(&opt.to_bytes());
        }
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf, AGENT_MAGIC, AGENT_VERSION)?;
        let obs_dim = r.u64()? as usize;
        let (gamma, tau, alpha) = (r.f64()?, r.f64()?, r.f64()?);
        let batch_size = r.u64()? as usize;
        let buffer_capacity = r.u64()? as usize;
        let (actor_lr, critic_lr) = (r.f64()?, r.f64()?);
        let updates_per_env_step = r.u64()? as usize;
        let warmup_steps = r.u64()? as usize;
        let (log_std_min, log_std_max) = (r.f64()?, r.f64()?);
        let n = r.u32()? as usize;
        let hidden = (0..n).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let name = String::from_utf8_lossy(r.bytes()?).into_owned();
        let activation = Activation::parse(&name).ok_or_else(|| Error::Checkpoint(format!("unknown activation {name}")))?;
        let config = SacConfig {
            gamma,
            tau,
            alpha,
            batch_size,
            buffer_capacity,
            actor_lr,
            critic_lr,
            updates_per_env_step,
            warmup_steps,
            log_std_min,
            log_std_max,
            hidden,
            activation,
        };
        config.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut nets = (0..5).map(|_| Mlp::from_bytes(r.bytes()?)).collect::<Result<Vec<_>>>()?.into_iter();
        let mut opts = (0..3).map(|_| AdamState::from_bytes(r.bytes()?)).collect::<Result<Vec<_>>>()?.into_iter();
        r.expect_end()?;
        let mut next = || nets.next().unwrap();
        let (actor, critic1, critic2, target1, target2) = (next(), next(), next(), next(), next());
        if actor.input_dim() != obs_dim || critic1.input_dim() != obs_dim + ACTION_DIM {
            return Err(Error::Checkpoint("network shapes do not match the observation size".into()));
        }
        Ok(Self {
            actor,
            critic1,
            critic2,
            target1,
            target2,
            actor_opt: opts.next().unwrap(),
            critic1_opt: opts.next().unwrap(),
            critic2_opt: opts.next().unwrap(),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            config,
            obs_dim,
        })
    }
}
