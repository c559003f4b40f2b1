//! Epsilon-greedy action selection where the exploratory branch can be
//! filled by swarm-planned actions.
//!
//! One uniform draw per environment step decides for the whole team. On an
//! exploratory step the team either acts uniformly at random or follows a
//! cached joint plan produced by [`crate::pso::propose_plan`]. A plan is
//! replanned once `replan_interval` of its actions have been consumed, and it
//! never outlives the episode it was planned in.

use std::fmt;

use rand::Rng;

use crate::env::{Action, CoverageEnv, CoverageState, JointAction};
use crate::error::{Error, Result};
use crate::pso::{propose_plan, PsoConfig};
use crate::sac::SacAgent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    PolicyOnly,
    EpsilonRandom,
    #[default]
    EpsilonPso,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::PolicyOnly => "policy_only",
            Mode::EpsilonRandom => "epsilon_random",
            Mode::EpsilonPso => "epsilon_pso",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "policy_only" => Some(Mode::PolicyOnly),
            "epsilon_random" => Some(Mode::EpsilonRandom),
            "epsilon_pso" => Some(Mode::EpsilonPso),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a joint action came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Policy,
    Random,
    Pso,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationConfig {
    pub mode: Mode,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Environment steps over which epsilon decays linearly.
    pub decay_steps: u64,
    /// Plan actions consumed before replanning. `None` uses the full horizon.
    pub replan_interval: Option<usize>,
    /// Advance the plan cursor on policy steps as well.
    pub plan_follow_env: bool,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            mode: Mode::EpsilonPso,
            epsilon_start: 0.3,
            epsilon_end: 0.05,
            decay_steps: 10_000,
            replan_interval: None,
            plan_follow_env: false,
        }
    }
}

impl ExplorationConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(format!("explore: {msg}")));
        if !(0.0 <= self.epsilon_end && self.epsilon_end <= self.epsilon_start && self.epsilon_start <= 1.0) {
            return fail("need 0 <= epsilon_end <= epsilon_start <= 1");
        }
        if self.decay_steps == 0 {
            return fail("decay_steps must be at least 1");
        }
        if self.replan_interval == Some(0) {
            return fail("replan_interval must be at least 1");
        }
        Ok(())
    }
}

/// Linear decay from `epsilon_start` to `epsilon_end` over `decay_steps`,
/// constant afterwards.
///
/// ```
/// use psomarl::explore::{epsilon_at, ExplorationConfig};
/// let cfg = ExplorationConfig { epsilon_start: 1.0, epsilon_end: 0.05, decay_steps: 1000, ..Default::default() };
/// assert!((epsilon_at(500, &cfg) - 0.525).abs() < 1e-12);
/// assert_eq!(epsilon_at(5000, &cfg), 0.05);
/// ```
pub fn epsilon_at(step: u64, cfg: &ExplorationConfig) -> f64 {
    if step >= cfg.decay_steps {
        return cfg.epsilon_end;
    }
    let frac = step as f64 / cfg.decay_steps as f64;
    cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac
}

/// Something that maps an observation to an executed action.
pub trait Policy {
    fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Action>;
}

impl Policy for SacAgent {
    fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Action> {
        self.sample_action(obs, rng).map(|(a, _)| a)
    }
}

/// Open-loop joint plan being consumed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlanCache {
    pub plan: Vec<JointAction>,
    pub cursor: usize,
    /// Episode step at which the plan was made.
    pub origin_step: usize,
    episode: u64,
    limit: usize,
}

impl PlanCache {
    /// Whether the cache still holds an action usable in `episode`.
    pub fn has_next(&self, episode: u64) -> bool {
        self.episode == episode && self.cursor < self.limit
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }
}

/// Stateful selector that owns the plan cache and counts planner runs.
#[derive(Debug, Clone)]
pub struct Explorer {
    config: ExplorationConfig,
    pso: PsoConfig,
    cache: PlanCache,
    episode: u64,
    pso_calls: u64,
}

impl Explorer {
    pub fn new(config: ExplorationConfig, pso: PsoConfig) -> Result<Self> {
        config.validate()?;
        pso.validate()?;
        Ok(Self { config, pso, cache: PlanCache::default(), episode: 0, pso_calls: 0 })
    }

    pub fn config(&self) -> &ExplorationConfig {
        &self.config
    }

    pub fn cache(&self) -> &PlanCache {
        &self.cache
    }

    /// Total planner runs since construction.
    pub fn pso_calls(&self) -> u64 {
        self.pso_calls
    }

    /// Drops any cached plan. Call on every environment reset.
    pub fn begin_episode(&mut self) {
        self.episode += 1;
        self.cache.clear();
    }

    fn replan_limit(&self, plan_len: usize) -> usize {
        self.config.replan_interval.map_or(plan_len, |k| k.min(plan_len))
    }

    /// Picks the team's joint action for this step.
    ///
    /// `policy_rng` drives the epsilon draw, random actions and policy
    /// sampling; `pso_rng` is used only by the planner.
    #[allow(clippy::too_many_arguments)]
    pub fn select_actions<P, R1, R2>(
        &mut self,
        env: &CoverageEnv,
        state: &CoverageState,
        observations: &[Vec<f64>],
        agents: &[P],
        epsilon: f64,
        policy_rng: &mut R1,
        pso_rng: &mut R2,
    ) -> Result<(JointAction, Source)>
    where
        P: Policy,
        R1: Rng + ?Sized,
        R2: Rng + ?Sized,
    {
        let n = env.config().num_agents;
        if env.is_terminal(state) {
            return Err(Error::EpisodeFinished);
        }
        if agents.len() != n || observations.len() != n {
            return Err(Error::Dimension { expected: n, got: agents.len().min(observations.len()) });
        }
        let u: f64 = policy_rng.random();
        let explore = self.config.mode != Mode::PolicyOnly && u < epsilon;
        if !explore {
            if self.config.plan_follow_env && self.cache.has_next(self.episode) {
                self.cache.cursor += 1;
            }
            let joint = agents
                .iter()
                .zip(observations)
                .map(|(agent, obs)| agent.act(obs, policy_rng))
                .collect::<Result<JointAction>>()?;
            return Ok((joint, Source::Policy));
        }
        if self.config.mode == Mode::EpsilonRandom {
            let joint = (0..n).map(|_| Action::new(policy_rng.random(), policy_rng.random())).collect();
            return Ok((joint, Source::Random));
        }
        if !self.cache.has_next(self.episode) {
            let (plan, _) = propose_plan(env, state, &self.pso, pso_rng)?;
            self.pso_calls += 1;
            self.cache = PlanCache {
                limit: self.replan_limit(plan.len()),
                plan,
                cursor: 0,
                origin_step: state.step_count,
                episode: self.episode,
            };
        }
        let joint = self.cache.plan[self.cache.cursor].clone();
        self.cache.cursor += 1;
        Ok((joint, Source::Pso))
    }
}
