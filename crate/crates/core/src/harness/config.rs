//! Flat `key = value` run configuration with dotted section prefixes.
//!
//! Blank lines and lines starting with `#` are ignored. Keys that are not
//! mentioned keep their defaults; unknown keys are an error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::explore::{ExplorationConfig, Mode};
use crate::nn::Activation;
use crate::pso::PsoConfig;
use crate::sac::SacConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub sac: SacConfig,
    pub pso: PsoConfig,
    pub explore: ExplorationConfig,
    pub episodes: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Episodes between CSV rows. The last episode is always logged.
    pub log_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl RunConfig {
    /// Full-size setting: 30×30 map, 3 agents, 50 particles × 100 iterations
    /// over a 50-step horizon.
    pub fn full() -> Self {
        Self {
            env: EnvConfig::default(),
            sac: SacConfig::default(),
            pso: PsoConfig::default(),
            explore: ExplorationConfig::default(),
            episodes: 1000,
            seed: 0,
            output_dir: PathBuf::from("runs/full"),
            log_every: 1,
        }
    }

    /// Small setting that trains in a few minutes on one core.
    pub fn desk() -> Self {
        Self {
            env: EnvConfig { width: 15, height: 15, num_agents: 2, max_steps: 60, ..EnvConfig::default() },
            sac: SacConfig {
                batch_size: 64,
                buffer_capacity: 20_000,
                warmup_steps: 500,
                hidden: vec![64, 64],
                ..SacConfig::default()
            },
            pso: PsoConfig { num_particles: 10, num_iterations: 20, horizon: 15, ..PsoConfig::default() },
            explore: ExplorationConfig::default(),
            episodes: 300,
            seed: 0,
            output_dir: PathBuf::from("runs/desk"),
            log_every: 1,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "full" => Some(Self::full()),
            "desk" => Some(Self::desk()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.sac.validate()?;
        self.pso.validate()?;
        self.explore.validate()?;
        if self.episodes == 0 {
            return Err(Error::Config("run: episodes must be at least 1".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("run: log_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn emit(&self) -> String {
        let (e, s, p, x) = (&self.env, &self.sac, &self.pso, &self.explore);
        let mut out = String::new();
        let mut put = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("run.episodes", &self.episodes);
        put("run.seed", &self.seed);
        put("run.output_dir", &self.output_dir.display());
        put("run.log_every", &self.log_every);
        put("env.width", &e.width);
        put("env.height", &e.height);
        put("env.num_agents", &e.num_agents);
        put("env.max_linear_speed", &e.max_linear_speed);
        put("env.max_angular_speed", &e.max_angular_speed);
        put("env.sensor_radius", &e.sensor_radius);
        put("env.sensor_half_angle", &e.sensor_half_angle);
        put("env.sensor_margin", &e.sensor_margin);
        put("env.collision_radius", &e.collision_radius);
        put("env.max_steps", &e.max_steps);
        put("env.reward_collision", &e.reward_collision);
        put("env.reward_oob", &e.reward_oob);
        put("env.reward_new_pixel", &e.reward_new_pixel);
        put("pso.particles", &p.num_particles);
        put("pso.iterations", &p.num_iterations);
        put("pso.horizon", &p.horizon);
        put("pso.inertia", &p.inertia);
        put("pso.cognitive", &p.cognitive);
        put("pso.social", &p.social);
        put("pso.velocity_clamp", &p.velocity_clamp);
        put("sac.gamma", &s.gamma);
        put("sac.tau", &s.tau);
        put("sac.alpha", &s.alpha);
        put("sac.batch_size", &s.batch_size);
        put("sac.buffer_capacity", &s.buffer_capacity);
        put("sac.actor_lr", &s.actor_lr);
        put("sac.critic_lr", &s.critic_lr);
        put("sac.updates_per_env_step", &s.updates_per_env_step);
        put("sac.warmup_steps", &s.warmup_steps);
        put("sac.log_std_min", &s.log_std_min);
        put("sac.log_std_max", &s.log_std_max);
        let hidden: Vec<String> = s.hidden.iter().map(ToString::to_string).collect();
        put("sac.hidden", &hidden.join(","));
        put("sac.activation", &s.activation.name());
        put("explore.mode", &x.mode);
        put("explore.epsilon_start", &x.epsilon_start);
        put("explore.epsilon_end", &x.epsilon_end);
        put("explore.decay_steps", &x.decay_steps);
        let replan = x.replan_interval.map_or_else(|| "auto".to_string(), |k| k.to_string());
        put("explore.replan_interval", &replan);
        put("explore.plan_follow_env", &x.plan_follow_env);
        out
    }

    /// Parses on top of the full-size defaults.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_over(Self::full(), text)
    }

    /// Parses `text`, overriding fields of `base`. A `preset = desk` line
    /// must come first if present and replaces the base.
    pub fn parse_over(base: Self, text: &str) -> Result<Self> {
        let mut cfg = base;
        let mut seen_key = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            if key == "preset" {
                if seen_key {
                    return Err(Error::Config(format!("line {}: preset must come before other keys", lineno + 1)));
                }
                cfg = Self::preset(value).ok_or_else(|| Error::Config(format!("unknown preset {value:?}")))?;
                continue;
            }
            seen_key = true;
            cfg.set(key, value).map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Assigns one dotted key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("invalid value {v:?} for {key}"))
        }
        let (e, s, p, x) = (&mut self.env, &mut self.sac, &mut self.pso, &mut self.explore);
        match key {
            "run.episodes" => self.episodes = num(key, value)?,
            "run.seed" => self.seed = num(key, value)?,
            "run.output_dir" => self.output_dir = PathBuf::from(value),
            "run.log_every" => self.log_every = num(key, value)?,
            "env.width" => e.width = num(key, value)?,
            "env.height" => e.height = num(key, value)?,
            "env.num_agents" => e.num_agents = num(key, value)?,
            "env.max_linear_speed" => e.max_linear_speed = num(key, value)?,
            "env.max_angular_speed" => e.max_angular_speed = num(key, value)?,
            "env.sensor_radius" => e.sensor_radius = num(key, value)?,
            "env.sensor_half_angle" => e.sensor_half_angle = num(key, value)?,
            "env.sensor_margin" => e.sensor_margin = num(key, value)?,
            "env.collision_radius" => e.collision_radius = num(key, value)?,
            "env.max_steps" => e.max_steps = num(key, value)?,
            "env.reward_collision" => e.reward_collision = num(key, value)?,
            "env.reward_oob" => e.reward_oob = num(key, value)?,
            "env.reward_new_pixel" => e.reward_new_pixel = num(key, value)?,
            "pso.particles" => p.num_particles = num(key, value)?,
            "pso.iterations" => p.num_iterations = num(key, value)?,
            "pso.horizon" => p.horizon = num(key, value)?,
            "pso.inertia" => p.inertia = num(key, value)?,
            "pso.cognitive" => p.cognitive = num(key, value)?,
            "pso.social" => p.social = num(key, value)?,
            "pso.velocity_clamp" => p.velocity_clamp = num(key, value)?,
            "sac.gamma" => s.gamma = num(key, value)?,
            "sac.tau" => s.tau = num(key, value)?,
            "sac.alpha" => s.alpha = num(key, value)?,
            "sac.batch_size" => s.batch_size = num(key, value)?,
            "sac.buffer_capacity" => s.buffer_capacity = num(key, value)?,
            "sac.actor_lr" => s.actor_lr = num(key, value)?,
            "sac.critic_lr" => s.critic_lr = num(key, value)?,
            "sac.updates_per_env_step" => s.updates_per_env_step = num(key, value)?,
            "sac.warmup_steps" => s.warmup_steps = num(key, value)?,
            "sac.log_std_min" => s.log_std_min = num(key, value)?,
            "sac.log_std_max" => s.log_std_max = num(key, value)?,
            "sac.hidden" => {
                s.hidden = if value.is_empty() {
                    Vec::new()
                } else {
                    value.split(',').map(|h| num(key, h.trim())).collect::<std::result::Result<_, _>>()?
                }
            }
            "sac.activation" => {
                s.activation = Activation::parse(value).ok_or_else(|| format!("unknown activation {value:?}"))?
            }
            "explore.mode" => x.mode = Mode::parse(value).ok_or_else(|| format!("unknown mode {value:?}"))?,
            "explore.epsilon_start" => x.epsilon_start = num(key, value)?,
            "explore.epsilon_end" => x.epsilon_end = num(key, value)?,
            "explore.decay_steps" => x.decay_steps = num(key, value)?,
            "explore.replan_interval" => {
                x.replan_interval = if value == "auto" { None } else { Some(num(key, value)?) }
            }
            "explore.plan_follow_env" => x.plan_follow_env = num(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// The configuration with only `explore.mode` replaced.
    pub fn with_mode(&self, mode: Mode) -> Self {
        let mut c = self.clone();
        c.explore.mode = mode;
        c
    }
}
