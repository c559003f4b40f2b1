use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::env::CoverageEnv;
use crate::error::{Error, Result};
use crate::explore::{epsilon_at, Explorer};
use crate::harness::config::RunConfig;
use crate::harness::seeding::{stream, Streams, EVAL_STREAM};
use crate::sac::{SacAgent, Transition};

pub const CSV_HEADER: &str = "episode,agent_id,return,team_return,coverage_fraction,steps,epsilon,pso_calls,wall_time_ms";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";

/// Summary of one training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub returns: Vec<f64>,
    pub team_return: f64,
    pub coverage_fraction: f64,
    pub steps: usize,
    /// Epsilon in effect at the first step of the episode.
    pub epsilon: f64,
    /// Planner runs during this episode.
    pub pso_calls: u64,
    pub wall_time_ms: u128,
}

impl EpisodeRecord {
    /// CSV rows, one per agent.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for (i, r) in self.returns.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                self.episode,
                i,
                r,
                self.team_return,
                self.coverage_fraction,
                self.steps,
                self.epsilon,
                self.pso_calls,
                self.wall_time_ms
            ));
        }
        out
    }
}

/// Training state for one seeded run.
pub struct Trainer {
    config: RunConfig,
    env: CoverageEnv,
    agents: Vec<SacAgent>,
    explorer: Explorer,
    streams: Streams,
    global_step: u64,
    episode: usize,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let env = CoverageEnv::new(config.env.clone())?;
        let mut streams = Streams::new(config.seed);
        let agents = (0..config.env.num_agents)
            .map(|_| SacAgent::new(env.observation_dim(), config.sac.clone(), &mut streams.policy))
            .collect::<Result<Vec<_>>>()?;
        let explorer = Explorer::new(config.explore.clone(), config.pso.clone())?;
        Ok(Self { config, env, agents, explorer, streams, global_step: 0, episode: 0 })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn agents(&self) -> &[SacAgent] {
        &self.agents
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    /// Plays and learns from one episode.
    pub fn run_episode(&mut self) -> Result<EpisodeRecord> {
        let started = Instant::now();
        let n = self.env.config().num_agents;
        let (mut state, mut obs) = self.env.reset(&mut self.streams.env);
        self.explorer.begin_episode();
        let calls_before = self.explorer.pso_calls();
        let epsilon = epsilon_at(self.global_step, &self.config.explore);
        let mut returns = vec![0.0; n];
        loop {
            let eps = epsilon_at(self.global_step, &self.config.explore);
            let (joint, _) = self.explorer.select_actions(
                &self.env,
                &state,
                &obs,
                &self.agents,
                eps,
                &mut self.streams.policy,
                &mut self.streams.pso,
            )?;
            let outcome = self.env.step_in_place(&mut state, &joint)?;
            let next_obs = self.env.observe_all(&state);
            for (i, agent) in self.agents.iter_mut().enumerate() {
                returns[i] += outcome.rewards[i];
                agent.remember(Transition {
                    state: std::mem::take(&mut obs[i]),
                    action: joint[i],
                    reward: outcome.rewards[i],
                    next_state: next_obs[i].clone(),
                    done: outcome.terminated,
                });
            }
            for agent in &mut self.agents {
                agent.learn(&mut self.streams.buffer)?;
            }
            obs = next_obs;
            self.global_step += 1;
            if outcome.done {
                break;
            }
        }
        let record = EpisodeRecord {
            episode: self.episode,
            team_return: returns.iter().sum(),
            returns,
            coverage_fraction: state.coverage_fraction(),
            steps: state.step_count,
            epsilon,
            pso_calls: self.explorer.pso_calls() - calls_before,
            wall_time_ms: started.elapsed().as_millis(),
        };
        self.episode += 1;
        Ok(record)
    }

    /// Writes `run.cfg` and one `agent_<i>.ckpt` per agent into `dir`.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("run.cfg"), self.config.emit())?;
        for (i, agent) in self.agents.iter().enumerate() {
            fs::write(dir.join(format!("agent_{i}.ckpt")), agent.to_bytes())?;
        }
        Ok(())
    }
}

/// Runs the whole configured training into `config.output_dir`, writing
/// `metrics.csv` as episodes finish and a checkpoint at the end.
pub fn train(config: &RunConfig) -> Result<Vec<EpisodeRecord>> {
    train_with(config, |_| {})
}

/// Same as [`train`], calling `observe` after every episode.
pub fn train_with(config: &RunConfig, mut observe: impl FnMut(&EpisodeRecord)) -> Result<Vec<EpisodeRecord>> {
    let mut trainer = Trainer::new(config.clone())?;
    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    let mut csv = BufWriter::new(File::create(out.join(METRICS_FILE))?);
    writeln!(csv, "{CSV_HEADER}")?;
    let mut records = Vec::with_capacity(config.episodes);
    for ep in 0..config.episodes {
        let record = trainer.run_episode()?;
        if ep % config.log_every == 0 || ep + 1 == config.episodes {
            csv.write_all(record.csv_rows().as_bytes())?;
            csv.flush()?;
        }
        observe(&record);
        records.push(record);
    }
    trainer.save_checkpoint(&out.join(CHECKPOINT_DIR))?;
    Ok(records)
}

/// Loads the config and agents saved by [`Trainer::save_checkpoint`].
pub fn load_checkpoint(dir: &Path) -> Result<(RunConfig, Vec<SacAgent>)> {
    let config = RunConfig::load(&dir.join("run.cfg"))?;
    let agents = (0..config.env.num_agents)
        .map(|i| {
            let path: PathBuf = dir.join(format!("agent_{i}.ckpt"));
            let bytes = fs::read(&path)?;
            SacAgent::from_bytes(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let obs_dim = config.env.observation_dim();
    if agents.iter().any(|a| a.obs_dim() != obs_dim) {
        return Err(Error::Checkpoint("agent observation size does not match run.cfg".into()));
    }
    Ok((config, agents))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_return: f64,
    pub mean_coverage: f64,
}

/// Plays `episodes` episodes with the squashed mean action of every agent.
pub fn evaluate(config: &RunConfig, agents: &[SacAgent], episodes: usize) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::Config("eval: episodes must be at least 1".into()));
    }
    let env = CoverageEnv::new(config.env.clone())?;
    let mut rng = stream(config.seed, EVAL_STREAM);
    let (mut total_return, mut total_coverage) = (0.0, 0.0);
    for _ in 0..episodes {
        let (mut state, mut obs) = env.reset(&mut rng);
        loop {
            let joint = agents.iter().zip(&obs).map(|(a, o)| a.act_greedy(o)).collect::<Result<Vec<_>>>()?;
            let outcome = env.step_in_place(&mut state, &joint)?;
            total_return += outcome.rewards.iter().sum::<f64>();
            if outcome.done {
                break;
            }
            obs = env.observe_all(&state);
        }
        total_coverage += state.coverage_fraction();
    }
    let n = episodes as f64;
    Ok(EvalReport { episodes, mean_return: total_return / n, mean_coverage: total_coverage / n })
}
