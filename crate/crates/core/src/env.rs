//! Continuous-pose, discrete-coverage simulator.
//!
//! Agents move on a `width × height` map of unit cells. Each agent carries a
//! forward-looking sector sensor; every cell whose center falls within
//! `sensor_margin` of the sector is marked as covered. Rewards per agent and
//! step are `+1` per newly covered cell, `-5` when another agent is closer
//! than `collision_radius`, and `-5` when the commanded motion leaves the map
//! (the pose is clamped back in).
//!
//! Cell `(i, j)` spans `[i, i+1) × [j, j+1)` and has its center at
//! `(i + 0.5, j + 0.5)`. Bitmaps are row-major with `y` outer, `x` inner.

use std::f64::consts::{PI, TAU};

use rand::Rng;

use crate::error::{Error, Result};

/// Simulator parameters. Angles are in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub width: usize,
    pub height: usize,
    pub num_agents: usize,
    pub max_linear_speed: f64,
    pub max_angular_speed: f64,
    pub sensor_radius: f64,
    pub sensor_half_angle: f64,
    /// Distance a cell center may lie outside the geometric sector and still
    /// be sensed. Zero gives the plain "center inside the sector" rule.
    pub sensor_margin: f64,
    pub collision_radius: f64,
    pub max_steps: usize,
    pub reward_collision: f64,
    pub reward_oob: f64,
    pub reward_new_pixel: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            width: 30,
            height: 30,
            num_agents: 3,
            max_linear_speed: 5.0,
            max_angular_speed: 30.0,
            sensor_radius: 2.0,
            sensor_half_angle: 30.0,
            sensor_margin: 0.4,
            collision_radius: 1.0,
            max_steps: 200,
            reward_collision: -5.0,
            reward_oob: -5.0,
            reward_new_pixel: 1.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(format!("env: {msg}")));
        if self.width == 0 || self.height == 0 {
            return fail("width and height must be at least 1");
        }
        if self.num_agents == 0 {
            return fail("num_agents must be at least 1");
        }
        if self.num_agents > self.width {
            return fail("num_agents must not exceed width (agents start side by side along x)");
        }
        let positive = [
            ("max_linear_speed", self.max_linear_speed),
            ("max_angular_speed", self.max_angular_speed),
            ("sensor_radius", self.sensor_radius),
            ("collision_radius", self.collision_radius),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return fail(&format!("{name} must be finite and > 0"));
            }
        }
        if !(self.sensor_half_angle > 0.0 && self.sensor_half_angle <= 180.0) {
            return fail("sensor_half_angle must lie in (0, 180]");
        }
        if !(self.sensor_margin.is_finite() && self.sensor_margin >= 0.0) {
            return fail("sensor_margin must be finite and >= 0");
        }
        if self.max_steps == 0 {
            return fail("max_steps must be at least 1");
        }
        for (name, v) in [
            ("reward_collision", self.reward_collision),
            ("reward_oob", self.reward_oob),
            ("reward_new_pixel", self.reward_new_pixel),
        ] {
            if !v.is_finite() {
                return fail(&format!("{name} must be finite"));
            }
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    /// Length of every per-agent observation vector.
    pub fn observation_dim(&self) -> usize {
        6 + 2 * (self.num_agents - 1) + self.num_cells()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentPose {
    pub x: f64,
    pub y: f64,
    /// Heading in radians, kept in `[0, 2π)`.
    pub theta: f64,
}

impl AgentPose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn in_bounds(&self, config: &EnvConfig) -> bool {
        (0.0..=config.width as f64).contains(&self.x) && (0.0..=config.height as f64).contains(&self.y)
    }
}

/// Normalized control pair: `lin` scales the linear speed, `ang` maps
/// `[0, 1]` onto a signed turn (0.5 goes straight).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Action {
    pub lin: f64,
    pub ang: f64,
}

impl Action {
    /// Builds an action, clamping both components into `[0, 1]`. NaN maps to 0.
    pub fn new(lin: f64, ang: f64) -> Self {
        Self { lin: unit(lin), ang: unit(ang) }
    }
}

fn unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

pub type JointAction = Vec<Action>;

/// Full simulator state. Cloning gives an independent deep copy.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageState {
    pub poses: Vec<AgentPose>,
    pub covered: Vec<bool>,
    pub last_actions: Vec<Action>,
    pub step_count: usize,
    pub covered_count: usize,
}

impl CoverageState {
    /// Coverage bitmap as `'0'`/`'1'` characters, row-major, `y` outer.
    pub fn bitmap_string(&self) -> String {
        self.covered.iter().map(|&c| if c { '1' } else { '0' }).collect()
    }

    pub fn coverage_fraction(&self) -> f64 {
        self.covered_count as f64 / self.covered.len() as f64
    }

    fn mark(&mut self, cell: usize) -> bool {
        if self.covered[cell] {
            false
        } else {
            self.covered[cell] = true;
            self.covered_count += 1;
            true
        }
    }
}

/// Per-agent events of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgentEvents {
    pub collided: bool,
    pub out_of_bounds: bool,
    pub new_pixels: usize,
}

/// Rewards and events of one step, without observations.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub info: Vec<AgentEvents>,
    /// Full coverage or step limit reached.
    pub done: bool,
    /// Full coverage reached. Time-limit truncation leaves this false.
    pub terminated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub info: Vec<AgentEvents>,
    pub done: bool,
    pub terminated: bool,
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_signed(theta: f64) -> f64 {
    let w = wrap_angle(theta);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Euclidean distance from offset `(dx, dy)` (relative to the apex) to a
/// circular sector with the given heading, radius and half-angle (radians).
pub fn distance_to_sector(dx: f64, dy: f64, heading: f64, radius: f64, half_angle: f64) -> f64 {
    let dist = dx.hypot(dy);
    if dist == 0.0 {
        return 0.0;
    }
    let rel = wrap_signed(dy.atan2(dx) - heading).abs();
    if rel <= half_angle {
        return (dist - radius).max(0.0);
    }
    // Outside the wedge the nearest point lies on one of the two edges.
    [-1.0, 1.0]
        .iter()
        .map(|side| {
            let (ey, ex) = (heading + side * half_angle).sin_cos();
            let t = (dx * ex + dy * ey).clamp(0.0, radius);
            (dx - t * ex).hypot(dy - t * ey)
        })
        .fold(f64::INFINITY, f64::min)
}

/// The coverage simulator for one validated configuration.
#[derive(Debug, Clone)]
pub struct CoverageEnv {
    config: EnvConfig,
}

impl CoverageEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn observation_dim(&self) -> usize {
        self.config.observation_dim()
    }

    /// Starts an episode: the team is placed side by side along `+x` from a
    /// random anchor cell center, sharing one random heading, and the cells
    /// under the initial sensor footprints are marked covered.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> (CoverageState, Vec<Vec<f64>>) {
        let c = &self.config;
        let n = c.num_agents;
        let (ax, ay) = loop {
            let ax = rng.random_range(0..c.width);
            let ay = rng.random_range(0..c.height);
            if ax + n <= c.width {
                break (ax, ay);
            }
        };
        let theta = rng.random_range(0.0..TAU);
        let poses = (0..n)
            .map(|k| AgentPose::new((ax + k) as f64 + 0.5, ay as f64 + 0.5, theta))
            .collect::<Vec<_>>();
        let mut state = CoverageState {
            poses,
            covered: vec![false; c.num_cells()],
            last_actions: vec![Action::default(); n],
            step_count: 0,
            covered_count: 0,
        };
        for k in 0..n {
            for cell in self.footprint(&state.poses[k]) {
                state.mark(cell);
            }
        }
        let obs = self.observe_all(&state);
        (state, obs)
    }

    /// Turn first, then translate along the new heading. The result is not
    /// clamped.
    pub fn kinematics(&self, pose: &AgentPose, action: &Action) -> AgentPose {
        let c = &self.config;
        let turn = (2.0 * action.ang - 1.0) * c.max_angular_speed.to_radians();
        let theta = wrap_angle(pose.theta + turn);
        let speed = action.lin * c.max_linear_speed;
        let (s, co) = theta.sin_cos();
        AgentPose { x: pose.x + speed * co, y: pose.y + speed * s, theta }
    }

    /// Indices of the in-map cells sensed from `pose`, in ascending order.
    pub fn footprint(&self, pose: &AgentPose) -> Vec<usize> {
        let mut cells = Vec::with_capacity(16);
        self.for_each_sensed(pose, |cell| cells.push(cell));
        cells
    }

    fn for_each_sensed(&self, pose: &AgentPose, mut f: impl FnMut(usize)) {
        let c = &self.config;
        let reach = c.sensor_radius + c.sensor_margin;
        let half = c.sensor_half_angle.to_radians();
        let span = |centre: f64, limit: usize| {
            let lo = (centre - reach - 0.5).floor().max(0.0) as usize;
            let hi = ((centre + reach - 0.5).ceil().max(-1.0) as i64).min(limit as i64 - 1);
            (lo, hi)
        };
        let (x0, x1) = span(pose.x, c.width);
        let (y0, y1) = span(pose.y, c.height);
        for j in y0 as i64..=y1 {
            for i in x0 as i64..=x1 {
                let dx = i as f64 + 0.5 - pose.x;
                let dy = j as f64 + 0.5 - pose.y;
                if distance_to_sector(dx, dy, pose.theta, c.sensor_radius, half) <= c.sensor_margin {
                    f(j as usize * c.width + i as usize);
                }
            }
        }
    }

    pub fn is_terminal(&self, state: &CoverageState) -> bool {
        state.covered_count == self.config.num_cells() || state.step_count >= self.config.max_steps
    }

    /// Advances `state` in place. Used by rollouts that do not need
    /// observations.
    pub fn step_in_place(&self, state: &mut CoverageState, actions: &[Action]) -> Result<StepOutcome> {
        let c = &self.config;
        if actions.len() != c.num_agents {
            return Err(Error::Dimension { expected: c.num_agents, got: actions.len() });
        }
        if self.is_terminal(state) {
            return Err(Error::EpisodeFinished);
        }
        let (w, h) = (c.width as f64, c.height as f64);
        let mut info = vec![AgentEvents::default(); c.num_agents];
        for (k, action) in actions.iter().enumerate() {
            let action = Action::new(action.lin, action.ang);
            let raw = self.kinematics(&state.poses[k], &action);
            let oob = !(raw.in_bounds(c));
            info[k].out_of_bounds = oob;
            state.poses[k] = AgentPose { x: raw.x.clamp(0.0, w), y: raw.y.clamp(0.0, h), theta: raw.theta };
            state.last_actions[k] = action;
        }
        for a in 0..c.num_agents {
            for b in a + 1..c.num_agents {
                let (pa, pb) = (&state.poses[a], &state.poses[b]);
                if (pa.x - pb.x).hypot(pa.y - pb.y) < c.collision_radius {
                    info[a].collided = true;
                    info[b].collided = true;
                }
            }
        }
        // Lower agent index claims simultaneously sensed cells first.
        for k in 0..c.num_agents {
            let pose = state.poses[k];
            let mut fresh = 0;
            self.for_each_sensed(&pose, |cell| {
                if state.mark(cell) {
                    fresh += 1;
                }
            });
            info[k].new_pixels = fresh;
        }
        state.step_count += 1;
        let rewards = info.iter().map(|ev| self.reward(ev)).collect();
        let terminated = state.covered_count == c.num_cells();
        let done = terminated || state.step_count >= c.max_steps;
        Ok(StepOutcome { rewards, info, done, terminated })
    }

    /// Pure step: returns the successor state and per-agent results.
    pub fn step(&self, state: &CoverageState, actions: &[Action]) -> Result<(CoverageState, StepResult)> {
        let mut next = state.clone();
        let out = self.step_in_place(&mut next, actions)?;
        let observations = self.observe_all(&next);
        Ok((
            next,
            StepResult {
                observations,
                rewards: out.rewards,
                info: out.info,
                done: out.done,
                terminated: out.terminated,
            },
        ))
    }

    /// Reward implied by a set of event flags.
    pub fn reward(&self, ev: &AgentEvents) -> f64 {
        let c = &self.config;
        let mut r = c.reward_new_pixel * ev.new_pixels as f64;
        if ev.collided {
            r += c.reward_collision;
        }
        if ev.out_of_bounds {
            r += c.reward_oob;
        }
        r
    }

    /// Observation of one agent: own position and heading, own last action,
    /// other agents' positions in index order, then the coverage bitmap.
    pub fn observe(&self, state: &CoverageState, agent: usize) -> Result<Vec<f64>> {
        let c = &self.config;
        if agent >= c.num_agents {
            return Err(Error::AgentIndex { index: agent, count: c.num_agents });
        }
        let (w, h) = (c.width as f64, c.height as f64);
        let me = &state.poses[agent];
        let act = &state.last_actions[agent];
        let mut obs = Vec::with_capacity(c.observation_dim());
        obs.extend([me.x / w, me.y / h, me.theta.sin(), me.theta.cos(), act.lin, act.ang]);
        for (k, p) in state.poses.iter().enumerate() {
            if k != agent {
                obs.extend([p.x / w, p.y / h]);
            }
        }
        obs.extend(state.covered.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        Ok(obs)
    }

    pub fn observe_all(&self, state: &CoverageState) -> Vec<Vec<f64>> {
        (0..self.config.num_agents)
            .map(|k| self.observe(state, k).expect("index in range"))
            .collect()
    }
}
