//! Global-best particle swarm optimization (maximizing) and the coverage
//! plan fitness it is used with.
//!
//! Each iteration first draws the random coefficients of every particle in
//! particle order, then moves all particles using the global best of the
//! previous iteration, evaluates them, and finally updates personal and
//! global bests. The evaluation phase therefore never consumes randomness.

use rand::Rng;

use crate::env::{Action, CoverageEnv, CoverageState, JointAction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PsoConfig {
    pub num_particles: usize,
    pub num_iterations: usize,
    /// Planning horizon in environment steps (coverage planning only).
    pub horizon: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Velocity limit per dimension, as a fraction of that dimension's range.
    pub velocity_clamp: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            num_particles: 50,
            num_iterations: 100,
            horizon: 50,
            inertia: 0.8,
            cognitive: 2.0,
            social: 2.0,
            velocity_clamp: 0.03,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(format!("pso: {msg}")));
        if self.num_particles == 0 || self.num_iterations == 0 || self.horizon == 0 {
            return fail("particles, iterations and horizon must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.inertia) {
            return fail("inertia must lie in [0, 1]");
        }
        if !(self.cognitive >= 0.0 && self.social >= 0.0) || !self.cognitive.is_finite() || !self.social.is_finite() {
            return fail("cognitive and social weights must be finite and >= 0");
        }
        if !(self.velocity_clamp.is_finite() && self.velocity_clamp > 0.0) {
            return fail("velocity_clamp must be finite and > 0");
        }
        Ok(())
    }
}

/// Box constraints of the search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SearchSpace {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension { expected: lo.len(), got: hi.len() });
        }
        if lo.is_empty() {
            return Err(Error::Config("pso: search space needs at least one dimension".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l.partial_cmp(h) != Some(std::cmp::Ordering::Less) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::Config("pso: every bound needs finite lo < hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| (l..=h).contains(&v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
}

impl Particle {
    /// `v ← w·v + c1·r1⊙(pbest − x) + c2·r2⊙(gbest − x)`, then each component
    /// is clamped to `±vmax`.
    pub fn update_velocity(&mut self, gbest: &[f64], cfg: &PsoConfig, r1: &[f64], r2: &[f64], vmax: &[f64]) {
        for d in 0..self.velocity.len() {
            let x = self.position[d];
            let v = cfg.inertia * self.velocity[d]
                + cfg.cognitive * r1[d] * (self.best_position[d] - x)
                + cfg.social * r2[d] * (gbest[d] - x);
            self.velocity[d] = v.clamp(-vmax[d], vmax[d]);
        }
    }

    /// `x ← clamp(x + v)` into the search space.
    pub fn advance(&mut self, space: &SearchSpace) {
        for d in 0..self.position.len() {
            self.position[d] = (self.position[d] + self.velocity[d]).clamp(space.lo[d], space.hi[d]);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmResult {
    pub gbest_position: Vec<f64>,
    pub gbest_fitness: f64,
    /// Global best fitness after each iteration.
    pub fitness_history: Vec<f64>,
}

/// A swarm that can be stepped one iteration at a time.
#[derive(Debug, Clone)]
pub struct Swarm {
    particles: Vec<Particle>,
    space: SearchSpace,
    config: PsoConfig,
    vmax: Vec<f64>,
    gbest_position: Vec<f64>,
    gbest_fitness: f64,
}

fn checked(value: f64, position: &[f64]) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteFitness { value, position: position.to_vec() })
    }
}

impl Swarm {
    /// Positions uniform in the box, velocities uniform in `±vmax`.
    pub fn new<F, R>(space: SearchSpace, config: PsoConfig, fitness: &mut F, rng: &mut R) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<f64>,
        R: Rng + ?Sized,
    {
        config.validate()?;
        let vmax: Vec<f64> = space.lo.iter().zip(&space.hi).map(|(l, h)| config.velocity_clamp * (h - l)).collect();
        let mut particles = Vec::with_capacity(config.num_particles);
        for _ in 0..config.num_particles {
            let position: Vec<f64> = space.lo.iter().zip(&space.hi).map(|(&l, &h)| rng.random_range(l..=h)).collect();
            let velocity: Vec<f64> = vmax.iter().map(|&m| rng.random_range(-m..=m)).collect();
            particles.push(Particle { best_position: position.clone(), position, velocity, best_fitness: f64::NAN });
        }
        for p in &mut particles {
            p.best_fitness = checked(fitness(&p.position)?, &p.position)?;
        }
        let best = Self::argmax(&particles);
        Ok(Self {
            gbest_position: particles[best].best_position.clone(),
            gbest_fitness: particles[best].best_fitness,
            particles,
            space,
            config,
            vmax,
        })
    }

    fn argmax(particles: &[Particle]) -> usize {
        let mut best = 0;
        for (k, p) in particles.iter().enumerate() {
            if p.best_fitness > particles[best].best_fitness {
                best = k;
            }
        }
        best
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn gbest(&self) -> (&[f64], f64) {
        (&self.gbest_position, self.gbest_fitness)
    }

    pub fn iterate<F, R>(&mut self, fitness: &mut F, rng: &mut R) -> Result<()>
    where
        F: FnMut(&[f64]) -> Result<f64>,
        R: Rng + ?Sized,
    {
        let dim = self.space.dim();
        let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..self.particles.len())
            .map(|_| {
                let r1 = (0..dim).map(|_| rng.random::<f64>()).collect();
                let r2 = (0..dim).map(|_| rng.random::<f64>()).collect();
                (r1, r2)
            })
            .collect();
        for (p, (r1, r2)) in self.particles.iter_mut().zip(&draws) {
            p.update_velocity(&self.gbest_position, &self.config, r1, r2, &self.vmax);
            p.advance(&self.space);
        }
        let values = self
            .particles
            .iter()
            .map(|p| fitness(&p.position).and_then(|v| checked(v, &p.position)))
            .collect::<Result<Vec<f64>>>()?;
        for (p, value) in self.particles.iter_mut().zip(values) {
            if value > p.best_fitness {
                p.best_fitness = value;
                p.best_position.clone_from(&p.position);
            }
        }
        let best = Self::argmax(&self.particles);
        if self.particles[best].best_fitness > self.gbest_fitness {
            self.gbest_fitness = self.particles[best].best_fitness;
            self.gbest_position.clone_from(&self.particles[best].best_position);
        }
        Ok(())
    }
}

/// Runs `config.num_iterations` iterations and returns the best position
/// ever evaluated.
pub fn optimize<F, R>(mut fitness: F, space: &SearchSpace, config: &PsoConfig, rng: &mut R) -> Result<SwarmResult>
where
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let mut f = |x: &[f64]| Ok(fitness(x));
    optimize_fallible(&mut f, space, config, rng)
}

pub fn optimize_fallible<F, R>(fitness: &mut F, space: &SearchSpace, config: &PsoConfig, rng: &mut R) -> Result<SwarmResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
    R: Rng + ?Sized,
{
    let mut swarm = Swarm::new(space.clone(), config.clone(), fitness, rng)?;
    let mut history = Vec::with_capacity(config.num_iterations);
    for _ in 0..config.num_iterations {
        swarm.iterate(fitness, rng)?;
        history.push(swarm.gbest_fitness);
    }
    Ok(SwarmResult { gbest_position: swarm.gbest_position, gbest_fitness: swarm.gbest_fitness, fitness_history: history })
}

/// Dimension of a joint open-loop plan: `horizon × agents × [lin, ang]`.
pub fn plan_dim(num_agents: usize, horizon: usize) -> usize {
    2 * num_agents * horizon
}

/// Splits a flat plan (step-major, then agent, then `[lin, ang]`) into joint
/// actions.
pub fn decode_plan(plan: &[f64], num_agents: usize) -> Vec<JointAction> {
    plan.chunks(2 * num_agents)
        .map(|step| step.chunks(2).map(|a| Action::new(a[0], a[1])).collect())
        .collect()
}

/// Team reward collected by playing `plan` open-loop from a copy of `state`
/// for up to `horizon` steps. Steps after the episode ends contribute zero.
pub fn plan_fitness(env: &CoverageEnv, state: &CoverageState, plan: &[f64], horizon: usize) -> Result<f64> {
    let n = env.config().num_agents;
    let expected = plan_dim(n, horizon);
    if plan.len() != expected {
        return Err(Error::Dimension { expected, got: plan.len() });
    }
    let mut sim = state.clone();
    let mut total = 0.0;
    let mut joint = vec![Action::default(); n];
    for step in plan.chunks(2 * n) {
        if env.is_terminal(&sim) {
            break;
        }
        for (a, pair) in joint.iter_mut().zip(step.chunks(2)) {
            *a = Action::new(pair[0], pair[1]);
        }
        total += env.step_in_place(&mut sim, &joint)?.rewards.iter().sum::<f64>();
    }
    Ok(total)
}

/// Optimizes a joint plan from `state` and returns it decoded, together with
/// the swarm result it came from.
pub fn propose_plan<R: Rng + ?Sized>(
    env: &CoverageEnv,
    state: &CoverageState,
    config: &PsoConfig,
    rng: &mut R,
) -> Result<(Vec<JointAction>, SwarmResult)> {
    if env.is_terminal(state) {
        return Err(Error::EpisodeFinished);
    }
    let dim = plan_dim(env.config().num_agents, config.horizon);
    let space = SearchSpace::uniform(dim, 0.0, 1.0)?;
    let mut fitness = |plan: &[f64]| plan_fitness(env, state, plan, config.horizon);
    let result = optimize_fallible(&mut fitness, &space, config, rng)?;
    Ok((decode_plan(&result.gbest_position, env.config().num_agents), result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{AgentPose, EnvConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sphere(x: &[f64]) -> f64 {
        -x.iter().map(|v| v * v).sum::<f64>()
    }

    fn small_cfg(particles: usize, iterations: usize) -> PsoConfig {
        PsoConfig { num_particles: particles, num_iterations: iterations, ..PsoConfig::default() }
    }

    #[test]
    fn sphere_median_over_ten_seeds() {
        let space = SearchSpace::uniform(10, -5.0, 5.0).unwrap();
        let mut best: Vec<f64> = (0..10)
            .map(|s| optimize(sphere, &space, &PsoConfig::default(), &mut ChaCha8Rng::seed_from_u64(s)).unwrap().gbest_fitness)
            .collect();
        best.sort_by(f64::total_cmp);
        let median = 0.5 * (best[4] + best[5]);
        assert!(median >= -1e-2, "median {median}");
    }

    #[test]
    fn velocity_reduces_to_inertia_at_the_optimum() {
        let cfg = PsoConfig::default();
        let mut p = Particle { position: vec![1.0, -2.0], velocity: vec![0.3, -0.1], best_position: vec![1.0, -2.0], best_fitness: 0.0 };
        p.update_velocity(&[1.0, -2.0], &cfg, &[0.7, 0.2], &[0.9, 0.4], &[10.0, 10.0]);
        assert_eq!(p.velocity, vec![0.8 * 0.3, 0.8 * -0.1]);
    }

    #[test]
    fn velocity_and_position_are_clamped() {
        let cfg = PsoConfig::default();
        let space = SearchSpace::uniform(1, 0.0, 1.0).unwrap();
        let mut p = Particle { position: vec![0.9], velocity: vec![0.0], best_position: vec![0.0], best_fitness: 0.0 };
        p.update_velocity(&[10.0], &cfg, &[0.0], &[1.0], &[0.5]);
        assert_eq!(p.velocity, vec![0.5]);
        p.advance(&space);
        assert_eq!(p.position, vec![1.0]);
    }

    #[test]
    fn single_iteration_is_best_of_two_populations() {
        let space = SearchSpace::uniform(3, -1.0, 1.0).unwrap();
        let cfg = small_cfg(8, 1);
        let mut seen = Vec::new();
        let mut record = |x: &[f64]| {
            seen.push(sphere(x));
            Ok(sphere(x))
        };
        let r = optimize_fallible(&mut record, &space, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(seen.len(), 16);
        let best = seen.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.gbest_fitness, best);
        assert_eq!(r.fitness_history, vec![best]);
    }

    #[test]
    fn history_is_monotone_and_particles_stay_in_bounds() {
        let space = SearchSpace::new(vec![-1.0, 0.0, 2.0], vec![1.0, 0.5, 3.0]).unwrap();
        let cfg = small_cfg(12, 30);
        let mut f = |x: &[f64]| Ok((x[0] * 3.0).sin() + x[1] - (x[2] - 2.5).powi(2));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut swarm = Swarm::new(space.clone(), cfg, &mut f, &mut rng).unwrap();
        let mut last = swarm.gbest().1;
        for _ in 0..30 {
            swarm.iterate(&mut f, &mut rng).unwrap();
            assert!(swarm.gbest().1 >= last);
            last = swarm.gbest().1;
            assert!(swarm.particles().iter().all(|p| space.contains(&p.position)));
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let space = SearchSpace::uniform(4, -2.0, 2.0).unwrap();
        let cfg = small_cfg(10, 20);
        let a = optimize(sphere, &space, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = optimize(sphere, &space, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_fitness_is_an_error() {
        let space = SearchSpace::uniform(2, -1.0, 1.0).unwrap();
        let r = optimize(|x: &[f64]| if x[0] > 0.0 { f64::NAN } else { 0.0 }, &space, &small_cfg(10, 5), &mut ChaCha8Rng::seed_from_u64(0));
        match r {
            Err(Error::NonFiniteFitness { position, .. }) => assert!(position[0] > 0.0),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_spaces_and_configs() {
        assert!(SearchSpace::new(vec![0.0], vec![0.0]).is_err());
        assert!(SearchSpace::new(vec![], vec![]).is_err());
        assert!(SearchSpace::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let space = SearchSpace::uniform(1, 0.0, 1.0).unwrap();
        for cfg in [
            PsoConfig { num_particles: 0, ..PsoConfig::default() },
            PsoConfig { inertia: 1.5, ..PsoConfig::default() },
            PsoConfig { social: -1.0, ..PsoConfig::default() },
        ] {
            assert!(optimize(sphere, &space, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        }
    }

    fn env(f: impl FnOnce(&mut EnvConfig)) -> CoverageEnv {
        let mut c = EnvConfig::default();
        f(&mut c);
        CoverageEnv::new(c).unwrap()
    }

    fn state(env: &CoverageEnv, poses: Vec<AgentPose>) -> CoverageState {
        let n = poses.len();
        let mut s = CoverageState {
            poses,
            covered: vec![false; env.config().num_cells()],
            last_actions: vec![Action::default(); n],
            step_count: 0,
            covered_count: 0,
        };
        // Sense the starting footprints, as reset does.
        for k in 0..n {
            for c in env.footprint(&s.poses[k]) {
                if !s.covered[c] {
                    s.covered[c] = true;
                    s.covered_count += 1;
                }
            }
        }
        s
    }

    #[test]
    fn decode_layout_is_step_then_agent() {
        let plan = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
        let steps = decode_plan(&plan, 2);
        assert_eq!(steps.len(), 2);
        assert_eq!(steps[0], vec![Action::new(0.1, 0.2), Action::new(0.3, 0.4)]);
        assert_eq!(steps[1], vec![Action::new(0.5, 0.6), Action::new(0.7, 0.8)]);
    }

    #[test]
    fn fitness_is_zero_on_a_covered_map() {
        let e = env(|c| c.num_agents = 2);
        let mut s = state(&e, vec![AgentPose::new(5.5, 5.5, 0.0), AgentPose::new(20.5, 20.5, 0.0)]);
        s.covered.iter_mut().for_each(|b| *b = true);
        s.covered[899] = false;
        s.covered_count = 899;
        // Slow, straight, well apart, far from the lone uncovered corner.
        let plan: Vec<f64> = (0..5).flat_map(|_| [0.2, 0.5, 0.2, 0.5]).collect();
        assert_eq!(plan_fitness(&e, &s, &plan, 5).unwrap(), 0.0);
    }

    #[test]
    fn fitness_counts_wall_penalties() {
        let e = env(|c| {
            c.num_agents = 2;
            c.max_steps = 10;
        });
        let mut s = state(&e, vec![AgentPose::new(30.0, 15.0, 0.0), AgentPose::new(5.5, 5.5, 0.0)]);
        s.step_count = 7;
        // Agent 0 drives into the east wall, agent 1 idles; only 3 steps remain.
        let plan: Vec<f64> = (0..5).flat_map(|_| [1.0, 0.5, 0.0, 0.5]).collect();
        assert_eq!(plan_fitness(&e, &s, &plan, 5).unwrap(), -15.0);
        s.step_count = 0;
        assert_eq!(plan_fitness(&e, &s, &plan, 5).unwrap(), -25.0);
    }

    #[test]
    fn single_step_fitness_is_new_pixel_count() {
        let e = env(|c| c.num_agents = 1);
        let s = state(&e, vec![AgentPose::new(10.5, 10.5, 0.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let plan = [rng.random::<f64>(), rng.random::<f64>()];
            let moved = e.kinematics(&s.poses[0], &Action::new(plan[0], plan[1]));
            let fresh = e.footprint(&moved).iter().filter(|&&c| !s.covered[c]).count();
            assert!(fresh <= 7);
            assert_eq!(plan_fitness(&e, &s, &plan, 1).unwrap(), fresh as f64);
        }
    }

    #[test]
    fn fitness_checks_dimension_and_leaves_state_alone() {
        let e = env(|_| {});
        let s = state(&e, vec![AgentPose::new(5.5, 5.5, 0.0), AgentPose::new(6.5, 5.5, 0.0), AgentPose::new(7.5, 5.5, 0.0)]);
        assert!(matches!(plan_fitness(&e, &s, &[0.5; 5], 1), Err(Error::Dimension { expected: 6, got: 5 })));
        let before = s.clone();
        plan_fitness(&e, &s, &[0.9; 60], 10).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn proposed_plan_is_consistent_with_its_fitness() {
        let e = env(|c| {
            c.width = 12;
            c.height = 12;
            c.num_agents = 2;
        });
        let s = state(&e, vec![AgentPose::new(3.5, 6.5, 0.0), AgentPose::new(4.5, 6.5, 0.0)]);
        let cfg = PsoConfig { num_particles: 10, num_iterations: 15, horizon: 6, ..PsoConfig::default() };
        let (plan, result) = propose_plan(&e, &s, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(plan.len(), 6);
        assert!(plan.iter().flatten().all(|a| (0.0..=1.0).contains(&a.lin) && (0.0..=1.0).contains(&a.ang)));
        assert_eq!(plan_fitness(&e, &s, &result.gbest_position, 6).unwrap(), result.gbest_fitness);
    }
}
