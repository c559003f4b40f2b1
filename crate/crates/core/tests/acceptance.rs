//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use psomarl::env::{Action, AgentPose, CoverageEnv, EnvConfig};
use psomarl::explore::{ExplorationConfig, Explorer, Mode, Source};
use psomarl::harness::compare::compare;
use psomarl::harness::{train, RunConfig, Streams};
use psomarl::nn::{Activation, AdamState, Mlp};
use psomarl::pso::{optimize, PsoConfig, SearchSpace};
use psomarl::sac::{ReplayBuffer, SacAgent, SacConfig, Transition};
use psomarl::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Box<dyn Fn() -> Outcome>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

// 1. Sensor footprint size.

/// Distance from `(px, py)` to a sector with apex at the origin, written as
/// the minimum over its three boundary pieces (two radii and the arc).
fn oracle_sector_distance(px: f64, py: f64, heading: f64, r: f64, half: f64) -> f64 {
    let d = px.hypot(py);
    let mut ang = (py.atan2(px) - heading).rem_euclid(std::f64::consts::TAU);
    if ang > std::f64::consts::PI {
        ang -= std::f64::consts::TAU;
    }
    let inside_wedge = ang.abs() <= half;
    if inside_wedge && d <= r {
        return 0.0;
    }
    let segment = |theta: f64| {
        let (ux, uy) = (theta.cos(), theta.sin());
        let t = (px * ux + py * uy).clamp(0.0, r);
        (px - t * ux).hypot(py - t * uy)
    };
    let arc = if inside_wedge {
        (d - r).abs()
    } else {
        let end = |theta: f64| (px - r * theta.cos()).hypot(py - r * theta.sin());
        end(heading + half).min(end(heading - half))
    };
    segment(heading + half).min(segment(heading - half)).min(arc)
}

fn criterion_1() -> Outcome {
    let cfg = EnvConfig::default();
    let env = CoverageEnv::new(cfg.clone()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let half = cfg.sensor_half_angle.to_radians();
    let (mut max, mut hits) = (0usize, 0usize);
    for _ in 0..10_000 {
        let pose = AgentPose::new(
            rng.random_range(0.0..=cfg.width as f64),
            rng.random_range(0.0..=cfg.height as f64),
            rng.random_range(0.0..std::f64::consts::TAU),
        );
        let fp = env.footprint(&pose);
        let mut brute = Vec::new();
        for j in 0..cfg.height {
            for i in 0..cfg.width {
                let d = oracle_sector_distance(i as f64 + 0.5 - pose.x, j as f64 + 0.5 - pose.y, pose.theta, cfg.sensor_radius, half);
                if d <= cfg.sensor_margin {
                    brute.push(j * cfg.width + i);
                }
            }
        }
        ensure(fp == brute, || format!("footprint mismatch at {pose:?}: {fp:?} vs {brute:?}"))?;
        if fp.len() > max {
            max = fp.len();
            hits = 0;
        }
        if fp.len() == max {
            hits += 1;
        }
    }
    ensure(max == 7, || format!("max footprint {max}, expected exactly 7"))?;
    Ok(format!("max footprint 7 attained in {hits}/10000 poses, brute-force oracle agrees"))
}

// 2. PSO on the sphere.

fn criterion_2() -> Outcome {
    let space = SearchSpace::uniform(10, -5.0, 5.0).map_err(|e| e.to_string())?;
    let cfg = PsoConfig::default();
    let sphere = |x: &[f64]| -x.iter().map(|v| v * v).sum::<f64>();
    let mut best = Vec::new();
    for seed in 0..100 {
        let res = optimize(sphere, &space, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
        ensure(res.fitness_history.windows(2).all(|w| w[1] >= w[0]), || format!("seed {seed}: history not monotone"))?;
        best.push(res.gbest_fitness);
    }
    best.sort_by(f64::total_cmp);
    let median = 0.5 * (best[49] + best[50]);
    ensure(median.abs() <= 1e-2, || format!("median best {median} not within 1e-2 of 0"))?;
    Ok(format!("100 monotone histories, median best {median:.2e} (50 particles, 100 iterations, w=0.8, c1=c2=2)"))
}

// 3. Gradient integrity.

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-5;
    let mut worst_net: f64 = 0.0;
    for k in 0..20 {
        let depth = rng.random_range(1..=3);
        let mut sizes = vec![rng.random_range(1..=5)];
        for _ in 0..depth {
            sizes.push(rng.random_range(1..=6));
        }
        sizes.push(rng.random_range(1..=3));
        let act = if k % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let mut net = Mlp::new(&sizes, act, &mut rng).map_err(|e| e.to_string())?;
        // Random biases too, so no pre-activation sits exactly on the ReLU kink.
        let params: Vec<f64> = (0..net.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        net.set_flat(&params).map_err(|e| e.to_string())?;
        let x = Array2::from_shape_simple_fn((3, sizes[0]), || rng.random_range(-1.0..1.0));
        let up = Array2::from_shape_simple_fn((3, *sizes.last().unwrap()), || rng.random_range(-1.0..1.0));
        let tape = net.forward_batch(x.view()).map_err(|e| e.to_string())?;
        let analytic = net.backward_batch(&tape, up.view()).map_err(|e| e.to_string())?.to_flat();
        let objective = |n: &Mlp| (n.forward_batch(x.view()).unwrap().output() * &up).sum();
        let theta = net.to_flat();
        let mut probe = net.clone();
        for (p, a) in analytic.iter().enumerate() {
            let mut t = theta.clone();
            t[p] += h;
            probe.set_flat(&t).unwrap();
            let plus = objective(&probe);
            t[p] -= 2.0 * h;
            probe.set_flat(&t).unwrap();
            let numeric = (plus - objective(&probe)) / (2.0 * h);
            worst_net = worst_net.max(rel_err(*a, numeric));
        }
    }
    ensure(worst_net < 1e-4, || format!("network gradient relative error {worst_net:.2e}"))?;

    let mut worst_actor: f64 = 0.0;
    for k in 0..20 {
        let cfg = SacConfig {
            hidden: vec![rng.random_range(4..=8)],
            activation: if k % 2 == 0 { Activation::Tanh } else { Activation::Relu },
            batch_size: 4,
            buffer_capacity: 16,
            alpha: rng.random_range(0.0..0.5),
            ..SacConfig::default()
        };
        let agent = SacAgent::new(4, cfg, &mut rng).map_err(|e| e.to_string())?;
        let states = Array2::from_shape_simple_fn((4, 4), || rng.random_range(-1.0..1.0));
        let noise = Array2::from_shape_simple_fn((4, 2), || rng.sample(StandardNormal));
        let (_, grads) = agent.actor_loss_and_grad(states.view(), noise.view()).map_err(|e| e.to_string())?;
        let analytic = grads.to_flat();
        let theta = agent.actor.to_flat();
        let mut probe = agent.clone();
        let loss = |a: &SacAgent| a.actor_loss_and_grad(states.view(), noise.view()).unwrap().0;
        for (p, a) in analytic.iter().enumerate() {
            let mut t = theta.clone();
            t[p] += h;
            probe.actor.set_flat(&t).unwrap();
            let plus = loss(&probe);
            t[p] -= 2.0 * h;
            probe.actor.set_flat(&t).unwrap();
            let numeric = (plus - loss(&probe)) / (2.0 * h);
            worst_actor = worst_actor.max(rel_err(*a, numeric));
        }
    }
    ensure(worst_actor < 1e-3, || format!("actor-path gradient relative error {worst_actor:.2e}"))?;
    Ok(format!("worst relative error: networks {worst_net:.1e} (20 configs), actor path {worst_actor:.1e} (20 configs)"))
}

// 4. Bellman fixed point.

fn criterion_4() -> Outcome {
    let cfg = SacConfig { batch_size: 1, buffer_capacity: 8, hidden: vec![64, 64], ..SacConfig::default() };
    let mut agent = SacAgent::new(5, cfg, &mut ChaCha8Rng::seed_from_u64(4)).map_err(|e| e.to_string())?;
    let reward = 0.75;
    let t = Transition {
        state: vec![0.1, -0.3, 0.5, 0.2, 0.0],
        action: Action::new(0.3, 0.8),
        reward,
        next_state: vec![0.2, -0.1, 0.4, 0.1, 1.0],
        done: true,
    };
    agent.remember(t.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let batch = agent.buffer.sample(1, &mut rng).map_err(|e| e.to_string())?;
    let noise = Array2::from_shape_simple_fn((1, 2), || rng.sample(StandardNormal));
    let y = agent.critic_targets(&batch, noise.view()).map_err(|e| e.to_string())?;
    ensure(y[0] == reward, || format!("target {} != reward {reward}", y[0]))?;
    for _ in 0..500 {
        let batch = agent.buffer.sample(1, &mut rng).map_err(|e| e.to_string())?;
        agent.critic_update(&batch, &mut rng).map_err(|e| e.to_string())?;
    }
    let input = [t.state.clone(), vec![t.action.lin, t.action.ang]].concat();
    let q1 = agent.critic1.forward(&input).map_err(|e| e.to_string())?[0];
    let q2 = agent.critic2.forward(&input).map_err(|e| e.to_string())?[0];
    let gap = (q1 - reward).abs().max((q2 - reward).abs());
    ensure(gap < 1e-3, || format!("after 500 updates |Q - r| = {gap:.2e}"))?;
    Ok(format!("target == r exactly; after 500 updates max |Q - r| = {gap:.1e}"))
}

// 5. Determinism of training artifacts.

fn mask_wall_time(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string()).collect()
}

fn criterion_5(root: &Path) -> Outcome {
    let mut artifacts = Vec::new();
    for run in ["a", "b"] {
        let mut cfg = RunConfig::desk();
        cfg.seed = 11;
        cfg.output_dir = root.join(run);
        train(&cfg).map_err(|e| e.to_string())?;
        let csv = std::fs::read_to_string(cfg.output_dir.join("metrics.csv")).map_err(|e| e.to_string())?;
        let ckpt: Vec<Vec<u8>> = ["agent_0.ckpt", "agent_1.ckpt", "run.cfg"]
            .iter()
            .map(|f| std::fs::read(cfg.output_dir.join("checkpoint").join(f)).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        artifacts.push((mask_wall_time(&csv), ckpt));
    }
    ensure(artifacts[0].0 == artifacts[1].0, || "metrics CSV differs between runs".into())?;
    ensure(artifacts[0].1[..2] == artifacts[1].1[..2], || "checkpoints differ between runs".into())?;
    Ok(format!("two desk runs: {} CSV lines identical (wall time masked), checkpoints bit-identical", artifacts[0].0.len()))
}

// 6. Headline comparison.

fn criterion_6(root: &Path) -> Outcome {
    let a = RunConfig::desk();
    let b = a.with_mode(Mode::EpsilonRandom);
    let report = compare(&a, &b, &[1, 2, 3, 4, 5], root).map_err(|e| e.to_string())?;
    let wins = report.wins_a();
    let learned = report.rows.iter().filter(|r| r.last10_a > r.first10_a).count();
    let detail: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("seed {}: auc {:.0} vs {:.0}, pso first/last10 {:.1}/{:.1}", r.seed, r.auc_a, r.auc_b, r.first10_a, r.last10_a))
        .collect();
    let summary = format!("epsilon_pso wins {wins}/5 seeds by AUC, learns in {learned}/5 [{}]", detail.join("; "));
    ensure(wins >= 4 && learned == 5, || summary.clone())?;
    Ok(summary)
}

// 7. Exploration accounting.

fn criterion_7() -> Outcome {
    let mut cfg = RunConfig::desk();
    cfg.explore = ExplorationConfig { mode: Mode::EpsilonPso, epsilon_start: 0.25, epsilon_end: 0.25, ..cfg.explore };
    let env = CoverageEnv::new(cfg.env.clone()).map_err(|e| e.to_string())?;
    let mut streams = Streams::new(7);
    let agents: Vec<SacAgent> = (0..cfg.env.num_agents)
        .map(|_| SacAgent::new(env.observation_dim(), cfg.sac.clone(), &mut streams.policy).unwrap())
        .collect();
    let mut explorer = Explorer::new(cfg.explore.clone(), cfg.pso.clone()).map_err(|e| e.to_string())?;
    let (mut steps, mut pso_steps) = (0u64, 0u64);
    for _ in 0..100 {
        let (mut state, mut obs) = env.reset(&mut streams.env);
        explorer.begin_episode();
        loop {
            let (joint, src) = explorer
                .select_actions(&env, &state, &obs, &agents, 0.25, &mut streams.policy, &mut streams.pso)
                .map_err(|e| e.to_string())?;
            steps += 1;
            pso_steps += u64::from(src == Source::Pso);
            let outcome = env.step_in_place(&mut state, &joint).map_err(|e| e.to_string())?;
            if outcome.done {
                break;
            }
            obs = env.observe_all(&state);
        }
    }
    let frac = pso_steps as f64 / steps as f64;
    let sigma = (0.25 * 0.75 / steps as f64).sqrt();
    let z = (frac - 0.25) / sigma;
    ensure(z.abs() <= 3.0, || format!("pso fraction {frac:.4} over {steps} steps is {z:.2} sigma from 0.25"))?;
    Ok(format!("pso-tagged fraction {frac:.4} over {steps} steps ({z:+.2} sigma), {} planner runs", explorer.pso_calls()))
}

// 8. Replay buffer.

fn criterion_8() -> Outcome {
    let item = |k: usize| Transition {
        state: vec![k as f64],
        action: Action::new(0.5, 0.5),
        reward: k as f64,
        next_state: vec![k as f64],
        done: false,
    };
    let mut fifo = ReplayBuffer::new(3);
    for k in 0..4 {
        fifo.push(item(k));
    }
    let kept: Vec<f64> = fifo.iter().map(|t| t.reward).collect();
    ensure(kept == vec![1.0, 2.0, 3.0], || format!("after 4 pushes into capacity 3: {kept:?}"))?;

    let mut buf = ReplayBuffer::new(10);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let under = buf.sample(1, &mut rng);
    ensure(matches!(under, Err(Error::Underfilled { .. })), || "empty buffer sampled without error".into())?;
    for k in 0..10 {
        buf.push(item(k));
    }
    ensure(buf.sample(11, &mut rng).is_err(), || "sampling 11 from 10 did not error".into())?;
    let draws = 100_000usize;
    let mut counts = [0usize; 10];
    for _ in 0..draws / 10 {
        for i in buf.sample_indices(10, &mut rng).map_err(|e| e.to_string())? {
            counts[i] += 1;
        }
    }
    let (p, n) = (0.1, draws as f64);
    let sigma = (n * p * (1.0 - p)).sqrt();
    let worst = counts.iter().map(|&c| (c as f64 - n * p).abs() / sigma).fold(0.0, f64::max);
    ensure(worst <= 5.0, || format!("index frequency {worst:.2} sigma from uniform: {counts:?}"))?;
    Ok(format!("FIFO eviction ok, under-filled sampling errors, worst index deviation {worst:.2} sigma over 1e5 draws"))
}

// 9. Serialization round trips.

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = Mlp::new(&[6, 7, 3], Activation::Tanh, &mut rng).map_err(|e| e.to_string())?;
    let bytes = net.to_bytes();
    let back = Mlp::from_bytes(&bytes).map_err(|e| e.to_string())?;
    ensure(back == net && back.to_bytes() == bytes, || "network round trip not exact".into())?;

    let mut agent = SacAgent::new(4, SacConfig { batch_size: 2, buffer_capacity: 8, warmup_steps: 2, hidden: vec![5], ..SacConfig::default() }, &mut rng)
        .map_err(|e| e.to_string())?;
    for k in 0..3 {
        agent.remember(Transition { state: vec![k as f64; 4], action: Action::new(0.2, 0.9), reward: 1.0, next_state: vec![0.5; 4], done: k == 2 });
    }
    agent.learn(&mut rng).map_err(|e| e.to_string())?;
    let opt_bytes = agent.actor_opt.to_bytes();
    let opt = AdamState::from_bytes(&opt_bytes).map_err(|e| e.to_string())?;
    ensure(opt == agent.actor_opt && opt.to_bytes() == opt_bytes, || "optimizer round trip not exact".into())?;
    let agent_bytes = agent.to_bytes();
    let restored = SacAgent::from_bytes(&agent_bytes).map_err(|e| e.to_string())?;
    ensure(restored.to_bytes() == agent_bytes && restored.actor == agent.actor, || "agent round trip not exact".into())?;

    for mut cfg in [RunConfig::full(), RunConfig::desk()] {
        cfg.sac.actor_lr = 1.0 / 3.0;
        cfg.explore.replan_interval = Some(4);
        let text = cfg.emit();
        let parsed = RunConfig::parse(&text).map_err(|e| e.to_string())?;
        ensure(parsed == cfg && parsed.emit() == text, || "config round trip not exact".into())?;
    }
    Ok(format!("network ({} B), optimizer, agent ({} B) and config round trips are bit-exact", bytes.len(), agent_bytes.len()))
}

fn main() {
    let scratch = tempfile::tempdir().expect("temporary directory");
    let root = scratch.path().to_path_buf();
    let criteria: Vec<Criterion> = vec![
        ("1 sensor footprint", Box::new(criterion_1)),
        ("2 swarm optimizer", Box::new(criterion_2)),
        ("3 gradient integrity", Box::new(criterion_3)),
        ("4 Bellman fixed point", Box::new(criterion_4)),
        ("5 determinism", Box::new({
            let root = root.clone();
            move || criterion_5(&root.join("determinism"))
        })),
        ("6 swarm-guided vs random exploration", Box::new({
            let root = root.clone();
            move || criterion_6(&root.join("compare"))
        })),
        ("7 exploration accounting", Box::new(criterion_7)),
        ("8 replay buffer", Box::new(criterion_8)),
        ("9 serialization round trips", Box::new(criterion_9)),
    ];
    let only: Option<Vec<String>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').map(|s| s.trim().to_string()).collect());
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, run) in &criteria {
        let id = name.split(' ').next().unwrap().to_string();
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
