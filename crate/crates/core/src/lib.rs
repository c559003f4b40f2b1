//! Swarm-guided exploration for multi-agent soft actor-critic.
//!
//! The crate bundles everything needed to train a team of independent
//! soft actor-critic learners on a 2D coverage task, where the exploratory
//! branch of epsilon-greedy action selection is filled by a particle swarm
//! planner instead of uniform noise:
//!
//! * [`env`]: the coverage simulator (poses, sector sensor, rewards).
//! * [`pso`]: global-best particle swarm optimization and the plan fitness.
//! * [`nn`]: a small dense network with analytic gradients and Adam.
//! * [`sac`]: per-agent soft actor-critic with a fixed temperature.
//! * [`explore`]: epsilon schedules and swarm-planned exploration.
//! * [`harness`]: seeded training runs, comparisons, CSV metrics and charts.
//!
//! ```
//! use psomarl::env::{Action, CoverageEnv, EnvConfig};
//! use psomarl::harness::Streams;
//!
//! let env = CoverageEnv::new(EnvConfig::default()).unwrap();
//! let mut streams = Streams::new(7);
//! let (state, _obs) = env.reset(&mut streams.env);
//! let straight = vec![Action::new(1.0, 0.5); 3];
//! let (next, result) = env.step(&state, &straight).unwrap();
//! assert_eq!(next.step_count, 1);
//! assert_eq!(result.rewards.len(), 3);
//! ```

pub mod codec;
pub mod env;
pub mod error;
pub mod explore;
pub mod harness;
pub mod nn;
pub mod pso;
pub mod sac;

pub use error::{Error, Result};

// The guide's code blocks are compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/environment.md")]
    mod environment {}
    #[doc = include_str!("../../../book/src/swarm.md")]
    mod swarm {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/soft_actor_critic.md")]
    mod soft_actor_critic {}
    #[doc = include_str!("../../../book/src/exploration.md")]
    mod exploration {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
