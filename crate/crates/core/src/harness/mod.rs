//! Seeded training runs, mode comparisons, CSV metrics and SVG charts.

pub mod compare;
pub mod config;
pub mod plot;
pub mod seeding;
pub mod train;

pub use compare::{auc, compare, moving_average, ComparisonReport, SeedComparison};
pub use config::RunConfig;
pub use plot::{plot, render_svg, Series};
pub use seeding::Streams;
pub use train::{evaluate, load_checkpoint, train, EpisodeRecord, EvalReport, Trainer, CSV_HEADER};
