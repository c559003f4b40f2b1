use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::explore::Mode;
use crate::harness::config::RunConfig;
use crate::harness::plot::{render_svg, Series};
use crate::harness::train::{train_with, EpisodeRecord};

pub const SMOOTHING_WINDOW: usize = 10;
pub const REPORT_HEADER: &str = "seed,mode_a,mode_b,auc_a,auc_b,auc_diff,first10_a,last10_a,first10_b,last10_b";
pub const CURVES_HEADER: &str = "mode,seed,episode,team_return,smoothed";

/// Trailing moving average. The first `window - 1` entries average over the
/// samples available so far.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= window {
            sum -= xs[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Trapezoidal area under a curve sampled at unit spacing.
pub fn auc(ys: &[f64]) -> f64 {
    ys.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum()
}

/// Means of the first and last 10% of `xs` (at least one element each).
pub fn head_tail_means(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let k = (xs.len() / 10).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (mean(&xs[..k]), mean(&xs[xs.len() - k..]))
}

/// Errors unless `a` and `b` agree on everything except `explore.mode` and
/// the output directory.
pub fn check_only_mode_differs(a: &RunConfig, b: &RunConfig) -> Result<()> {
    let mut b2 = b.with_mode(a.explore.mode);
    b2.output_dir = a.output_dir.clone();
    b2.seed = a.seed;
    if &b2 != a {
        let diff: Vec<String> = a
            .emit()
            .lines()
            .zip(b2.emit().lines())
            .filter(|(x, y)| x != y)
            .map(|(x, _)| x.split('=').next().unwrap_or("").trim().to_string())
            .collect();
        return Err(Error::Config(format!("compared configs differ beyond explore.mode: {}", diff.join(", "))));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedComparison {
    pub seed: u64,
    pub auc_a: f64,
    pub auc_b: f64,
    pub first10_a: f64,
    pub last10_a: f64,
    pub first10_b: f64,
    pub last10_b: f64,
}

impl SeedComparison {
    pub fn auc_diff(&self) -> f64 {
        self.auc_a - self.auc_b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub mode: Mode,
    pub seed: u64,
    pub team_returns: Vec<f64>,
    pub smoothed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub mode_a: Mode,
    pub mode_b: Mode,
    pub rows: Vec<SeedComparison>,
    pub curves: Vec<Curve>,
}

impl ComparisonReport {
    /// Seeds where mode A has the larger area under its smoothed curve.
    pub fn wins_a(&self) -> usize {
        self.rows.iter().filter(|r| r.auc_a > r.auc_b).count()
    }

    pub fn report_csv(&self) -> String {
        let mut s = format!("{REPORT_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.seed,
                self.mode_a,
                self.mode_b,
                r.auc_a,
                r.auc_b,
                r.auc_diff(),
                r.first10_a,
                r.last10_a,
                r.first10_b,
                r.last10_b
            );
        }
        s
    }

    pub fn curves_csv(&self) -> String {
        let mut s = format!("{CURVES_HEADER}\n");
        for c in &self.curves {
            for (ep, (r, m)) in c.team_returns.iter().zip(&c.smoothed).enumerate() {
                let _ = writeln!(s, "{},{},{},{},{}", c.mode, c.seed, ep, r, m);
            }
        }
        s
    }

    /// Seed-averaged smoothed curve per mode.
    pub fn mean_series(&self) -> Vec<Series> {
        let mut modes = vec![self.mode_a];
        if self.mode_b != self.mode_a {
            modes.push(self.mode_b);
        }
        modes
            .into_iter()
            .map(|mode| {
                let curves: Vec<&Curve> = self.curves.iter().filter(|c| c.mode == mode).collect();
                let len = curves.iter().map(|c| c.smoothed.len()).min().unwrap_or(0);
                let points = (0..len)
                    .map(|e| (e as f64, curves.iter().map(|c| c.smoothed[e]).sum::<f64>() / curves.len() as f64))
                    .collect();
                Series { name: mode.to_string(), points }
            })
            .collect()
    }
}

fn curve(mode: Mode, seed: u64, records: &[EpisodeRecord]) -> Curve {
    let team_returns: Vec<f64> = records.iter().map(|r| r.team_return).collect();
    let smoothed = moving_average(&team_returns, SMOOTHING_WINDOW);
    Curve { mode, seed, team_returns, smoothed }
}

/// Trains `a` and `b` on every seed, writing each run under
/// `out/<a|b>_<mode>/seed_<n>/`, plus `report.csv`, `curves.csv` and
/// `comparison.svg` in `out`.
pub fn compare(a: &RunConfig, b: &RunConfig, seeds: &[u64], out: &Path) -> Result<ComparisonReport> {
    compare_with(a, b, seeds, out, |_, _, _| {})
}

/// Same as [`compare`], calling `progress(mode, seed, record)` per episode.
pub fn compare_with(
    a: &RunConfig,
    b: &RunConfig,
    seeds: &[u64],
    out: &Path,
    mut progress: impl FnMut(Mode, u64, &EpisodeRecord),
) -> Result<ComparisonReport> {
    check_only_mode_differs(a, b)?;
    if seeds.is_empty() {
        return Err(Error::Config("compare: at least one seed is required".into()));
    }
    fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for &seed in seeds {
        let mut pair = Vec::with_capacity(2);
        for (tag, base) in [("a", a), ("b", b)] {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.output_dir = out.join(format!("{tag}_{}", base.explore.mode)).join(format!("seed_{seed}"));
            let mode = cfg.explore.mode;
            let records = train_with(&cfg, |r| progress(mode, seed, r))?;
            pair.push(curve(mode, seed, &records));
        }
        let (ca, cb) = (&pair[0], &pair[1]);
        let (first10_a, last10_a) = head_tail_means(&ca.team_returns);
        let (first10_b, last10_b) = head_tail_means(&cb.team_returns);
        rows.push(SeedComparison {
            seed,
            auc_a: auc(&ca.smoothed),
            auc_b: auc(&cb.smoothed),
            first10_a,
            last10_a,
            first10_b,
            last10_b,
        });
        curves.extend(pair);
    }
    let report = ComparisonReport { mode_a: a.explore.mode, mode_b: b.explore.mode, rows, curves };
    fs::write(out.join("report.csv"), report.report_csv())?;
    fs::write(out.join("curves.csv"), report.curves_csv())?;
    let svg = render_svg(&report.mean_series(), "episode", "team return (moving average)")?;
    fs::write(out.join("comparison.svg"), svg)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_by_hand() {
        let ma = moving_average(&[1.0, 2.0, 3.0, 4.0, 5.0], 3);
        assert_eq!(ma, vec![1.0, 1.5, 2.0, 3.0, 4.0]);
        assert_eq!(moving_average(&[], 10), Vec::<f64>::new());
    }

    #[test]
    fn trapezoid_area() {
        assert_eq!(auc(&[0.0, 1.0, 2.0]), 2.0);
        assert_eq!(auc(&[5.0]), 0.0);
        assert_eq!(auc(&[1.0, 1.0, 1.0, 1.0]), 3.0);
    }

    #[test]
    fn head_and_tail() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        assert_eq!(head_tail_means(&xs), (0.5, 18.5));
        assert_eq!(head_tail_means(&[3.0, 7.0]), (3.0, 7.0));
    }

    #[test]
    fn mismatch_beyond_mode_is_rejected() {
        let a = RunConfig::desk();
        let b = a.with_mode(Mode::EpsilonRandom);
        check_only_mode_differs(&a, &b).unwrap();
        let mut c = b.clone();
        c.pso.horizon = 3;
        let err = check_only_mode_differs(&a, &c).unwrap_err().to_string();
        assert!(err.contains("pso.horizon"), "{err}");
    }
}
