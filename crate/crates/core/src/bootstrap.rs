//! Bootstrap confidence intervals for the AR coefficients.
//!
//! Two resampling schemes are supported. The residual-based wild bootstrap
//! rebuilds the series recursively from the fitted model with residuals
//! scaled by i.i.d. multipliers. The local block bootstrap copies blocks of
//! the observed series from nearby positions. Each pseudo-series is re-tuned
//! on a small grid around the original budget and refitted; percentile
//! intervals are read off the replicate estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::model::TimeSeries;
use crate::simulate::{ar_recursion, derive_seed};
use crate::solver::{FitConfig, FitResult};
use crate::stats::{quantile_sorted, sorted_copy};
use crate::tuning::{tune_over, TuneConfig, TuneResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Wild,
    LocalBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Multiplier {
    #[default]
    StandardNormal,
    Rademacher,
}

impl Multiplier {
    fn draw(self, rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        match self {
            Multiplier::StandardNormal => (0..n).map(|_| StandardNormal.sample(rng)).collect(),
            Multiplier::Rademacher => (0..n)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub scheme: Scheme,
    pub replicates: usize,
    pub multiplier: Multiplier,
    /// Block length `b`.
    pub block_size: usize,
    /// Neighbourhood half-width `B` for block start positions.
    pub neighborhood: usize,
    /// Re-tune over `delta* + k eps`, `|k| <= retune_halfwidth`.
    pub retune_halfwidth: usize,
    pub levels: Vec<f64>,
    /// Fraction of dropped replicates above which the result is unreliable.
    pub max_drop_fraction: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Wild,
            replicates: 100,
            multiplier: Multiplier::StandardNormal,
            block_size: 20,
            neighborhood: 50,
            retune_halfwidth: 2,
            levels: vec![0.90, 0.95],
            max_drop_fraction: 0.1,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self, t: usize) -> Result<()> {
        if self.replicates < 2 {
            return Err(contract("at least two bootstrap replicates are required"));
        }
        if self.block_size == 0 || self.block_size > t {
            return Err(contract(format!(
                "block size must be in 1..={t}, got {}",
                self.block_size
            )));
        }
        if self.neighborhood == 0 {
            return Err(contract("neighbourhood must be positive"));
        }
        if self.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(contract("confidence levels must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub level: f64,
    /// `(lo, hi)` per AR coefficient.
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Estimate from the original fit.
    pub point: Vec<f64>,
    /// Replicate estimates in replicate order (dropped replicates omitted).
    pub draws: Vec<Vec<f64>>,
    /// Re-tuned budget of each kept replicate.
    pub deltas: Vec<f64>,
    pub intervals: Vec<Interval>,
    pub dropped: usize,
    pub unreliable: bool,
}

impl BootstrapResult {
    pub fn interval(&self, level: f64) -> Option<&Interval> {
        self.intervals
            .iter()
            .find(|i| (i.level - level).abs() < 1e-12)
    }
}

/// Wild bootstrap pseudo-series with explicit multipliers `v`.
pub fn wild_bootstrap_with_multipliers(
    series: &TimeSeries,
    fit: &FitResult,
    v: &[f64],
) -> Result<TimeSeries> {
    let t = series.len();
    if fit.residuals.len() != t || v.len() != t || fit.alpha().len() != series.order() {
        return Err(contract(
            "fit, multipliers and series must have matching sizes",
        ));
    }
    let background = fit.background();
    let innovations: Vec<f64> = fit.residuals.iter().zip(v).map(|(r, w)| r * w).collect();
    let values = ar_recursion(fit.alpha(), series.history(), &background, &innovations)?;
    TimeSeries::new(values, series.history().to_vec())
}

/// `x~_i = f^_i + sum_j alpha^_j x~_{i-j} + r^_i v_i` from the observed history.
pub fn wild_bootstrap_sample(
    series: &TimeSeries,
    fit: &FitResult,
    multiplier: Multiplier,
    seed: u64,
) -> Result<TimeSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = multiplier.draw(&mut rng, series.len());
    wild_bootstrap_with_multipliers(series, fit, &v)
}

/// Admissible 0-based start positions for block `m`:
/// `{max(1, mb - B), ..., min(T - b + 1, mb + B)}` shifted to 0-based.
pub fn block_start_range(m: usize, t: usize, b: usize, big_b: usize) -> (usize, usize) {
    let centre = m * b;
    let lo = centre.saturating_sub(big_b).max(1);
    let hi = (t - b + 1).min(centre + big_b);
    (lo - 1, hi.max(lo) - 1)
}

/// Local block bootstrap: block `m` of length `b` (the last one truncated)
/// copies a contiguous window of the observed values starting near `m b`.
pub fn local_block_bootstrap_sample(
    series: &TimeSeries,
    block_size: usize,
    neighborhood: usize,
    seed: u64,
) -> Result<TimeSeries> {
    let x = series.values();
    let t = x.len();
    let b = block_size;
    if b == 0 || b > t {
        return Err(contract(format!("block size must be in 1..={t}, got {b}")));
    }
    if neighborhood == 0 {
        return Err(contract("neighbourhood must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = t.div_ceil(b);
    let mut out = Vec::with_capacity(t);
    for m in 0..blocks {
        let (lo, hi) = block_start_range(m, t, b, neighborhood);
        let start = rng.random_range(lo..=hi);
        let len = b.min(t - m * b);
        out.extend_from_slice(&x[start..start + len]);
    }
    TimeSeries::new(out, series.history().to_vec())
}

/// Budgets `delta* + k eps`, `k = -n..=n`, clamped at zero and deduplicated.
pub fn retune_grid(delta_star: f64, epsilon: f64, halfwidth: usize) -> Vec<f64> {
    let n = halfwidth as i64;
    let mut out: Vec<f64> = Vec::with_capacity(2 * halfwidth + 1);
    for k in -n..=n {
        let d = (delta_star + k as f64 * epsilon).max(0.0);
        if out.last().is_none_or(|last| *last != d) {
            out.push(d);
        }
    }
    out
}

/// Percentile interval per coefficient at each level.
pub fn percentile_intervals(draws: &[Vec<f64>], levels: &[f64]) -> Vec<Interval> {
    let p = draws.first().map_or(0, |d| d.len());
    let columns: Vec<Vec<f64>> = (0..p)
        .map(|j| sorted_copy(&draws.iter().map(|d| d[j]).collect::<Vec<_>>()))
        .collect();
    levels
        .iter()
        .map(|&level| Interval {
            level,
            bounds: columns
                .iter()
                .map(|c| {
                    if c.is_empty() {
                        (f64::NAN, f64::NAN)
                    } else {
                        (
                            quantile_sorted(c, 0.5 * (1.0 - level)),
                            quantile_sorted(c, 0.5 * (1.0 + level)),
                        )
                    }
                })
                .collect(),
        })
        .collect()
}

/// Bootstrap intervals with replicate `k` seeded by `derive_seed(seed, k)`.
pub fn bootstrap_ci(
    series: &TimeSeries,
    tuned: &TuneResult,
    cfg: &BootstrapConfig,
    tunecfg: &TuneConfig,
    fitcfg: &FitConfig,
    seed: u64,
) -> Result<BootstrapResult> {
    let seeds: Vec<u64> = (0..cfg.replicates as u64)
        .map(|k| derive_seed(seed, k))
        .collect();
    bootstrap_ci_with_seeds(series, tuned, cfg, tunecfg, fitcfg, &seeds)
}

/// As [`bootstrap_ci`] with one explicit seed per replicate.
pub fn bootstrap_ci_with_seeds(
    series: &TimeSeries,
    tuned: &TuneResult,
    cfg: &BootstrapConfig,
    tunecfg: &TuneConfig,
    fitcfg: &FitConfig,
    seeds: &[u64],
) -> Result<BootstrapResult> {
    cfg.validate(series.len())?;
    tunecfg.validate()?;
    fitcfg.validate()?;
    if seeds.len() < 2 {
        return Err(contract("at least two bootstrap replicates are required"));
    }
    let grid = retune_grid(tuned.delta_star, tunecfg.epsilon, cfg.retune_halfwidth);

    let replicate = |seed: u64| -> Option<(Vec<f64>, f64)> {
        let pseudo = match cfg.scheme {
            Scheme::Wild => wild_bootstrap_sample(series, &tuned.fit, cfg.multiplier, seed),
            Scheme::LocalBlock => {
                local_block_bootstrap_sample(series, cfg.block_size, cfg.neighborhood, seed)
            }
        }
        .ok()?;
        let r = tune_over(&pseudo, &grid, tunecfg, fitcfg).ok()?;
        r.fit
            .converged
            .then(|| (r.fit.alpha().to_vec(), r.delta_star))
    };
    let outcomes: Vec<Option<(Vec<f64>, f64)>> = seeds.par_iter().map(|&s| replicate(s)).collect();

    let dropped = outcomes.iter().filter(|o| o.is_none()).count();
    let (draws, deltas): (Vec<Vec<f64>>, Vec<f64>) = outcomes.into_iter().flatten().unzip();
    let intervals = percentile_intervals(&draws, &cfg.levels);
    Ok(BootstrapResult {
        point: tuned.alpha_star().to_vec(),
        draws,
        deltas,
        intervals,
        dropped,
        unreliable: dropped as f64 > cfg.max_drop_fraction * seeds.len() as f64,
    })
}
