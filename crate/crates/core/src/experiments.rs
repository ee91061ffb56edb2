//! Scripted simulation studies.
//!
//! - `exp1`: accuracy of the tuned estimator under random-walk drift, with
//!   the budget chosen by Ljung-Box, by Durbin-Watson, or by an oracle.
//! - `exp2`: estimation error as the number of drift changes `s` grows.
//! - `exp3`: the TV estimator against the squared-difference variant and a
//!   cubic polynomial baseline under piecewise-linear drift.
//! - `exp4`: empirical coverage of wild and local block bootstrap intervals.
//!
//! Every replication draws its series from a seed derived from the master
//! seed, so results do not depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_ci, BootstrapConfig, Scheme};
use crate::diagnostics::PortmanteauTest;
use crate::error::{contract, Result};
use crate::model::TimeSeries;
use crate::simulate::{derive_seed, gen_series, DriftKind, DriftSpec, SimConfig};
use crate::solver::{fit_polynomial_baseline, fit_warm, FitConfig};
use crate::tuning::{p_value, tune, Constraint, TuneConfig, TuneMethod};

/// Series length `round(base * scale)`, at least 50.
pub fn scaled_len(base: f64, scale: f64) -> usize {
    ((base * scale).round() as usize).max(50)
}

/// Replications `round(25 * scale)` clamped to `2..=20`.
pub fn scaled_reps(scale: f64) -> usize {
    ((25.0 * scale).round() as usize).clamp(2, 20)
}

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(contract(format!("scale must be positive, got {scale}")))
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (`n - 1` denominator).
fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn mse(v: &[f64], truth: f64) -> f64 {
    v.iter().map(|x| (x - truth).powi(2)).sum::<f64>() / v.len() as f64
}

fn ar1_series(
    alpha: f64,
    drift: DriftSpec,
    sigma0_sq: f64,
    seed: u64,
) -> Result<(TimeSeries, Vec<f64>)> {
    gen_series(&SimConfig::new(vec![alpha], drift, sigma0_sq, seed)?)
}

fn golden(lo: f64, hi: f64, epsilon: f64, constraint: Constraint) -> TuneConfig {
    TuneConfig {
        epsilon,
        method: TuneMethod::Golden,
        constraint,
        ..TuneConfig::new(lo, hi)
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub alpha: f64,
    pub delta0: f64,
    pub sigma0_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Config {
    pub t: usize,
    pub reps: usize,
    pub settings: Vec<Setting>,
    /// The sweep covers `0, eps, 2 eps, ..., <= delta_hi`.
    pub delta_hi: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Exp1Config {
    /// All eight combinations of `alpha in {0.05, 0.1}`, `delta0 in {0.05, 0.1}`
    /// and `sigma0^2 in {0.1, 0.2}`.
    pub fn full_factorial() -> Vec<Setting> {
        let mut out = Vec::new();
        for alpha in [0.05, 0.1] {
            for delta0 in [0.05, 0.1] {
                for sigma0_sq in [0.1, 0.2] {
                    out.push(Setting {
                        alpha,
                        delta0,
                        sigma0_sq,
                    });
                }
            }
        }
        out
    }

    pub fn scaled(scale: f64, seed: u64) -> Result<Self> {
        check_scale(scale)?;
        Ok(Self {
            t: scaled_len(5000.0, scale),
            reps: scaled_reps(scale),
            settings: Self::full_factorial(),
            delta_hi: 60.0,
            epsilon: 0.04,
            seed,
        })
    }
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Row {
    pub setting: Setting,
    /// Mean and sd of the estimate at the budget closest to the truth.
    pub oracle_mean: f64,
    pub oracle_sd: f64,
    pub lb_mean: f64,
    pub lb_sd: f64,
    pub dw_mean: f64,
    pub dw_sd: f64,
    pub naive_mean: f64,
    pub naive_sd: f64,
    /// Smallest mean squared error over the sweep.
    pub oracle_mse: f64,
    pub lb_mse: f64,
    pub dw_mse: f64,
    pub naive_mse: f64,
}

/// Sweep curve averaged over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1CurvePoint {
    pub setting: usize,
    pub delta: f64,
    pub mean_alpha: f64,
    pub mse: f64,
    pub mean_p_lb: f64,
    pub mean_p_dw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Result {
    pub rows: Vec<Exp1Row>,
    pub curves: Vec<Exp1CurvePoint>,
}

struct Sweep {
    alpha: Vec<f64>,
    p_lb: Vec<f64>,
    p_dw: Vec<f64>,
}

fn sweep(series: &TimeSeries, deltas: &[f64]) -> Sweep {
    let lb = TuneConfig::new(0.0, 1.0);
    let dw = TuneConfig {
        test: PortmanteauTest::DurbinWatson,
        ..lb
    };
    let lags = series.order();
    let mut warm = None;
    let mut out = Sweep {
        alpha: Vec::with_capacity(deltas.len()),
        p_lb: Vec::with_capacity(deltas.len()),
        p_dw: Vec::with_capacity(deltas.len()),
    };
    for &delta in deltas {
        let r = fit_warm(series, &FitConfig::with_delta(delta), warm.as_ref())
            .expect("sweep budgets are valid");
        let (plb, pdw) = if r.converged {
            (
                p_value(&r.residuals, &lb, lags),
                p_value(&r.residuals, &dw, lags),
            )
        } else {
            (0.0, 0.0)
        };
        out.alpha.push(r.alpha()[0]);
        out.p_lb.push(plb);
        out.p_dw.push(pdw);
        warm = Some(r);
    }
    out
}

/// First index of the maximum.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn run_exp1(cfg: &Exp1Config) -> Result<Exp1Result> {
    if cfg.reps == 0 || cfg.settings.is_empty() || !(cfg.epsilon > 0.0) || !(cfg.delta_hi > 0.0) {
        return Err(contract(
            "exp1 needs replications, settings and a positive grid",
        ));
    }
    let n = crate::tuning::grid_intervals(0.0, cfg.delta_hi, cfg.epsilon);
    let deltas: Vec<f64> = (0..=n).map(|j| j as f64 * cfg.epsilon).collect();
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for (k, setting) in cfg.settings.iter().enumerate() {
        let group = derive_seed(cfg.seed, k as u64);
        let drift = DriftSpec {
            kind: DriftKind::RandomWalk,
            delta0: setting.delta0,
            changes: 1,
            len: cfg.t,
        };
        let sweeps: Vec<Sweep> = (0..cfg.reps as u64)
            .into_par_iter()
            .map(|rep| {
                let (s, _) = ar1_series(
                    setting.alpha,
                    drift,
                    setting.sigma0_sq,
                    derive_seed(group, rep),
                )?;
                Ok(sweep(&s, &deltas))
            })
            .collect::<Result<_>>()?;

        let truth = setting.alpha;
        let pick = |f: &dyn Fn(&Sweep) -> usize| -> Vec<f64> {
            sweeps.iter().map(|s| s.alpha[f(s)]).collect()
        };
        let oracle = pick(&|s| {
            let err: Vec<f64> = s.alpha.iter().map(|a| -(a - truth).abs()).collect();
            argmax(&err)
        });
        let lb = pick(&|s| argmax(&s.p_lb));
        let dw = pick(&|s| argmax(&s.p_dw));
        let naive = pick(&|_| 0);

        let mut best_mse = f64::INFINITY;
        for (j, &delta) in deltas.iter().enumerate() {
            let at: Vec<f64> = sweeps.iter().map(|s| s.alpha[j]).collect();
            let m = mse(&at, truth);
            best_mse = best_mse.min(m);
            curves.push(Exp1CurvePoint {
                setting: k,
                delta,
                mean_alpha: mean(&at),
                mse: m,
                mean_p_lb: mean(&sweeps.iter().map(|s| s.p_lb[j]).collect::<Vec<_>>()),
                mean_p_dw: mean(&sweeps.iter().map(|s| s.p_dw[j]).collect::<Vec<_>>()),
            });
        }
        rows.push(Exp1Row {
            setting: *setting,
            oracle_mean: mean(&oracle),
            oracle_sd: sd(&oracle),
            lb_mean: mean(&lb),
            lb_sd: sd(&lb),
            dw_mean: mean(&dw),
            dw_sd: sd(&dw),
            naive_mean: mean(&naive),
            naive_sd: sd(&naive),
            oracle_mse: best_mse,
            lb_mse: mse(&lb, truth),
            dw_mse: mse(&dw, truth),
            naive_mse: mse(&naive, truth),
        });
    }
    Ok(Exp1Result { rows, curves })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Config {
    pub t: usize,
    pub reps: usize,
    pub s_values: Vec<usize>,
    pub alpha: f64,
    pub delta0: f64,
    pub sigma0_sq: f64,
    pub delta_hi: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Exp2Config {
    /// `s in {5, 35, 65, ...}` up to `0.6 T`.
    pub fn scaled(scale: f64, seed: u64) -> Result<Self> {
        check_scale(scale)?;
        let t = scaled_len(5000.0, scale);
        let s_max = (0.6 * t as f64) as usize;
        Ok(Self {
            t,
            reps: scaled_reps(scale),
            s_values: (5..=s_max.max(5)).step_by(30).collect(),
            alpha: 0.1,
            delta0: 0.1,
            sigma0_sq: 0.1,
            delta_hi: 60.0,
            epsilon: 0.04,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Row {
    pub s: usize,
    pub mean_alpha: f64,
    pub sd_alpha: f64,
    pub mean_abs_error: f64,
    pub mean_delta: f64,
}

/// Golden-section tuned estimates under piecewise-constant drift with `s`
/// changes.
pub fn run_exp2(cfg: &Exp2Config) -> Result<Vec<Exp2Row>> {
    if cfg.reps == 0 || cfg.s_values.is_empty() {
        return Err(contract("exp2 needs replications and at least one s"));
    }
    let tc = golden(0.0, cfg.delta_hi, cfg.epsilon, Constraint::TotalVariation);
    cfg.s_values
        .iter()
        .map(|&s| {
            let drift = DriftSpec {
                kind: DriftKind::PiecewiseConstant,
                delta0: cfg.delta0,
                changes: s,
                len: cfg.t,
            };
            drift.validate()?;
            let group = derive_seed(cfg.seed, s as u64);
            let fits: Vec<(f64, f64)> = (0..cfg.reps as u64)
                .into_par_iter()
                .map(|rep| {
                    let (series, _) =
                        ar1_series(cfg.alpha, drift, cfg.sigma0_sq, derive_seed(group, rep))?;
                    let r = tune(&series, &tc, &FitConfig::default())?;
                    Ok((r.alpha_star()[0], r.delta_star))
                })
                .collect::<Result<_>>()?;
            let alphas: Vec<f64> = fits.iter().map(|f| f.0).collect();
            let errs: Vec<f64> = alphas.iter().map(|a| (a - cfg.alpha).abs()).collect();
            Ok(Exp2Row {
                s,
                mean_alpha: mean(&alphas),
                sd_alpha: sd(&alphas),
                mean_abs_error: mean(&errs),
                mean_delta: mean(&fits.iter().map(|f| f.1).collect::<Vec<_>>()),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exp3Case {
    /// Number of slope segments.
    pub s: usize,
    pub delta0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp3Config {
    pub t: usize,
    pub reps: usize,
    pub cases: Vec<Exp3Case>,
    pub alpha: f64,
    pub sigma0_sq: f64,
    /// Search interval upper ends for the TV and squared-difference budgets.
    pub tv_hi: f64,
    pub l2_hi: f64,
    /// Golden-section tolerance shared by both methods.
    pub epsilon: f64,
    pub poly_degree: usize,
    pub seed: u64,
}

impl Exp3Config {
    /// Case 1: many small slope changes; case 2: few, larger ones. At scale
    /// 0.4 this is `T = 2000` with `s = 1500` and `s = 100`.
    pub fn scaled(scale: f64, seed: u64) -> Result<Self> {
        check_scale(scale)?;
        let t = scaled_len(5000.0, scale);
        let s1 = ((0.75 * t as f64).round() as usize).clamp(1, t - 1);
        let s2 = ((0.05 * t as f64).round() as usize).clamp(1, t - 1);
        Ok(Self {
            t,
            reps: scaled_reps(scale),
            cases: vec![
                Exp3Case {
                    s: s1,
                    delta0: 0.05,
                },
                Exp3Case { s: s2, delta0: 0.1 },
            ],
            alpha: 0.1,
            sigma0_sq: 0.1,
            tv_hi: 200.0,
            l2_hi: 20.0,
            epsilon: 0.04,
            poly_degree: 3,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp3Rep {
    pub case: usize,
    pub rep: usize,
    pub true_tv: f64,
    pub tv_alpha: f64,
    pub tv_delta: f64,
    pub l2_alpha: f64,
    pub l2_delta: f64,
    pub poly_alpha: f64,
    pub naive_alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp3Summary {
    pub case: Exp3Case,
    pub tv_mean_abs_error: f64,
    pub l2_mean_abs_error: f64,
    pub poly_mean_abs_error: f64,
    pub naive_mean_abs_error: f64,
    /// Replications where the TV estimate is strictly closer to the truth.
    pub tv_wins: usize,
}

/// Backgrounds of the first replication of each case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp3Curve {
    pub case: usize,
    pub f_true: Vec<f64>,
    pub f_tv: Vec<f64>,
    pub f_l2: Vec<f64>,
    pub f_poly: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp3Result {
    pub reps: Vec<Exp3Rep>,
    pub summary: Vec<Exp3Summary>,
    pub curves: Vec<Exp3Curve>,
}

pub fn run_exp3(cfg: &Exp3Config) -> Result<Exp3Result> {
    if cfg.reps == 0 || cfg.cases.is_empty() {
        return Err(contract("exp3 needs replications and at least one case"));
    }
    let tv_cfg = golden(0.0, cfg.tv_hi, cfg.epsilon, Constraint::TotalVariation);
    let l2_cfg = golden(0.0, cfg.l2_hi, cfg.epsilon, Constraint::SquaredVariation);
    let mut reps = Vec::new();
    let mut summary = Vec::new();
    let mut curves = Vec::new();
    for (k, case) in cfg.cases.iter().enumerate() {
        let drift = DriftSpec {
            kind: DriftKind::PiecewiseLinear,
            delta0: case.delta0,
            changes: case.s,
            len: cfg.t,
        };
        drift.validate()?;
        let group = derive_seed(cfg.seed, k as u64);
        let out: Vec<(Exp3Rep, Option<Exp3Curve>)> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| {
                let (series, f) = ar1_series(
                    cfg.alpha,
                    drift,
                    cfg.sigma0_sq,
                    derive_seed(group, rep as u64),
                )?;
                let tv = tune(&series, &tv_cfg, &FitConfig::default())?;
                let l2 = tune(&series, &l2_cfg, &FitConfig::default())?;
                let poly = fit_polynomial_baseline(&series, cfg.poly_degree)?;
                let naive = fit_warm(&series, &FitConfig::with_delta(0.0), None)?;
                let row = Exp3Rep {
                    case: k,
                    rep,
                    true_tv: f.windows(2).map(|w| (w[1] - w[0]).abs()).sum(),
                    tv_alpha: tv.alpha_star()[0],
                    tv_delta: tv.delta_star,
                    l2_alpha: l2.alpha_star()[0],
                    l2_delta: l2.delta_star,
                    poly_alpha: poly.alpha()[0],
                    naive_alpha: naive.alpha()[0],
                };
                let curve = (rep == 0).then(|| Exp3Curve {
                    case: k,
                    f_tv: tv.fit.background(),
                    f_l2: l2.fit.background(),
                    f_poly: poly.background(),
                    f_true: f,
                });
                Ok((row, curve))
            })
            .collect::<Result<_>>()?;
        let err = |g: &dyn Fn(&Exp3Rep) -> f64| {
            mean(
                &out.iter()
                    .map(|(r, _)| (g(r) - cfg.alpha).abs())
                    .collect::<Vec<_>>(),
            )
        };
        summary.push(Exp3Summary {
            case: *case,
            tv_mean_abs_error: err(&|r| r.tv_alpha),
            l2_mean_abs_error: err(&|r| r.l2_alpha),
            poly_mean_abs_error: err(&|r| r.poly_alpha),
            naive_mean_abs_error: err(&|r| r.naive_alpha),
            tv_wins: out
                .iter()
                .filter(|(r, _)| (r.tv_alpha - cfg.alpha).abs() < (r.l2_alpha - cfg.alpha).abs())
                .count(),
        });
        for (row, curve) in out {
            reps.push(row);
            curves.extend(curve);
        }
    }
    Ok(Exp3Result {
        reps,
        summary,
        curves,
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp4Config {
    pub t: usize,
    /// Independent series, each with its own bootstrap.
    pub outer: usize,
    pub replicates: usize,
    pub block_size: usize,
    pub neighborhood: usize,
    pub levels: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub alpha: f64,
    pub delta0: f64,
    pub changes: usize,
    pub sigma0_sq: f64,
    pub delta_hi: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Exp4Config {
    /// At scale 0.4: `T = 1000`, 10 outer replications of `N = 100`.
    pub fn scaled(scale: f64, seed: u64) -> Result<Self> {
        check_scale(scale)?;
        let t = scaled_len(2500.0, scale);
        Ok(Self {
            t,
            outer: scaled_reps(scale),
            replicates: ((250.0 * scale).round() as usize).max(10),
            block_size: 20.min(t),
            neighborhood: 50,
            levels: vec![0.90, 0.95],
            schemes: vec![Scheme::Wild, Scheme::LocalBlock],
            alpha: 0.1,
            delta0: 0.1,
            changes: (t / 10).clamp(1, t - 1),
            sigma0_sq: 0.1,
            delta_hi: 60.0,
            epsilon: 0.04,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp4Row {
    pub scheme: Scheme,
    pub level: f64,
    pub coverage: f64,
    pub mean_length: f64,
    /// Outer replications flagged unreliable because too many bootstrap
    /// replicates failed.
    pub unreliable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp4Draws {
    pub scheme: Scheme,
    pub point: f64,
    pub draws: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp4Result {
    pub rows: Vec<Exp4Row>,
    /// Replicate estimates of the first outer replication, per scheme.
    pub histograms: Vec<Exp4Draws>,
}

pub fn run_exp4(cfg: &Exp4Config) -> Result<Exp4Result> {
    if cfg.outer == 0 || cfg.schemes.is_empty() {
        return Err(contract("exp4 needs outer replications and a scheme"));
    }
    let drift = DriftSpec {
        kind: DriftKind::PiecewiseConstant,
        delta0: cfg.delta0,
        changes: cfg.changes,
        len: cfg.t,
    };
    drift.validate()?;
    let tc = golden(0.0, cfg.delta_hi, cfg.epsilon, Constraint::TotalVariation);
    let fc = FitConfig::default();
    let mut rows = Vec::new();
    let mut histograms = Vec::new();
    for (k, &scheme) in cfg.schemes.iter().enumerate() {
        let bc = BootstrapConfig {
            scheme,
            replicates: cfg.replicates,
            block_size: cfg.block_size,
            neighborhood: cfg.neighborhood,
            levels: cfg.levels.clone(),
            ..BootstrapConfig::default()
        };
        // the same outer series for every scheme
        let results = (0..cfg.outer as u64)
            .map(|rep| {
                let seed = derive_seed(cfg.seed, rep);
                let (series, _) = ar1_series(cfg.alpha, drift, cfg.sigma0_sq, seed)?;
                let tuned = tune(&series, &tc, &fc)?;
                bootstrap_ci(
                    &series,
                    &tuned,
                    &bc,
                    &tc,
                    &fc,
                    derive_seed(seed, 100 + k as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        for &level in &cfg.levels {
            let bounds: Vec<(f64, f64)> = results
                .iter()
                .map(|r| r.interval(level).expect("requested level").bounds[0])
                .collect();
            let covered = bounds
                .iter()
                .filter(|(lo, hi)| *lo <= cfg.alpha && cfg.alpha <= *hi)
                .count();
            rows.push(Exp4Row {
                scheme,
                level,
                coverage: covered as f64 / results.len() as f64,
                mean_length: mean(&bounds.iter().map(|(lo, hi)| hi - lo).collect::<Vec<_>>()),
                unreliable: results.iter().filter(|r| r.unreliable).count(),
            });
        }
        histograms.push(Exp4Draws {
            scheme,
            point: results[0].point[0],
            draws: results[0].draws.iter().map(|d| d[0]).collect(),
        });
    }
    Ok(Exp4Result { rows, histograms })
}
