//! Total-variation constrained least squares.
//!
//! Minimises `(1/2T) ||x_{1:T} - X beta||^2` subject to `sum |Delta_i| <= delta`
//! (and optionally `||(alpha, mu)||_2 <= delta_s`).
//!
//! Two solvers share the same contract:
//!
//! - [`SolverMethod::Profile`] (default) projects the background out exactly
//!   onto the TV ball and runs Newton iterations on the `p` AR coefficients.
//! - [`SolverMethod::Accelerated`] runs FISTA on the `Delta` block with an L1
//!   ball projection after each step. It is also used whenever `delta_s` is
//!   finite, since the ball on `(alpha, mu)` couples the level `mu` to the
//!   AR block.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::model::{reconstruct_background, reverse_cumsum, Coefficients, TimeSeries};

mod accelerated;
mod profile;
pub mod smooth;
pub mod tv;

use accelerated::{Regulariser, Settings};
use profile::Ball;

/// Duality gap required for convergence, relative to `1 + objective`.
pub(crate) const GAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    #[default]
    Profile,
    Accelerated,
}

/// Step-size policy for the accelerated gradient loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    #[default]
    Backtracking,
    FixedLipschitz,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Total-variation budget.
    pub delta: f64,
    /// Radius of the Euclidean ball on `(alpha, mu)`; infinite by default.
    pub delta_s: f64,
    pub max_iters: usize,
    /// Relative objective change used in the stopping rule.
    pub tol: f64,
    pub step_rule: StepRule,
    pub method: SolverMethod,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            delta: 0.0,
            delta_s: f64::INFINITY,
            max_iters: 20_000,
            tol: 1e-8,
            step_rule: StepRule::Backtracking,
            method: SolverMethod::Profile,
        }
    }
}

impl FitConfig {
    pub fn with_delta(delta: f64) -> Self {
        Self {
            delta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(contract(format!(
                "delta must be finite and nonnegative, got {}",
                self.delta
            )));
        }
        if !(self.delta_s > 0.0) {
            return Err(contract(format!(
                "delta_s must be positive, got {}",
                self.delta_s
            )));
        }
        if !(self.tol > 0.0) {
            return Err(contract(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(contract("max_iters must be positive"));
        }
        Ok(())
    }
}

/// Output of a single fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coefficients: Coefficients,
    /// `r_i = x_i - sum_j alpha_j x_{i-j} - f_i`.
    pub residuals: Vec<f64>,
    /// `(1/2T) sum r_i^2`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Frank-Wolfe duality gap of the `Delta` block plus the stationarity
    /// residual of the free block; bounds the suboptimality of the point.
    pub kkt_gap: f64,
    /// Lagrange multiplier of the budget constraint (zero when inactive).
    pub multiplier: f64,
    /// Set when the regression block had to fall back to a pseudo-inverse.
    pub rank_deficient: bool,
    /// Objective value after each accepted iteration.
    pub trace: Vec<f64>,
}

impl FitResult {
    pub fn alpha(&self) -> &[f64] {
        &self.coefficients.alpha
    }

    pub fn background(&self) -> Vec<f64> {
        reconstruct_background(&self.coefficients)
    }

    /// Fitted values `x_i - r_i`.
    pub fn fitted(&self, series: &TimeSeries) -> Vec<f64> {
        series
            .values()
            .iter()
            .zip(&self.residuals)
            .map(|(x, r)| x - r)
            .collect()
    }
}

/// Euclidean projection onto `{u : ||u||_1 <= radius}` by sort-based
/// thresholding.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Result<Vec<f64>> {
    if !(radius >= 0.0) {
        return Err(contract(format!(
            "L1 ball radius must be nonnegative, got {radius}"
        )));
    }
    let mut out = v.to_vec();
    project_l1_in_place(&mut out, radius, &mut Vec::new());
    Ok(out)
}

/// Euclidean projection onto `{u : ||u||_2 <= radius}`.
pub fn project_l2_ball(v: &[f64], radius: f64) -> Result<Vec<f64>> {
    if !(radius >= 0.0) {
        return Err(contract(format!(
            "L2 ball radius must be nonnegative, got {radius}"
        )));
    }
    let mut out = v.to_vec();
    project_l2_in_place(&mut out, radius);
    Ok(out)
}

fn project_l1_in_place(v: &mut [f64], radius: f64, scratch: &mut Vec<f64>) {
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    if norm <= radius {
        return;
    }
    if radius == 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    scratch.clear();
    scratch.extend(v.iter().map(|x| x.abs()).filter(|x| *x > 0.0));
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, u) in scratch.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - radius) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        let mag = (x.abs() - theta).max(0.0);
        *x = mag.copysign(*x);
    }
}

fn project_l2_in_place(v: &mut [f64], radius: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= radius {
        return;
    }
    let scale = if norm > 0.0 { radius / norm } else { 0.0 };
    v.iter_mut().for_each(|x| *x *= scale);
}

#[derive(Debug, Clone, Copy)]
enum Constraint {
    L1(f64),
    /// Bound on the sum of squared differences.
    L2Squared(f64),
}

impl Constraint {
    fn regulariser(self) -> Regulariser {
        match self {
            Constraint::L1(r) => Regulariser::L1Ball(r),
            Constraint::L2Squared(r2) => Regulariser::L2Ball(r2.sqrt()),
        }
    }

    fn ball(self) -> Ball {
        match self {
            Constraint::L1(r) => Ball::TotalVariation(r),
            Constraint::L2Squared(r2) => Ball::Smooth(r2),
        }
    }
}

fn solve(
    series: &TimeSeries,
    config: &FitConfig,
    constraint: Constraint,
    warm: Option<&FitResult>,
) -> Result<FitResult> {
    config.validate()?;
    let use_profile = config.method == SolverMethod::Profile && config.delta_s.is_infinite();
    if !use_profile {
        let settings = Settings {
            max_iters: config.max_iters,
            tol: config.tol,
            step_rule: config.step_rule,
        };
        let warm = warm.map(|w| w.coefficients.delta.as_slice());
        return Ok(accelerated::run(
            series,
            constraint.regulariser(),
            config.delta_s,
            settings,
            warm,
        ));
    }

    let start = warm.map(|w| w.coefficients.alpha.as_slice());
    let out = profile::solve(
        series,
        constraint.ball(),
        config.max_iters,
        config.tol,
        start,
    );
    let coefficients = Coefficients::from_background(out.alpha, &out.background);
    let kkt_gap = certificate(
        series,
        constraint.regulariser(),
        &coefficients,
        &out.residuals,
    );
    let converged = out.stationary && kkt_gap <= GAP_TOL * (1.0 + out.objective.abs());
    Ok(FitResult {
        coefficients,
        residuals: out.residuals,
        objective: out.objective,
        iterations: out.iterations,
        converged,
        kkt_gap,
        multiplier: out.multiplier,
        rank_deficient: out.degenerate,
        trace: out.trace,
    })
}

/// Duality gap on `Delta` plus the gradient norm of `(alpha, mu)`.
fn certificate(
    series: &TimeSeries,
    reg: Regulariser,
    coefficients: &Coefficients,
    residuals: &[f64],
) -> f64 {
    let inv_t = 1.0 / series.len() as f64;
    let tail = reverse_cumsum(residuals);
    let grad_delta: Vec<f64> = tail[1..].iter().map(|v| -v * inv_t).collect();
    let grad_mu = -tail[0] * inv_t;
    let grad_alpha = series
        .lag_columns()
        .iter()
        .map(|c| -inv_t * c.iter().zip(residuals).map(|(a, b)| a * b).sum::<f64>())
        .fold(grad_mu.abs(), |m, g: f64| m.max(g.abs()));
    reg.gap(&coefficients.delta, &grad_delta) + grad_alpha
}

/// Total-variation constrained fit.
pub fn fit(series: &TimeSeries, config: &FitConfig) -> Result<FitResult> {
    solve(series, config, Constraint::L1(config.delta), None)
}

/// As [`fit`], starting from a previous solution (typically at a nearby
/// budget).
pub fn fit_warm(
    series: &TimeSeries,
    config: &FitConfig,
    warm: Option<&FitResult>,
) -> Result<FitResult> {
    solve(series, config, Constraint::L1(config.delta), warm)
}

/// Variant with the squared-difference constraint `sum Delta_i^2 <= delta`.
pub fn fit_l2_variant(series: &TimeSeries, config: &FitConfig) -> Result<FitResult> {
    solve(series, config, Constraint::L2Squared(config.delta), None)
}

pub fn fit_l2_variant_warm(
    series: &TimeSeries,
    config: &FitConfig,
    warm: Option<&FitResult>,
) -> Result<FitResult> {
    solve(series, config, Constraint::L2Squared(config.delta), warm)
}

/// Penalised form `(1/2T)||x - X beta||^2 + lambda sum |Delta_i|`, solved with
/// the accelerated method.
///
/// Used to check the correspondence between the budget `delta` and the
/// penalty weight; `objective` in the result excludes the penalty term.
pub fn fit_penalized(series: &TimeSeries, lambda: f64, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if !(lambda >= 0.0) {
        return Err(contract(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    let settings = Settings {
        max_iters: config.max_iters,
        tol: config.tol,
        step_rule: config.step_rule,
    };
    Ok(accelerated::run(
        series,
        Regulariser::L1Penalty(lambda),
        config.delta_s,
        settings,
        None,
    ))
}

/// Ordinary least squares on the lag columns plus a polynomial in `t / T`.
///
/// Rank-deficient designs are solved in the minimum-norm sense and flagged.
pub fn fit_polynomial_baseline(series: &TimeSeries, degree: usize) -> Result<FitResult> {
    let (t, p) = (series.len(), series.order());
    if degree + p + 1 >= t {
        return Err(contract(format!(
            "degree {degree} with order {p} leaves no residual degrees of freedom for T = {t}"
        )));
    }
    let ncol = p + 1 + degree;
    let lags = series.lag_columns();
    let design = DMatrix::from_fn(t, ncol, |i, c| {
        if c < p {
            lags[c][i]
        } else {
            ((i + 1) as f64 / t as f64).powi((c - p) as i32)
        }
    });
    let y = DVector::from_column_slice(series.values());
    let svd = design.clone().svd(true, true);
    let top = svd.singular_values.max();
    let eps = top * 1e-12 * t.max(ncol) as f64;
    let rank = svd.singular_values.iter().filter(|s| **s > eps).count();
    let coef = svd
        .solve(&y, eps)
        .map_err(|e| contract(format!("least squares failed: {e}")))?;

    let alpha: Vec<f64> = coef.rows(0, p).iter().copied().collect();
    let background: Vec<f64> = (0..t)
        .map(|i| {
            let u = (i + 1) as f64 / t as f64;
            (0..=degree).map(|d| coef[p + d] * u.powi(d as i32)).sum()
        })
        .collect();
    let fitted = &design * &coef;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let objective = 0.5 * residuals.iter().map(|r| r * r).sum::<f64>() / t as f64;
    Ok(FitResult {
        coefficients: Coefficients::from_background(alpha, &background),
        residuals,
        objective,
        iterations: 0,
        converged: true,
        kkt_gap: 0.0,
        multiplier: 0.0,
        rank_deficient: rank < ncol,
        trace: vec![objective],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{gen_series, DriftKind, DriftSpec, SimConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn l1(v: &[f64]) -> f64 {
        v.iter().map(|x| x.abs()).sum()
    }

    fn l2(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn random_series(seed: u64, t: usize, p: usize) -> TimeSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..t + p).map(|_| rng.random_range(-1.0..1.0)).collect();
        TimeSeries::from_raw(&raw, p).unwrap()
    }

    fn drift_series(seed: u64, t: usize) -> TimeSeries {
        let drift = DriftSpec {
            kind: DriftKind::RandomWalk,
            delta0: 0.2,
            changes: 1,
            len: t,
        };
        gen_series(&SimConfig::new(vec![0.3], drift, 0.1, seed).unwrap())
            .unwrap()
            .0
    }

    /// Plain projected gradient on the full coefficient vector, with a dense
    /// design and step `1/L`.
    fn projected_gradient_oracle(series: &TimeSeries, delta: f64, iters: usize) -> f64 {
        let (t, p) = (series.len(), series.order());
        let lags = series.lag_columns();
        let n = p + t;
        let x = DMatrix::from_fn(t, n, |i, c| {
            if c < p {
                lags[c][i]
            } else if c - p <= i {
                1.0
            } else {
                0.0
            }
        });
        let y = DVector::from_column_slice(series.values());
        let gram = x.transpose() * &x / t as f64;
        let xty = x.transpose() * &y / t as f64;
        let lip = gram.symmetric_eigenvalues().max();
        let mut beta = DVector::zeros(n);
        let mut scratch = Vec::new();
        for _ in 0..iters {
            let grad = &gram * &beta - &xty;
            beta -= grad / lip;
            let tail = beta.as_mut_slice();
            project_l1_in_place(&mut tail[p + 1..], delta, &mut scratch);
        }
        let r = y - x * beta;
        0.5 * r.norm_squared() / t as f64
    }

    fn check_residuals(series: &TimeSeries, r: &FitResult) {
        let fitted = crate::model::DesignOperator::new(series)
            .forward(&r.coefficients)
            .unwrap();
        for (i, (x, f)) in series.values().iter().zip(&fitted).enumerate() {
            assert!((x - f - r.residuals[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn l1_projection_examples() {
        assert_eq!(project_l1_ball(&[0.2, -0.1], 1.0).unwrap(), vec![0.2, -0.1]);
        let p = project_l1_ball(&[3.0, 1.0], 2.0).unwrap();
        assert!((p[0] - 2.0).abs() < 1e-15 && p[1] == 0.0);
        assert_eq!(
            project_l1_ball(&[1.0, 1.0, 1.0], 0.0).unwrap(),
            vec![0.0; 3]
        );
        assert!(project_l1_ball(&[1.0], -1.0).is_err());
    }

    #[test]
    fn l1_projection_matches_threshold_search() {
        // brute force over the soft-threshold level
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
            let r = rng.random_range(0.1..3.0);
            let got = project_l1_ball(&v, r).unwrap();
            if l1(&v) <= r {
                assert_eq!(got, v);
                continue;
            }
            let (mut lo, mut hi) = (0.0, 2.0);
            for _ in 0..200 {
                let th = 0.5 * (lo + hi);
                let s: f64 = v.iter().map(|x| (x.abs() - th).max(0.0)).sum();
                if s > r {
                    lo = th;
                } else {
                    hi = th;
                }
            }
            for (g, x) in got.iter().zip(&v) {
                let want = (x.abs() - lo).max(0.0).copysign(*x);
                assert!((g - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn l2_projection_scales_radially() {
        let p = project_l2_ball(&[3.0, 4.0], 1.0).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert_eq!(project_l2_ball(&[0.1, 0.1], 1.0).unwrap(), vec![0.1, 0.1]);
    }

    proptest! {
        #[test]
        fn l1_projection_properties(
            u in prop::collection::vec(-10.0..10.0f64, 1..30),
            shift in prop::collection::vec(-1.0..1.0f64, 30),
            r in 0.0..5.0f64,
        ) {
            let v: Vec<f64> = u.iter().zip(&shift).map(|(a, b)| a + b).collect();
            let pu = project_l1_ball(&u, r).unwrap();
            let pv = project_l1_ball(&v, r).unwrap();
            prop_assert!(l1(&pu) <= r * (1.0 + 1e-12) + 1e-15);
            let again = project_l1_ball(&pu, r).unwrap();
            for (a, b) in again.iter().zip(&pu) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let d: Vec<f64> = pu.iter().zip(&pv).map(|(a, b)| a - b).collect();
            let e: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
            prop_assert!(l2(&d) <= l2(&e) + 1e-12);
        }

        #[test]
        fn l2_projection_properties(
            u in prop::collection::vec(-10.0..10.0f64, 1..30),
            shift in prop::collection::vec(-1.0..1.0f64, 30),
            r in 0.0..5.0f64,
        ) {
            let v: Vec<f64> = u.iter().zip(&shift).map(|(a, b)| a + b).collect();
            let pu = project_l2_ball(&u, r).unwrap();
            let pv = project_l2_ball(&v, r).unwrap();
            prop_assert!(l2(&pu) <= r * (1.0 + 1e-12) + 1e-15);
            let again = project_l2_ball(&pu, r).unwrap();
            for (a, b) in again.iter().zip(&pu) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let d: Vec<f64> = pu.iter().zip(&pv).map(|(a, b)| a - b).collect();
            let e: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
            prop_assert!(l2(&d) <= l2(&e) + 1e-12);
        }

        #[test]
        fn fit_is_feasible_with_consistent_residuals(seed in 0u64..1000, delta in 0.0..3.0f64) {
            let s = random_series(seed, 25, 1);
            for method in [SolverMethod::Profile, SolverMethod::Accelerated] {
                let cfg = FitConfig { method, ..FitConfig::with_delta(delta) };
                let r = fit(&s, &cfg).unwrap();
                prop_assert!(l1(&r.coefficients.delta) <= delta * (1.0 + 1e-6) + 1e-12);
                check_residuals(&s, &r);
                for w in r.trace.windows(2) {
                    prop_assert!(w[1] <= w[0] + 1e-15 * (1.0 + w[0].abs()));
                }
            }
        }
    }

    #[test]
    fn noiseless_ar1_is_recovered() {
        let t = 30;
        let raw: Vec<f64> = (0..=t).map(|i| 0.5f64.powi(i)).collect();
        let s = TimeSeries::from_raw(&raw, 1).unwrap();

        // two-variable least squares on (x_{0:T-1}, 1)
        let lag = &s.lag_columns()[0];
        let y = s.values();
        let n = t as f64;
        let (sx, sy) = (lag.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxx: f64 = lag.iter().map(|v| v * v).sum();
        let sxy: f64 = lag.iter().zip(y).map(|(a, b)| a * b).sum();
        let a_ols = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let mu_ols = (sy - a_ols * sx) / n;
        assert!((a_ols - 0.5).abs() < 1e-12 && mu_ols.abs() < 1e-12);

        for method in [SolverMethod::Profile, SolverMethod::Accelerated] {
            let cfg = FitConfig {
                method,
                ..FitConfig::with_delta(0.0)
            };
            let r = fit(&s, &cfg).unwrap();
            assert!(r.converged);
            assert!((r.alpha()[0] - a_ols).abs() < 1e-6, "{method:?}");
            assert!((r.coefficients.mu - mu_ols).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_series_has_zero_residual() {
        let s = TimeSeries::from_raw(&[2.5; 21], 1).unwrap();
        for method in [SolverMethod::Profile, SolverMethod::Accelerated] {
            let cfg = FitConfig {
                method,
                ..FitConfig::with_delta(0.0)
            };
            let r = fit(&s, &cfg).unwrap();
            assert!(r.converged, "{method:?}");
            assert!(r.objective < 1e-20);
            assert!(r.rank_deficient);
        }
    }

    #[test]
    fn matches_slow_projected_gradient() {
        for seed in [11, 12, 13] {
            let s = random_series(seed, 20, 1);
            let want = projected_gradient_oracle(&s, 0.5, 1_000_000);
            for method in [SolverMethod::Profile, SolverMethod::Accelerated] {
                let cfg = FitConfig {
                    method,
                    ..FitConfig::with_delta(0.5)
                };
                let r = fit(&s, &cfg).unwrap();
                assert!(r.converged);
                assert!(
                    (r.objective - want).abs() < 1e-6,
                    "{} vs {want}",
                    r.objective
                );
            }
        }
    }

    #[test]
    fn matches_oracle_for_higher_order() {
        let s = random_series(21, 30, 3);
        let want = projected_gradient_oracle(&s, 1.0, 1_000_000);
        let r = fit(&s, &FitConfig::with_delta(1.0)).unwrap();
        assert!(
            (r.objective - want).abs() < 1e-6,
            "{} vs {want}",
            r.objective
        );
    }

    #[test]
    fn solvers_agree_on_drifting_series() {
        let s = drift_series(5, 400);
        let mut warm = None;
        for delta in [0.0, 0.3, 1.0, 3.0, 10.0] {
            let a = fit_warm(&s, &FitConfig::with_delta(delta), warm.as_ref()).unwrap();
            let cfg = FitConfig {
                method: SolverMethod::Accelerated,
                ..FitConfig::with_delta(delta)
            };
            let b = fit(&s, &cfg).unwrap();
            assert!(a.converged && b.converged);
            assert!((a.objective - b.objective).abs() < 1e-7 * (1.0 + a.objective));
            assert!((a.alpha()[0] - b.alpha()[0]).abs() < 1e-4);
            warm = Some(a);
        }
    }

    #[test]
    fn fixed_step_rule_converges() {
        let s = random_series(8, 40, 1);
        let a = fit(&s, &FitConfig::with_delta(0.7)).unwrap();
        let cfg = FitConfig {
            method: SolverMethod::Accelerated,
            step_rule: StepRule::FixedLipschitz,
            ..FitConfig::with_delta(0.7)
        };
        let b = fit(&s, &cfg).unwrap();
        assert!(b.converged);
        assert!((a.objective - b.objective).abs() < 1e-7);
    }

    #[test]
    fn finite_delta_s_is_respected() {
        let s = drift_series(9, 200);
        let free = fit(&s, &FitConfig::with_delta(2.0)).unwrap();
        let norm = (free.alpha()[0].powi(2) + free.coefficients.mu.powi(2)).sqrt();
        let cfg = FitConfig {
            delta_s: 0.5 * norm,
            ..FitConfig::with_delta(2.0)
        };
        let r = fit(&s, &cfg).unwrap();
        let got = (r.alpha()[0].powi(2) + r.coefficients.mu.powi(2)).sqrt();
        assert!(got <= 0.5 * norm * (1.0 + 1e-9));
        assert!(r.objective >= free.objective - 1e-12);
    }

    #[test]
    fn penalized_form_reproduces_the_budget() {
        for (seed, delta) in [(31, 1.0), (32, 2.5), (33, 0.4)] {
            let s = drift_series(seed, 300);
            let c = fit(&s, &FitConfig::with_delta(delta)).unwrap();
            assert!(c.multiplier > 0.0);
            assert!((l1(&c.coefficients.delta) - delta).abs() < 1e-9);
            let cfg = FitConfig {
                max_iters: 200_000,
                tol: 1e-12,
                ..FitConfig::default()
            };
            let p = fit_penalized(&s, c.multiplier, &cfg).unwrap();
            let got = l1(&p.coefficients.delta);
            assert!((got - delta).abs() < 1e-4, "{got} vs {delta}");
        }
    }

    #[test]
    fn negative_budget_is_rejected() {
        let s = random_series(1, 20, 1);
        assert!(fit(&s, &FitConfig::with_delta(-1.0)).is_err());
        assert!(fit_l2_variant(&s, &FitConfig::with_delta(-1.0)).is_err());
    }

    #[test]
    fn non_convergence_is_reported_not_raised() {
        let s = drift_series(2, 300);
        let cfg = FitConfig {
            max_iters: 2,
            method: SolverMethod::Accelerated,
            ..FitConfig::with_delta(3.0)
        };
        let r = fit(&s, &cfg).unwrap();
        assert!(!r.converged);
    }

    #[test]
    fn l2_variant_reduces_to_plain_fit_at_zero() {
        let s = random_series(4, 20, 1);
        let a = fit(&s, &FitConfig::with_delta(0.0)).unwrap();
        let b = fit_l2_variant(&s, &FitConfig::with_delta(0.0)).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-12);
        assert!((a.alpha()[0] - b.alpha()[0]).abs() < 1e-9);

        let c = fit_l2_variant(&s, &FitConfig::with_delta(0.5)).unwrap();
        assert!(c.converged);
        assert!(c.objective <= a.objective + 1e-12);
        let sq: f64 = c.coefficients.delta.iter().map(|d| d * d).sum();
        assert!(sq <= 0.5 * (1.0 + 1e-6));
    }

    #[test]
    fn l2_variant_solvers_agree() {
        let s = drift_series(6, 300);
        for delta in [0.05, 0.5, 5.0] {
            let a = fit_l2_variant(&s, &FitConfig::with_delta(delta)).unwrap();
            let cfg = FitConfig {
                method: SolverMethod::Accelerated,
                ..FitConfig::with_delta(delta)
            };
            let b = fit_l2_variant(&s, &cfg).unwrap();
            assert!(a.converged && b.converged);
            assert!((a.objective - b.objective).abs() < 1e-7 * (1.0 + a.objective));
        }
    }

    #[test]
    fn polynomial_degree_zero_equals_unconstrained_level() {
        let s = random_series(5, 30, 2);
        let a = fit(&s, &FitConfig::with_delta(0.0)).unwrap();
        let b = fit_polynomial_baseline(&s, 0).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-10);
        for (x, y) in a.alpha().iter().zip(b.alpha()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn polynomial_recovers_linear_background() {
        let t = 50;
        let values: Vec<f64> = (1..=t).map(|i| 3.0 * i as f64 / t as f64).collect();
        // x_0 off the line keeps the lag column independent of (1, t/T)
        let s = TimeSeries::new(values.clone(), vec![1.0]).unwrap();
        let r = fit_polynomial_baseline(&s, 1).unwrap();
        assert!(!r.rank_deficient);
        assert!(r.alpha()[0].abs() < 1e-8);
        assert!(r.residuals.iter().all(|v| v.abs() < 1e-8));
        assert!(fit_polynomial_baseline(&s, 48).is_err());

        let on_line = TimeSeries::new(values, vec![0.0]).unwrap();
        let r = fit_polynomial_baseline(&on_line, 1).unwrap();
        assert!(r.rank_deficient);
        assert!(r.residuals.iter().all(|v| v.abs() < 1e-8));
    }
}
