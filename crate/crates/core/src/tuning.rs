//! Choosing the budget `delta` by maximising a residual whiteness p-value.
//!
//! Every candidate `delta` is fitted, its residuals are (optionally)
//! log-transformed and tested for autocorrelation; the budget whose residuals
//! look most like white noise wins. Two search strategies are provided: an
//! exhaustive `epsilon`-grid and golden-section search, which assumes the
//! p-value is unimodal in `delta`.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{durbin_watson, ljung_box, shifted_log_transform, PortmanteauTest};
use crate::error::{contract, Result};
use crate::model::TimeSeries;
use crate::solver::{fit_l2_variant_warm, fit_warm, FitConfig, FitResult};

/// Inverse golden ratio.
pub const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TuneMethod {
    #[default]
    Grid,
    Golden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    #[default]
    None,
    ShiftedLog,
}

/// Which budget constraint is being tuned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    /// `sum |Delta_i| <= delta`.
    #[default]
    TotalVariation,
    /// `sum Delta_i^2 <= delta`.
    SquaredVariation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub delta_lo: f64,
    pub delta_hi: f64,
    /// Grid spacing, or the final bracket width for golden-section search.
    pub epsilon: f64,
    pub method: TuneMethod,
    pub test: PortmanteauTest,
    /// Ljung-Box lag; `None` uses the autoregressive order.
    pub lags: Option<usize>,
    pub transform: Transform,
    pub constraint: Constraint,
}

impl TuneConfig {
    pub fn new(delta_lo: f64, delta_hi: f64) -> Self {
        Self {
            delta_lo,
            delta_hi,
            epsilon: 0.04,
            method: TuneMethod::Grid,
            test: PortmanteauTest::LjungBox,
            lags: None,
            transform: Transform::None,
            constraint: Constraint::TotalVariation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_lo >= 0.0 && self.delta_lo < self.delta_hi && self.delta_hi.is_finite()) {
            return Err(contract(format!(
                "tuning interval must satisfy 0 <= lo < hi < inf, got [{}, {}]",
                self.delta_lo, self.delta_hi
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(contract(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.lags == Some(0) {
            return Err(contract("lags must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub delta: f64,
    pub p_value: f64,
    pub alpha_hat: Vec<f64>,
    /// False when the fit did not converge; `p_value` is then 0.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub delta_star: f64,
    pub p_star: f64,
    /// Evaluated points in evaluation order.
    pub trace: Vec<TracePoint>,
    pub evaluations: usize,
    /// Fit at `delta_star`. For golden-section search this is an extra fit at
    /// the bracket midpoint, not counted in `evaluations`.
    pub fit: FitResult,
    /// Number of evaluated points whose fit did not converge.
    pub nonconverged: usize,
}

impl TuneResult {
    pub fn alpha_star(&self) -> &[f64] {
        self.fit.alpha()
    }
}

/// Number of grid intervals, `floor((hi - lo) / eps)`, robust to the rounding
/// of exact multiples.
pub fn grid_intervals(lo: f64, hi: f64, epsilon: f64) -> usize {
    ((hi - lo) / epsilon + 1e-9).floor() as usize
}

/// Maximises `f` over `lo + j eps`, `j = 0..=n`. Returns the arg max (ties go to
/// the smaller argument), the maximum and every `(x, f(x))` pair.
pub fn grid_max(
    lo: f64,
    hi: f64,
    epsilon: f64,
    mut f: impl FnMut(f64) -> f64,
) -> (f64, f64, Vec<(f64, f64)>) {
    let n = grid_intervals(lo, hi, epsilon);
    let trace: Vec<(f64, f64)> = (0..=n)
        .map(|j| {
            let x = lo + j as f64 * epsilon;
            (x, f(x))
        })
        .collect();
    let (x, y) = best_of(&trace);
    (x, y, trace)
}

fn best_of(trace: &[(f64, f64)]) -> (f64, f64) {
    let mut best = trace[0];
    for &(x, y) in &trace[1..] {
        if y > best.1 || (y == best.1 && x < best.0) {
            best = (x, y);
        }
    }
    best
}

/// Golden-section maximisation of `f` on `[lo, hi]` until the bracket is
/// narrower than `epsilon`. Returns the final bracket midpoint, the best value
/// seen and every `(x, f(x))` pair in evaluation order.
pub fn golden_section_max(
    lo: f64,
    hi: f64,
    epsilon: f64,
    mut f: impl FnMut(f64) -> f64,
) -> (f64, f64, Vec<(f64, f64)>) {
    let (mut a, mut b) = (lo, hi);
    let mut trace = Vec::new();
    let mut eval = |x: f64, trace: &mut Vec<(f64, f64)>| {
        let y = f(x);
        trace.push((x, y));
        y
    };
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = eval(c, &mut trace);
    let mut fd = eval(d, &mut trace);
    while b - a >= epsilon {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = eval(c, &mut trace);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = eval(d, &mut trace);
        }
    }
    let (_, best) = best_of(&trace);
    (0.5 * (a + b), best, trace)
}

/// Fits at one budget and scores the residuals.
struct Scorer<'a> {
    series: &'a TimeSeries,
    cfg: &'a TuneConfig,
    fitcfg: FitConfig,
    lags: usize,
    warm: Option<FitResult>,
    points: Vec<TracePoint>,
    fits: Vec<FitResult>,
}

impl<'a> Scorer<'a> {
    fn new(series: &'a TimeSeries, cfg: &'a TuneConfig, fitcfg: &FitConfig) -> Result<Self> {
        cfg.validate()?;
        fitcfg.validate()?;
        let lags = cfg.lags.unwrap_or(series.order());
        if lags >= series.len() {
            return Err(contract(format!(
                "lags {lags} must be smaller than the series length {}",
                series.len()
            )));
        }
        Ok(Self {
            series,
            cfg,
            fitcfg: *fitcfg,
            lags,
            warm: None,
            points: Vec::new(),
            fits: Vec::new(),
        })
    }

    fn fit(&self, delta: f64) -> FitResult {
        let cfg = FitConfig {
            delta,
            ..self.fitcfg
        };
        let out = match self.cfg.constraint {
            Constraint::TotalVariation => fit_warm(self.series, &cfg, self.warm.as_ref()),
            Constraint::SquaredVariation => {
                fit_l2_variant_warm(self.series, &cfg, self.warm.as_ref())
            }
        };
        out.expect("tuning budgets are validated before fitting")
    }

    fn score(&mut self, delta: f64) -> f64 {
        let fit = self.fit(delta);
        let p = if fit.converged {
            p_value(&fit.residuals, self.cfg, self.lags)
        } else {
            0.0
        };
        self.points.push(TracePoint {
            delta,
            p_value: p,
            alpha_hat: fit.alpha().to_vec(),
            converged: fit.converged,
        });
        self.warm = Some(fit.clone());
        self.fits.push(fit);
        p
    }
}

/// p-value of the configured whiteness test on (transformed) residuals.
/// Residuals the transform cannot handle score 0.
pub fn p_value(residuals: &[f64], cfg: &TuneConfig, lags: usize) -> f64 {
    let transformed;
    let r = match cfg.transform {
        Transform::None => residuals,
        Transform::ShiftedLog => match shifted_log_transform(residuals) {
            Ok(v) => {
                transformed = v;
                &transformed
            }
            Err(_) => return 0.0,
        },
    };
    let result = match cfg.test {
        PortmanteauTest::LjungBox => ljung_box(r, lags),
        PortmanteauTest::DurbinWatson => durbin_watson(r),
    };
    result.map(|t| t.p_value).unwrap_or(0.0)
}

/// Exhaustive search over `delta_lo + j epsilon`, warm-starting each fit from
/// the previous one.
pub fn tune_grid(series: &TimeSeries, cfg: &TuneConfig, fitcfg: &FitConfig) -> Result<TuneResult> {
    let mut scorer = Scorer::new(series, cfg, fitcfg)?;
    let (delta_star, p_star, _) =
        grid_max(cfg.delta_lo, cfg.delta_hi, cfg.epsilon, |d| scorer.score(d));
    let idx = scorer
        .points
        .iter()
        .position(|p| p.delta == delta_star && p.p_value == p_star)
        .expect("grid optimum is a trace point");
    let fit = scorer.fits.swap_remove(idx);
    Ok(finish(scorer.points, delta_star, p_star, fit))
}

/// Scores an explicit list of budgets in the given order (warm-started), and
/// returns the best one; ties go to the smaller budget. The interval and
/// method fields of `cfg` are ignored.
pub fn tune_over(
    series: &TimeSeries,
    deltas: &[f64],
    cfg: &TuneConfig,
    fitcfg: &FitConfig,
) -> Result<TuneResult> {
    if deltas.is_empty() || deltas.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
        return Err(contract(
            "budgets must be a nonempty list of finite nonnegative values",
        ));
    }
    let probe = TuneConfig {
        delta_lo: 0.0,
        delta_hi: 1.0,
        epsilon: 1.0,
        ..*cfg
    };
    let mut scorer = Scorer::new(series, &probe, fitcfg)?;
    let scored: Vec<(f64, f64)> = deltas.iter().map(|&d| (d, scorer.score(d))).collect();
    let (delta_star, p_star) = best_of(&scored);
    let idx = scored
        .iter()
        .position(|&(d, p)| d == delta_star && p == p_star)
        .expect("optimum is a scored point");
    let fit = scorer.fits.swap_remove(idx);
    Ok(finish(scorer.points, delta_star, p_star, fit))
}

/// Golden-section search on `[delta_lo, delta_hi]`.
pub fn tune_golden(
    series: &TimeSeries,
    cfg: &TuneConfig,
    fitcfg: &FitConfig,
) -> Result<TuneResult> {
    let mut scorer = Scorer::new(series, cfg, fitcfg)?;
    let (delta_star, p_star, _) =
        golden_section_max(cfg.delta_lo, cfg.delta_hi, cfg.epsilon, |d| scorer.score(d));
    let fit = scorer.fit(delta_star);
    Ok(finish(scorer.points, delta_star, p_star, fit))
}

/// Dispatches on `cfg.method`.
pub fn tune(series: &TimeSeries, cfg: &TuneConfig, fitcfg: &FitConfig) -> Result<TuneResult> {
    match cfg.method {
        TuneMethod::Grid => tune_grid(series, cfg, fitcfg),
        TuneMethod::Golden => tune_golden(series, cfg, fitcfg),
    }
}

fn finish(trace: Vec<TracePoint>, delta_star: f64, p_star: f64, fit: FitResult) -> TuneResult {
    let nonconverged = trace.iter().filter(|p| !p.converged).count();
    TuneResult {
        delta_star,
        p_star,
        evaluations: trace.len(),
        trace,
        fit,
        nonconverged,
    }
}
