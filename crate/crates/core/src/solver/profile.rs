//! Profile solver: the background is projected out exactly, leaving a smooth
//! convex function of the `p` AR coefficients.
//!
//! For fixed `alpha` the best background is the Euclidean projection of
//! `z = x - A alpha` onto the constraint set `C`, so the objective becomes
//!
//! ```text
//! g(alpha) = (1/2T) dist(x - A alpha, C)^2,   grad g = -(1/T) A^T (z - P_C z).
//! ```
//!
//! `P_C` is piecewise affine, hence `g` is piecewise quadratic; Newton steps
//! with the exact Hessian of the current piece and an Armijo line search
//! converge in a handful of iterations.

use nalgebra::{DMatrix, DVector};

use super::smooth::{project_smooth_ball, SmoothProjection};
use super::tv::{project_tv_ball, TvProjection};
use crate::model::TimeSeries;

#[derive(Debug, Clone, Copy)]
pub(crate) enum Ball {
    /// `sum |Delta_i| <= radius`.
    TotalVariation(f64),
    /// `sum Delta_i^2 <= radius_sq`.
    Smooth(f64),
}

enum Projection {
    Tv(TvProjection),
    Smooth(SmoothProjection),
}

impl Projection {
    fn background(&self) -> &[f64] {
        match self {
            Projection::Tv(p) => &p.f,
            Projection::Smooth(p) => &p.f,
        }
    }

    fn jacobian_apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Projection::Tv(p) => p.jacobian_apply(v),
            Projection::Smooth(p) => p.jacobian_apply(v),
        }
    }

    /// Multiplier of the constraint in the `(1/2T)` scaled objective.
    fn multiplier(&self, t: f64) -> f64 {
        let raw = match self {
            Projection::Tv(p) => p.lambda,
            Projection::Smooth(p) => 0.5 * p.nu,
        };
        if raw.is_finite() {
            raw / t
        } else {
            raw
        }
    }
}

impl Ball {
    fn project(&self, z: &[f64]) -> Projection {
        match *self {
            Ball::TotalVariation(r) => Projection::Tv(project_tv_ball(z, r)),
            Ball::Smooth(r2) => Projection::Smooth(project_smooth_ball(z, r2)),
        }
    }
}

pub(crate) struct ProfileOutcome {
    pub alpha: Vec<f64>,
    pub background: Vec<f64>,
    pub residuals: Vec<f64>,
    pub objective: f64,
    pub multiplier: f64,
    pub iterations: usize,
    pub stationary: bool,
    /// The Hessian of the final piece is singular, so `alpha` is not unique.
    pub degenerate: bool,
    pub trace: Vec<f64>,
}

struct Eval {
    projection: Projection,
    residual: Vec<f64>,
    objective: f64,
    grad: Vec<f64>,
}

struct Profile<'a> {
    x: &'a [f64],
    lags: Vec<Vec<f64>>,
    ball: Ball,
    inv_t: f64,
}

impl Profile<'_> {
    fn evaluate(&self, alpha: &[f64]) -> Eval {
        let mut z = self.x.to_vec();
        for (a, col) in alpha.iter().zip(&self.lags) {
            for (zi, c) in z.iter_mut().zip(col) {
                *zi -= a * c;
            }
        }
        let projection = self.ball.project(&z);
        let residual: Vec<f64> = z
            .iter()
            .zip(projection.background())
            .map(|(a, b)| a - b)
            .collect();
        let objective = 0.5 * self.inv_t * dot(&residual, &residual);
        let grad = self
            .lags
            .iter()
            .map(|col| -self.inv_t * dot(col, &residual))
            .collect();
        Eval {
            projection,
            residual,
            objective,
            grad,
        }
    }

    /// Hessian of the current quadratic piece, `(1/T) A^T (I - J) A`.
    fn hessian(&self, at: &Eval) -> DMatrix<f64> {
        let p = self.lags.len();
        let mut h = DMatrix::zeros(p, p);
        for k in 0..p {
            let jv = at.projection.jacobian_apply(&self.lags[k]);
            let col: Vec<f64> = self.lags[k].iter().zip(&jv).map(|(a, b)| a - b).collect();
            for j in 0..p {
                h[(j, k)] = self.inv_t * dot(&self.lags[j], &col);
            }
        }
        0.5 * (&h + h.transpose())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Relative gradient tolerance for stationarity.
const GRAD_RTOL: f64 = 1e-10;

pub(crate) fn solve(
    series: &TimeSeries,
    ball: Ball,
    max_iters: usize,
    tol: f64,
    start: Option<&[f64]>,
) -> ProfileOutcome {
    let p = series.order();
    let t = series.len() as f64;
    let problem = Profile {
        x: series.values(),
        lags: series.lag_columns(),
        ball,
        inv_t: 1.0 / t,
    };
    let lag_scale = problem
        .lags
        .iter()
        .map(|c| dot(c, c) * problem.inv_t)
        .fold(0.0_f64, f64::max)
        .sqrt();
    // Fallback gradient step 1/L with L the largest eigenvalue bound of A^T A / T.
    let lipschitz = (p as f64 * lag_scale * lag_scale).max(f64::MIN_POSITIVE);

    let mut alpha: Vec<f64> = match start {
        Some(a) if a.len() == p && a.iter().all(|v| v.is_finite()) => a.to_vec(),
        _ => vec![0.0; p],
    };
    let mut cur = problem.evaluate(&alpha);
    let mut trace = vec![cur.objective];
    let mut iterations = 0;
    let mut stationary = false;

    while iterations < max_iters {
        let gnorm = cur.grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        let rms_resid = (2.0 * cur.objective).sqrt();
        if gnorm <= GRAD_RTOL * lag_scale * rms_resid + 1e-300 {
            stationary = true;
            break;
        }
        iterations += 1;

        let g = DVector::from_column_slice(&cur.grad);
        let h = problem.hessian(&cur);
        let newton = h
            .clone()
            .cholesky()
            .map(|c| -c.solve(&g))
            .filter(|d| d.iter().all(|v| v.is_finite()) && d.dot(&g) < 0.0);
        let direction = newton.unwrap_or_else(|| -&g / lipschitz);
        let slope = direction.dot(&g);

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = alpha
                .iter()
                .zip(direction.iter())
                .map(|(a, d)| a + step * d)
                .collect();
            let next = problem.evaluate(&trial);
            if next.objective <= cur.objective + 1e-4 * step * slope {
                accepted = Some((trial, next));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, next)) = accepted else {
            // No decrease at machine precision.
            stationary = true;
            break;
        };
        let change = cur.objective - next.objective;
        let moved = trial
            .iter()
            .zip(&alpha)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        alpha = trial;
        cur = next;
        trace.push(cur.objective);
        if change <= tol * 1e-6 * (1.0 + cur.objective.abs())
            && moved <= 1e-13 * (1.0 + alpha.iter().fold(0.0_f64, |m, a| m.max(a.abs())))
        {
            stationary = true;
            break;
        }
    }

    let hessian = problem.hessian(&cur);
    let scale = hessian.trace().abs().max(f64::MIN_POSITIVE);
    let degenerate = hessian.symmetric_eigenvalues().min() <= 1e-12 * scale;
    let multiplier = cur.projection.multiplier(t);
    let background = match cur.projection {
        Projection::Tv(p) => p.f,
        Projection::Smooth(p) => p.f,
    };
    ProfileOutcome {
        alpha,
        background,
        residuals: cur.residual,
        objective: cur.objective,
        multiplier,
        iterations,
        stationary,
        degenerate,
        trace,
    }
}
