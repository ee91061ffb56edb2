//! Accelerated projected gradient on the `Delta` block.
//!
//! The `(alpha, mu)` block is minimised exactly for every candidate `Delta`
//! (a `(p+1)`-dimensional least-squares problem, optionally restricted to a
//! Euclidean ball), which leaves a smooth convex function of `Delta`. FISTA
//! with backtracking and function-value restart is run on that function; the
//! step size is initialised from a power-iteration estimate of the largest
//! eigenvalue of the reduced Hessian.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{project_l1_in_place, project_l2_in_place, FitResult, StepRule, GAP_TOL};
use crate::model::{reverse_cumsum, Coefficients, TimeSeries};

fn soft_threshold_in_place(v: &mut [f64], threshold: f64) {
    for x in v.iter_mut() {
        *x = (x.abs() - threshold).max(0.0).copysign(*x);
    }
}

/// Constraint (or penalty) applied to the `Delta` block.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Regulariser {
    L1Ball(f64),
    L2Ball(f64),
    L1Penalty(f64),
}

impl Regulariser {
    pub(crate) fn apply(&self, v: &mut [f64], step: f64, scratch: &mut Vec<f64>) {
        match *self {
            Regulariser::L1Ball(r) => project_l1_in_place(v, r, scratch),
            Regulariser::L2Ball(r) => project_l2_in_place(v, r),
            Regulariser::L1Penalty(lambda) => soft_threshold_in_place(v, step * lambda),
        }
    }

    /// Frank-Wolfe gap `max_{u in C} <g, delta - u>`; for the penalised form,
    /// the norm of the proximal-gradient mapping.
    pub(crate) fn gap(&self, delta: &[f64], grad: &[f64]) -> f64 {
        let inner: f64 = delta.iter().zip(grad).map(|(d, g)| d * g).sum();
        match *self {
            Regulariser::L1Ball(r) => {
                let gmax = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
                (inner + r * gmax).max(0.0)
            }
            Regulariser::L2Ball(r) => {
                let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                (inner + r * gnorm).max(0.0)
            }
            Regulariser::L1Penalty(lambda) => delta
                .iter()
                .zip(grad)
                .map(|(d, g)| {
                    let moved = (d - g).abs() - lambda;
                    let prox = moved.max(0.0).copysign(d - g);
                    (d - prox).abs()
                })
                .fold(0.0, f64::max),
        }
    }

    pub(crate) fn penalty(&self, delta: &[f64]) -> f64 {
        match *self {
            Regulariser::L1Penalty(lambda) => lambda * delta.iter().map(|d| d.abs()).sum::<f64>(),
            _ => 0.0,
        }
    }

    pub(crate) fn multiplier(&self, delta: &[f64], grad: &[f64]) -> f64 {
        match *self {
            Regulariser::L1Ball(r) => {
                let norm: f64 = delta.iter().map(|d| d.abs()).sum();
                if r > 0.0 && norm >= r * (1.0 - 1e-9) {
                    grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()))
                } else {
                    0.0
                }
            }
            Regulariser::L2Ball(r) => {
                let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
                if r > 0.0 && norm >= r * (1.0 - 1e-9) {
                    // grad = -2 nu Delta for the constraint ||Delta||^2 <= r^2
                    grad.iter().map(|g| g * g).sum::<f64>().sqrt() / (2.0 * r)
                } else {
                    0.0
                }
            }
            Regulariser::L1Penalty(lambda) => lambda,
        }
    }
}

/// Exact minimiser of the `(alpha, mu)` block for a fixed background shape.
struct FreeBlock {
    /// Lag columns followed by the all-ones column.
    columns: Vec<Vec<f64>>,
    eigvecs: DMatrix<f64>,
    /// Eigenvalues of `Z^T Z`; entries below the rank threshold are zeroed.
    eigvals: Vec<f64>,
    rank_deficient: bool,
    radius: f64,
}

impl FreeBlock {
    fn new(series: &TimeSeries, radius: f64) -> Self {
        let mut columns = series.lag_columns();
        columns.push(vec![1.0; series.len()]);
        let m = columns.len();
        let gram = DMatrix::from_fn(m, m, |a, b| dot(&columns[a], &columns[b]));
        let eig = SymmetricEigen::new(gram);
        let top = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        let threshold = top * 1e-12 * m as f64;
        let mut rank_deficient = false;
        let eigvals = eig
            .eigenvalues
            .iter()
            .map(|&l| {
                if l > threshold {
                    l
                } else {
                    rank_deficient = true;
                    0.0
                }
            })
            .collect();
        Self {
            columns,
            eigvecs: eig.eigenvectors,
            eigvals,
            rank_deficient,
            radius,
        }
    }

    /// Minimum-norm solution of `min ||target - Z theta||` subject to
    /// `||theta|| <= radius`. Returns `theta` and overwrites `target` with the
    /// residual.
    fn solve(&self, target: &mut [f64]) -> Vec<f64> {
        let m = self.columns.len();
        let b = DVector::from_iterator(m, self.columns.iter().map(|c| dot(c, target)));
        let c = self.eigvecs.tr_mul(&b);
        let coords = |nu: f64| -> DVector<f64> {
            DVector::from_iterator(
                m,
                c.iter().zip(&self.eigvals).map(|(ci, li)| {
                    let denom = li + nu;
                    if denom > 0.0 {
                        ci / denom
                    } else {
                        0.0
                    }
                }),
            )
        };
        let mut w = coords(0.0);
        if self.radius.is_finite() && w.norm() > self.radius {
            let mut lo = 0.0;
            let mut hi = c.norm() / self.radius;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if coords(mid).norm() > self.radius {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            w = coords(hi);
        }
        let theta = &self.eigvecs * w;
        for (col, th) in self.columns.iter().zip(theta.iter()) {
            if *th != 0.0 {
                for (t, v) in target.iter_mut().zip(col) {
                    *t -= th * v;
                }
            }
        }
        theta.iter().copied().collect()
    }

    /// Unconstrained projection onto the orthogonal complement of `Z`.
    fn project_out(&self, v: &mut [f64]) {
        let m = self.columns.len();
        let b = DVector::from_iterator(m, self.columns.iter().map(|c| dot(c, v)));
        let c = self.eigvecs.tr_mul(&b);
        let w = DVector::from_iterator(
            m,
            c.iter()
                .zip(&self.eigvals)
                .map(|(ci, li)| if *li > 0.0 { ci / li } else { 0.0 }),
        );
        let theta = &self.eigvecs * w;
        for (col, th) in self.columns.iter().zip(theta.iter()) {
            for (t, x) in v.iter_mut().zip(col) {
                *t -= th * x;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Reduced problem in `Delta` only.
struct Reduced<'a> {
    series: &'a TimeSeries,
    free: FreeBlock,
    inv_t: f64,
}

struct Point {
    theta: Vec<f64>,
    residual: Vec<f64>,
    objective: f64,
}

impl<'a> Reduced<'a> {
    fn new(series: &'a TimeSeries, delta_s: f64) -> Self {
        Self {
            series,
            free: FreeBlock::new(series, delta_s),
            inv_t: 1.0 / series.len() as f64,
        }
    }

    fn evaluate(&self, delta: &[f64]) -> Point {
        let x = self.series.values();
        let mut residual = Vec::with_capacity(x.len());
        let mut level = 0.0;
        residual.push(x[0]);
        for (xi, d) in x[1..].iter().zip(delta) {
            level += d;
            residual.push(xi - level);
        }
        let theta = self.free.solve(&mut residual);
        let objective = 0.5 * self.inv_t * dot(&residual, &residual);
        Point {
            theta,
            residual,
            objective,
        }
    }

    /// Gradient with respect to `Delta_2..Delta_T`.
    fn gradient(&self, residual: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let tail = reverse_cumsum(residual);
        out.extend(tail[1..].iter().map(|v| -v * self.inv_t));
    }

    /// Power iteration for the largest eigenvalue of the reduced Hessian.
    fn lipschitz_estimate(&self, iterations: usize) -> f64 {
        let n = self.series.len() - 1;
        if n == 0 {
            return 1.0;
        }
        let mut v: Vec<f64> = (0..n).map(|k| 1.0 + (k % 7) as f64 * 0.1).collect();
        let mut estimate = 1.0;
        let mut grad = Vec::with_capacity(n);
        for _ in 0..iterations {
            let norm = dot(&v, &v).sqrt();
            if norm == 0.0 {
                break;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            // Hessian-vector product: evaluate the gradient of the quadratic
            // without the data term.
            let mut shape = Vec::with_capacity(n + 1);
            let mut level = 0.0;
            shape.push(0.0);
            for d in &v {
                level += d;
                shape.push(-level);
            }
            self.free.project_out(&mut shape);
            self.gradient(&shape, &mut grad);
            estimate = dot(&grad, &v);
            v.clone_from(&grad);
        }
        estimate.max(self.inv_t)
    }
}

/// Window over which the relative objective change is measured.
const STALL_WINDOW: usize = 10;

pub(crate) struct Settings {
    pub max_iters: usize,
    pub tol: f64,
    pub step_rule: StepRule,
}

pub(crate) fn run(
    series: &TimeSeries,
    reg: Regulariser,
    delta_s: f64,
    settings: Settings,
    warm: Option<&[f64]>,
) -> FitResult {
    let problem = Reduced::new(series, delta_s);
    let n = series.len() - 1;
    let mut scratch = Vec::new();

    let mut x: Vec<f64> = match warm {
        Some(w) if w.len() == n => w.to_vec(),
        _ => vec![0.0; n],
    };
    if !matches!(reg, Regulariser::L1Penalty(_)) {
        reg.apply(&mut x, 0.0, &mut scratch);
    }
    let mut px = problem.evaluate(&x);
    let mut fx = px.objective + reg.penalty(&x);
    let mut grad = Vec::with_capacity(n);
    problem.gradient(&px.residual, &mut grad);

    let trivial = match reg {
        Regulariser::L1Ball(r) | Regulariser::L2Ball(r) => r == 0.0,
        Regulariser::L1Penalty(_) => false,
    } || n == 0;

    let lipschitz = if trivial {
        1.0
    } else {
        problem.lipschitz_estimate(20)
    };
    let mut step = match settings.step_rule {
        StepRule::Backtracking => 1.0 / lipschitz,
        StepRule::FixedLipschitz => 1.0 / (1.05 * lipschitz),
    };

    let mut trace = vec![fx];
    let mut iterations = 0;
    let mut converged = trivial;
    let mut y = x.clone();
    let mut grad_y = grad.clone();
    let mut fy_smooth = px.objective;
    let mut momentum = 1.0_f64;
    let mut cand = vec![0.0; n];
    let mut diff = vec![0.0; n];

    while !converged && iterations < settings.max_iters {
        iterations += 1;

        let (mut pc, mut fc) = proximal_step(
            &problem,
            reg,
            &y,
            &grad_y,
            fy_smooth,
            &mut step,
            settings.step_rule,
            &mut cand,
            &mut scratch,
        );

        if fc > fx {
            // Restart: drop momentum and take a plain step from x.
            momentum = 1.0;
            y.clone_from(&x);
            grad_y.clone_from(&grad);
            fy_smooth = px.objective;
            let (p2, f2) = proximal_step(
                &problem,
                reg,
                &y,
                &grad_y,
                fy_smooth,
                &mut step,
                StepRule::Backtracking,
                &mut cand,
                &mut scratch,
            );
            pc = p2;
            fc = f2;
            if fc > fx {
                // No descent is possible at machine precision.
                trace.push(fx);
                converged = stalled(&trace, settings.tol)
                    && reg.gap(&x, &grad) <= GAP_TOL * (1.0 + fx.abs());
                if !converged && step < 1e-30 {
                    break;
                }
                continue;
            }
        }

        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next_momentum;
        momentum = next_momentum;

        for ((d, c), xo) in diff.iter_mut().zip(&cand).zip(&x) {
            *d = c - xo;
        }
        std::mem::swap(&mut x, &mut cand);
        px = pc;
        fx = fc;
        problem.gradient(&px.residual, &mut grad);
        trace.push(fx);

        if beta > 0.0 {
            for ((yi, xi), d) in y.iter_mut().zip(&x).zip(&diff) {
                *yi = xi + beta * d;
            }
            let py = problem.evaluate(&y);
            fy_smooth = py.objective;
            problem.gradient(&py.residual, &mut grad_y);
        } else {
            y.clone_from(&x);
            grad_y.clone_from(&grad);
            fy_smooth = px.objective;
        }

        if stalled(&trace, settings.tol) {
            let gap = reg.gap(&x, &grad);
            converged = gap <= GAP_TOL * (1.0 + fx.abs());
        }
    }

    let kkt_gap = reg.gap(&x, &grad);
    let multiplier = reg.multiplier(&x, &grad);
    let p = series.order();
    let coefficients = Coefficients {
        alpha: px.theta[..p].to_vec(),
        mu: px.theta[p],
        delta: x,
    };
    FitResult {
        coefficients,
        residuals: px.residual,
        objective: px.objective,
        iterations,
        converged,
        kkt_gap,
        multiplier,
        rank_deficient: problem.free.rank_deficient,
        trace,
    }
}

fn stalled(trace: &[f64], tol: f64) -> bool {
    if trace.len() <= STALL_WINDOW {
        return false;
    }
    let now = trace[trace.len() - 1];
    let then = trace[trace.len() - 1 - STALL_WINDOW];
    (then - now).abs() <= tol * (1.0 + now.abs())
}

#[allow(clippy::too_many_arguments)]
fn proximal_step(
    problem: &Reduced<'_>,
    reg: Regulariser,
    y: &[f64],
    grad_y: &[f64],
    fy_smooth: f64,
    step: &mut f64,
    rule: StepRule,
    cand: &mut [f64],
    scratch: &mut Vec<f64>,
) -> (Point, f64) {
    loop {
        for ((c, yi), g) in cand.iter_mut().zip(y).zip(grad_y) {
            *c = yi - *step * g;
        }
        reg.apply(cand, *step, scratch);
        let pc = problem.evaluate(cand);
        if rule == StepRule::FixedLipschitz {
            let f = pc.objective + reg.penalty(cand);
            return (pc, f);
        }
        let mut lin = 0.0;
        let mut quad = 0.0;
        for ((c, yi), g) in cand.iter().zip(y).zip(grad_y) {
            let d = c - yi;
            lin += g * d;
            quad += d * d;
        }
        let model = fy_smooth + lin + quad / (2.0 * *step);
        if pc.objective <= model + 1e-12 * fy_smooth.abs() || *step < 1e-30 {
            let f = pc.objective + reg.penalty(cand);
            return (pc, f);
        }
        *step *= 0.5;
    }
}
