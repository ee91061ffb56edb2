//! Projection onto `{f : sum (f_{i+1} - f_i)^2 <= radius_sq}`.
//!
//! The projection is `f = (I + nu D^T D)^{-1} z` for the multiplier `nu` at
//! which the constraint is tight. `D^T D` is the path-graph Laplacian, so each
//! solve is a tridiagonal (Thomas) elimination.

pub fn squared_variation(f: &[f64]) -> f64 {
    f.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
}

/// Solves `(I + nu L) out = rhs` with `L` the path Laplacian.
fn solve_shifted_laplacian(nu: f64, rhs: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
    let n = rhs.len();
    if n == 1 {
        out[0] = rhs[0];
        return;
    }
    let diag = |i: usize| 1.0 + nu * if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
    let off = -nu;
    scratch.clear();
    scratch.resize(n, 0.0);
    // forward sweep: scratch holds the modified super-diagonal
    let mut denom = diag(0);
    scratch[0] = off / denom;
    out[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag(i) - off * scratch[i - 1];
        if i < n - 1 {
            scratch[i] = off / denom;
        }
        out[i] = (rhs[i] - off * out[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        out[i] -= scratch[i] * out[i + 1];
    }
}

fn laplacian_apply(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|i| {
            let mut v = 0.0;
            if i > 0 {
                v += f[i] - f[i - 1];
            }
            if i + 1 < n {
                v += f[i] - f[i + 1];
            }
            v
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SmoothProjection {
    pub f: Vec<f64>,
    /// Multiplier `nu`; zero when inactive, `+inf` for radius zero.
    pub nu: f64,
    /// `u = (I + nu L)^{-1} L f` and `f^T L u`, used by the Jacobian.
    sensitivity: Option<(Vec<f64>, f64)>,
}

impl SmoothProjection {
    pub fn jacobian_apply(&self, v: &[f64]) -> Vec<f64> {
        let n = v.len();
        if self.nu == 0.0 {
            return v.to_vec();
        }
        if !self.nu.is_finite() {
            let mean = v.iter().sum::<f64>() / n as f64;
            return vec![mean; n];
        }
        let mut out = vec![0.0; n];
        let mut scratch = Vec::new();
        solve_shifted_laplacian(self.nu, v, &mut out, &mut scratch);
        if let Some((u, denom)) = &self.sensitivity {
            let coef: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / denom;
            out.iter_mut().zip(u).for_each(|(o, ui)| *o -= coef * ui);
        }
        out
    }
}

pub fn project_smooth_ball(z: &[f64], radius_sq: f64) -> SmoothProjection {
    let n = z.len();
    if n <= 1 || squared_variation(z) <= radius_sq {
        return SmoothProjection {
            f: z.to_vec(),
            nu: 0.0,
            sensitivity: None,
        };
    }
    if radius_sq == 0.0 {
        let mean = z.iter().sum::<f64>() / n as f64;
        return SmoothProjection {
            f: vec![mean; n],
            nu: f64::INFINITY,
            sensitivity: None,
        };
    }
    let mut buf = vec![0.0; n];
    let mut scratch = Vec::new();
    let target = 1.0 / radius_sq.sqrt();
    // psi is increasing in nu and close to linear.
    let mut psi = |nu: f64, buf: &mut [f64]| {
        solve_shifted_laplacian(nu, z, buf, &mut scratch);
        let sv = squared_variation(buf);
        (
            sv,
            if sv > 0.0 {
                1.0 / sv.sqrt() - target
            } else {
                f64::INFINITY
            },
        )
    };
    let (mut lo, mut p_lo) = (0.0, 1.0 / squared_variation(z).sqrt() - target);
    let mut hi = 1.0;
    let mut p_hi = psi(hi, &mut buf).1;
    while p_hi < 0.0 {
        lo = hi;
        p_lo = p_hi;
        hi *= 4.0;
        p_hi = psi(hi, &mut buf).1;
    }
    let mut best = hi;
    let mut side = 0i8;
    for _ in 0..200 {
        let c = if p_hi.is_finite() {
            hi - p_hi * (hi - lo) / (p_hi - p_lo)
        } else {
            0.5 * (lo + hi)
        };
        let c = if c > lo && c < hi { c } else { 0.5 * (lo + hi) };
        let (sv, p) = psi(c, &mut buf);
        if p >= 0.0 {
            best = c;
            if sv >= radius_sq * (1.0 - 1e-13) {
                break;
            }
            hi = c;
            p_hi = p;
            if side == 1 {
                p_lo *= 0.5;
            }
            side = 1;
        } else {
            lo = c;
            p_lo = p;
            if side == -1 {
                p_hi *= 0.5;
            }
            side = -1;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let nu = best;
    solve_shifted_laplacian(nu, z, &mut buf, &mut scratch);
    let lf = laplacian_apply(&buf);
    let mut u = vec![0.0; n];
    solve_shifted_laplacian(nu, &lf, &mut u, &mut scratch);
    let denom: f64 = lf.iter().zip(&u).map(|(a, b)| a * b).sum();
    SmoothProjection {
        f: buf,
        nu,
        sensitivity: (denom > 0.0).then_some((u, denom)),
    }
}
