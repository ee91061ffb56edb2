//! Projection onto the total-variation ball `{f : sum |f_{i+1} - f_i| <= radius}`.
//!
//! The projection is the 1-D TV-denoising proximal map at the weight `lambda`
//! for which the denoised signal has total variation exactly `radius`. The
//! proximal map is computed with Condat's direct algorithm and `lambda` is
//! located by a bracketed Illinois iteration (the TV of the denoised signal is
//! piecewise linear in `lambda`, so the iteration terminates quickly).

/// `sum |f_{i+1} - f_i|`.
pub fn total_variation(f: &[f64]) -> f64 {
    f.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Exact minimiser of `0.5 ||f - input||^2 + lambda TV(f)`.
///
/// Condat, "A direct algorithm for 1D total variation denoising" (2013).
pub fn tv_denoise(input: &[f64], lambda: f64, output: &mut [f64]) {
    let n = input.len();
    assert_eq!(output.len(), n);
    if n == 0 {
        return;
    }
    if lambda <= 0.0 {
        output.copy_from_slice(input);
        return;
    }
    let last = n - 1;
    let (mut k, mut k0, mut kplus, mut kminus) = (0usize, 0usize, 0usize, 0usize);
    let mut umin = lambda;
    let mut umax = -lambda;
    let mut vmin = input[0] - lambda;
    let mut vmax = input[0] + lambda;
    let twolambda = 2.0 * lambda;
    let minlambda = -lambda;
    loop {
        while k == last {
            if umin < 0.0 {
                // vmin is too high: negative jump
                loop {
                    output[k0] = vmin;
                    k0 += 1;
                    if k0 > kminus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                vmin = input[k];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                // vmax is too low: positive jump
                loop {
                    output[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kplus = k0;
                vmax = input[k];
                umax = minlambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                loop {
                    output[k0] = vmin;
                    k0 += 1;
                    if k0 > k {
                        break;
                    }
                }
                return;
            }
        }
        umin += input[k + 1] - vmin;
        if umin < minlambda {
            loop {
                output[k0] = vmin;
                k0 += 1;
                if k0 > kminus {
                    break;
                }
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = input[k];
            vmax = vmin + twolambda;
            umin = lambda;
            umax = minlambda;
            continue;
        }
        umax += input[k + 1] - vmax;
        if umax > lambda {
            loop {
                output[k0] = vmax;
                k0 += 1;
                if k0 > kplus {
                    break;
                }
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmax = input[k];
            vmin = vmax - twolambda;
            umin = lambda;
            umax = minlambda;
        } else {
            k += 1;
            if umin >= lambda {
                kminus = k;
                vmin += (umin - lambda) / (k - k0 + 1) as f64;
                umin = lambda;
            }
            if umax <= minlambda {
                kplus = k;
                vmax += (umax + lambda) / (k - k0 + 1) as f64;
                umax = minlambda;
            }
        }
    }
}

/// Result of projecting onto the TV ball.
#[derive(Debug, Clone)]
pub struct TvProjection {
    pub f: Vec<f64>,
    /// Proximal weight; zero when the input is already inside the ball and
    /// `+inf` for the degenerate radius zero.
    pub lambda: f64,
}

impl TvProjection {
    /// Directional derivative of the projection at the current input, valid
    /// on the affine piece the solution lies on.
    pub fn jacobian_apply(&self, v: &[f64]) -> Vec<f64> {
        if self.lambda == 0.0 {
            return v.to_vec();
        }
        let n = self.f.len();
        // Segments of equal value and the signs of the jumps between them.
        let mut starts = vec![0usize];
        for i in 1..n {
            if self.f[i] != self.f[i - 1] {
                starts.push(i);
            }
        }
        let m = starts.len();
        let bounds = |j: usize| (starts[j], if j + 1 < m { starts[j + 1] } else { n });
        let means: Vec<f64> = (0..m)
            .map(|j| {
                let (a, b) = bounds(j);
                v[a..b].iter().sum::<f64>() / (b - a) as f64
            })
            .collect();
        let mut levels = means.clone();
        if self.lambda.is_finite() && m > 1 {
            let sign = |j: usize| -> f64 {
                // sign of the jump from segment j to j + 1
                if j + 1 >= m {
                    0.0
                } else {
                    let (_, b) = bounds(j);
                    (self.f[b] - self.f[b - 1]).signum()
                }
            };
            let weights: Vec<f64> = (0..m)
                .map(|j| {
                    let before = if j == 0 { 0.0 } else { sign(j - 1) };
                    before - sign(j)
                })
                .collect();
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..m {
                let (a, b) = bounds(j);
                num += weights[j] * means[j];
                den += weights[j] * weights[j] / (b - a) as f64;
            }
            if den > 0.0 {
                let nu = num / den;
                for j in 0..m {
                    let (a, b) = bounds(j);
                    levels[j] -= nu * weights[j] / (b - a) as f64;
                }
            }
        }
        let mut out = vec![0.0; n];
        for j in 0..m {
            let (a, b) = bounds(j);
            out[a..b].iter_mut().for_each(|o| *o = levels[j]);
        }
        out
    }
}

/// Relative accuracy of the total variation of the projection.
const RADIUS_RTOL: f64 = 1e-13;

/// Euclidean projection of `z` onto the TV ball of the given radius.
pub fn project_tv_ball(z: &[f64], radius: f64) -> TvProjection {
    let n = z.len();
    if n <= 1 || total_variation(z) <= radius {
        return TvProjection {
            f: z.to_vec(),
            lambda: 0.0,
        };
    }
    let mean = z.iter().sum::<f64>() / n as f64;
    if radius == 0.0 {
        return TvProjection {
            f: vec![mean; n],
            lambda: f64::INFINITY,
        };
    }
    // Above lambda_max the proximal map is the constant mean.
    let mut acc = 0.0;
    let mut lambda_max = 0.0_f64;
    for v in &z[..n - 1] {
        acc += v - mean;
        lambda_max = lambda_max.max(acc.abs());
    }

    let mut buf = vec![0.0; n];
    let excess = |lambda: f64, buf: &mut [f64]| {
        tv_denoise(z, lambda, buf);
        total_variation(buf) - radius
    };

    let tol = RADIUS_RTOL * radius;
    let (mut lo, mut h_lo) = (0.0, total_variation(z) - radius);
    let (mut hi, mut h_hi) = (lambda_max, -radius);
    let mut best_feasible = hi;
    let mut side = 0i8;
    for _ in 0..200 {
        let c = hi - h_hi * (hi - lo) / (h_hi - h_lo);
        let c = if c > lo && c < hi { c } else { 0.5 * (lo + hi) };
        let h = excess(c, &mut buf);
        if h <= 0.0 {
            best_feasible = c;
            if h >= -tol {
                return TvProjection { f: buf, lambda: c };
            }
            hi = c;
            h_hi = h;
            if side == -1 {
                h_lo *= 0.5;
            }
            side = -1;
        } else {
            lo = c;
            h_lo = h;
            if side == 1 {
                h_hi *= 0.5;
            }
            side = 1;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    tv_denoise(z, best_feasible, &mut buf);
    TvProjection {
        f: buf,
        lambda: best_feasible,
    }
}
