//! Domain types and the implicit design operator.
//!
//! The observation model is
//!
//! ```text
//! x_i = f_i + sum_{j=1}^p alpha_j x_{i-j} + eps_i,   i = 1..T
//! ```
//!
//! with a known pre-sample history `x_{-p+1}, ..., x_0`. The background `f`
//! is parameterised by its initial level `mu = f_1` and one-step changes
//! `Delta_i = f_i - f_{i-1}`, which makes the model linear in
//! `beta = (alpha_1..alpha_p, mu, Delta_2..Delta_T)`:
//!
//! ```text
//! x_{1:T} = X beta + eps,   X = (x_{0:T-1}, ..., x_{1-p:T-p}, L)
//! ```
//!
//! where `L` is the `T x T` lower-triangular matrix of ones. Column `j` of
//! the lag block holds `x_{1-j}, ..., x_{T-j}`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Observed values together with the known pre-sample history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    history: Vec<f64>,
}

impl TimeSeries {
    /// Builds a series from observations `x_1..x_T` and history
    /// `x_{-p+1}..x_0` (oldest first). The AR order is `history.len()`.
    pub fn new(values: Vec<f64>, history: Vec<f64>) -> Result<Self> {
        let p = history.len();
        if p == 0 {
            return Err(contract("AR order must be at least 1 (history is empty)"));
        }
        if values.len() < p + 2 {
            return Err(contract(format!(
                "series length {} is shorter than order + 2 = {}",
                values.len(),
                p + 2
            )));
        }
        if let Some(index) = history.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "history",
                index,
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "values",
                index,
            });
        }
        Ok(Self { values, history })
    }

    /// Splits a raw sequence into history (first `order` entries) and values.
    pub fn from_raw(raw: &[f64], order: usize) -> Result<Self> {
        if raw.len() < order {
            return Err(contract(format!(
                "need at least {order} values for the history, got {}",
                raw.len()
            )));
        }
        Self::new(raw[order..].to_vec(), raw[..order].to_vec())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    /// AR order `p`.
    pub fn order(&self) -> usize {
        self.history.len()
    }

    /// Number of observations `T`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of entries in `beta`, `T + p`.
    pub fn n_params(&self) -> usize {
        self.len() + self.order()
    }

    /// Observation `x_t` for `t` in `-p+1..=T` (1-based, history at `t <= 0`).
    pub fn at(&self, t: isize) -> f64 {
        let p = self.order() as isize;
        if t <= 0 {
            self.history[(t + p - 1) as usize]
        } else {
            self.values[(t - 1) as usize]
        }
    }

    /// Lag column `j` (1-based): `x_{1-j}, ..., x_{T-j}`.
    pub fn lag_column(&self, j: usize) -> Vec<f64> {
        assert!(j >= 1 && j <= self.order(), "lag {j} out of range");
        let t = self.len() as isize;
        (1..=t).map(|i| self.at(i - j as isize)).collect()
    }

    /// All `p` lag columns.
    pub fn lag_columns(&self) -> Vec<Vec<f64>> {
        (1..=self.order()).map(|j| self.lag_column(j)).collect()
    }
}

/// Parameter vector `beta = (alpha, mu, Delta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub alpha: Vec<f64>,
    pub mu: f64,
    pub delta: Vec<f64>,
}

impl Coefficients {
    pub fn zeros(order: usize, len: usize) -> Self {
        Self {
            alpha: vec![0.0; order],
            mu: 0.0,
            delta: vec![0.0; len.saturating_sub(1)],
        }
    }

    /// Rebuilds coefficients from a background `f` by differencing.
    pub fn from_background(alpha: Vec<f64>, background: &[f64]) -> Self {
        let mu = background.first().copied().unwrap_or(0.0);
        let delta = background.windows(2).map(|w| w[1] - w[0]).collect();
        Self { alpha, mu, delta }
    }

    /// Flattens to `(alpha, mu, Delta)`, length `T + p`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.alpha.len() + 1 + self.delta.len());
        out.extend_from_slice(&self.alpha);
        out.push(self.mu);
        out.extend_from_slice(&self.delta);
        out
    }

    pub fn from_slice(beta: &[f64], order: usize) -> Result<Self> {
        if beta.len() < order + 1 {
            return Err(Error::DimensionMismatch {
                what: "coefficient vector",
                expected: order + 1,
                actual: beta.len(),
            });
        }
        Ok(Self {
            alpha: beta[..order].to_vec(),
            mu: beta[order],
            delta: beta[order + 1..].to_vec(),
        })
    }

    /// Number of observations this vector describes.
    pub fn len(&self) -> usize {
        self.delta.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Total variation `sum |Delta_i|`.
    pub fn total_variation(&self) -> f64 {
        self.delta.iter().map(|d| d.abs()).sum()
    }

    pub fn background(&self) -> Vec<f64> {
        reconstruct_background(self)
    }
}

/// `f_1 = mu`, `f_i = f_{i-1} + Delta_i`.
pub fn reconstruct_background(beta: &Coefficients) -> Vec<f64> {
    let mut f = Vec::with_capacity(beta.delta.len() + 1);
    let mut level = beta.mu;
    f.push(level);
    for d in &beta.delta {
        level += d;
        f.push(level);
    }
    f
}

/// Matrix-free view of the design matrix `X` for one series.
#[derive(Debug, Clone, Copy)]
pub struct DesignOperator<'a> {
    series: &'a TimeSeries,
}

impl<'a> DesignOperator<'a> {
    pub fn new(series: &'a TimeSeries) -> Self {
        Self { series }
    }

    pub fn series(&self) -> &'a TimeSeries {
        self.series
    }

    /// `X beta`, in `O(T p)` using a running sum for the `L` block.
    pub fn forward(&self, beta: &Coefficients) -> Result<Vec<f64>> {
        let s = self.series;
        let (t, p) = (s.len(), s.order());
        if beta.alpha.len() != p {
            return Err(Error::DimensionMismatch {
                what: "alpha",
                expected: p,
                actual: beta.alpha.len(),
            });
        }
        if beta.delta.len() + 1 != t {
            return Err(Error::DimensionMismatch {
                what: "delta",
                expected: t - 1,
                actual: beta.delta.len(),
            });
        }
        let mut out = reconstruct_background(beta);
        for (j, a) in beta.alpha.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            let lag = (j + 1) as isize;
            for (i, o) in out.iter_mut().enumerate() {
                *o += a * s.at(i as isize + 1 - lag);
            }
        }
        Ok(out)
    }

    /// `X^T r`, returned in `(alpha, mu, Delta)` layout. The `L` block is the
    /// reversed cumulative sum of `r`.
    pub fn adjoint(&self, r: &[f64]) -> Result<Coefficients> {
        let s = self.series;
        let (t, p) = (s.len(), s.order());
        if r.len() != t {
            return Err(Error::DimensionMismatch {
                what: "residual",
                expected: t,
                actual: r.len(),
            });
        }
        let alpha = (1..=p as isize)
            .map(|lag| {
                r.iter()
                    .enumerate()
                    .map(|(i, ri)| ri * s.at(i as isize + 1 - lag))
                    .sum()
            })
            .collect();
        let tail = reverse_cumsum(r);
        Ok(Coefficients {
            alpha,
            mu: tail[0],
            delta: tail[1..].to_vec(),
        })
    }
}

/// `out[k] = sum_{i >= k} r[i]`.
pub(crate) fn reverse_cumsum(r: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; r.len()];
    let mut acc = 0.0;
    for (o, v) in out.iter_mut().zip(r).rev() {
        acc += v;
        *o = acc;
    }
    out
}

/// Distribution family of the innovations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    UniformCentered,
    RademacherScaled,
}

/// Zero-mean i.i.d. innovations with variance `sigma0_sq`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub sigma0_sq: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, sigma0_sq: f64) -> Result<Self> {
        if !(sigma0_sq >= 0.0 && sigma0_sq.is_finite()) {
            return Err(contract(format!(
                "noise variance must be finite and nonnegative, got {sigma0_sq}"
            )));
        }
        Ok(Self { kind, sigma0_sq })
    }

    pub fn gaussian(sigma0_sq: f64) -> Result<Self> {
        Self::new(NoiseKind::Gaussian, sigma0_sq)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let sd = self.sigma0_sq.sqrt();
        match self.kind {
            NoiseKind::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            }
            // U(-a, a) has variance a^2 / 3.
            NoiseKind::UniformCentered => {
                let a = (3.0 * self.sigma0_sq).sqrt();
                rng.random_range(-1.0..=1.0) * a
            }
            NoiseKind::RademacherScaled => {
                if rng.random::<bool>() {
                    sd
                } else {
                    -sd
                }
            }
        }
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}
