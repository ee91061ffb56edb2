//! Residual diagnostics: autocorrelation, portmanteau tests and the shifted
//! log transform used before inspecting residual spectra.

use libm::erfc;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PortmanteauTest {
    LjungBox,
    DurbinWatson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortmanteauResult {
    /// `Q` for Ljung-Box, `d` for Durbin-Watson.
    pub statistic: f64,
    pub lags: usize,
    pub p_value: f64,
    pub test: PortmanteauTest,
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `P(chi^2_k > q)`.
pub fn chi_square_sf(q: f64, k: usize) -> f64 {
    if q <= 0.0 {
        return 1.0;
    }
    if q.is_infinite() {
        return 0.0;
    }
    gamma_ur(0.5 * k as f64, 0.5 * q).clamp(0.0, 1.0)
}

fn autocovariances(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    (0..=max_lag)
        .map(|k| c[k..].iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() / n)
        .collect()
}

fn acf_from(gamma: &[f64], k: usize) -> f64 {
    if k == 0 {
        1.0
    } else if gamma[0] > 0.0 {
        gamma[k] / gamma[0]
    } else {
        0.0
    }
}

/// Sample autocorrelation at lag `k`; zero for a constant sequence.
pub fn sample_acf(x: &[f64], k: usize) -> Result<f64> {
    if x.len() < 2 {
        return Err(contract("autocorrelation needs at least two observations"));
    }
    if k >= x.len() {
        return Err(contract(format!(
            "lag {k} must be smaller than the length {}",
            x.len()
        )));
    }
    Ok(acf_from(&autocovariances(x, k), k))
}

/// Ljung-Box statistic over lags `1..=h` with its chi-square tail probability.
pub fn ljung_box(x: &[f64], h: usize) -> Result<PortmanteauResult> {
    let t = x.len();
    if h == 0 || h >= t {
        return Err(contract(format!(
            "Ljung-Box lag must satisfy 1 <= h < T, got h = {h}, T = {t}"
        )));
    }
    let gamma = autocovariances(x, h);
    let tf = t as f64;
    let sum: f64 = (1..=h)
        .map(|k| acf_from(&gamma, k).powi(2) / (tf - k as f64))
        .sum();
    let q = tf * (tf + 2.0) * sum;
    Ok(PortmanteauResult {
        statistic: q,
        lags: h,
        p_value: chi_square_sf(q, h),
        test: PortmanteauTest::LjungBox,
    })
}

/// Durbin-Watson statistic with a two-sided normal-approximation p-value
/// based on `rho_1 ~ 1 - d/2`.
pub fn durbin_watson(e: &[f64]) -> Result<PortmanteauResult> {
    let t = e.len();
    if t < 3 {
        return Err(contract("Durbin-Watson needs at least three observations"));
    }
    let den: f64 = e.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Ok(PortmanteauResult {
            statistic: 2.0,
            lags: 1,
            p_value: 1.0,
            test: PortmanteauTest::DurbinWatson,
        });
    }
    let num: f64 = e.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    let d = (num / den).clamp(0.0, 4.0);
    let z = (1.0 - 0.5 * d) * (t as f64).sqrt();
    // 2 (1 - Phi(|z|)) without cancellation
    let p = erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    Ok(PortmanteauResult {
        statistic: d,
        lags: 1,
        p_value: p,
        test: PortmanteauTest::DurbinWatson,
    })
}

/// `log(r - 1.1 min r)` when the minimum is negative, otherwise
/// `log(r + 0.1 (1 + |max r|))`.
pub fn shifted_log_transform(r: &[f64]) -> Result<Vec<f64>> {
    if r.is_empty() {
        return Err(contract("shifted log needs at least one residual"));
    }
    let min = r.iter().copied().fold(f64::INFINITY, f64::min);
    let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shift = if min < 0.0 {
        -1.1 * min
    } else {
        0.1 * (1.0 + max.abs())
    };
    r.iter()
        .enumerate()
        .map(|(i, v)| {
            let y = (v + shift).ln();
            if y.is_finite() {
                Ok(y)
            } else {
                Err(Error::NonFinite {
                    what: "shifted log transform",
                    index: i,
                })
            }
        })
        .collect()
}
