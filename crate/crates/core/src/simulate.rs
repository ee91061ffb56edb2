//! Synthetic non-stationary AR(p) sequences and the recoverability predicate.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::model::{NoiseModel, TimeSeries};

/// Mechanism generating the dynamic background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftKind {
    /// `f_i = sum_{k<=i} delta0 (U_k - 0.5)`; a change at every step.
    RandomWalk,
    /// Flat between `s` change points, jumps `delta0 (u - 0.5)`.
    PiecewiseConstant,
    /// Random-walk increments that are constant within `s` segments.
    PiecewiseLinear,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub kind: DriftKind,
    /// Bound on one-step changes.
    pub delta0: f64,
    /// Number of changes (piecewise-constant) or segments (piecewise-linear).
    pub changes: usize,
    pub len: usize,
}

impl DriftSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta0 >= 0.0) || !self.delta0.is_finite() {
            return Err(contract(format!(
                "delta0 must be finite and nonnegative, got {}",
                self.delta0
            )));
        }
        if self.len == 0 {
            return Err(contract("drift length must be positive"));
        }
        match self.kind {
            DriftKind::PiecewiseConstant | DriftKind::PiecewiseLinear => {
                if self.changes == 0 {
                    return Err(contract("number of changes must be positive"));
                }
                if self.changes > self.len - 1 {
                    return Err(contract(format!(
                        "{} changes do not fit in a series of length {}",
                        self.changes, self.len
                    )));
                }
            }
            DriftKind::RandomWalk | DriftKind::None => {}
        }
        Ok(())
    }
}

/// Ground-truth background of length `spec.len`.
pub fn gen_drift(spec: &DriftSpec, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.len;
    let d0 = spec.delta0;
    let mut centred = move || d0 * (rng.random::<f64>() - 0.5);
    let f = match spec.kind {
        DriftKind::None => vec![0.0; n],
        DriftKind::RandomWalk => {
            let mut level = 0.0;
            (0..n)
                .map(|_| {
                    level += centred();
                    level
                })
                .collect()
        }
        DriftKind::PiecewiseConstant => {
            // Change point c (1-based, in 1..=n-1) means f_{c+1} != f_c.
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
            let mut points = sample(&mut rng, n - 1, spec.changes).into_vec();
            points.sort_unstable();
            let mut jumps = vec![0.0; n];
            for c in points {
                jumps[c + 1] = loop {
                    let j = centred();
                    if j != 0.0 || d0 == 0.0 {
                        break j;
                    }
                };
            }
            let mut level = 0.0;
            jumps
                .into_iter()
                .map(|j| {
                    level += j;
                    level
                })
                .collect()
        }
        DriftKind::PiecewiseLinear => {
            // s segments separated by s - 1 interior breakpoints.
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
            let mut breaks = sample(&mut rng, n - 1, spec.changes - 1).into_vec();
            breaks.sort_unstable();
            let mut breaks = breaks.into_iter().map(|b| b + 1).peekable();
            let mut slope = centred();
            let mut level = 0.0;
            (0..n)
                .map(|i| {
                    if breaks.peek() == Some(&i) {
                        breaks.next();
                        slope = centred();
                    }
                    level += slope;
                    level
                })
                .collect()
        }
    };
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub alpha: Vec<f64>,
    pub drift: DriftSpec,
    pub noise: NoiseModel,
    /// `x_{-p+1}, ..., x_0`, oldest first.
    pub history: Vec<f64>,
    pub seed: u64,
}

impl SimConfig {
    /// AR(p) with zero history and Gaussian noise.
    pub fn new(alpha: Vec<f64>, drift: DriftSpec, sigma0_sq: f64, seed: u64) -> Result<Self> {
        let history = vec![0.0; alpha.len()];
        Ok(Self {
            alpha,
            drift,
            noise: NoiseModel::gaussian(sigma0_sq)?,
            history,
            seed,
        })
    }
}

/// Stream offsets so the drift and the noise draw from independent streams.
const DRIFT_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

/// Generates a series and returns it together with the true background.
pub fn gen_series(cfg: &SimConfig) -> Result<(TimeSeries, Vec<f64>)> {
    let p = cfg.alpha.len();
    if cfg.history.len() != p {
        return Err(Error::DimensionMismatch {
            what: "history",
            expected: p,
            actual: cfg.history.len(),
        });
    }
    if let Some(index) = cfg.alpha.iter().position(|a| !a.is_finite()) {
        return Err(Error::NonFinite {
            what: "alpha",
            index,
        });
    }
    let t = cfg.drift.len;
    let background = gen_drift(&cfg.drift, derive_seed(cfg.seed, DRIFT_STREAM))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(NOISE_STREAM);
    let noise = cfg.noise.sample_n(&mut rng, t);
    let values = ar_recursion(&cfg.alpha, &cfg.history, &background, &noise)?;
    Ok((TimeSeries::new(values, cfg.history.clone())?, background))
}

/// `x_i = f_i + sum_j alpha_j x_{i-j} + e_i`, seeded from `history`.
pub fn ar_recursion(
    alpha: &[f64],
    history: &[f64],
    background: &[f64],
    innovations: &[f64],
) -> Result<Vec<f64>> {
    let p = alpha.len();
    let t = background.len();
    let mut full = Vec::with_capacity(p + t);
    full.extend_from_slice(history);
    for i in 0..t {
        let ar: f64 = alpha
            .iter()
            .enumerate()
            .map(|(j, a)| a * full[p + i - j - 1])
            .sum();
        let v = background[i] + ar + innovations[i];
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: "simulated series",
                index: i,
            });
        }
        full.push(v);
    }
    Ok(full.split_off(p))
}

/// Mixes a master seed with a counter (splitmix64 finaliser).
pub fn derive_seed(master: u64, counter: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(counter.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sufficient condition for `epsilon`-recoverability:
///
/// ```text
/// min{ c1 s^{3/2} delta0, 2 sqrt(vol_S / pi) } + s^{1/2} delta0 <= epsilon - delta
/// ```
pub fn recoverable(
    s: usize,
    delta0: f64,
    epsilon: f64,
    delta: f64,
    vol_s: f64,
    c1_tilde: f64,
) -> Result<bool> {
    if !(epsilon > delta) {
        return Err(contract(format!(
            "epsilon ({epsilon}) must exceed delta ({delta})"
        )));
    }
    if s == 0 || !(delta0 >= 0.0) || !(vol_s > 0.0) || !(c1_tilde > 0.0) || !(delta >= 0.0) {
        return Err(contract("recoverability arguments out of range"));
    }
    let s = s as f64;
    let lhs = (c1_tilde * s.powf(1.5) * delta0).min(2.0 * (vol_s / std::f64::consts::PI).sqrt())
        + s.sqrt() * delta0;
    Ok(lhs <= epsilon - delta)
}
