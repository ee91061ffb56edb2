//! Cleaning of observed series: outlier flagging and median imputation.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::stats::{quantile_sorted, sorted_copy};

/// Values farther than this many interquartile ranges from the median are
/// treated as outliers.
pub const IQR_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    pub n_missing: usize,
    pub n_outliers: usize,
    /// Median of the normal observations, used for every replacement.
    pub median_used: f64,
    pub missing_indices: Vec<usize>,
    pub outlier_indices: Vec<usize>,
}

/// Replaces missing values and outliers (`|x - median| > 10 IQR`, both
/// computed on the observed values) by the median of the remaining values.
/// Non-finite entries count as missing.
pub fn clean(raw: &[Option<f64>]) -> Result<(Vec<f64>, CleanReport)> {
    let observed: Vec<f64> = raw
        .iter()
        .flatten()
        .copied()
        .filter(|v| v.is_finite())
        .collect();
    if observed.len() < 4 {
        return Err(contract(format!(
            "cleaning needs at least 4 observed values, got {}",
            observed.len()
        )));
    }
    let sorted = sorted_copy(&observed);
    let median = quantile_sorted(&sorted, 0.5);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let limit = IQR_FACTOR * iqr;

    let mut missing_indices = Vec::new();
    let mut outlier_indices = Vec::new();
    let mut normal = Vec::with_capacity(observed.len());
    for (i, v) in raw.iter().enumerate() {
        match v {
            Some(x) if x.is_finite() => {
                if (x - median).abs() > limit {
                    outlier_indices.push(i);
                } else {
                    normal.push(*x);
                }
            }
            _ => missing_indices.push(i),
        }
    }
    let median_used = quantile_sorted(&sorted_copy(&normal), 0.5);
    let out = raw
        .iter()
        .enumerate()
        .map(|(i, v)| match v {
            Some(x) if x.is_finite() && (x - median).abs() <= limit => *x,
            _ => {
                debug_assert!(missing_indices.contains(&i) || outlier_indices.contains(&i));
                median_used
            }
        })
        .collect();
    Ok((
        out,
        CleanReport {
            n_missing: missing_indices.len(),
            n_outliers: outlier_indices.len(),
            median_used,
            missing_indices,
            outlier_indices,
        },
    ))
}
