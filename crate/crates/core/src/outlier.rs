//! Median, quartiles and the IQR upper fence used by the detector.
//!
//! Quartiles follow the Tukey "exclusive median" convention: the sample is
//! sorted and split into a lower and an upper half, and for odd lengths the
//! overall median belongs to neither half. Q1 and Q3 are the medians of the
//! two halves.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::OutlierError;

/// Five-number style summary of a sample of counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuartileSummary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    /// `q3 + delta * iqr`.
    pub upper_limit: f64,
    /// `q1 - delta * iqr`. Reported only; detection never looks at it.
    pub lower_limit: f64,
}

impl QuartileSummary {
    pub fn is_outlier(&self, value: f64) -> bool {
        value > self.upper_limit
    }
}

/// Numeric sample types accepted by [`compute_quartiles`].
pub trait Sample: Copy {
    fn to_f64(self) -> f64;
}

macro_rules! impl_sample {
    ($($t:ty),*) => {
        $(impl Sample for $t {
            fn to_f64(self) -> f64 {
                self as f64
            }
        })*
    };
}

impl_sample!(u32, u64, usize, f64);

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Summarise `values` with fence multiplier `delta`.
pub fn compute_quartiles<T: Sample>(values: &[T], delta: f64) -> Result<QuartileSummary, OutlierError> {
    if values.is_empty() {
        return Err(OutlierError::EmptySample);
    }
    let mut sorted: Vec<f64> = values.iter().map(|&v| v.to_f64()).collect();
    sorted.sort_by(f64::total_cmp);
    Ok(summary_of_sorted(&sorted, delta))
}

pub(crate) fn summary_of_sorted(sorted: &[f64], delta: f64) -> QuartileSummary {
    let n = sorted.len();
    let median = median_sorted(sorted);
    let (q1, q3) = if n == 1 {
        (sorted[0], sorted[0])
    } else {
        let half = n / 2;
        // odd n: index `half` is the median and is skipped
        let upper_start = if n % 2 == 1 { half + 1 } else { half };
        (median_sorted(&sorted[..half]), median_sorted(&sorted[upper_start..]))
    };
    let iqr = q3 - q1;
    QuartileSummary {
        median,
        q1,
        q3,
        iqr,
        upper_limit: q3 + delta * iqr,
        lower_limit: q1 - delta * iqr,
    }
}

/// Keys whose count lies strictly above the upper fence of all counts.
///
/// An empty input yields an empty set.
pub fn find_outliers<K>(entries: &[(K, u64)], delta: f64) -> BTreeSet<K>
where
    K: Ord + Clone,
{
    if entries.is_empty() {
        return BTreeSet::new();
    }
    let mut sorted: Vec<f64> = entries.iter().map(|(_, c)| *c as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let summary = summary_of_sorted(&sorted, delta);
    entries
        .iter()
        .filter(|(_, c)| summary.is_outlier(*c as f64))
        .map(|(k, _)| k.clone())
        .collect()
}
