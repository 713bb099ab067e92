//! Small descriptive statistics shared by several modules.

use serde::{Deserialize, Serialize};

/// Percentile `p ∈ [0, 100]` with linear interpolation between order
/// statistics. `None` for an empty slice.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p.clamp(0.0, 100.0) / 100.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Summary of a distribution plus the raw values (for bee swarms).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub values: Vec<f64>,
}

impl Distribution {
    pub fn from_values(values: Vec<f64>) -> Self {
        if values.is_empty() {
            return Distribution {
                min: 0.0,
                max: 0.0,
                mean: 0.0,
                values,
            };
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Distribution {
            min,
            max,
            mean,
            values,
        }
    }
}
