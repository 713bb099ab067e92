use serde::{Deserialize, Serialize};

use super::DataError;

/// Equal-width histogram over `[lo, hi]`. Bins are half-open `[a, b)`
/// except the last, which is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// Values below `lo`.
    pub underflow: u64,
    /// Values above `hi`, plus non-finite values.
    pub overflow: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    pub fn edges(&self) -> Vec<f64> {
        let n = self.counts.len();
        (0..=n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / n as f64)
            .collect()
    }
}

pub fn bin_distribution(
    values: &[f64],
    bins: usize,
    range: (f64, f64),
) -> Result<Histogram, DataError> {
    let (lo, hi) = range;
    if bins == 0 {
        return Err(DataError::Argument(
            "histogram needs at least one bin".into(),
        ));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(DataError::Argument(format!(
            "invalid histogram range [{lo}, {hi}]"
        )));
    }
    let mut h = Histogram {
        lo,
        hi,
        counts: vec![0; bins],
        underflow: 0,
        overflow: 0,
    };
    let width = (hi - lo) / bins as f64;
    for &v in values {
        if v.is_nan() || v > hi {
            h.overflow += 1;
        } else if v < lo {
            h.underflow += 1;
        } else {
            let idx = (((v - lo) / width).floor() as usize).min(bins - 1);
            h.counts[idx] += 1;
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn boundaries_land_in_one_bin_each() {
        let h = bin_distribution(&[-3.0, 0.0, 3.0], 3, (-3.0, 3.0)).unwrap();
        assert_eq!(h.counts, vec![1, 1, 1]);
    }

    #[test]
    fn empty_and_repeated() {
        assert_eq!(
            bin_distribution(&[], 4, (0.0, 1.0)).unwrap().counts,
            vec![0; 4]
        );
        let h = bin_distribution(&[0.3; 10], 4, (0.0, 1.0)).unwrap();
        assert_eq!(h.counts, vec![0, 10, 0, 0]);
    }

    #[test]
    fn zero_bins_is_an_error() {
        assert!(matches!(
            bin_distribution(&[1.0], 0, (0.0, 1.0)),
            Err(DataError::Argument(_))
        ));
        assert!(bin_distribution(&[1.0], 2, (1.0, 1.0)).is_err());
    }

    proptest! {
        #[test]
        fn conservation(values in prop::collection::vec(-10.0f64..10.0, 0..200), bins in 1usize..20) {
            let h = bin_distribution(&values, bins, (-3.0, 3.0)).unwrap();
            prop_assert_eq!(h.total(), values.len() as u64);
            let inside = values.iter().filter(|v| (-3.0..=3.0).contains(*v)).count() as u64;
            prop_assert_eq!(h.counts.iter().sum::<u64>(), inside);
        }
    }
}
