use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    /// Pearson correlation; `None` when labels or predictions are constant.
    pub corr: Option<f64>,
    pub f1: f64,
    pub acc7: f64,
    pub acc2: f64,
    pub n: usize,
}

/// Seven-class sentiment bucket: round half away from zero, clamp to [-3, 3].
pub(crate) fn sentiment_class(v: f64) -> i32 {
    v.round().clamp(-3.0, 3.0) as i32
}

/// Binary polarity; zero counts as negative.
pub(crate) fn is_positive(v: f64) -> bool {
    v > 0.0
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, DataError> {
    if xs.len() != ys.len() {
        return Err(DataError::Argument(format!(
            "length mismatch {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(DataError::Degenerate(
            "correlation needs at least two points".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(DataError::Degenerate(
            "correlation of a constant vector".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn compute_metrics(dataset: &Dataset) -> Result<MetricsReport, DataError> {
    let n = dataset.len();
    if n == 0 {
        return Err(DataError::Argument(
            "metrics need at least one instance".into(),
        ));
    }
    let labels: Vec<f64> = dataset.iter().map(|i| i.label).collect();
    let preds: Vec<f64> = dataset.iter().map(|i| i.prediction).collect();

    let mae = labels
        .iter()
        .zip(&preds)
        .map(|(y, p)| (p - y).abs())
        .sum::<f64>()
        / n as f64;
    let corr = match pearson(&preds, &labels) {
        Ok(c) => Some(c),
        Err(DataError::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };

    let acc7_hits = labels
        .iter()
        .zip(&preds)
        .filter(|(y, p)| sentiment_class(**y) == sentiment_class(**p))
        .count();

    let (mut tp, mut fp, mut fneg, mut hits2) = (0usize, 0usize, 0usize, 0usize);
    for (y, p) in labels.iter().zip(&preds) {
        match (is_positive(*p), is_positive(*y)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
        if is_positive(*p) == is_positive(*y) {
            hits2 += 1;
        }
    }
    // No positives on either side: the classifier agrees perfectly.
    let f1 = if tp + fp + fneg == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
    };

    Ok(MetricsReport {
        mae,
        corr,
        f1,
        acc7: acc7_hits as f64 / n as f64,
        acc2: hits2 as f64 / n as f64,
        n,
    })
}
