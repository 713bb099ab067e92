use serde::{Deserialize, Serialize};

use super::{
    check_units, AttributionError, AttributionRecord, BackgroundSet, LinearProvider, Selector, Unit,
};
use crate::data::{Instance, Modality};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearAttribution {
    pub phi: Vec<f64>,
    /// `w · μ + bias`
    pub base_value: f64,
    /// `w · x + bias`
    pub output: f64,
}

/// Closed-form Shapley values of `f(x) = w · x + bias` against the
/// reference point `mean`: `φ_i = w_i (x_i − μ_i)`.
pub fn linear_shap(
    weights: &[f64],
    bias: f64,
    x: &[f64],
    mean: &[f64],
) -> Result<LinearAttribution, AttributionError> {
    if weights.len() != x.len() || mean.len() != x.len() {
        return Err(AttributionError::Shape(format!(
            "weights {}, input {}, mean {} must have equal length",
            weights.len(),
            x.len(),
            mean.len()
        )));
    }
    let phi: Vec<f64> = weights
        .iter()
        .zip(x)
        .zip(mean)
        .map(|((w, x), m)| w * (x - m))
        .collect();
    let base_value = weights.iter().zip(mean).map(|(w, m)| w * m).sum::<f64>() + bias;
    let output = weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + bias;
    Ok(LinearAttribution {
        phi,
        base_value,
        output,
    })
}

impl LinearProvider {
    /// Exact attribution for this model at any unit granularity: a unit's
    /// value is the sum of its cells' closed-form contributions.
    pub fn explain(
        &self,
        instance: &Instance,
        background: &BackgroundSet,
        units: &[Unit],
    ) -> Result<AttributionRecord, AttributionError> {
        background.check_shape(&instance.features)?;
        check_units(&instance.features, units)?;
        let rows = instance.len();
        let mut x = Vec::new();
        let mut mu = Vec::new();
        let mut offsets = [0usize; 3];
        for m in Modality::ALL {
            offsets[m.index()] = x.len();
            let mat = instance.features.get(m);
            if mat.cols() != self.weights(m).len() {
                return Err(AttributionError::Shape(format!(
                    "{m} width differs from the model"
                )));
            }
            x.extend_from_slice(mat.as_slice());
            for _ in 0..rows {
                mu.extend_from_slice(background.mean(m));
            }
        }
        let cells = linear_shap(&self.cell_weights(rows), self.bias, &x, &mu)?;
        let phis = units
            .iter()
            .map(|u| {
                let cols = instance.features.get(u.modality).cols();
                let at = |r: usize, c: usize| cells.phi[offsets[u.modality.index()] + r * cols + c];
                match u.selector {
                    Selector::Feature(c) => (0..rows).map(|r| at(r, c)).sum(),
                    Selector::TimeStep(r) => (0..cols).map(|c| at(r, c)).sum(),
                    Selector::Cell(r, c) => at(r, c),
                }
            })
            .collect();
        Ok(AttributionRecord::from_parts(
            &instance.id,
            units,
            phis,
            cells.base_value,
            cells.output,
        ))
    }
}
