//! Additive feature attribution (Shapley values) against a black-box
//! prediction provider.
//!
//! A *unit* is a block of input cells that is kept or masked as a whole: a
//! feature column across all time steps, one time step of a modality, or a
//! single cell. Masked units take the background per-feature mean.

mod dataset;
mod exact;
mod kernel;
mod linear;
mod provider;

pub use dataset::{
    attribute_dataset, AttributeConfig, AttributionStore, BackgroundSpec, FailedInstance,
    InstanceAttribution, Method,
};
pub use exact::{exact_shapley, MAX_EXACT_UNITS};
pub use kernel::{kernel_shap, shapley_kernel_weight};
pub use linear::{linear_shap, LinearAttribution};
pub use provider::{
    evaluate, FnProvider, Handshake, HttpCallbackProvider, LinearProvider, MlpToyProvider,
    PredictionProvider, ProviderError, ProviderKind, SubprocessProvider,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{FeatureMatrix, Instance, Modality, ModalityFeatures};

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error("{units} units exceed the exact enumeration bound of {max}")]
    TooManyUnits { units: usize, max: usize },
    #[error("provider failed while evaluating {context}: {source}")]
    Provider {
        context: String,
        #[source]
        source: ProviderError,
    },
    #[error("weighted least-squares system is singular after {attempts} sampling attempts")]
    SingularSystem { attempts: usize },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("shape error: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// One unit per (modality, feature column), masked across all time steps.
    Feature,
    /// One unit per (modality, time step), masking the whole row.
    TimeStep,
    /// One unit per (modality, time step, feature) cell.
    Cell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    Feature(usize),
    TimeStep(usize),
    Cell(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Unit {
    pub modality: Modality,
    pub selector: Selector,
}

impl Unit {
    /// Copies this unit's cells from `src` into `dst`.
    fn copy_cells(&self, src: &ModalityFeatures, dst: &mut ModalityFeatures) {
        let s = src.get(self.modality);
        let d = dst.get_mut(self.modality);
        match self.selector {
            Selector::Feature(c) => {
                for r in 0..s.rows() {
                    d.set(r, c, s.get(r, c));
                }
            }
            Selector::TimeStep(r) => d.row_mut(r).copy_from_slice(s.row(r)),
            Selector::Cell(r, c) => d.set(r, c, s.get(r, c)),
        }
    }
}

/// Units partitioning `features` at the given granularity, ordered by
/// modality then selector.
pub fn units_for(features: &ModalityFeatures, granularity: Granularity) -> Vec<Unit> {
    let mut units = Vec::new();
    for modality in Modality::ALL {
        let m = features.get(modality);
        match granularity {
            Granularity::Feature => {
                units.extend((0..m.cols()).map(|c| Unit {
                    modality,
                    selector: Selector::Feature(c),
                }));
            }
            Granularity::TimeStep => {
                if m.cols() > 0 {
                    units.extend((0..m.rows()).map(|r| Unit {
                        modality,
                        selector: Selector::TimeStep(r),
                    }));
                }
            }
            Granularity::Cell => {
                for r in 0..m.rows() {
                    units.extend((0..m.cols()).map(|c| Unit {
                        modality,
                        selector: Selector::Cell(r, c),
                    }));
                }
            }
        }
    }
    units
}

/// Reference values standing in for "feature absent": the per-feature mean
/// over a set of reference instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSet {
    pub language: Vec<f64>,
    pub audio: Vec<f64>,
    pub vision: Vec<f64>,
    /// Number of reference instances the means were taken over (0 for the
    /// all-zero background).
    pub size: usize,
}

impl BackgroundSet {
    pub fn zeros(dims: [usize; 3]) -> Self {
        BackgroundSet {
            language: vec![0.0; dims[0]],
            audio: vec![0.0; dims[1]],
            vision: vec![0.0; dims[2]],
            size: 0,
        }
    }

    /// Per-feature means over every row of every reference instance.
    pub fn from_instances(instances: &[&Instance]) -> Result<Self, AttributionError> {
        let first = instances
            .first()
            .ok_or_else(|| AttributionError::Argument("empty background set".into()))?;
        let mut means: [Vec<f64>; 3] =
            Modality::ALL.map(|m| vec![0.0; first.features.get(m).cols()]);
        let mut rows = 0usize;
        for inst in instances {
            for m in Modality::ALL {
                let mat = inst.features.get(m);
                if mat.cols() != means[m.index()].len() {
                    return Err(AttributionError::Shape(format!(
                        "background instance `{}` {m} width differs",
                        inst.id
                    )));
                }
                for r in 0..mat.rows() {
                    for (acc, v) in means[m.index()].iter_mut().zip(mat.row(r)) {
                        *acc += v;
                    }
                }
            }
            rows += inst.len();
        }
        if rows == 0 {
            return Err(AttributionError::Argument(
                "background instances have no rows".into(),
            ));
        }
        for m in &mut means {
            m.iter_mut().for_each(|v| *v /= rows as f64);
        }
        let [language, audio, vision] = means;
        Ok(BackgroundSet {
            language,
            audio,
            vision,
            size: instances.len(),
        })
    }

    pub fn mean(&self, m: Modality) -> &[f64] {
        match m {
            Modality::Language => &self.language,
            Modality::Audio => &self.audio,
            Modality::Vision => &self.vision,
        }
    }

    /// Background-mean input with the same shape as `x`.
    pub fn fill_like(&self, x: &ModalityFeatures) -> ModalityFeatures {
        x.map(|m, mat| FeatureMatrix::broadcast_row(mat.rows(), self.mean(m)))
    }

    fn check_shape(&self, x: &ModalityFeatures) -> Result<(), AttributionError> {
        for m in Modality::ALL {
            if x.get(m).cols() != self.mean(m).len() {
                return Err(AttributionError::Shape(format!(
                    "{m}: input has {} columns, background has {}",
                    x.get(m).cols(),
                    self.mean(m).len()
                )));
            }
        }
        Ok(())
    }
}

/// Input where units with `keep[i]` retain `x`'s values and all other units
/// take the background mean.
pub fn mask_input(
    x: &ModalityFeatures,
    units: &[Unit],
    keep: &[bool],
    background: &BackgroundSet,
) -> ModalityFeatures {
    debug_assert_eq!(units.len(), keep.len());
    let mut out = background.fill_like(x);
    for (unit, _) in units.iter().zip(keep).filter(|(_, k)| **k) {
        unit.copy_cells(x, &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitValue {
    #[serde(flatten)]
    pub unit: Unit,
    pub phi: f64,
}

/// Additive importance scores for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub instance_id: String,
    pub granularity: Granularity,
    /// Provider output on the background-only input.
    pub base_value: f64,
    /// Provider output on the unmasked input.
    pub output: f64,
    pub values: Vec<UnitValue>,
}

impl AttributionRecord {
    pub fn phi_sum(&self) -> f64 {
        self.values.iter().map(|v| v.phi).sum()
    }

    /// `Σφ − (f(x) − base)`; zero for an exact attribution.
    pub fn local_accuracy_gap(&self) -> f64 {
        self.phi_sum() - (self.output - self.base_value)
    }

    pub fn phis(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.phi).collect()
    }

    pub fn modality_values(&self, m: Modality) -> impl Iterator<Item = &UnitValue> {
        self.values.iter().filter(move |v| v.unit.modality == m)
    }

    pub(crate) fn from_parts(
        instance_id: &str,
        units: &[Unit],
        phis: Vec<f64>,
        base_value: f64,
        output: f64,
    ) -> Self {
        let granularity = match units.first().map(|u| u.selector) {
            Some(Selector::TimeStep(_)) => Granularity::TimeStep,
            Some(Selector::Cell(..)) => Granularity::Cell,
            _ => Granularity::Feature,
        };
        AttributionRecord {
            instance_id: instance_id.to_string(),
            granularity,
            base_value,
            output,
            values: units
                .iter()
                .zip(phis)
                .map(|(unit, phi)| UnitValue { unit: *unit, phi })
                .collect(),
        }
    }
}

fn check_units(x: &ModalityFeatures, units: &[Unit]) -> Result<(), AttributionError> {
    for u in units {
        let m = x.get(u.modality);
        let ok = match u.selector {
            Selector::Feature(c) => c < m.cols(),
            Selector::TimeStep(r) => r < m.rows(),
            Selector::Cell(r, c) => r < m.rows() && c < m.cols(),
        };
        if !ok {
            return Err(AttributionError::Shape(format!(
                "unit {u:?} outside the input"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Instance whose only nonempty modality is a 1×n language row.
    pub fn row_instance(values: &[f64]) -> Instance {
        Instance {
            id: "x".into(),
            tokens: vec![crate::data::Token {
                text: "w".into(),
                start_s: 0.0,
                end_s: 1.0,
                pos: None,
            }],
            features: ModalityFeatures {
                language: FeatureMatrix::from_vec(1, values.len(), values.to_vec()),
                audio: FeatureMatrix::zeros(1, 0),
                vision: FeatureMatrix::zeros(1, 0),
            },
            label: 0.0,
            prediction: 0.0,
        }
    }

    pub fn row_background(values: &[f64]) -> BackgroundSet {
        BackgroundSet {
            language: values.to_vec(),
            audio: vec![],
            vision: vec![],
            size: 1,
        }
    }

    /// Provider evaluating `f` on the language row of a 1×n input.
    pub fn row_fn<F>(f: F) -> FnProvider<impl Fn(&ModalityFeatures) -> f64 + Send + Sync>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync,
    {
        FnProvider::new(move |x: &ModalityFeatures| f(x.language.row(0)))
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn full_coalition_is_identity() {
        let x = row_instance(&[1.0, 2.0, 3.0]);
        let units = units_for(&x.features, Granularity::Feature);
        let out = mask_input(
            &x.features,
            &units,
            &[true; 3],
            &row_background(&[9.0, 9.0, 9.0]),
        );
        assert_eq!(out, x.features);
    }

    #[test]
    fn empty_coalition_is_background() {
        let x = row_instance(&[1.0, 2.0, 3.0]);
        let units = units_for(&x.features, Granularity::Feature);
        let out = mask_input(
            &x.features,
            &units,
            &[false; 3],
            &row_background(&[7.0, 8.0, 9.0]),
        );
        assert_eq!(out.language.row(0), &[7.0, 8.0, 9.0]);
    }

    #[test]
    fn single_feature_coalition_with_zero_background() {
        let mut x = crate::data::test_support::instance("a", 3, 0.0, 0.0);
        x.features.language = FeatureMatrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let units = units_for(&x.features, Granularity::Feature);
        let mut keep = vec![false; units.len()];
        keep[1] = true; // language column 1
        let out = mask_input(&x.features, &units, &keep, &BackgroundSet::zeros([2, 2, 4]));
        assert_eq!(out.language.as_slice(), &[0.0, 2.0, 0.0, 4.0, 0.0, 6.0]);
        assert!(out.audio.as_slice().iter().all(|v| *v == 0.0));
        assert!(out.vision.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn units_partition_cells() {
        let x = crate::data::test_support::instance("a", 3, 0.0, 0.0);
        let total_cells: usize = Modality::ALL
            .iter()
            .map(|m| x.features.get(*m).as_slice().len())
            .sum();
        for g in [
            Granularity::Feature,
            Granularity::TimeStep,
            Granularity::Cell,
        ] {
            let units = units_for(&x.features, g);
            let mut covered = ModalityFeatures {
                language: FeatureMatrix::zeros(3, 2),
                audio: FeatureMatrix::zeros(3, 2),
                vision: FeatureMatrix::zeros(3, 4),
            };
            let ones = x
                .features
                .map(|_, m| FeatureMatrix::filled(m.rows(), m.cols(), 1.0));
            for u in &units {
                let mut single = covered.map(|_, m| FeatureMatrix::zeros(m.rows(), m.cols()));
                u.copy_cells(&ones, &mut single);
                for m in Modality::ALL {
                    for (c, s) in covered
                        .get_mut(m)
                        .as_mut_slice()
                        .iter_mut()
                        .zip(single.get(m).as_slice())
                    {
                        *c += s;
                    }
                }
            }
            let sum: f64 = Modality::ALL
                .iter()
                .map(|m| covered.get(*m).as_slice().iter().sum::<f64>())
                .sum();
            assert_eq!(sum as usize, total_cells, "{g:?}");
            assert!(Modality::ALL.iter().all(|m| covered
                .get(*m)
                .as_slice()
                .iter()
                .all(|v| *v == 1.0)));
        }
    }

    #[test]
    fn background_means_over_rows() {
        let mut a = crate::data::test_support::instance("a", 1, 0.0, 0.0);
        a.features.audio = FeatureMatrix::from_vec(1, 2, vec![1.0, 3.0]);
        let mut b = crate::data::test_support::instance("b", 3, 0.0, 0.0);
        b.features.audio = FeatureMatrix::from_vec(3, 2, vec![1.0, 3.0, 5.0, 7.0, 9.0, 11.0]);
        let bg = BackgroundSet::from_instances(&[&a, &b]).unwrap();
        assert_eq!(bg.audio, vec![4.0, 6.0]);
        assert_eq!(bg.size, 2);
        assert!(BackgroundSet::from_instances(&[]).is_err());
    }
}
