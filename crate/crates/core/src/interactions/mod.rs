//! Modality importance aggregation, interaction-type labeling, threshold
//! search and per-group summaries.

mod labeling;
mod search;
mod summary;

pub use labeling::{
    label_dataset, label_interaction, significance_floor, Interaction, InteractionLabel,
    Thresholds, FLOOR_PERCENTILE,
};
pub use search::{
    grid_values, objective, optimize_thresholds, GridPoint, ThresholdSearchResult,
    DEFAULT_GRID_STEP,
};
pub use summary::{group_summary, GroupSummary, ModalitySeries, PREDICTION_BINS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::AttributionRecord;
use crate::data::Modality;

#[derive(Debug, Error)]
pub enum InteractionError {
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// Per-modality importance of one prediction: the signed sum of φ over the
/// modality's units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTriple {
    pub instance_id: String,
    /// `[I_l, I_a, I_v]`
    pub importance: [f64; 3],
    /// `|I_l| + |I_a| + |I_v|`
    pub l1: f64,
    pub net: f64,
}

impl ImportanceTriple {
    pub fn new(instance_id: impl Into<String>, importance: [f64; 3]) -> Self {
        let l1 = importance.iter().map(|v| v.abs()).sum();
        let net = importance[0] + importance[1] + importance[2];
        ImportanceTriple {
            instance_id: instance_id.into(),
            importance,
            l1,
            net,
        }
    }

    pub fn get(&self, m: Modality) -> f64 {
        self.importance[m.index()]
    }

    /// `|I_m| / l1`; `None` when every importance is zero.
    pub fn shares(&self) -> Option<[f64; 3]> {
        (self.l1 > 0.0).then(|| self.importance.map(|v| v.abs() / self.l1))
    }

    /// `I_m / l1`, or zeros when `l1 = 0`.
    pub fn signed_shares(&self) -> [f64; 3] {
        if self.l1 > 0.0 {
            self.importance.map(|v| v / self.l1)
        } else {
            [0.0; 3]
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        ImportanceTriple::new(self.instance_id.clone(), self.importance.map(|v| v * c))
    }
}

pub fn aggregate_modality_importance(record: &AttributionRecord) -> ImportanceTriple {
    let mut importance = [0.0; 3];
    for v in &record.values {
        importance[v.unit.modality.index()] += v.phi;
    }
    ImportanceTriple::new(record.instance_id.clone(), importance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{Selector, Unit, UnitValue};

    fn record(values: &[(Modality, f64)]) -> AttributionRecord {
        AttributionRecord {
            instance_id: "r".into(),
            granularity: crate::attribution::Granularity::Feature,
            base_value: 0.0,
            output: 0.0,
            values: values
                .iter()
                .enumerate()
                .map(|(i, (m, phi))| UnitValue {
                    unit: Unit {
                        modality: *m,
                        selector: Selector::Feature(i),
                    },
                    phi: *phi,
                })
                .collect(),
        }
    }

    #[test]
    fn sums_per_modality() {
        let r = record(&[
            (Modality::Language, 0.2),
            (Modality::Language, 0.3),
            (Modality::Audio, -0.1),
            (Modality::Vision, 0.0),
        ]);
        let t = aggregate_modality_importance(&r);
        assert_eq!(t.importance, [0.5, -0.1, 0.0]);
        assert!((t.net - 0.4).abs() < 1e-15);
        assert!((t.l1 - 0.6).abs() < 1e-15);
        let shares = t.shares().unwrap();
        assert!((shares.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn all_zero_has_no_shares() {
        let t = aggregate_modality_importance(&record(&[
            (Modality::Language, 0.0),
            (Modality::Vision, 0.0),
        ]));
        assert_eq!(t.importance, [0.0; 3]);
        assert_eq!(t.shares(), None);
        assert_eq!(t.signed_shares(), [0.0; 3]);
    }

    #[test]
    fn unit_order_within_modality_is_irrelevant() {
        let a = record(&[
            (Modality::Audio, 0.25),
            (Modality::Audio, -0.5),
            (Modality::Language, 1.0),
        ]);
        let b = record(&[
            (Modality::Language, 1.0),
            (Modality::Audio, -0.5),
            (Modality::Audio, 0.25),
        ]);
        assert_eq!(
            aggregate_modality_importance(&a).importance,
            aggregate_modality_importance(&b).importance
        );
    }
}
