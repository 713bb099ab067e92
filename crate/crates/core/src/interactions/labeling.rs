use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ImportanceTriple, InteractionError};
use crate::data::Modality;
use crate::stats::percentile;

/// Instances whose total importance falls strictly below this percentile of
/// the dataset's totals are labeled `others`.
pub const FLOOR_PERCENTILE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interaction {
    Dominance,
    Conflict,
    Complement,
    Others,
}

impl Interaction {
    pub const ALL: [Interaction; 4] = [
        Interaction::Dominance,
        Interaction::Conflict,
        Interaction::Complement,
        Interaction::Others,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Interaction::Dominance => "dominance",
            Interaction::Conflict => "conflict",
            Interaction::Complement => "complement",
            Interaction::Others => "others",
        }
    }
}

impl fmt::Display for Interaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Interaction {
    type Err = InteractionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Interaction::ALL
            .into_iter()
            .find(|i| i.as_str() == s)
            .ok_or_else(|| InteractionError::Argument(format!("unknown interaction type `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub th_sig: f64,
    pub th_dom: f64,
    pub th_confl: f64,
}

impl Thresholds {
    pub fn new(th_sig: f64, th_dom: f64, th_confl: f64) -> Result<Self, InteractionError> {
        let th = Thresholds {
            th_sig,
            th_dom,
            th_confl,
        };
        th.validate()?;
        Ok(th)
    }

    pub fn validate(&self) -> Result<(), InteractionError> {
        for (name, v) in [
            ("th_sig", self.th_sig),
            ("th_dom", self.th_dom),
            ("th_confl", self.th_confl),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(InteractionError::Argument(format!(
                    "{name} = {v} outside (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionLabel {
    pub instance_id: String,
    pub label: Interaction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominant: Option<Modality>,
    /// The comparisons that decided the label.
    pub evidence: Vec<String>,
}

impl InteractionLabel {
    fn others(t: &ImportanceTriple, evidence: String) -> Self {
        InteractionLabel {
            instance_id: t.instance_id.clone(),
            label: Interaction::Others,
            dominant: None,
            evidence: vec![evidence],
        }
    }
}

/// Labels one prediction from its modality importances.
///
/// Shares `|I_m|/‖I‖₁` must all exceed `th_sig`; then, in order:
/// dominance (a modality agreeing in sign with the net effect holds a share
/// of at least `th_dom`), conflict (an opposite-sign pair with
/// `|ΣI|/‖I‖₁ ≤ th_confl`), complement (a same-sign pair), else others.
pub fn label_interaction(t: &ImportanceTriple, th: &Thresholds) -> InteractionLabel {
    let Some(shares) = t.shares() else {
        return InteractionLabel::others(t, "total importance is zero".into());
    };
    if let Some(m) = Modality::ALL
        .into_iter()
        .find(|m| shares[m.index()] <= th.th_sig)
    {
        return InteractionLabel::others(
            t,
            format!(
                "share({m}) = {:.4} <= th_sig {}",
                shares[m.index()],
                th.th_sig
            ),
        );
    }
    let imp = t.importance;
    if let Some(m) = Modality::ALL
        .into_iter()
        .find(|m| imp[m.index()] * t.net > 0.0 && shares[m.index()] >= th.th_dom)
    {
        return InteractionLabel {
            instance_id: t.instance_id.clone(),
            label: Interaction::Dominance,
            dominant: Some(m),
            evidence: vec![
                format!("I_{m} * net = {:.4} > 0", imp[m.index()] * t.net),
                format!(
                    "share({m}) = {:.4} >= th_dom {}",
                    shares[m.index()],
                    th.th_dom
                ),
            ],
        };
    }
    let pairs = [(0usize, 1usize), (0, 2), (1, 2)];
    let relative_net = t.net.abs() / t.l1;
    if let Some((i, j)) = pairs.into_iter().find(|(i, j)| imp[*i] * imp[*j] < 0.0) {
        if relative_net <= th.th_confl {
            return InteractionLabel {
                instance_id: t.instance_id.clone(),
                label: Interaction::Conflict,
                dominant: None,
                evidence: vec![
                    format!("I_{} * I_{} < 0", Modality::ALL[i], Modality::ALL[j]),
                    format!("|net|/l1 = {relative_net:.4} <= th_confl {}", th.th_confl),
                ],
            };
        }
    }
    if let Some((i, j)) = pairs.into_iter().find(|(i, j)| imp[*i] * imp[*j] > 0.0) {
        return InteractionLabel {
            instance_id: t.instance_id.clone(),
            label: Interaction::Complement,
            dominant: None,
            evidence: vec![format!(
                "I_{} * I_{} > 0",
                Modality::ALL[i],
                Modality::ALL[j]
            )],
        };
    }
    InteractionLabel::others(t, "no rule fired".into())
}

/// Dataset-relative significance floor on total importance.
pub fn significance_floor(triples: &[ImportanceTriple]) -> f64 {
    let l1: Vec<f64> = triples.iter().map(|t| t.l1).collect();
    percentile(&l1, FLOOR_PERCENTILE).unwrap_or(0.0)
}

/// Labels every triple, routing those below the dataset floor to others.
pub fn label_dataset(triples: &[ImportanceTriple], th: &Thresholds) -> Vec<InteractionLabel> {
    let floor = significance_floor(triples);
    label_with_floor(triples, th, floor)
}

pub(crate) fn label_with_floor(
    triples: &[ImportanceTriple],
    th: &Thresholds,
    floor: f64,
) -> Vec<InteractionLabel> {
    triples
        .iter()
        .map(|t| {
            if t.l1 < floor {
                InteractionLabel::others(
                    t,
                    format!("l1 = {:.4e} below dataset floor {floor:.4e}", t.l1),
                )
            } else {
                label_interaction(t, th)
            }
        })
        .collect()
}

/// Label only, without evidence strings; used in the threshold search.
pub(crate) fn label_fast(
    t: &ImportanceTriple,
    shares: Option<[f64; 3]>,
    th: &Thresholds,
) -> Interaction {
    let Some(shares) = shares else {
        return Interaction::Others;
    };
    if shares.iter().any(|s| *s <= th.th_sig) {
        return Interaction::Others;
    }
    let imp = t.importance;
    if (0..3).any(|i| imp[i] * t.net > 0.0 && shares[i] >= th.th_dom) {
        return Interaction::Dominance;
    }
    let pairs = [(0usize, 1usize), (0, 2), (1, 2)];
    if pairs.iter().any(|(i, j)| imp[*i] * imp[*j] < 0.0) && t.net.abs() / t.l1 <= th.th_confl {
        return Interaction::Conflict;
    }
    if pairs.iter().any(|(i, j)| imp[*i] * imp[*j] > 0.0) {
        return Interaction::Complement;
    }
    Interaction::Others
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn th() -> Thresholds {
        Thresholds::new(0.05, 0.6, 0.2).unwrap()
    }

    fn label(imp: [f64; 3]) -> InteractionLabel {
        label_interaction(&ImportanceTriple::new("t", imp), &th())
    }

    #[test]
    fn hand_traced_examples() {
        let d = label([0.8, 0.1, 0.1]);
        assert_eq!(
            (d.label, d.dominant),
            (Interaction::Dominance, Some(Modality::Language))
        );
        assert_eq!(label([0.5, -0.4, 0.1]).label, Interaction::Conflict);
        assert_eq!(label([0.4, 0.4, 0.2]).label, Interaction::Complement);
        assert_eq!(label([0.02, 0.9, 0.08]).label, Interaction::Others);
    }

    #[test]
    fn zero_triple_is_others() {
        assert_eq!(label([0.0; 3]).label, Interaction::Others);
    }

    #[test]
    fn opposite_signs_with_large_net_are_complement() {
        // (0.5, 0.4) agree; net/l1 = 0.8 so no conflict.
        assert_eq!(label([0.5, 0.4, -0.1]).label, Interaction::Complement);
    }

    #[test]
    fn thresholds_validated() {
        assert!(Thresholds::new(0.0, 0.5, 0.5).is_err());
        assert!(Thresholds::new(0.5, 1.0, 0.5).is_err());
        assert!(Thresholds::new(0.5, 0.5, f64::NAN).is_err());
    }

    #[test]
    fn floor_routes_smallest_to_others() {
        let mut triples: Vec<_> = (1..=40)
            .map(|i| {
                ImportanceTriple::new(
                    format!("t{i}"),
                    [0.4 * i as f64, 0.4 * i as f64, 0.2 * i as f64],
                )
            })
            .collect();
        triples.push(ImportanceTriple::new("tiny", [0.004, 0.004, 0.002]));
        let labels = label_dataset(&triples, &th());
        assert_eq!(labels.last().unwrap().label, Interaction::Others);
        assert_eq!(
            labels
                .iter()
                .filter(|l| l.label == Interaction::Complement)
                .count(),
            39
        );
    }

    fn triple_strategy() -> impl Strategy<Value = [f64; 3]> {
        prop::array::uniform3(prop_oneof![-5.0f64..5.0, Just(0.0)])
    }

    fn thresholds_strategy() -> impl Strategy<Value = Thresholds> {
        (0.01f64..0.99, 0.5f64..0.99, 0.01f64..0.99)
            .prop_map(|(a, b, c)| Thresholds::new(a, b, c).unwrap())
    }

    proptest! {
        #[test]
        fn fast_path_agrees(imp in triple_strategy(), th in thresholds_strategy()) {
            let t = ImportanceTriple::new("p", imp);
            prop_assert_eq!(label_fast(&t, t.shares(), &th), label_interaction(&t, &th).label);
        }

        #[test]
        fn soundness(imp in triple_strategy(), th in thresholds_strategy()) {
            let t = ImportanceTriple::new("p", imp);
            let l = label_interaction(&t, &th);
            prop_assert_eq!(l.dominant.is_some(), l.label == Interaction::Dominance);
            if let Some(m) = l.dominant {
                prop_assert!(t.get(m).signum() == t.net.signum());
                prop_assert!(t.shares().unwrap()[m.index()] >= th.th_dom);
            }
            if l.label == Interaction::Conflict {
                prop_assert!((0..3).any(|i| (0..3).any(|j| imp[i] * imp[j] < 0.0)));
            }
        }

        #[test]
        fn power_of_two_scaling_keeps_labels(imp in triple_strategy(), th in thresholds_strategy(), k in -8i32..8) {
            let t = ImportanceTriple::new("p", imp);
            let c = 2f64.powi(k);
            let a = label_interaction(&t, &th);
            let b = label_interaction(&t.scaled(c), &th);
            prop_assert_eq!((a.label, a.dominant), (b.label, b.dominant));
        }
    }
}
