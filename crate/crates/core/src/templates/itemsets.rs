use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Item, TemplateError};
use crate::attribution::{AttributionRecord, AttributionStore, Selector};
use crate::data::{Dataset, FeatureSchema, Instance, Modality};
use crate::stats::percentile;

/// Set name of words without a POS tag. No set-level item is emitted for it.
pub const UNTAGGED: &str = "UNTAGGED";

/// A unit is influential when `|φ|` reaches this percentile of the dataset's
/// `|φ|` values for its modality (and is nonzero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRule {
    pub percentile: f64,
}

impl Default for ImportanceRule {
    fn default() -> Self {
        ImportanceRule { percentile: 90.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemPhi {
    pub item: Item,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub instance_id: String,
    pub items: BTreeSet<Item>,
    /// Summed φ of the influential units behind each feature-level item.
    pub phi: Vec<ItemPhi>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemsetBuild {
    /// In dataset order.
    pub transactions: Vec<Transaction>,
    /// Instances without attribution records.
    pub skipped: Vec<String>,
    /// `|φ|` cutoff per modality (`None` when the modality has no units).
    pub cutoffs: [Option<f64>; 3],
}

/// Candidate units of one instance as (feature-level item, φ).
fn candidate_units(
    inst: &Instance,
    feature: &AttributionRecord,
    word: Option<&AttributionRecord>,
    schema: &FeatureSchema,
) -> Vec<(Item, f64)> {
    let mut out = Vec::new();
    let mut column_phi: BTreeMap<(Modality, usize), f64> = BTreeMap::new();
    for v in &feature.values {
        let col = match v.unit.selector {
            Selector::Feature(c) | Selector::Cell(_, c) => c,
            Selector::TimeStep(_) => continue,
        };
        *column_phi.entry((v.unit.modality, col)).or_default() += v.phi;
    }
    let language_sets = schema.feature_sets(Modality::Language).next().is_some();
    for ((m, col), phi) in column_phi {
        if m == Modality::Language && (word.is_some() || !language_sets) {
            continue;
        }
        let name = schema.feature_name(m, col);
        if let Some(set) = schema.set_of(m, name) {
            out.push((Item::feature(m, set, name), phi));
        }
    }
    if let Some(word) = word {
        for v in word.modality_values(Modality::Language) {
            let Selector::TimeStep(r) = v.unit.selector else {
                continue;
            };
            let Some(tok) = inst.tokens.get(r) else {
                continue;
            };
            let set = tok.pos.clone().unwrap_or_else(|| UNTAGGED.to_string());
            out.push((
                Item::feature(Modality::Language, set, tok.text.to_lowercase()),
                v.phi,
            ));
        }
    }
    out
}

/// One transaction per attributed instance. Each influential unit adds its
/// feature-level item and, where it has one, its set-level item.
pub fn build_itemsets(
    dataset: &Dataset,
    schema: &FeatureSchema,
    attributions: &AttributionStore,
    rule: ImportanceRule,
) -> Result<ItemsetBuild, TemplateError> {
    if !(0.0..=100.0).contains(&rule.percentile) {
        return Err(TemplateError::Argument(format!(
            "percentile {} outside [0, 100]",
            rule.percentile
        )));
    }
    let by_id: HashMap<&str, _> = attributions
        .records
        .iter()
        .map(|r| (r.feature.instance_id.as_str(), r))
        .collect();
    let per_instance: Vec<(String, Option<Vec<(Item, f64)>>)> = dataset
        .instances()
        .par_iter()
        .map(|inst| {
            let units = by_id
                .get(inst.id.as_str())
                .map(|r| candidate_units(inst, &r.feature, r.word.as_ref(), schema));
            (inst.id.clone(), units)
        })
        .collect();

    let cutoffs: [Option<f64>; 3] = std::array::from_fn(|k| {
        let m = Modality::ALL[k];
        let mags: Vec<f64> = per_instance
            .iter()
            .filter_map(|(_, u)| u.as_ref())
            .flatten()
            .filter(|(i, _)| i.modality == m)
            .map(|(_, phi)| phi.abs())
            .collect();
        percentile(&mags, rule.percentile)
    });

    let mut transactions = Vec::new();
    let mut skipped = Vec::new();
    for (id, units) in per_instance {
        let Some(units) = units else {
            skipped.push(id);
            continue;
        };
        let mut items = BTreeSet::new();
        let mut phi: BTreeMap<Item, f64> = BTreeMap::new();
        for (item, p) in units {
            let cut = cutoffs[item.modality.index()].unwrap_or(f64::INFINITY);
            if p.abs() < cut || p == 0.0 {
                continue;
            }
            if let Some(parent) = item.parent() {
                items.insert(parent);
            }
            items.insert(item.clone());
            *phi.entry(item).or_default() += p;
        }
        transactions.push(Transaction {
            instance_id: id,
            items,
            phi: phi
                .into_iter()
                .map(|(item, phi)| ItemPhi { item, phi })
                .collect(),
        });
    }
    Ok(ItemsetBuild {
        transactions,
        skipped,
        cutoffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{
        AttributeConfig, AttributionRecord, Granularity, InstanceAttribution, Unit, UnitValue,
    };
    use crate::data::test_support::{instance, tiny_schema};
    use crate::data::Token;

    fn record(
        id: &str,
        granularity: Granularity,
        values: Vec<(Modality, Selector, f64)>,
    ) -> AttributionRecord {
        AttributionRecord {
            instance_id: id.into(),
            granularity,
            base_value: 0.0,
            output: values.iter().map(|v| v.2).sum(),
            values: values
                .into_iter()
                .map(|(modality, selector, phi)| UnitValue {
                    unit: Unit { modality, selector },
                    phi,
                })
                .collect(),
        }
    }

    fn store(records: Vec<InstanceAttribution>) -> AttributionStore {
        AttributionStore {
            config: AttributeConfig::default(),
            config_fingerprint: "fp".into(),
            records,
            failed: vec![],
        }
    }

    fn tokens(words: &[(&str, Option<&str>)]) -> Vec<Token> {
        words
            .iter()
            .enumerate()
            .map(|(i, (w, p))| Token {
                text: w.to_string(),
                start_s: i as f64,
                end_s: i as f64 + 0.5,
                pos: p.map(str::to_string),
            })
            .collect()
    }

    /// Two instances; `a` has an influential "Not" and two Brow AUs, `b` has
    /// nothing above the cutoff.
    fn fixture() -> (Dataset, AttributionStore) {
        let mut a = instance("a", 3, 1.0, 0.5);
        a.tokens = tokens(&[("I", Some("PRON")), ("Not", Some("PART")), ("fine", None)]);
        let b = instance("b", 3, 0.0, 0.0);
        let feat = |id: &str, s: f64| {
            record(
                id,
                Granularity::Feature,
                vec![
                    (Modality::Audio, Selector::Feature(0), 0.0),
                    (Modality::Audio, Selector::Feature(1), 0.0),
                    (Modality::Vision, Selector::Feature(0), 0.9 * s),
                    (Modality::Vision, Selector::Feature(1), -0.9 * s),
                    (Modality::Vision, Selector::Feature(3), 0.01 * s),
                ],
            )
        };
        let word = |id: &str, phis: [f64; 3]| {
            record(
                id,
                Granularity::TimeStep,
                (0..3)
                    .map(|r| (Modality::Language, Selector::TimeStep(r), phis[r]))
                    .collect(),
            )
        };
        let ds = Dataset::new(vec![a, b]).unwrap();
        let st = store(vec![
            InstanceAttribution {
                feature: feat("a", 1.0),
                word: Some(word("a", [0.0, -2.0, 0.001])),
            },
            InstanceAttribution {
                feature: feat("b", 0.0),
                word: Some(word("b", [0.0, 0.0, 0.0])),
            },
        ]);
        (ds, st)
    }

    #[test]
    fn influential_units_become_items() {
        let (ds, st) = fixture();
        let build = build_itemsets(&ds, &tiny_schema(), &st, ImportanceRule::default()).unwrap();
        let a = &build.transactions[0];
        let expected: BTreeSet<Item> = [
            Item::set(Modality::Language, "PART"),
            Item::feature(Modality::Language, "PART", "not"),
            Item::set(Modality::Vision, "Brow"),
            Item::feature(Modality::Vision, "Brow", "AU1"),
            Item::feature(Modality::Vision, "Brow", "AU2"),
        ]
        .into_iter()
        .collect();
        assert_eq!(a.items, expected);
        assert_eq!(
            a.phi
                .iter()
                .find(|e| e.item.feature.as_deref() == Some("not"))
                .unwrap()
                .phi,
            -2.0
        );
        assert!(build.transactions[1].items.is_empty());
        assert!(build.skipped.is_empty());
    }

    #[test]
    fn untagged_tokens_add_only_the_word() {
        let (ds, st) = fixture();
        let build =
            build_itemsets(&ds, &tiny_schema(), &st, ImportanceRule { percentile: 0.0 }).unwrap();
        let a = &build.transactions[0];
        assert!(a
            .items
            .contains(&Item::feature(Modality::Language, UNTAGGED, "fine")));
        assert!(!a.items.contains(&Item::set(Modality::Language, UNTAGGED)));
        // Zero φ never counts as influential.
        assert!(!a
            .items
            .contains(&Item::feature(Modality::Language, "PRON", "i")));
    }

    #[test]
    fn missing_records_are_skipped() {
        let (ds, mut st) = fixture();
        st.records.truncate(1);
        let build = build_itemsets(&ds, &tiny_schema(), &st, ImportanceRule::default()).unwrap();
        assert_eq!(build.skipped, ["b"]);
        assert_eq!(build.transactions.len(), 1);
        assert!(build_itemsets(
            &ds,
            &tiny_schema(),
            &st,
            ImportanceRule { percentile: 120.0 }
        )
        .is_err());
    }
}
