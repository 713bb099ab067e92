//! Feature-set itemsets of influential units and frequent template mining.

mod itemsets;
mod mining;

pub use itemsets::{build_itemsets, ImportanceRule, ItemPhi, ItemsetBuild, Transaction, UNTAGGED};
pub use mining::{apriori_oracle, fp_growth, min_count, FrequentItemset, APRIORI_MAX_ITEMS};

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Modality};
use crate::stats::Distribution;

pub const DEFAULT_MIN_SUPPORT: f64 = 0.05;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("{distinct} distinct items exceed the oracle limit of {max}")]
    TooManyItems { distinct: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemLevel {
    Set,
    Feature,
}

/// A feature set, or one concrete feature (a word, an AU) inside it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Item {
    pub modality: Modality,
    pub set_name: String,
    pub level: ItemLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<String>,
}

impl Item {
    pub fn set(modality: Modality, set_name: impl Into<String>) -> Self {
        Item {
            modality,
            set_name: set_name.into(),
            level: ItemLevel::Set,
            feature: None,
        }
    }

    pub fn feature(
        modality: Modality,
        set_name: impl Into<String>,
        feature: impl Into<String>,
    ) -> Self {
        Item {
            modality,
            set_name: set_name.into(),
            level: ItemLevel::Feature,
            feature: Some(feature.into()),
        }
    }

    /// The set-level item a feature-level item belongs to. Untagged words
    /// have none.
    pub fn parent(&self) -> Option<Item> {
        (self.level == ItemLevel::Feature && self.set_name != UNTAGGED)
            .then(|| Item::set(self.modality, self.set_name.clone()))
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.feature {
            Some(feat) => write!(f, "{}:{}:{}", self.modality, self.set_name, feat),
            None => write!(f, "{}:{}", self.modality, self.set_name),
        }
    }
}

/// Parses the display form `modality:set` or `modality:set:feature`.
impl std::str::FromStr for Item {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.splitn(3, ':');
        let (Some(m), Some(set)) = (parts.next(), parts.next()) else {
            return Err(TemplateError::Argument(format!(
                "item `{s}` is not `modality:set[:feature]`"
            )));
        };
        let modality: Modality = m
            .parse()
            .map_err(|_| TemplateError::Argument(format!("unknown modality in item `{s}`")))?;
        if set.is_empty() {
            return Err(TemplateError::Argument(format!(
                "item `{s}` has an empty set name"
            )));
        }
        Ok(match parts.next() {
            Some(feature) => Item::feature(modality, set, feature),
            None => Item::set(modality, set),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateSortKey {
    Support,
    Importance,
    Error,
}

impl std::str::FromStr for TemplateSortKey {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "support" => Ok(TemplateSortKey::Support),
            "importance" => Ok(TemplateSortKey::Importance),
            "error" => Ok(TemplateSortKey::Error),
            other => Err(TemplateError::Argument(format!(
                "unknown sort key `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub items: Vec<Item>,
    pub support_count: usize,
    pub support_frac: f64,
    pub member_ids: Vec<String>,
    /// Per member, summed φ of the units behind the template's items.
    pub importance_stats: Distribution,
    /// Per member, `|ŷ − y|`.
    pub error_stats: Distribution,
    /// Feature-level refinements of this set-level template.
    pub children: Vec<Template>,
}

impl Template {
    fn mean_abs_importance(&self) -> f64 {
        let v = &self.importance_stats.values;
        if v.is_empty() {
            0.0
        } else {
            v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
        }
    }
}

/// Sorts templates (and, recursively, their children), largest first.
/// Importance compares mean |importance|; error compares mean error.
pub fn sort_templates(templates: &mut [Template], key: TemplateSortKey) {
    let score = |t: &Template| match key {
        TemplateSortKey::Support => t.support_count as f64,
        TemplateSortKey::Importance => t.mean_abs_importance(),
        TemplateSortKey::Error => t.error_stats.mean,
    };
    templates.sort_by(|a, b| {
        score(b)
            .total_cmp(&score(a))
            .then_with(|| a.items.cmp(&b.items))
    });
    for t in templates.iter_mut() {
        sort_templates(&mut t.children, key);
    }
}

/// Itemsets in which every feature item is accompanied by its set item.
/// The rest duplicate a closed itemset with identical members.
fn is_closed(items: &[Item]) -> bool {
    items
        .iter()
        .filter_map(Item::parent)
        .all(|p| items.contains(&p))
}

/// Set-level part of an itemset; equal to the itemset for set-level templates.
fn set_projection(items: &[Item]) -> Vec<Item> {
    items
        .iter()
        .filter(|i| i.level == ItemLevel::Set)
        .cloned()
        .collect()
}

fn summarize_one(items: Vec<Item>, scoped: &[&Transaction], dataset: &Dataset) -> Template {
    let wanted: BTreeSet<&Item> = items.iter().collect();
    let mut member_ids = Vec::new();
    let mut importance = Vec::new();
    let mut errors = Vec::new();
    for t in scoped {
        if !items.iter().all(|i| t.items.contains(i)) {
            continue;
        }
        let phi: f64 = t
            .phi
            .iter()
            .filter(|e| {
                wanted.contains(&e.item) || e.item.parent().is_some_and(|p| wanted.contains(&p))
            })
            .map(|e| e.phi)
            .sum();
        member_ids.push(t.instance_id.clone());
        importance.push(phi);
        errors.push(
            dataset
                .get(&t.instance_id)
                .map(|i| i.abs_error())
                .unwrap_or(0.0),
        );
    }
    Template {
        support_count: member_ids.len(),
        support_frac: if scoped.is_empty() {
            0.0
        } else {
            member_ids.len() as f64 / scoped.len() as f64
        },
        items,
        member_ids,
        importance_stats: Distribution::from_values(importance),
        error_stats: Distribution::from_values(errors),
        children: Vec::new(),
    }
}

/// Summary of one itemset over the scoped transactions, without children.
pub fn template_for(
    items: Vec<Item>,
    transactions: &[Transaction],
    dataset: &Dataset,
    scope: &BTreeSet<String>,
) -> Template {
    let scoped: Vec<&Transaction> = transactions
        .iter()
        .filter(|t| scope.contains(&t.instance_id))
        .collect();
    summarize_one(items, &scoped, dataset)
}

/// Turns frequent itemsets into templates over the scoped transactions.
///
/// Members are recounted by containment. Itemsets holding a feature item
/// without its set item are dropped (they repeat a closed itemset's members);
/// itemsets mixing set and feature items nest under the itemset of their set
/// items. Output is sorted by support.
pub fn summarize_templates(
    itemsets: &[FrequentItemset<Item>],
    transactions: &[Transaction],
    dataset: &Dataset,
    scope: &BTreeSet<String>,
) -> Vec<Template> {
    let scoped: Vec<&Transaction> = transactions
        .iter()
        .filter(|t| scope.contains(&t.instance_id))
        .collect();
    if scoped.is_empty() {
        return Vec::new();
    }
    let closed: Vec<&FrequentItemset<Item>> =
        itemsets.iter().filter(|f| is_closed(&f.items)).collect();
    let mut top: Vec<Template> = Vec::new();
    let mut index: HashMap<Vec<Item>, usize> = HashMap::new();
    for f in &closed {
        let proj = set_projection(&f.items);
        if proj.len() == f.items.len() || proj.is_empty() {
            index.insert(f.items.clone(), top.len());
            top.push(summarize_one(f.items.clone(), &scoped, dataset));
        }
    }
    for f in &closed {
        let proj = set_projection(&f.items);
        if proj.len() == f.items.len() || proj.is_empty() {
            continue;
        }
        let child = summarize_one(f.items.clone(), &scoped, dataset);
        match index.get(&proj) {
            Some(&p) => top[p].children.push(child),
            // Only possible when the itemsets were mined on another scope.
            None => {
                index.insert(f.items.clone(), top.len());
                top.push(child);
            }
        }
    }
    sort_templates(&mut top, TemplateSortKey::Support);
    top
}

/// Mines the scoped transactions and summarizes the result.
pub fn mine_templates(
    transactions: &[Transaction],
    dataset: &Dataset,
    scope: &BTreeSet<String>,
    min_support: f64,
) -> Result<Vec<Template>, TemplateError> {
    let scoped: Vec<Vec<Item>> = transactions
        .iter()
        .filter(|t| scope.contains(&t.instance_id))
        .map(|t| t.items.iter().cloned().collect())
        .collect();
    let itemsets = fp_growth(&scoped, min_support)?;
    Ok(summarize_templates(&itemsets, transactions, dataset, scope))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::test_support::instance;

    fn tx(id: &str, entries: &[(Item, f64)]) -> Transaction {
        let mut items = BTreeSet::new();
        for (i, _) in entries {
            items.insert(i.clone());
            if let Some(p) = i.parent() {
                items.insert(p);
            }
        }
        Transaction {
            instance_id: id.into(),
            items,
            phi: entries
                .iter()
                .map(|(item, phi)| ItemPhi {
                    item: item.clone(),
                    phi: *phi,
                })
                .collect(),
        }
    }

    fn not() -> Item {
        Item::feature(Modality::Language, "PART", "not")
    }

    fn fixture() -> (Vec<Transaction>, Dataset) {
        let good = Item::feature(Modality::Language, "ADJ", "good");
        let joy = Item::feature(Modality::Vision, "Face emotion", "Joy");
        let to = Item::feature(Modality::Language, "PART", "to");
        let txs = vec![
            tx("a", &[(not(), -0.5), (good.clone(), 0.2)]),
            tx("b", &[(not(), -0.4), (joy.clone(), 0.1)]),
            tx("c", &[(to.clone(), 0.3), (good.clone(), 0.4)]),
            tx("d", &[(not(), 0.2)]),
            tx("e", &[(joy, 0.3), (good, 0.1)]),
            tx("f", &[]),
        ];
        let ds = Dataset::new(
            ["a", "b", "c", "d", "e", "f"]
                .iter()
                .enumerate()
                .map(|(k, id)| instance(id, 1, 0.0, k as f64 * 0.5 - 1.0))
                .collect(),
        )
        .unwrap();
        (txs, ds)
    }

    fn all_ids(txs: &[Transaction]) -> BTreeSet<String> {
        txs.iter().map(|t| t.instance_id.clone()).collect()
    }

    fn walk<'a>(ts: &'a [Template], out: &mut Vec<&'a Template>) {
        for t in ts {
            out.push(t);
            walk(&t.children, out);
        }
    }

    #[test]
    fn part_not_template_counts_influential_not() {
        let (txs, ds) = fixture();
        let templates = mine_templates(&txs, &ds, &all_ids(&txs), 0.3).unwrap();
        let part = templates
            .iter()
            .find(|t| t.items == vec![Item::set(Modality::Language, "PART")])
            .unwrap();
        assert_eq!(part.support_count, 4);
        let child = part
            .children
            .iter()
            .find(|c| c.items.contains(&not()))
            .unwrap();
        let recount = txs.iter().filter(|t| t.items.contains(&not())).count();
        assert_eq!(child.support_count, recount);
        assert_eq!(child.member_ids, ["a", "b", "d"]);
        assert_eq!(child.importance_stats.values, vec![-0.5, -0.4, 0.2]);
        assert_eq!(
            child.items,
            vec![Item::set(Modality::Language, "PART"), not()]
        );
    }

    #[test]
    fn empty_scope_gives_nothing() {
        let (txs, ds) = fixture();
        assert!(mine_templates(&txs, &ds, &BTreeSet::new(), 0.3)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn children_nest_inside_parents() {
        let (txs, ds) = fixture();
        let templates = mine_templates(&txs, &ds, &all_ids(&txs), 0.15).unwrap();
        let mut flat = Vec::new();
        walk(&templates, &mut flat);
        assert!(flat.iter().all(|t| is_closed(&t.items)));
        for t in &templates {
            let parent: BTreeSet<_> = t.member_ids.iter().collect();
            for c in &t.children {
                assert!(c.member_ids.iter().all(|m| parent.contains(m)));
                assert!(c.support_count <= t.support_count);
            }
        }
    }

    #[test]
    fn support_fraction_uses_scope() {
        let (txs, ds) = fixture();
        let scope: BTreeSet<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let templates = mine_templates(&txs, &ds, &scope, 1.0).unwrap();
        let part = templates
            .iter()
            .find(|t| t.items == vec![Item::set(Modality::Language, "PART")])
            .unwrap();
        assert_eq!((part.support_count, part.support_frac), (2, 1.0));
    }

    #[test]
    fn sort_keys() {
        let (txs, ds) = fixture();
        let mut templates = mine_templates(&txs, &ds, &all_ids(&txs), 0.15).unwrap();
        assert!(templates
            .windows(2)
            .all(|w| w[0].support_count >= w[1].support_count));
        sort_templates(&mut templates, TemplateSortKey::Error);
        assert!(templates
            .windows(2)
            .all(|w| w[0].error_stats.mean >= w[1].error_stats.mean));
        sort_templates(&mut templates, TemplateSortKey::Importance);
        assert!(templates
            .windows(2)
            .all(|w| w[0].mean_abs_importance() >= w[1].mean_abs_importance()));
        assert_eq!(
            "error".parse::<TemplateSortKey>().unwrap(),
            TemplateSortKey::Error
        );
        assert!("size".parse::<TemplateSortKey>().is_err());
    }

    #[test]
    fn item_display_round_trips() {
        for item in [not(), Item::set(Modality::Vision, "Face emotion")] {
            assert_eq!(item.to_string().parse::<Item>().unwrap(), item);
        }
        assert!("smell:X".parse::<Item>().is_err());
        assert!("audio".parse::<Item>().is_err());
    }
}
