use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::TemplateError;

/// Distinct-item limit of [`apriori_oracle`].
pub const APRIORI_MAX_ITEMS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequentItemset<T> {
    /// Sorted ascending.
    pub items: Vec<T>,
    pub support: usize,
}

/// Smallest count `c` with `c / n ≥ min_support`.
pub fn min_count(min_support: f64, n: usize) -> Result<usize, TemplateError> {
    if !(min_support > 0.0 && min_support <= 1.0) {
        return Err(TemplateError::Argument(format!(
            "min_support {min_support} outside (0, 1]"
        )));
    }
    let mut c = (min_support * n as f64).ceil() as usize;
    while c > 1 && (c - 1) as f64 / n as f64 >= min_support {
        c -= 1;
    }
    while n > 0 && (c as f64 / n as f64) < min_support {
        c += 1;
    }
    Ok(c.max(1))
}

fn sort_output<T: Ord>(out: &mut [FrequentItemset<T>]) {
    out.sort_by(|a, b| {
        b.support
            .cmp(&a.support)
            .then_with(|| a.items.cmp(&b.items))
    });
}

/// Interns items; ids follow the items' sort order.
fn encode<T: Ord + Clone>(transactions: &[Vec<T>]) -> (Vec<T>, Vec<Vec<usize>>) {
    let vocab: Vec<T> = transactions
        .iter()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let encoded = transactions
        .iter()
        .map(|t| {
            let ids: BTreeSet<usize> = t
                .iter()
                .map(|i| vocab.binary_search(i).expect("item interned"))
                .collect();
            ids.into_iter().collect()
        })
        .collect();
    (vocab, encoded)
}

struct Node {
    item: usize,
    count: usize,
    parent: usize,
    children: HashMap<usize, usize>,
}

struct FpTree {
    nodes: Vec<Node>,
    /// Per item, every node holding it.
    header: BTreeMap<usize, Vec<usize>>,
}

impl FpTree {
    /// Builds a tree from weighted paths, keeping items with count ≥ `min`.
    /// Items inside a path are ordered by frequency desc, then id.
    fn build(paths: &[(Vec<usize>, usize)], min: usize) -> (FpTree, HashMap<usize, usize>) {
        let mut freq: HashMap<usize, usize> = HashMap::new();
        for (p, c) in paths {
            for i in p {
                *freq.entry(*i).or_default() += c;
            }
        }
        freq.retain(|_, c| *c >= min);
        let mut tree = FpTree {
            nodes: vec![Node {
                item: usize::MAX,
                count: 0,
                parent: usize::MAX,
                children: HashMap::new(),
            }],
            header: BTreeMap::new(),
        };
        for (p, c) in paths {
            let mut items: Vec<usize> =
                p.iter().copied().filter(|i| freq.contains_key(i)).collect();
            items.sort_by(|a, b| freq[b].cmp(&freq[a]).then(a.cmp(b)));
            let mut cur = 0;
            for i in items {
                cur = match tree.nodes[cur].children.get(&i) {
                    Some(&child) => child,
                    None => {
                        let id = tree.nodes.len();
                        tree.nodes.push(Node {
                            item: i,
                            count: 0,
                            parent: cur,
                            children: HashMap::new(),
                        });
                        tree.nodes[cur].children.insert(i, id);
                        tree.header.entry(i).or_default().push(id);
                        id
                    }
                };
                tree.nodes[cur].count += c;
            }
        }
        (tree, freq)
    }
}

fn mine(
    paths: &[(Vec<usize>, usize)],
    suffix: &[usize],
    min: usize,
    out: &mut Vec<(Vec<usize>, usize)>,
) {
    let (tree, freq) = FpTree::build(paths, min);
    for (&item, nodes) in &tree.header {
        let mut pattern = suffix.to_vec();
        pattern.push(item);
        out.push((pattern.clone(), freq[&item]));
        let base: Vec<(Vec<usize>, usize)> = nodes
            .iter()
            .filter_map(|&n| {
                let mut prefix = Vec::new();
                let mut p = tree.nodes[n].parent;
                while p != 0 {
                    prefix.push(tree.nodes[p].item);
                    p = tree.nodes[p].parent;
                }
                (!prefix.is_empty()).then(|| (prefix, tree.nodes[n].count))
            })
            .collect();
        if !base.is_empty() {
            mine(&base, &pattern, min, out);
        }
    }
}

/// Every itemset contained in at least `min_support · |transactions|`
/// transactions, with its exact count. Sorted by support desc, then items.
pub fn fp_growth<T: Ord + Clone>(
    transactions: &[Vec<T>],
    min_support: f64,
) -> Result<Vec<FrequentItemset<T>>, TemplateError> {
    let min = min_count(min_support, transactions.len())?;
    if transactions.is_empty() {
        return Ok(Vec::new());
    }
    let (vocab, encoded) = encode(transactions);
    let paths: Vec<(Vec<usize>, usize)> = encoded.into_iter().map(|t| (t, 1)).collect();
    let mut raw = Vec::new();
    mine(&paths, &[], min, &mut raw);
    let mut out: Vec<FrequentItemset<T>> = raw
        .into_iter()
        .map(|(mut ids, support)| {
            ids.sort_unstable();
            FrequentItemset {
                items: ids.into_iter().map(|i| vocab[i].clone()).collect(),
                support,
            }
        })
        .collect();
    sort_output(&mut out);
    Ok(out)
}

/// Level-wise brute-force miner with the same contract as [`fp_growth`].
pub fn apriori_oracle<T: Ord + Clone>(
    transactions: &[Vec<T>],
    min_support: f64,
) -> Result<Vec<FrequentItemset<T>>, TemplateError> {
    let min = min_count(min_support, transactions.len())?;
    let (vocab, encoded) = encode(transactions);
    if vocab.len() > APRIORI_MAX_ITEMS {
        return Err(TemplateError::TooManyItems {
            distinct: vocab.len(),
            max: APRIORI_MAX_ITEMS,
        });
    }
    let masks: Vec<u32> = encoded
        .iter()
        .map(|t| t.iter().fold(0u32, |m, i| m | (1 << i)))
        .collect();
    let support = |set: u32| masks.iter().filter(|t| **t & set == set).count();

    let singles: Vec<u32> = (0..vocab.len())
        .map(|i| 1u32 << i)
        .filter(|s| support(*s) >= min)
        .collect();
    let mut frequent: Vec<(u32, usize)> = Vec::new();
    let mut level: BTreeSet<u32> = singles.iter().copied().collect();
    while !level.is_empty() {
        let mut next = BTreeSet::new();
        for &set in &level {
            frequent.push((set, support(set)));
            for &s in &singles {
                if set & s != 0 {
                    continue;
                }
                let cand = set | s;
                // Every subset one item smaller must be frequent.
                let all_sub = (0..vocab.len())
                    .filter(|i| cand & (1 << i) != 0)
                    .all(|i| level.contains(&(cand & !(1 << i))));
                if all_sub && support(cand) >= min {
                    next.insert(cand);
                }
            }
        }
        level = next;
    }
    let mut out: Vec<FrequentItemset<T>> = frequent
        .into_iter()
        .map(|(set, support)| FrequentItemset {
            items: (0..vocab.len())
                .filter(|i| set & (1 << i) != 0)
                .map(|i| vocab[i].clone())
                .collect(),
            support,
        })
        .collect();
    sort_output(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn db(rows: &[&str]) -> Vec<Vec<char>> {
        rows.iter().map(|r| r.chars().collect()).collect()
    }

    fn fs(items: &str, support: usize) -> FrequentItemset<char> {
        FrequentItemset {
            items: items.chars().collect(),
            support,
        }
    }

    #[test]
    fn small_example() {
        let t = db(&["AB", "ABC", "A"]);
        let expected = vec![fs("A", 3), fs("AB", 2), fs("B", 2)];
        assert_eq!(fp_growth(&t, 2.0 / 3.0).unwrap(), expected);
        assert_eq!(apriori_oracle(&t, 2.0 / 3.0).unwrap(), expected);
    }

    #[test]
    fn no_common_item_at_full_support() {
        assert!(fp_growth(&db(&["AB", "C"]), 1.0).unwrap().is_empty());
    }

    #[test]
    fn duplicates_double_supports() {
        let t = db(&["AB", "ABC", "A"]);
        let doubled: Vec<_> = t.iter().chain(&t).cloned().collect();
        let a = fp_growth(&t, 0.3).unwrap();
        let b = fp_growth(&doubled, 0.3).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(
                (x.items.clone(), 2 * x.support),
                (y.items.clone(), y.support)
            );
        }
    }

    #[test]
    fn edge_cases() {
        let empty: Vec<Vec<char>> = vec![];
        assert!(apriori_oracle(&empty, 0.5).unwrap().is_empty());
        assert!(fp_growth(&empty, 0.5).unwrap().is_empty());
        assert_eq!(apriori_oracle(&db(&["A"]), 1.0).unwrap(), vec![fs("A", 1)]);
        assert!(fp_growth(&db(&["A"]), 0.0).is_err());
        assert!(fp_growth(&db(&["A"]), 1.5).is_err());
        let wide = vec![(0..17).collect::<Vec<u32>>()];
        assert!(matches!(
            apriori_oracle(&wide, 0.5),
            Err(TemplateError::TooManyItems { distinct: 17, .. })
        ));
    }

    #[test]
    fn min_count_is_exact() {
        assert_eq!(min_count(2.0 / 3.0, 3).unwrap(), 2);
        assert_eq!(min_count(0.05, 600).unwrap(), 30);
        assert_eq!(min_count(0.1, 10).unwrap(), 1);
        assert_eq!(min_count(1.0, 7).unwrap(), 7);
    }

    fn database() -> impl Strategy<Value = Vec<Vec<u8>>> {
        prop::collection::vec(prop::collection::vec(0u8..12, 0..7), 0..60)
    }

    proptest! {
        #[test]
        fn matches_oracle(t in database(), ms in 0.02f64..1.0) {
            prop_assert_eq!(fp_growth(&t, ms).unwrap(), apriori_oracle(&t, ms).unwrap());
        }

        #[test]
        fn supports_recount(t in database(), ms in 0.02f64..1.0) {
            for f in fp_growth(&t, ms).unwrap() {
                let n = t.iter().filter(|row| f.items.iter().all(|i| row.contains(i))).count();
                prop_assert_eq!(n, f.support);
            }
        }

        #[test]
        fn anti_monotone(t in database(), a in 0.02f64..1.0, b in 0.02f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let low: BTreeSet<_> = fp_growth(&t, lo).unwrap().into_iter().map(|f| f.items).collect();
            for f in fp_growth(&t, hi).unwrap() {
                prop_assert!(low.contains(&f.items));
            }
        }
    }
}
