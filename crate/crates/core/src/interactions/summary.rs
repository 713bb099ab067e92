use serde::{Deserialize, Serialize};

use super::{ImportanceTriple, Interaction, InteractionError, InteractionLabel};
use crate::data::{bin_distribution, Dataset, Histogram, Modality, SENTIMENT_MAX, SENTIMENT_MIN};

/// Bins of the per-group prediction histogram over [-3, 3].
pub const PREDICTION_BINS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalitySeries {
    pub modality: Modality,
    /// `Σ |I_m|` over the group.
    pub total_influence: f64,
    /// `I_m` per member, in member order.
    pub values: Vec<f64>,
}

/// One interaction group as shown in the last summary layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: Interaction,
    /// Σ l1 over members.
    pub total_influence: f64,
    /// Member ids, adjacent members having similar importance triples.
    pub members: Vec<String>,
    /// `|ŷ − y|` per member.
    pub errors: Vec<f64>,
    pub mean_error: f64,
    pub predictions: Vec<f64>,
    pub prediction_histogram: Histogram,
    /// Ordered by total influence, largest first.
    pub modalities: Vec<ModalitySeries>,
}

/// Largest per-modality absolute difference between two triples.
fn chebyshev(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).abs()).fold(0.0, f64::max)
}

/// Greedy nearest-neighbour chain starting from the most influential member.
fn similarity_order(members: &[&ImportanceTriple]) -> Vec<usize> {
    let n = members.len();
    if n == 0 {
        return Vec::new();
    }
    let mut visited = vec![false; n];
    let mut current = (0..n).fold(0, |best, i| {
        if members[i].l1 > members[best].l1 {
            i
        } else {
            best
        }
    });
    let mut order = Vec::with_capacity(n);
    loop {
        visited[current] = true;
        order.push(current);
        let next = (0..n)
            .filter(|i| !visited[*i])
            .map(|i| {
                (
                    i,
                    chebyshev(&members[current].importance, &members[i].importance),
                )
            })
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd <= d => best,
                _ => Some((i, d)),
            });
        match next {
            Some((i, _)) => current = i,
            None => break,
        }
    }
    order
}

/// Builds one summary per interaction type (empty groups included), ordered
/// by total influence descending.
pub fn group_summary(
    labels: &[InteractionLabel],
    triples: &[ImportanceTriple],
    dataset: &Dataset,
) -> Result<Vec<GroupSummary>, InteractionError> {
    if labels.len() != triples.len() {
        return Err(InteractionError::Argument(format!(
            "{} labels for {} triples",
            labels.len(),
            triples.len()
        )));
    }
    let mut groups = Vec::with_capacity(4);
    for kind in Interaction::ALL {
        let members: Vec<&ImportanceTriple> = labels
            .iter()
            .zip(triples)
            .filter(|(l, _)| l.label == kind)
            .map(|(l, t)| {
                if l.instance_id != t.instance_id {
                    return Err(InteractionError::Argument(format!(
                        "label `{}` paired with triple `{}`",
                        l.instance_id, t.instance_id
                    )));
                }
                Ok(t)
            })
            .collect::<Result<_, _>>()?;
        let order = similarity_order(&members);
        let ordered: Vec<&ImportanceTriple> = order.iter().map(|&i| members[i]).collect();
        let mut errors = Vec::with_capacity(ordered.len());
        let mut predictions = Vec::with_capacity(ordered.len());
        for t in &ordered {
            let inst = dataset.get(&t.instance_id).ok_or_else(|| {
                InteractionError::Argument(format!("instance `{}` not in dataset", t.instance_id))
            })?;
            errors.push(inst.abs_error());
            predictions.push(inst.prediction);
        }
        let mut modalities: Vec<ModalitySeries> = Modality::ALL
            .iter()
            .map(|&m| ModalitySeries {
                modality: m,
                total_influence: ordered.iter().map(|t| t.get(m).abs()).sum(),
                values: ordered.iter().map(|t| t.get(m)).collect(),
            })
            .collect();
        modalities.sort_by(|a, b| b.total_influence.total_cmp(&a.total_influence));
        groups.push(GroupSummary {
            label: kind,
            total_influence: ordered.iter().map(|t| t.l1).sum(),
            members: ordered.iter().map(|t| t.instance_id.clone()).collect(),
            mean_error: crate::stats::mean(&errors).unwrap_or(0.0),
            prediction_histogram: bin_distribution(
                &predictions,
                PREDICTION_BINS,
                (SENTIMENT_MIN, SENTIMENT_MAX),
            )
            .expect("fixed histogram arguments are valid"),
            errors,
            predictions,
            modalities,
        });
    }
    groups.sort_by(|a, b| b.total_influence.total_cmp(&a.total_influence));
    Ok(groups)
}
