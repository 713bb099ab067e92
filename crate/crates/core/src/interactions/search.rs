use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::labeling::{label_fast, significance_floor};
use super::{ImportanceTriple, Interaction, InteractionError, Thresholds};

pub const DEFAULT_GRID_STEP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub thresholds: Thresholds,
    pub objective: f64,
    /// Member counts in `Interaction::ALL` order.
    pub group_sizes: [usize; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSearchResult {
    pub best: Thresholds,
    pub objective: f64,
    pub grid_step: f64,
    /// Mean signed share vector per group at `best`, `Interaction::ALL` order.
    pub group_means: [Option<[f64; 3]>; 4],
    /// Mean l1 of `others` relative to the dataset mean l1, at `best`.
    pub others_magnitude: f64,
    /// Every evaluated grid point, in scan order.
    pub trace: Vec<GridPoint>,
}

/// Grid values `step, 2·step, …` strictly inside (0, 1).
pub fn grid_values(step: f64) -> Result<Vec<f64>, InteractionError> {
    if !(step > 0.0 && step < 1.0) {
        return Err(InteractionError::Argument(format!(
            "grid_step {step} outside (0, 1)"
        )));
    }
    Ok((1..)
        .map(|k| k as f64 * step)
        .take_while(|v| *v < 1.0 - 1e-9)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveParts {
    pub value: f64,
    pub group_means: [Option<[f64; 3]>; 4],
    pub others_magnitude: f64,
    pub group_sizes: [usize; 4],
}

/// Separation objective for one labeling:
/// `(1/|L|²) Σ_i Σ_j ‖μ_i − μ_j‖₂ − L̄_others`, with `μ_g` the mean signed
/// share vector of group `g`. Pairs involving an empty group contribute 0.
pub fn objective(triples: &[ImportanceTriple], labels: &[Interaction]) -> ObjectiveParts {
    let mut sums = [[0.0f64; 3]; 4];
    let mut counts = [0usize; 4];
    let mut others_l1 = 0.0;
    let mut total_l1 = 0.0;
    for (t, l) in triples.iter().zip(labels) {
        let g = l.index();
        counts[g] += 1;
        let s = t.signed_shares();
        for k in 0..3 {
            sums[g][k] += s[k];
        }
        total_l1 += t.l1;
        if *l == Interaction::Others {
            others_l1 += t.l1;
        }
    }
    let means: [Option<[f64; 3]>; 4] =
        std::array::from_fn(|g| (counts[g] > 0).then(|| sums[g].map(|v| v / counts[g] as f64)));
    let mut dist_sum = 0.0;
    for a in means.iter().flatten() {
        for b in means.iter().flatten() {
            dist_sum +=
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        }
    }
    let n_groups = Interaction::ALL.len() as f64;
    let others = counts[Interaction::Others.index()];
    let others_magnitude = if others == 0 || total_l1 == 0.0 {
        0.0
    } else {
        (others_l1 / others as f64) / (total_l1 / triples.len() as f64)
    };
    ObjectiveParts {
        value: dist_sum / (n_groups * n_groups) - others_magnitude,
        group_means: means,
        others_magnitude,
        group_sizes: counts,
    }
}

/// Exhaustive search over `grid³` (row-major: `th_sig`, then `th_dom`, then
/// `th_confl`), returning the first point reaching the maximum objective.
pub fn optimize_thresholds(
    triples: &[ImportanceTriple],
    grid_step: f64,
) -> Result<ThresholdSearchResult, InteractionError> {
    let grid = grid_values(grid_step)?;
    if triples.is_empty() {
        return Err(InteractionError::Argument(
            "threshold search needs at least one triple".into(),
        ));
    }
    let floor = significance_floor(triples);
    let shares: Vec<Option<[f64; 3]>> = triples
        .iter()
        .map(|t| if t.l1 < floor { None } else { t.shares() })
        .collect();

    let trace: Vec<GridPoint> = grid
        .par_iter()
        .flat_map_iter(|&sig| {
            let grid = &grid;
            let shares = &shares;
            grid.iter().flat_map(move |&dom| {
                grid.iter().map(move |&confl| {
                    let th = Thresholds {
                        th_sig: sig,
                        th_dom: dom,
                        th_confl: confl,
                    };
                    let labels: Vec<Interaction> = triples
                        .iter()
                        .zip(shares)
                        .map(|(t, s)| label_fast(t, *s, &th))
                        .collect();
                    let parts = objective(triples, &labels);
                    GridPoint {
                        thresholds: th,
                        objective: parts.value,
                        group_sizes: parts.group_sizes,
                    }
                })
            })
        })
        .collect();

    let mut best = 0;
    for (i, p) in trace.iter().enumerate() {
        if p.objective > trace[best].objective {
            best = i;
        }
    }
    let th = trace[best].thresholds;
    let labels: Vec<Interaction> = triples
        .iter()
        .zip(&shares)
        .map(|(t, s)| label_fast(t, *s, &th))
        .collect();
    let parts = objective(triples, &labels);
    Ok(ThresholdSearchResult {
        best: th,
        objective: trace[best].objective,
        grid_step,
        group_means: parts.group_means,
        others_magnitude: parts.others_magnitude,
        trace,
    })
}
