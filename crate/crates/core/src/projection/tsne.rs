use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ProjectionError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub seed: u64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            seed: 0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneResult {
    pub coords: Vec<[f64; 2]>,
    /// KL(P‖Q) right after early exaggeration stops.
    pub kl_after_exaggeration: f64,
    pub kl_final: f64,
}

/// Largest perplexity accepted for `n` points.
pub fn max_perplexity(n: usize) -> f64 {
    ((n as f64 - 1.0) / 3.0).max(1.0)
}

/// Clamps a requested perplexity into the feasible range for `n` points.
pub fn feasible_perplexity(requested: f64, n: usize) -> f64 {
    requested.clamp(1.0, max_perplexity(n))
}

fn squared_distances(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Row-conditional affinities with per-point precision found by bisection
/// so that each row's entropy is `ln(perplexity)`.
fn conditional_affinities(d: &[f64], n: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let row = &d[i * n..(i + 1) * n];
        let (mut beta, mut lo, mut hi) = (1.0f64, f64::NEG_INFINITY, f64::INFINITY);
        // Distances are shifted by the row minimum so exp() cannot underflow
        // for every neighbour at once.
        let dmin = (0..n)
            .filter(|&j| j != i)
            .map(|j| row[j])
            .fold(f64::INFINITY, f64::min);
        let mut probs = vec![0.0; n];
        for _ in 0..200 {
            let mut sum = 0.0;
            for j in 0..n {
                probs[j] = if j == i {
                    0.0
                } else {
                    (-(row[j] - dmin) * beta).exp()
                };
                sum += probs[j];
            }
            let mut h = 0.0;
            for j in 0..n {
                probs[j] /= sum;
                if probs[j] > 0.0 {
                    h -= probs[j] * probs[j].ln();
                }
            }
            let diff = h - target;
            if diff.abs() < 1e-10 {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() {
                    (beta + hi) / 2.0
                } else {
                    beta * 2.0
                };
            } else {
                hi = beta;
                beta = if lo.is_finite() {
                    (beta + lo) / 2.0
                } else {
                    beta / 2.0
                };
            }
        }
        p[i * n..(i + 1) * n].copy_from_slice(&probs);
    }
    p
}

fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                num[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
                z += num[i * n + j];
            }
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && p[i * n + j] > 0.0 {
                let q = (num[i * n + j] / z).max(1e-300);
                kl += p[i * n + j] * (p[i * n + j] / q).ln();
            }
        }
    }
    kl
}

/// Exact t-SNE to two dimensions.
pub fn tsne_embed(
    vectors: &[Vec<f64>],
    config: &TsneConfig,
) -> Result<TsneResult, ProjectionError> {
    let n = vectors.len();
    if n < 2 {
        return Err(ProjectionError::Argument(format!(
            "t-SNE needs at least 2 points, got {n}"
        )));
    }
    let dim = vectors[0].len();
    if vectors
        .iter()
        .any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite()))
    {
        return Err(ProjectionError::Argument(
            "t-SNE input rows must be finite and equally long".into(),
        ));
    }
    if !(config.perplexity >= 1.0 && config.perplexity <= max_perplexity(n)) {
        return Err(ProjectionError::Argument(format!(
            "perplexity {} infeasible for {n} points (allowed 1..={})",
            config.perplexity,
            max_perplexity(n)
        )));
    }
    if config.iterations <= config.exaggeration_iters {
        return Err(ProjectionError::Argument(
            "iterations must exceed the early-exaggeration phase".into(),
        ));
    }

    let d = squared_distances(vectors);
    let cond = conditional_affinities(&d, n, config.perplexity);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)])
        .collect();
    let mut velocity = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut num = vec![0.0; n * n];
    let mut kl_after_exaggeration = f64::NAN;

    for iter in 0..config.iterations {
        if iter == config.exaggeration_iters {
            kl_after_exaggeration = kl_divergence(&p, &y);
        }
        let exaggeration = if iter < config.exaggeration_iters {
            config.exaggeration
        } else {
            1.0
        };
        let momentum = if iter < config.exaggeration_iters {
            0.5
        } else {
            0.8
        };
        let mut z = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = v;
                num[j * n + i] = v;
                z += 2.0 * v;
            }
        }
        for i in 0..n {
            let mut grad = [0.0f64; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = (exaggeration * p[i * n + j] - num[i * n + j] / z) * num[i * n + j];
                grad[0] += 4.0 * w * (y[i][0] - y[j][0]);
                grad[1] += 4.0 * w * (y[i][1] - y[j][1]);
            }
            for k in 0..2 {
                gains[i][k] = if (grad[k] > 0.0) != (velocity[i][k] > 0.0) {
                    gains[i][k] + 0.2
                } else {
                    gains[i][k] * 0.8
                };
                gains[i][k] = gains[i][k].max(0.01);
                velocity[i][k] =
                    momentum * velocity[i][k] - config.learning_rate * gains[i][k] * grad[k];
            }
        }
        for i in 0..n {
            y[i][0] += velocity[i][0];
            y[i][1] += velocity[i][1];
        }
        let cx = y.iter().map(|p| p[0]).sum::<f64>() / n as f64;
        let cy = y.iter().map(|p| p[1]).sum::<f64>() / n as f64;
        for p in y.iter_mut() {
            p[0] -= cx;
            p[1] -= cy;
        }
    }
    let kl_final = kl_divergence(&p, &y);
    Ok(TsneResult {
        coords: y,
        kl_after_exaggeration,
        kl_final,
    })
}
