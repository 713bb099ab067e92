use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::exact::binomial;
use super::{
    check_units, evaluate, mask_input, AttributionError, AttributionRecord, BackgroundSet,
    PredictionProvider, Unit,
};
use crate::data::Instance;

/// Resampling attempts before a singular system is reported.
const RETRY_CAP: usize = 3;
const RIDGE_JITTER: f64 = 1e-10;
/// Squared ratio of extreme Cholesky pivots below which the system is
/// treated as singular.
const MIN_PIVOT_RATIO: f64 = 1e-14;

/// Shapley kernel weight `(M−1) / (C(M,s) · s · (M−s))` for `0 < s < M`.
pub fn shapley_kernel_weight(m: usize, s: usize) -> Result<f64, AttributionError> {
    if s == 0 || s >= m {
        return Err(AttributionError::Argument(format!(
            "coalition size {s} of {m} has no kernel weight (empty and full coalitions are constraints)"
        )));
    }
    Ok((m - 1) as f64 / (binomial(m, s) * s as f64 * (m - s) as f64))
}

/// Kernel SHAP: weighted least squares over sampled coalitions with the
/// local-accuracy constraint `Σφ = f(x) − base` eliminated exactly.
///
/// When `n_samples ≥ 2^M − 2` every proper coalition is used once and the
/// result equals the exact Shapley values.
pub fn kernel_shap(
    provider: &dyn PredictionProvider,
    instance: &Instance,
    background: &BackgroundSet,
    units: &[Unit],
    n_samples: usize,
    seed: u64,
) -> Result<AttributionRecord, AttributionError> {
    let m = units.len();
    if m < 2 {
        return Err(AttributionError::Argument(format!(
            "kernel SHAP needs at least 2 units, got {m}"
        )));
    }
    if n_samples < m + 2 {
        return Err(AttributionError::Argument(format!(
            "n_samples {n_samples} below M + 2 = {}",
            m + 2
        )));
    }
    background.check_shape(&instance.features)?;
    check_units(&instance.features, units)?;

    let ends = evaluate(
        provider,
        &[
            mask_input(&instance.features, units, &vec![false; m], background),
            instance.features.clone(),
        ],
    )
    .map_err(|source| AttributionError::Provider {
        context: format!("instance `{}`, empty/full coalitions", instance.id),
        source,
    })?;
    let (base, output) = (ends[0], ends[1]);
    let delta = output - base;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _attempt in 0..=RETRY_CAP {
        let samples = sample_coalitions(m, n_samples, &mut rng);
        let inputs: Vec<_> = samples
            .iter()
            .map(|(z, _)| mask_input(&instance.features, units, z, background))
            .collect();
        let values = evaluate(provider, &inputs).map_err(|source| AttributionError::Provider {
            context: format!(
                "instance `{}`, {} sampled coalitions",
                instance.id,
                inputs.len()
            ),
            source,
        })?;
        if let Some(phi) = solve_constrained(m, &samples, &values, base, delta) {
            return Ok(AttributionRecord::from_parts(
                &instance.id,
                units,
                phi,
                base,
                output,
            ));
        }
    }
    Err(AttributionError::SingularSystem {
        attempts: RETRY_CAP + 1,
    })
}

/// Solves `min Σ w (v(z) − base − z·φ)²` subject to `Σφ = delta` by
/// substituting `φ_last = delta − Σ_{i<last} φ_i`.
fn solve_constrained(
    m: usize,
    samples: &[(Vec<bool>, f64)],
    values: &[f64],
    base: f64,
    delta: f64,
) -> Option<Vec<f64>> {
    let free = m - 1;
    let total_w: f64 = samples.iter().map(|(_, w)| w).sum();
    let mut a = DMatrix::<f64>::zeros(free, free);
    let mut b = DVector::<f64>::zeros(free);
    let mut d = vec![0.0; free];
    for ((z, w), v) in samples.iter().zip(values) {
        let w = w / total_w;
        let last = f64::from(u8::from(z[free]));
        for (di, zi) in d.iter_mut().zip(z) {
            *di = f64::from(u8::from(*zi)) - last;
        }
        let target = v - base - last * delta;
        for i in 0..free {
            if d[i] == 0.0 {
                continue;
            }
            b[i] += w * d[i] * target;
            for j in 0..free {
                a[(i, j)] += w * d[i] * d[j];
            }
        }
    }
    let chol = match a.clone().cholesky() {
        Some(c) => c,
        None => {
            for i in 0..free {
                a[(i, i)] += RIDGE_JITTER;
            }
            a.cholesky()?
        }
    };
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
        (lo.min(*v), hi.max(*v))
    });
    if !(lo > 0.0) || (lo / hi).powi(2) < MIN_PIVOT_RATIO {
        return None;
    }
    let head = chol.solve(&b);
    let mut phi: Vec<f64> = head.iter().copied().collect();
    phi.push(delta - phi.iter().sum::<f64>());
    Some(phi)
}

/// Coalitions (as membership vectors) with their kernel weights.
///
/// Coalition sizes are taken in order of decreasing kernel mass, pairing
/// size `s` with `M − s`; a size is enumerated completely while the budget
/// covers it, and the rest of the budget is sampled with probability
/// proportional to the remaining kernel mass.
fn sample_coalitions(m: usize, n_samples: usize, rng: &mut ChaCha8Rng) -> Vec<(Vec<bool>, f64)> {
    let mut out = Vec::new();
    if m < usize::BITS as usize - 1 && n_samples >= (1usize << m) - 2 {
        for mask in 1..(1usize << m) - 1 {
            let z: Vec<bool> = (0..m).map(|i| mask >> i & 1 == 1).collect();
            let s = mask.count_ones() as usize;
            out.push((z, shapley_kernel_weight(m, s).expect("proper coalition")));
        }
        return out;
    }

    let n_sizes = m / 2; // sizes 1..=m/2, each paired with m − s
    let paired = |s: usize| s != m - s;
    let mass: Vec<f64> = (1..=n_sizes)
        .map(|s| {
            let one = (m - 1) as f64 / (s * (m - s)) as f64;
            if paired(s) {
                2.0 * one
            } else {
                one
            }
        })
        .collect();
    let mut mass_left: f64 = mass.iter().sum();
    let mut budget = n_samples as f64;
    let mut first_sampled = n_sizes + 1;
    for s in 1..=n_sizes {
        let count = binomial(m, s) * if paired(s) { 2.0 } else { 1.0 };
        if budget * mass[s - 1] / mass_left + 1e-8 < count {
            first_sampled = s;
            break;
        }
        let w = shapley_kernel_weight(m, s).expect("proper coalition");
        for combo in Combinations::new(m, s) {
            let mut z = vec![false; m];
            combo.iter().for_each(|&i| z[i] = true);
            if paired(s) {
                out.push((z.iter().map(|b| !b).collect(), w));
            }
            out.push((z, w));
        }
        budget -= count;
        mass_left -= mass[s - 1];
    }
    if first_sampled > n_sizes || budget < 1.0 {
        return out;
    }

    let sizes: Vec<usize> = (first_sampled..=n_sizes).collect();
    let size_mass: Vec<f64> = sizes.iter().map(|s| mass[s - 1]).collect();
    let mut index: HashMap<Vec<bool>, usize> = HashMap::new();
    let mut drawn: Vec<(Vec<bool>, f64)> = Vec::new();
    let mut n_drawn = 0usize;
    let target = budget as usize;
    while n_drawn < target {
        let mut pick = rng.gen::<f64>() * mass_left;
        let mut s = *sizes.last().unwrap();
        for (size, sm) in sizes.iter().zip(&size_mass) {
            if pick < *sm {
                s = *size;
                break;
            }
            pick -= sm;
        }
        let mut z = vec![false; m];
        sample(rng, m, s).into_iter().for_each(|i| z[i] = true);
        let mut members = vec![z.clone()];
        if paired(s) {
            members.push(z.iter().map(|b| !b).collect());
        }
        for member in members {
            n_drawn += 1;
            match index.get(&member) {
                Some(&i) => drawn[i].1 += 1.0,
                None => {
                    index.insert(member.clone(), drawn.len());
                    drawn.push((member, 1.0));
                }
            }
        }
    }
    // `mass` is in kernel-weight units (C(M,s)·k(M,s) = (M−1)/(s(M−s))), so
    // sampled coalitions split the remaining mass by draw count.
    let per_draw = mass_left / n_drawn as f64;
    out.extend(drawn.into_iter().map(|(z, c)| (z, c * per_draw)));
    out
}

/// Lexicographic `k`-subsets of `0..n`.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let current = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(current)
    }
}
