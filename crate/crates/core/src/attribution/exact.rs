use super::{
    check_units, evaluate, mask_input, AttributionError, AttributionRecord, BackgroundSet,
    PredictionProvider, Unit,
};
use crate::data::Instance;

/// Largest unit count accepted by exhaustive enumeration.
pub const MAX_EXACT_UNITS: usize = 20;

const CHUNK: usize = 4096;

/// Exact Shapley values by enumerating all `2^M` coalitions:
/// `φ_i = Σ_{S ⊆ N∖{i}} |S|!(M−|S|−1)!/M! · (v(S ∪ {i}) − v(S))`.
pub fn exact_shapley(
    provider: &dyn PredictionProvider,
    instance: &Instance,
    background: &BackgroundSet,
    units: &[Unit],
) -> Result<AttributionRecord, AttributionError> {
    let m = units.len();
    if m > MAX_EXACT_UNITS {
        return Err(AttributionError::TooManyUnits {
            units: m,
            max: MAX_EXACT_UNITS,
        });
    }
    background.check_shape(&instance.features)?;
    check_units(&instance.features, units)?;

    let n_coalitions = 1usize << m;
    let mut values = Vec::with_capacity(n_coalitions);
    let mut keep = vec![false; m];
    for start in (0..n_coalitions).step_by(CHUNK) {
        let end = (start + CHUNK).min(n_coalitions);
        let inputs: Vec<_> = (start..end)
            .map(|mask| {
                for (i, k) in keep.iter_mut().enumerate() {
                    *k = mask >> i & 1 == 1;
                }
                mask_input(&instance.features, units, &keep, background)
            })
            .collect();
        let outputs = evaluate(provider, &inputs).map_err(|source| AttributionError::Provider {
            context: format!(
                "instance `{}`, coalitions {start}..{end} of {n_coalitions}",
                instance.id
            ),
            source,
        })?;
        values.extend(outputs);
    }

    // weight[s] = s!(M−s−1)!/M! = 1 / (M · C(M−1, s))
    let weight: Vec<f64> = (0..m)
        .map(|s| 1.0 / (m as f64 * binomial(m - 1, s)))
        .collect();
    let mut phi = vec![0.0; m];
    for mask in 0..n_coalitions {
        let size = mask.count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if mask >> i & 1 == 0 {
                *p += weight[size] * (values[mask | 1 << i] - values[mask]);
            }
        }
    }
    let base = values[0];
    let output = values[n_coalitions - 1];
    Ok(AttributionRecord::from_parts(
        &instance.id,
        units,
        phi,
        base,
        output,
    ))
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::super::{units_for, Granularity};
    use super::*;

    fn phis(f: impl Fn(&[f64]) -> f64 + Send + Sync, x: &[f64], bg: &[f64]) -> Vec<f64> {
        let inst = row_instance(x);
        let units = units_for(&inst.features, Granularity::Feature);
        exact_shapley(&row_fn(f), &inst, &row_background(bg), &units)
            .unwrap()
            .phis()
    }

    #[test]
    fn linear_game() {
        let p = phis(
            |v| 2.0 * v[0] + v[1] - v[2],
            &[1.0, 1.0, 1.0],
            &[0.0, 0.0, 0.0],
        );
        assert_eq!(p, vec![2.0, 1.0, -1.0]);
    }

    #[test]
    fn symmetric_product() {
        let p = phis(|v| v[0] * v[1], &[1.0, 1.0], &[0.0, 0.0]);
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn dummy_players_get_zero() {
        let p = phis(|v| v[0], &[3.0, 5.0, 7.0], &[0.0, 0.0, 0.0]);
        assert_eq!(p, vec![3.0, 0.0, 0.0]);
    }

    #[test]
    fn local_accuracy_and_base() {
        let inst = row_instance(&[0.3, -1.2, 2.0, 0.7]);
        let units = units_for(&inst.features, Granularity::Feature);
        let f = row_fn(|v| v[0] * v[1] + (v[2] * v[3]).sin() + v[3]);
        let rec = exact_shapley(&f, &inst, &row_background(&[0.1, 0.2, 0.3, 0.4]), &units).unwrap();
        assert!(rec.local_accuracy_gap().abs() < 1e-12);
        assert!((rec.base_value - (0.1 * 0.2 + (0.3f64 * 0.4).sin() + 0.4)).abs() < 1e-15);
    }

    #[test]
    fn too_many_units() {
        let inst = row_instance(&[0.0; 21]);
        let units = units_for(&inst.features, Granularity::Feature);
        let err = exact_shapley(&row_fn(|_| 0.0), &inst, &row_background(&[0.0; 21]), &units)
            .unwrap_err();
        assert!(matches!(
            err,
            AttributionError::TooManyUnits { units: 21, .. }
        ));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(20, 10), 184756.0);
        assert_eq!(binomial(3, 5), 0.0);
    }
}
