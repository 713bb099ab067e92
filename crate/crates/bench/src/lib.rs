//! Seeded fixtures for the benchmarks.

use modallens::attribution::{units_for, BackgroundSet, Granularity, Unit};
use modallens::interactions::{aggregate_modality_importance, ImportanceTriple};
use modallens::synthetic::{self, PlantedCorpus};
use modallens::Instance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One planted instance with a zero background, its feature units truncated
/// to the first `m`.
pub fn shapley_case(corpus: &PlantedCorpus, m: usize) -> (Instance, BackgroundSet, Vec<Unit>) {
    let inst = corpus.dataset.instances()[0].clone();
    let dims = [
        inst.features.language.cols(),
        inst.features.audio.cols(),
        inst.features.vision.cols(),
    ];
    let mut units = units_for(&inst.features, Granularity::Feature);
    units.truncate(m);
    (inst, BackgroundSet::zeros(dims), units)
}

/// Importance triples from the planted corpus's exact contributions.
pub fn planted_triples(seed: u64, n: usize) -> Vec<ImportanceTriple> {
    let c = synthetic::planted_corpus(seed, n);
    let bg = BackgroundSet::zeros([
        c.schema.dims(modallens::Modality::Language),
        c.schema.dims(modallens::Modality::Audio),
        c.schema.dims(modallens::Modality::Vision),
    ]);
    c.dataset
        .iter()
        .map(|inst| {
            let units = units_for(&inst.features, Granularity::Feature);
            let record = c.model.explain(inst, &bg, &units).expect("linear explain");
            aggregate_modality_importance(&record)
        })
        .collect()
}

/// Random transactions over `items` items.
pub fn transactions(seed: u64, n: usize, items: u16, density: f64) -> Vec<Vec<u16>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..items).filter(|_| rng.gen_bool(density)).collect())
        .collect()
}

/// Gaussian-ish clusters in `dim` dimensions.
pub fn clusters(seed: u64, n: usize, dim: usize, k: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..dim).map(|_| rng.gen_range(-8.0..8.0)).collect())
        .collect();
    (0..n)
        .map(|i| {
            centres[i % k]
                .iter()
                .map(|c| c + rng.gen_range(-1.0..1.0))
                .collect()
        })
        .collect()
}
