use modallens::attribution::{
    exact_shapley, kernel_shap, BackgroundSet, FnProvider, LinearProvider, Selector, Unit,
};
use modallens::data::{load_instances, write_instances, FeatureMatrix, Token};
use modallens::interactions::{label_dataset, optimize_thresholds, ImportanceTriple, Interaction};
use modallens::{fingerprint, synthetic, Instance, Modality, ModalityFeatures};
use proptest::prelude::*;

fn instance(x: &[f64], split: usize) -> Instance {
    Instance {
        id: "p".into(),
        tokens: vec![Token {
            text: "w".into(),
            start_s: 0.0,
            end_s: 0.5,
            pos: None,
        }],
        features: ModalityFeatures {
            language: FeatureMatrix::from_vec(1, split, x[..split].to_vec()),
            audio: FeatureMatrix::from_vec(1, x.len() - split, x[split..].to_vec()),
            vision: FeatureMatrix::zeros(1, 0),
        },
        label: 0.0,
        prediction: 0.0,
    }
}

fn background(bg: &[f64], split: usize) -> BackgroundSet {
    BackgroundSet {
        language: bg[..split].to_vec(),
        audio: bg[split..].to_vec(),
        vision: vec![],
        size: 1,
    }
}

fn units(m: usize, split: usize) -> Vec<Unit> {
    (0..m)
        .map(|k| {
            if k < split {
                Unit {
                    modality: Modality::Language,
                    selector: Selector::Feature(k),
                }
            } else {
                Unit {
                    modality: Modality::Audio,
                    selector: Selector::Feature(k - split),
                }
            }
        })
        .collect()
}

fn flat(x: &ModalityFeatures) -> Vec<f64> {
    x.language
        .row(0)
        .iter()
        .chain(x.audio.row(0))
        .copied()
        .collect()
}

/// Points, background and an interaction-heavy model over them.
fn case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, usize)> {
    (2usize..8).prop_flat_map(|m| {
        (
            prop::collection::vec(-2.0f64..2.0, m),
            prop::collection::vec(-2.0f64..2.0, m),
            prop::collection::vec(-1.0f64..1.0, m),
            0..=m,
        )
    })
}

fn model(w: Vec<f64>) -> impl Fn(&ModalityFeatures) -> f64 + Send + Sync {
    move |x| {
        let z = flat(x);
        let lin: f64 = w.iter().zip(&z).map(|(a, b)| a * b).sum();
        lin.tanh() + z[0] * z[z.len() - 1] + z.iter().cloned().fold(f64::MIN, f64::max)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn efficiency((x, bg, w, split) in case()) {
        let p = FnProvider::new(model(w));
        let r = exact_shapley(&p, &instance(&x, split), &background(&bg, split), &units(x.len(), split)).unwrap();
        prop_assert!(r.local_accuracy_gap().abs() < 1e-9);
    }

    #[test]
    fn kernel_matches_exact_when_exhaustive((x, bg, w, split) in case(), seed in any::<u64>()) {
        let p = FnProvider::new(model(w));
        let (inst, back, u) = (instance(&x, split), background(&bg, split), units(x.len(), split));
        let exact = exact_shapley(&p, &inst, &back, &u).unwrap();
        let kernel = kernel_shap(&p, &inst, &back, &u, 1 << x.len(), seed).unwrap();
        for (a, b) in exact.phis().iter().zip(kernel.phis()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn unit_equal_to_background_gets_zero((mut x, bg, w, split) in case(), k in 0usize..8) {
        let k = k % x.len();
        x[k] = bg[k];
        let p = FnProvider::new(model(w));
        let r = exact_shapley(&p, &instance(&x, split), &background(&bg, split), &units(x.len(), split)).unwrap();
        prop_assert!(r.phis()[k].abs() < 1e-12);
    }

    #[test]
    fn linear_explain_matches_exact((x, bg, w, split) in case(), bias in -1.0f64..1.0) {
        let lp = LinearProvider { language: w[..split].to_vec(), audio: w[split..].to_vec(), vision: vec![], bias };
        let (inst, back, u) = (instance(&x, split), background(&bg, split), units(x.len(), split));
        let exact = exact_shapley(&lp, &inst, &back, &u).unwrap();
        let closed = lp.explain(&inst, &back, &u).unwrap();
        for (a, b) in exact.phis().iter().zip(closed.phis()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn search_returns_trace_maximum(raw in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 4..60)) {
        let triples: Vec<ImportanceTriple> = raw.iter().enumerate().map(|(i, v)| ImportanceTriple::new(format!("t{i}"), *v)).collect();
        let r = optimize_thresholds(&triples, 0.1).unwrap();
        prop_assert_eq!(r.trace.len(), 9 * 9 * 9);
        let max = r.trace.iter().map(|p| p.objective).fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(r.objective, max);
        let first = r.trace.iter().find(|p| p.objective == max).unwrap();
        prop_assert_eq!(first.thresholds, r.best);
        let labels = label_dataset(&triples, &r.best);
        let sizes: Vec<usize> = Interaction::ALL.iter().map(|g| labels.iter().filter(|l| l.label == *g).count()).collect();
        prop_assert_eq!(sizes, first.group_sizes.to_vec());
    }
}

#[test]
fn planted_instances_round_trip() {
    let c = synthetic::planted_corpus(11, 30);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("instances.jsonl");
    let mut bytes = Vec::new();
    write_instances(&mut bytes, &c.dataset).unwrap();
    std::fs::write(&path, &bytes).unwrap();
    let back = load_instances(&path, &c.schema).unwrap();
    assert_eq!(back.instances(), c.dataset.instances());
    assert_eq!(
        fingerprint::of(back.instances()),
        fingerprint::of(c.dataset.instances())
    );
}

#[test]
fn planted_corpus_is_seeded() {
    let a = synthetic::planted_corpus(9, 40);
    let b = synthetic::planted_corpus(9, 40);
    let c = synthetic::planted_corpus(10, 40);
    assert_eq!(a.dataset.instances(), b.dataset.instances());
    assert_ne!(a.dataset.instances(), c.dataset.instances());
    assert_eq!(a.truth, b.truth);
}
