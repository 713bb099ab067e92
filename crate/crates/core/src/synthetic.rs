//! Synthetic corpus with planted modality interactions, explained by a
//! linear model so attributions are exact.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::attribution::LinearProvider;
use crate::data::{
    Dataset, FeatureMatrix, FeatureSchema, Instance, Modality, ModalityFeatures, Token,
};
use crate::interactions::Interaction;

pub const SCHEMA_JSON: &str = r#"{
  "modalities": {
    "language": ["glove0", "glove1", "glove2", "glove3", "glove4", "glove5"],
    "audio": ["F0", "VUV", "NAQ", "QOQ", "peakSlope", "HMPDM"],
    "vision": ["AU1", "AU2", "AU4", "AU5", "AU7", "AU9", "AU12", "AU15", "AU17", "Joy", "Sadness", "pitch", "yaw", "roll"]
  },
  "feature_sets": {
    "audio": {"Pitch": ["F0", "VUV"], "Glottal": ["NAQ", "QOQ"], "Amplitude": ["peakSlope"], "Phase": ["HMPDM"]},
    "vision": {
      "Brow": ["AU1", "AU2", "AU4"],
      "Eye": ["AU5", "AU7"],
      "Nose": ["AU9"],
      "Lip": ["AU12", "AU15"],
      "Chin": ["AU17"],
      "Face emotion": ["Joy", "Sadness"],
      "Head movement": ["pitch", "yaw", "roll"]
    }
  },
  "pos_tagset": ["ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X"]
}"#;

const VOCAB: [(&str, Option<&str>); 16] = [
    ("i", Some("PRON")),
    ("it", Some("PRON")),
    ("not", Some("PART")),
    ("to", Some("PART")),
    ("good", Some("ADJ")),
    ("bad", Some("ADJ")),
    ("great", Some("ADJ")),
    ("movie", Some("NOUN")),
    ("story", Some("NOUN")),
    ("really", Some("ADV")),
    ("like", Some("VERB")),
    ("was", Some("AUX")),
    ("the", Some("DET")),
    ("and", Some("CCONJ")),
    ("um", None),
    ("uh", None),
];

pub const DEFAULT_INSTANCES: usize = 600;

pub struct PlantedCorpus {
    pub schema: FeatureSchema,
    pub dataset: Dataset,
    pub model: LinearProvider,
    /// Planted interaction per instance, dataset order.
    pub truth: Vec<Interaction>,
}

pub fn schema() -> FeatureSchema {
    FeatureSchema::from_json_str(SCHEMA_JSON).expect("built-in schema is valid")
}

/// Signed importance vector `[I_l, I_a, I_v]` with the signature of `kind`.
///
/// Each type has a fixed sign pattern and modality roles, jittered per
/// instance: dominance is positive and language-led, complement is negative
/// and spread over all three, conflict pits audio against language and
/// vision, and others has a near-zero modality and a small total.
pub fn planted_importance(kind: Interaction, rng: &mut impl Rng) -> [f64; 3] {
    match kind {
        Interaction::Dominance => {
            let d = rng.gen_range(0.72..0.85);
            let split = rng.gen_range(0.4..0.6);
            let m = rng.gen_range(0.8..2.0);
            [d * m, (1.0 - d) * split * m, (1.0 - d) * (1.0 - split) * m]
        }
        Interaction::Complement => {
            let a = rng.gen_range(0.3..0.4);
            let b = rng.gen_range(0.28..0.38);
            let m = rng.gen_range(0.8..2.0);
            [-a * m, -b * m, -(1.0 - a - b) * m]
        }
        Interaction::Conflict => {
            let p = rng.gen_range(0.42..0.5);
            let r = rng.gen_range(0.12..0.2);
            let m = rng.gen_range(0.8..2.0);
            [-r * m, p * m, -(1.0 - p - r) * m]
        }
        Interaction::Others => {
            let tiny = rng.gen_range(0.0..0.015);
            let a = rng.gen_range(0.5..0.7);
            let m = rng.gen_range(0.05..0.2);
            [a * m, (1.0 - a - tiny) * m, tiny * m]
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A time-mean vector `v` with `w · v = target`, plus noise orthogonal to `w`.
fn mean_vector(w: &[f64], target: f64, rng: &mut impl Rng, noise: &Normal<f64>) -> Vec<f64> {
    let z: Vec<f64> = (0..w.len()).map(|_| noise.sample(rng)).collect();
    let ww = dot(w, w);
    let zw = dot(&z, w) / ww;
    w.iter()
        .zip(&z)
        .map(|(wi, zi)| target * wi / ww + zi - zw * wi)
        .collect()
}

/// `T` rows whose column means equal `mean` (up to rounding): `mean` plus
/// per-row offsets centred to zero.
fn rows_around(mean: &[f64], offsets: Vec<Vec<f64>>) -> FeatureMatrix {
    let t = offsets.len();
    let d = mean.len();
    let mut centre = vec![0.0; d];
    for o in &offsets {
        for k in 0..d {
            centre[k] += o[k] / t as f64;
        }
    }
    let mut data = Vec::with_capacity(t * d);
    for o in &offsets {
        for k in 0..d {
            data.push(mean[k] + o[k] - centre[k]);
        }
    }
    FeatureMatrix::from_vec(t, d, data)
}

/// Generates `n` instances, a quarter per interaction type, shuffled.
pub fn planted_corpus(seed: u64, n: usize) -> PlantedCorpus {
    let schema = schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let mut weights = |m: Modality| -> Vec<f64> {
        (0..schema.dims(m))
            .map(|_| {
                let v: f64 = unit.sample(&mut rng);
                v.signum() * (0.5 + v.abs())
            })
            .collect()
    };
    let model = LinearProvider {
        language: weights(Modality::Language),
        audio: weights(Modality::Audio),
        vision: weights(Modality::Vision),
        bias: 0.0,
    };

    // Word embeddings; "not" points against the language weights.
    let mut embeddings: Vec<Vec<f64>> = VOCAB
        .iter()
        .map(|_| {
            (0..model.language.len())
                .map(|_| 0.3 * unit.sample(&mut rng))
                .collect()
        })
        .collect();
    let not = VOCAB
        .iter()
        .position(|(w, _)| *w == "not")
        .expect("vocabulary has `not`");
    let norm = dot(&model.language, &model.language).sqrt();
    embeddings[not] = model.language.iter().map(|w| -1.5 * w / norm).collect();

    let mut truth: Vec<Interaction> = (0..n).map(|i| Interaction::ALL[i % 4]).collect();
    truth.shuffle(&mut rng);
    let noise = Normal::new(0.0, 0.4).expect("valid normal");
    let label_noise = Normal::new(0.0, 0.6).expect("valid normal");
    let row_noise = Normal::new(0.0, 0.2).expect("valid normal");

    let mut instances = Vec::with_capacity(n);
    for (i, kind) in truth.iter().enumerate() {
        let imp = planted_importance(*kind, &mut rng);
        let t = rng.gen_range(3..=8);
        let words: Vec<usize> = (0..t).map(|_| rng.gen_range(0..VOCAB.len())).collect();
        let tokens: Vec<Token> = words
            .iter()
            .enumerate()
            .map(|(r, &w)| Token {
                text: VOCAB[w].0.to_string(),
                start_s: r as f64 * 0.4,
                end_s: r as f64 * 0.4 + 0.3,
                pos: VOCAB[w].1.map(str::to_string),
            })
            .collect();
        let lang_mean = mean_vector(&model.language, imp[0], &mut rng, &noise);
        let language = rows_around(
            &lang_mean,
            words.iter().map(|&w| embeddings[w].clone()).collect(),
        );
        let modality_rows = |m: Modality, target: f64, rng: &mut ChaCha8Rng| {
            let mean = mean_vector(model.weights(m), target, rng, &noise);
            let offsets = (0..t)
                .map(|_| (0..mean.len()).map(|_| row_noise.sample(rng)).collect())
                .collect();
            rows_around(&mean, offsets)
        };
        let audio = modality_rows(Modality::Audio, imp[1], &mut rng);
        let vision = modality_rows(Modality::Vision, imp[2], &mut rng);
        let features = ModalityFeatures {
            language,
            audio,
            vision,
        };
        let prediction = model.eval(&features);
        let label = (prediction + label_noise.sample(&mut rng)).clamp(-3.0, 3.0);
        instances.push(Instance {
            id: format!("clip{i:04}"),
            tokens,
            features,
            label,
            prediction,
        });
    }
    let dataset = Dataset::new(instances).expect("generated ids are unique");
    PlantedCorpus {
        schema,
        dataset,
        model,
        truth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{attribute_dataset, AttributeConfig, BackgroundSpec, Method};
    use crate::interactions::{aggregate_modality_importance, label_interaction, Thresholds};

    #[test]
    fn instances_validate_and_stay_in_range() {
        let c = planted_corpus(3, 80);
        for (k, inst) in c.dataset.iter().enumerate() {
            inst.validate(&c.schema, k + 1).unwrap();
        }
        assert_eq!(
            c.truth
                .iter()
                .filter(|t| **t == Interaction::Conflict)
                .count(),
            20
        );
    }

    #[test]
    fn attributions_reproduce_planted_importances() {
        let c = planted_corpus(5, 40);
        let cfg = AttributeConfig {
            provider: "linear".into(),
            method: Method::Auto,
            background: BackgroundSpec::Zeros,
            ..AttributeConfig::default()
        };
        let store = attribute_dataset(&c.model, &c.dataset, "fp", &cfg, 2).unwrap();
        let th = Thresholds::new(0.05, 0.65, 0.25).unwrap();
        for (rec, truth) in store.records.iter().zip(&c.truth) {
            let t = aggregate_modality_importance(&rec.feature);
            assert_eq!(label_interaction(&t, &th).label, *truth, "{:?}", t);
        }
    }

    #[test]
    fn deterministic() {
        let a = planted_corpus(9, 12);
        let b = planted_corpus(9, 12);
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.model, b.model);
    }
}
