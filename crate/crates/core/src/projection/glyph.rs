use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSchema, Instance, Modality};

use super::instance_feature_vector;
use crate::attribution::{AttributionRecord, Selector};

pub const FACE_PARTS: [&str; 5] = ["Brow", "Eye", "Nose", "Lip", "Chin"];
pub const FACE_EMOTION: &str = "Face emotion";
pub const HEAD_MOVEMENT: &str = "Head movement";
pub const AUDIO_CLASSES: [&str; 4] = ["Pitch", "Glottal", "Amplitude", "Phase"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub feature: String,
    pub min: f64,
    pub max: f64,
}

/// Dataset-level min/max of every time-mean feature, used to map glyph
/// components into [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphNormalization {
    pub audio: Vec<FeatureRange>,
    pub vision: Vec<FeatureRange>,
}

impl GlyphNormalization {
    pub fn from_dataset(dataset: &Dataset, schema: &FeatureSchema) -> Self {
        let ranges = |m: Modality| -> Vec<FeatureRange> {
            let mut lo = vec![f64::INFINITY; schema.dims(m)];
            let mut hi = vec![f64::NEG_INFINITY; schema.dims(m)];
            for inst in dataset.iter() {
                for (k, v) in instance_feature_vector(inst, m).into_iter().enumerate() {
                    lo[k] = lo[k].min(v);
                    hi[k] = hi[k].max(v);
                }
            }
            schema
                .feature_names(m)
                .iter()
                .enumerate()
                .map(|(k, f)| FeatureRange {
                    feature: f.clone(),
                    min: if lo[k].is_finite() { lo[k] } else { 0.0 },
                    max: if hi[k].is_finite() { hi[k] } else { 0.0 },
                })
                .collect()
        };
        GlyphNormalization {
            audio: ranges(Modality::Audio),
            vision: ranges(Modality::Vision),
        }
    }

    fn ranges(&self, m: Modality) -> &[FeatureRange] {
        match m {
            Modality::Audio => &self.audio,
            Modality::Vision => &self.vision,
            Modality::Language => &[],
        }
    }

    /// Min-max normalized value of column `col`; constant features map to 0.
    pub fn normalize(&self, m: Modality, col: usize, v: f64) -> f64 {
        match self.ranges(m).get(col) {
            Some(r) if r.max > r.min => ((v - r.min) / (r.max - r.min)).clamp(0.0, 1.0),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceGlyph {
    /// Keyed by lowercase part name; parts missing from the schema are absent.
    pub part_intensity: BTreeMap<String, f64>,
    pub ring: Option<f64>,
    /// Normalized (pitch, yaw, roll).
    pub sticks: Option<[f64; 3]>,
    /// Prediction in [-3, 3].
    pub background: f64,
    /// Components the schema could not supply.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub absent: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioGlyph {
    pub sector_radius: BTreeMap<String, f64>,
    pub detail_radii: BTreeMap<String, Vec<f64>>,
    pub inner: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub absent: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordGlyph {
    /// Token with the largest |word-level φ|; `None` without word-level
    /// attributions.
    pub word: Option<String>,
    pub circle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Glyph {
    Face(FaceGlyph),
    Audio(AudioGlyph),
    Word(WordGlyph),
}

/// Normalized values of a set's features, in schema order.
fn set_values(
    schema: &FeatureSchema,
    norm: &GlyphNormalization,
    m: Modality,
    set: &str,
    v: &[f64],
) -> Option<Vec<f64>> {
    let cols = schema.set_columns(m, set)?;
    Some(
        cols.into_iter()
            .map(|c| norm.normalize(m, c, v[c]))
            .collect(),
    )
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn face_glyph_params(
    inst: &Instance,
    schema: &FeatureSchema,
    norm: &GlyphNormalization,
) -> FaceGlyph {
    let v = instance_feature_vector(inst, Modality::Vision);
    let mut absent = Vec::new();
    let mut part_intensity = BTreeMap::new();
    for part in FACE_PARTS {
        match set_values(schema, norm, Modality::Vision, part, &v) {
            Some(vals) => {
                part_intensity.insert(part.to_lowercase(), mean(&vals));
            }
            None => absent.push(part.to_lowercase()),
        }
    }
    let ring = set_values(schema, norm, Modality::Vision, FACE_EMOTION, &v).map(|vals| mean(&vals));
    if ring.is_none() {
        absent.push("ring".into());
    }
    let sticks = set_values(schema, norm, Modality::Vision, HEAD_MOVEMENT, &v)
        .filter(|vals| vals.len() >= 3)
        .map(|vals| [vals[0], vals[1], vals[2]]);
    if sticks.is_none() {
        absent.push("sticks".into());
    }
    FaceGlyph {
        part_intensity,
        ring,
        sticks,
        background: inst.prediction,
        absent,
    }
}

pub fn audio_glyph_params(
    inst: &Instance,
    schema: &FeatureSchema,
    norm: &GlyphNormalization,
) -> AudioGlyph {
    let v = instance_feature_vector(inst, Modality::Audio);
    let mut sector_radius = BTreeMap::new();
    let mut detail_radii = BTreeMap::new();
    let mut absent = Vec::new();
    for class in AUDIO_CLASSES {
        match set_values(schema, norm, Modality::Audio, class, &v) {
            Some(vals) => {
                sector_radius.insert(class.to_string(), mean(&vals));
                detail_radii.insert(class.to_string(), vals);
            }
            None => absent.push(class.to_string()),
        }
    }
    AudioGlyph {
        sector_radius,
        detail_radii,
        inner: inst.prediction,
        absent,
    }
}

/// `word` is the instance's per-time-step attribution record.
pub fn word_glyph_params(inst: &Instance, word: Option<&AttributionRecord>) -> WordGlyph {
    let best = word.and_then(|rec| {
        rec.modality_values(Modality::Language)
            .filter_map(|v| match v.unit.selector {
                Selector::TimeStep(r) => inst.tokens.get(r).map(|t| (r, t, v.phi.abs())),
                _ => None,
            })
            .fold(
                None,
                |best: Option<(usize, &crate::data::Token, f64)>, cur| match best {
                    Some(b) if b.2 > cur.2 || (b.2 == cur.2 && b.0 < cur.0) => Some(b),
                    _ => Some(cur),
                },
            )
    });
    WordGlyph {
        word: best.map(|(_, t, _)| t.text.clone()),
        circle: inst.prediction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{Granularity, Unit, UnitValue};
    use crate::data::test_support::{instance, tiny_schema};
    use crate::data::{FeatureMatrix, Token};

    fn with_vision(id: &str, row: [f64; 4], pred: f64) -> Instance {
        let mut inst = instance(id, 2, 0.0, pred);
        inst.features.vision = FeatureMatrix::broadcast_row(2, &row);
        inst.features.audio = FeatureMatrix::broadcast_row(2, &[row[0] * 2.0, row[1]]);
        inst
    }

    fn dataset(scale: f64) -> Dataset {
        Dataset::new(vec![
            with_vision("a", [0.0, 1.0, 2.0, 0.5].map(|v| v * scale), 1.0),
            with_vision("b", [1.0, 3.0, 0.0, 0.25].map(|v| v * scale), -2.0),
            with_vision("c", [0.5, 2.0, 1.0, 1.0].map(|v| v * scale), 0.0),
        ])
        .unwrap()
    }

    #[test]
    fn brow_uses_only_its_aus() {
        let schema = tiny_schema();
        let ds = dataset(1.0);
        let norm = GlyphNormalization::from_dataset(&ds, &schema);
        let g = face_glyph_params(ds.get("c").unwrap(), &schema, &norm);
        // AU1 0.5 of [0,1], AU2 2 of [1,3], AU4 1 of [0,2]; Joy excluded.
        assert!((g.part_intensity["brow"] - 0.5).abs() < 1e-12);
        assert_eq!(g.ring, Some(1.0));
        assert_eq!(g.sticks, None);
        assert!(g.absent.contains(&"eye".to_string()) && g.absent.contains(&"sticks".to_string()));
        assert!(!g.part_intensity.contains_key("eye"));
        assert_eq!(g.background, 0.0);
    }

    #[test]
    fn zero_features_give_thin_strokes() {
        let schema = tiny_schema();
        let ds = Dataset::new(vec![
            with_vision("z", [0.0; 4], 0.0),
            with_vision("y", [0.0; 4], 1.0),
        ])
        .unwrap();
        let norm = GlyphNormalization::from_dataset(&ds, &schema);
        let g = face_glyph_params(ds.get("z").unwrap(), &schema, &norm);
        assert_eq!(g.part_intensity["brow"], 0.0);
    }

    #[test]
    fn scaling_dataset_keeps_glyphs() {
        let schema = tiny_schema();
        let base = dataset(1.0);
        let nb = GlyphNormalization::from_dataset(&base, &schema);
        for c in [0.5, 4.0, 3.0] {
            let scaled = dataset(c);
            let ns = GlyphNormalization::from_dataset(&scaled, &schema);
            for id in ["a", "b", "c"] {
                let f0 = face_glyph_params(base.get(id).unwrap(), &schema, &nb);
                let f1 = face_glyph_params(scaled.get(id).unwrap(), &schema, &ns);
                for (k, v) in &f0.part_intensity {
                    assert!((v - f1.part_intensity[k]).abs() < 1e-12);
                }
                let a0 = audio_glyph_params(base.get(id).unwrap(), &schema, &nb);
                let a1 = audio_glyph_params(scaled.get(id).unwrap(), &schema, &ns);
                for (k, v) in &a0.sector_radius {
                    assert!((v - a1.sector_radius[k]).abs() < 1e-12);
                    assert!((0.0..=1.0).contains(v));
                }
            }
        }
    }

    #[test]
    fn audio_classes_missing_are_absent() {
        let schema = tiny_schema();
        let ds = dataset(1.0);
        let norm = GlyphNormalization::from_dataset(&ds, &schema);
        let g = audio_glyph_params(ds.get("a").unwrap(), &schema, &norm);
        assert_eq!(
            g.sector_radius.keys().collect::<Vec<_>>(),
            ["Glottal", "Pitch"]
        );
        assert_eq!(g.absent, ["Amplitude", "Phase"]);
        assert_eq!(g.detail_radii["Pitch"].len(), 1);
    }

    #[test]
    fn word_glyph_picks_max_abs_phi() {
        let mut inst = instance("w", 3, 0.0, 0.5);
        inst.tokens = ["It", "is", "not"]
            .iter()
            .enumerate()
            .map(|(i, w)| Token {
                text: w.to_string(),
                start_s: i as f64,
                end_s: i as f64 + 0.5,
                pos: None,
            })
            .collect();
        let rec = AttributionRecord {
            instance_id: "w".into(),
            granularity: Granularity::TimeStep,
            base_value: 0.0,
            output: 0.0,
            values: [0.2, 0.1, -0.7]
                .iter()
                .enumerate()
                .map(|(r, phi)| UnitValue {
                    unit: Unit {
                        modality: Modality::Language,
                        selector: Selector::TimeStep(r),
                    },
                    phi: *phi,
                })
                .collect(),
        };
        assert_eq!(
            word_glyph_params(&inst, Some(&rec)).word.as_deref(),
            Some("not")
        );
        assert_eq!(word_glyph_params(&inst, None).word, None);
    }
}
