//! 2D projections of per-modality feature vectors with glyph parameters and
//! heat backgrounds.

mod glyph;
mod heat;
mod tsne;

pub use glyph::{
    audio_glyph_params, face_glyph_params, word_glyph_params, AudioGlyph, FaceGlyph, FeatureRange,
    Glyph, GlyphNormalization, WordGlyph, AUDIO_CLASSES, FACE_EMOTION, FACE_PARTS, HEAD_MOVEMENT,
};
pub use heat::{heatmap_grid, padded_bounds, HeatGrid, HeatMode};
pub use tsne::{feasible_perplexity, max_perplexity, tsne_embed, TsneConfig, TsneResult};

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::AttributionStore;
use crate::data::{Dataset, FeatureSchema, Instance, Modality};
use crate::templates::{ItemLevel, Transaction};

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// Time-mean of the instance's `T × D` matrix for one modality.
pub fn instance_feature_vector(inst: &Instance, modality: Modality) -> Vec<f64> {
    inst.features.get(modality).column_means()
}

/// Indicator vectors over the vocabulary of influential words.
pub fn influential_word_vectors(
    instances: &[&Instance],
    transactions: &[Transaction],
) -> (Vec<String>, Vec<Vec<f64>>) {
    let words_of = |t: &Transaction| -> BTreeSet<String> {
        t.items
            .iter()
            .filter(|i| i.modality == Modality::Language && i.level == ItemLevel::Feature)
            .filter_map(|i| i.feature.clone())
            .collect()
    };
    let by_id: HashMap<&str, BTreeSet<String>> = transactions
        .iter()
        .map(|t| (t.instance_id.as_str(), words_of(t)))
        .collect();
    let vocab: Vec<String> = instances
        .iter()
        .filter_map(|i| by_id.get(i.id.as_str()))
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let vectors = instances
        .iter()
        .map(|inst| {
            let words = by_id.get(inst.id.as_str());
            vocab
                .iter()
                .map(|w| {
                    if words.is_some_and(|s| s.contains(w)) {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    (vocab, vectors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguageInput {
    /// Embeddings when the schema has language features, else words.
    Auto,
    Embedding,
    InfluentialWords,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectConfig {
    pub tsne: TsneConfig,
    pub language_input: LanguageInput,
    pub heat_resolution: usize,
    /// Kernel width as a fraction of the embedding's larger extent.
    pub heat_bandwidth_frac: f64,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            tsne: TsneConfig::default(),
            language_input: LanguageInput::Auto,
            heat_resolution: 48,
            heat_bandwidth_frac: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub modality: Modality,
    pub glyph: Glyph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityProjection {
    pub modality: Modality,
    /// `time_mean` or `influential_words`.
    pub input: String,
    /// Effective settings, perplexity after clamping.
    pub tsne: TsneConfig,
    pub kl_after_exaggeration: f64,
    pub kl_final: f64,
    pub points: Vec<ProjectionPoint>,
    pub heat: HeatGrid,
}

impl ModalityProjection {
    pub fn bandwidth(&self, frac: f64) -> f64 {
        let coords: Vec<[f64; 2]> = self.points.iter().map(|p| [p.x, p.y]).collect();
        bandwidth_for(&coords, frac)
    }

    /// Heat background weighted by one template's per-member |importance|.
    pub fn template_heat(
        &self,
        weights_by_id: &HashMap<String, f64>,
        resolution: usize,
        frac: f64,
    ) -> Result<HeatGrid, ProjectionError> {
        let coords: Vec<[f64; 2]> = self.points.iter().map(|p| [p.x, p.y]).collect();
        let weights: Vec<f64> = self
            .points
            .iter()
            .map(|p| weights_by_id.get(&p.id).map_or(0.0, |w| w.abs()))
            .collect();
        heatmap_grid(
            &coords,
            &weights,
            resolution,
            bandwidth_for(&coords, frac),
            HeatMode::TemplateImportance,
        )
    }
}

fn bandwidth_for(coords: &[[f64; 2]], frac: f64) -> f64 {
    let span = |k: usize| {
        let lo = coords.iter().map(|c| c[k]).fold(f64::INFINITY, f64::min);
        let hi = coords
            .iter()
            .map(|c| c[k])
            .fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let extent = if coords.is_empty() {
        0.0
    } else {
        span(0).max(span(1))
    };
    if extent > 0.0 {
        extent * frac
    } else {
        1.0
    }
}

/// Projects the scoped instances (all when `scope` is `None`) for one
/// modality, attaching glyphs and an error heat background.
#[allow(clippy::too_many_arguments)]
pub fn project_modality(
    dataset: &Dataset,
    schema: &FeatureSchema,
    attributions: Option<&AttributionStore>,
    transactions: &[Transaction],
    normalization: &GlyphNormalization,
    modality: Modality,
    config: &ProjectConfig,
    scope: Option<&BTreeSet<String>>,
) -> Result<ModalityProjection, ProjectionError> {
    let instances: Vec<&Instance> = dataset
        .iter()
        .filter(|i| scope.is_none_or(|s| s.contains(&i.id)))
        .collect();
    let use_words = modality == Modality::Language
        && match config.language_input {
            LanguageInput::Auto => schema.dims(Modality::Language) == 0,
            LanguageInput::Embedding => false,
            LanguageInput::InfluentialWords => true,
        };
    let vectors: Vec<Vec<f64>> = if use_words {
        influential_word_vectors(&instances, transactions).1
    } else {
        instances
            .iter()
            .map(|i| instance_feature_vector(i, modality))
            .collect()
    };
    let perplexity = feasible_perplexity(config.tsne.perplexity, instances.len());
    if perplexity != config.tsne.perplexity {
        log::warn!(
            "{modality}: perplexity {} lowered to {perplexity} for {} points",
            config.tsne.perplexity,
            instances.len()
        );
    }
    let tsne_cfg = TsneConfig {
        perplexity,
        ..config.tsne
    };
    let embedding = tsne_embed(&vectors, &tsne_cfg)?;

    let by_id: HashMap<&str, _> = attributions
        .map(|a| {
            a.records
                .iter()
                .map(|r| (r.feature.instance_id.as_str(), r))
                .collect()
        })
        .unwrap_or_default();
    let points: Vec<ProjectionPoint> = instances
        .iter()
        .zip(&embedding.coords)
        .map(|(inst, c)| {
            let glyph = match modality {
                Modality::Vision => Glyph::Face(face_glyph_params(inst, schema, normalization)),
                Modality::Audio => Glyph::Audio(audio_glyph_params(inst, schema, normalization)),
                Modality::Language => {
                    let word = by_id.get(inst.id.as_str()).and_then(|r| r.word.as_ref());
                    Glyph::Word(word_glyph_params(inst, word))
                }
            };
            ProjectionPoint {
                id: inst.id.clone(),
                x: c[0],
                y: c[1],
                modality,
                glyph,
            }
        })
        .collect();
    let errors: Vec<f64> = instances.iter().map(|i| i.abs_error()).collect();
    let heat = heatmap_grid(
        &embedding.coords,
        &errors,
        config.heat_resolution,
        bandwidth_for(&embedding.coords, config.heat_bandwidth_frac),
        HeatMode::Error,
    )?;
    Ok(ModalityProjection {
        modality,
        input: if use_words {
            "influential_words"
        } else {
            "time_mean"
        }
        .into(),
        tsne: tsne_cfg,
        kl_after_exaggeration: embedding.kl_after_exaggeration,
        kl_final: embedding.kl_final,
        points,
        heat,
    })
}
