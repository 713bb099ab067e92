//! Dataset model: feature schemas, word-aligned instances, ingestion and
//! performance metrics.

mod histogram;
mod matrix;
mod metrics;
mod schema;

pub use histogram::{bin_distribution, Histogram};
pub use matrix::FeatureMatrix;
pub use metrics::{compute_metrics, pearson, MetricsReport};
pub use schema::{load_schema, FeatureSchema};

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lowest and highest sentiment value on the Likert scale.
pub const SENTIMENT_MIN: f64 = -3.0;
pub const SENTIMENT_MAX: f64 = 3.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("line {line}: shape error: {message}")]
    Shape { line: usize, message: String },
    #[error("line {line}: range error: {message}")]
    Range { line: usize, message: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DataError {
    /// One-based line number of the offending record, if the error came from
    /// an instances file.
    pub fn line(&self) -> Option<usize> {
        match self {
            DataError::Shape { line, .. }
            | DataError::Range { line, .. }
            | DataError::Invalid { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// One of the three communication channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Language,
    Audio,
    Vision,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Language, Modality::Audio, Modality::Vision];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Language => "language",
            Modality::Audio => "audio",
            Modality::Vision => "vision",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "language" => Ok(Modality::Language),
            "audio" => Ok(Modality::Audio),
            "vision" => Ok(Modality::Vision),
            other => Err(DataError::Schema(format!("unknown modality id `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<String>,
}

/// The three word-aligned feature matrices of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityFeatures {
    pub language: FeatureMatrix,
    pub audio: FeatureMatrix,
    pub vision: FeatureMatrix,
}

impl ModalityFeatures {
    pub fn get(&self, modality: Modality) -> &FeatureMatrix {
        match modality {
            Modality::Language => &self.language,
            Modality::Audio => &self.audio,
            Modality::Vision => &self.vision,
        }
    }

    pub fn get_mut(&mut self, modality: Modality) -> &mut FeatureMatrix {
        match modality {
            Modality::Language => &mut self.language,
            Modality::Audio => &mut self.audio,
            Modality::Vision => &mut self.vision,
        }
    }

    pub fn rows(&self) -> usize {
        self.language.rows()
    }

    pub fn map<F: FnMut(Modality, &FeatureMatrix) -> FeatureMatrix>(&self, mut f: F) -> Self {
        ModalityFeatures {
            language: f(Modality::Language, &self.language),
            audio: f(Modality::Audio, &self.audio),
            vision: f(Modality::Vision, &self.vision),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub tokens: Vec<Token>,
    pub features: ModalityFeatures,
    pub label: f64,
    pub prediction: f64,
}

impl Instance {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn abs_error(&self) -> f64 {
        (self.prediction - self.label).abs()
    }

    /// Checks every instance invariant against `schema`. `line` is only used
    /// to label errors.
    pub fn validate(&self, schema: &FeatureSchema, line: usize) -> Result<(), DataError> {
        let t = self.tokens.len();
        if self.id.is_empty() {
            return Err(DataError::Invalid {
                line,
                message: "empty instance id".into(),
            });
        }
        if t == 0 {
            return Err(DataError::Shape {
                line,
                message: format!("instance `{}` has no tokens", self.id),
            });
        }
        for m in Modality::ALL {
            let mat = self.features.get(m);
            if mat.rows() != t {
                return Err(DataError::Shape {
                    line,
                    message: format!(
                        "instance `{}`: {} tokens but {} {m} feature rows",
                        self.id,
                        t,
                        mat.rows()
                    ),
                });
            }
            let d = schema.dims(m);
            if mat.cols() != d {
                return Err(DataError::Shape {
                    line,
                    message: format!(
                        "instance `{}`: {m} rows have {} columns, schema declares {d}",
                        self.id,
                        mat.cols()
                    ),
                });
            }
            if mat.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(DataError::Range {
                    line,
                    message: format!("instance `{}`: non-finite {m} feature value", self.id),
                });
            }
        }
        for (name, v) in [("label", self.label), ("prediction", self.prediction)] {
            if !v.is_finite() || !(SENTIMENT_MIN..=SENTIMENT_MAX).contains(&v) {
                return Err(DataError::Range {
                    line,
                    message: format!("instance `{}`: {name} {v} outside [-3, 3]", self.id),
                });
            }
        }
        let mut prev_end = f64::NEG_INFINITY;
        let mut prev_start = f64::NEG_INFINITY;
        for tok in &self.tokens {
            if !(tok.start_s.is_finite() && tok.end_s.is_finite())
                || tok.start_s < 0.0
                || tok.end_s < tok.start_s
            {
                return Err(DataError::Range {
                    line,
                    message: format!(
                        "instance `{}`: token `{}` has invalid timing",
                        self.id, tok.text
                    ),
                });
            }
            if tok.start_s < prev_start || tok.start_s < prev_end {
                return Err(DataError::Invalid {
                    line,
                    message: format!(
                        "instance `{}`: token `{}` is out of order or overlaps",
                        self.id, tok.text
                    ),
                });
            }
            if let Some(pos) = &tok.pos {
                if !schema.pos_tagset.iter().any(|p| p == pos) {
                    return Err(DataError::Invalid {
                        line,
                        message: format!("instance `{}`: unknown POS tag `{pos}`", self.id),
                    });
                }
            }
            prev_start = tok.start_s;
            prev_end = tok.end_s;
        }
        Ok(())
    }
}

/// Validated, immutable collection of instances.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    instances: Vec<Instance>,
    index: HashMap<String, usize>,
}

impl Dataset {
    /// Builds a dataset, rejecting duplicate ids. Instances must already be
    /// validated.
    pub fn new(instances: Vec<Instance>) -> Result<Self, DataError> {
        let mut index = HashMap::with_capacity(instances.len());
        for (i, inst) in instances.iter().enumerate() {
            if index.insert(inst.id.clone(), i).is_some() {
                return Err(DataError::Invalid {
                    line: i + 1,
                    message: format!("duplicate instance id `{}`", inst.id),
                });
            }
        }
        Ok(Dataset { instances, index })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn get(&self, id: &str) -> Option<&Instance> {
        self.index.get(id).map(|&i| &self.instances[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Instance> {
        self.instances.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.instances.iter().map(|i| i.id.as_str())
    }
}

/// A record that failed validation while loading an instances file.
#[derive(Debug)]
pub struct LineFailure {
    pub line: usize,
    pub error: DataError,
}

/// Outcome of lenient loading: the valid instances plus every rejected line.
#[derive(Debug)]
pub struct LoadReport {
    pub dataset: Dataset,
    pub failures: Vec<LineFailure>,
}

/// Loads line-delimited instance records, keeping valid records and
/// collecting one failure per rejected line.
pub fn load_instances_lenient(
    path: &Path,
    schema: &FeatureSchema,
) -> Result<LoadReport, DataError> {
    let reader = BufReader::new(File::open(path)?);
    let mut instances = Vec::new();
    let mut failures = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_instance_line(&line, schema, line_no) {
            Ok(inst) => {
                if let Some(first) = seen.get(&inst.id) {
                    failures.push(LineFailure {
                        line: line_no,
                        error: DataError::Invalid {
                            line: line_no,
                            message: format!(
                                "duplicate instance id `{}` (first seen on line {first})",
                                inst.id
                            ),
                        },
                    });
                } else {
                    seen.insert(inst.id.clone(), line_no);
                    instances.push(inst);
                }
            }
            Err(error) => failures.push(LineFailure {
                line: line_no,
                error,
            }),
        }
    }
    Ok(LoadReport {
        dataset: Dataset::new(instances)?,
        failures,
    })
}

/// Strict loader: any rejected line fails the whole load with an error that
/// names the line.
pub fn load_instances(path: &Path, schema: &FeatureSchema) -> Result<Dataset, DataError> {
    let report = load_instances_lenient(path, schema)?;
    match report.failures.into_iter().next() {
        Some(failure) => Err(failure.error),
        None => Ok(report.dataset),
    }
}

fn parse_instance_line(
    line: &str,
    schema: &FeatureSchema,
    line_no: usize,
) -> Result<Instance, DataError> {
    let inst: Instance = serde_json::from_str(line).map_err(|e| {
        let msg = e.to_string();
        if msg.contains("ragged") {
            DataError::Shape {
                line: line_no,
                message: msg,
            }
        } else {
            DataError::Parse(format!("line {line_no}: {msg}"))
        }
    })?;
    inst.validate(schema, line_no)?;
    Ok(inst)
}

/// Writes instances in the line-delimited record format read by
/// [`load_instances`].
pub fn write_instances<W: Write>(writer: W, dataset: &Dataset) -> Result<(), DataError> {
    let mut w = BufWriter::new(writer);
    for inst in dataset.iter() {
        serde_json::to_writer(&mut w, inst).map_err(|e| DataError::Parse(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn tiny_schema() -> FeatureSchema {
        FeatureSchema::from_json_str(
            r#"{
              "modalities": {"language": ["e0", "e1"], "audio": ["F0", "NAQ"], "vision": ["AU1", "AU2", "AU4", "Joy"]},
              "feature_sets": {
                "audio": {"Pitch": ["F0"], "Glottal": ["NAQ"]},
                "vision": {"Brow": ["AU1", "AU2", "AU4"], "Face emotion": ["Joy"]}
              },
              "pos_tagset": ["ADJ", "NOUN", "PART", "PRON", "VERB"]
            }"#,
        )
        .unwrap()
    }

    pub fn instance(id: &str, t: usize, label: f64, prediction: f64) -> Instance {
        let tokens = (0..t)
            .map(|i| Token {
                text: format!("w{i}"),
                start_s: i as f64,
                end_s: i as f64 + 0.5,
                pos: Some("NOUN".into()),
            })
            .collect();
        Instance {
            id: id.into(),
            tokens,
            features: ModalityFeatures {
                language: FeatureMatrix::filled(t, 2, 0.1),
                audio: FeatureMatrix::filled(t, 2, 0.2),
                vision: FeatureMatrix::filled(t, 4, 0.3),
            },
            label,
            prediction,
        }
    }
}
