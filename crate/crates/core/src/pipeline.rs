//! Pipeline stages over an on-disk store.
//!
//! Layout under the store root:
//!
//! ```text
//! manifest.json                  stage fingerprints
//! ingest/schema.json, instances.jsonl, report.json
//! attributions/<fp>/             manifest.json + records/
//! analysis/labels.jsonl, thresholds.json, search_trace.json, groups.json
//! templates/transactions.jsonl, itemsets.json, templates.json
//! projection/<modality>.json, normalization.json, config.json
//! ```
//!
//! Every stage records the output fingerprints of the stages it read and a
//! fingerprint of its own files. Loading re-verifies both, so stale
//! artifacts surface as errors instead of being served.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::{
    attribute_dataset, AttributeConfig, AttributionError, AttributionStore, PredictionProvider,
};
use crate::data::{
    load_instances, load_instances_lenient, load_schema, write_instances, DataError, Dataset,
    FeatureSchema, Modality,
};
use crate::fingerprint;
use crate::interactions::{
    aggregate_modality_importance, group_summary, label_dataset, objective, optimize_thresholds,
    significance_floor, GridPoint, GroupSummary, ImportanceTriple, Interaction, InteractionError,
    InteractionLabel, Thresholds, DEFAULT_GRID_STEP,
};
use crate::projection::{
    project_modality, GlyphNormalization, ModalityProjection, ProjectConfig, ProjectionError,
};
use crate::store::{write_atomic, StoreError};
use crate::templates::{
    build_itemsets, mine_templates, ImportanceRule, Template, TemplateError, Transaction,
    DEFAULT_MIN_SUPPORT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Attribute,
    Analyze,
    Mine,
    Project,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Ingest,
        Stage::Attribute,
        Stage::Analyze,
        Stage::Mine,
        Stage::Project,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Attribute => "attribute",
            Stage::Analyze => "analyze",
            Stage::Mine => "mine",
            Stage::Project => "project",
        }
    }

    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Attribute => &[Stage::Ingest],
            Stage::Analyze => &[Stage::Ingest, Stage::Attribute],
            Stage::Mine => &[Stage::Ingest, Stage::Attribute],
            Stage::Project => &[Stage::Ingest, Stage::Attribute, Stage::Mine],
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Interaction(#[from] InteractionError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("{} of {} instances failed to load; first: line {}: {}", .failures.len(), .total, .failures[0].line, .failures[0].message)]
    Ingest {
        failures: Vec<IngestFailure>,
        total: usize,
    },
}

impl PipelineError {
    pub fn missing(stage: Stage, message: impl Into<String>) -> Self {
        PipelineError::Store(StoreError::MissingStage {
            stage: stage.as_str(),
            message: message.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestFailure {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Output fingerprints of the upstream stages this run read.
    pub inputs: BTreeMap<Stage, String>,
    pub config_fingerprint: String,
    /// Store-relative paths of the stage's files.
    pub files: Vec<String>,
    pub output_fingerprint: String,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StoreManifest {
    pub stages: BTreeMap<Stage, StageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: Stage,
    /// Inputs and config matched the previous run; nothing was recomputed.
    pub skipped: bool,
    pub output_fingerprint: String,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub instances: usize,
    pub schema_fingerprint: String,
    pub dataset_fingerprint: String,
    pub failures: Vec<IngestFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeConfig {
    pub grid_step: f64,
    /// Skip the search and label with these.
    pub thresholds: Option<Thresholds>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            grid_step: DEFAULT_GRID_STEP,
            thresholds: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MineConfig {
    pub min_support: f64,
    pub rule: ImportanceRule,
}

impl Default for MineConfig {
    fn default() -> Self {
        MineConfig {
            min_support: DEFAULT_MIN_SUPPORT,
            rule: ImportanceRule::default(),
        }
    }
}

/// One line of `analysis/labels.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: String,
    #[serde(rename = "I_l")]
    pub i_l: f64,
    #[serde(rename = "I_a")]
    pub i_a: f64,
    #[serde(rename = "I_v")]
    pub i_v: f64,
    pub shares: Option<[f64; 3]>,
    pub net: f64,
    pub l1: f64,
    pub label: Interaction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominant: Option<Modality>,
    pub evidence: Vec<String>,
}

impl LabelRecord {
    fn new(t: &ImportanceTriple, l: &InteractionLabel) -> Self {
        LabelRecord {
            id: t.instance_id.clone(),
            i_l: t.importance[0],
            i_a: t.importance[1],
            i_v: t.importance[2],
            shares: t.shares(),
            net: t.net,
            l1: t.l1,
            label: l.label,
            dominant: l.dominant,
            evidence: l.evidence.clone(),
        }
    }

    pub fn triple(&self) -> ImportanceTriple {
        ImportanceTriple::new(self.id.clone(), [self.i_l, self.i_a, self.i_v])
    }

    pub fn interaction_label(&self) -> InteractionLabel {
        InteractionLabel {
            instance_id: self.id.clone(),
            label: self.label,
            dominant: self.dominant,
            evidence: self.evidence.clone(),
        }
    }
}

/// `analysis/thresholds.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdsFile {
    pub th_sig: f64,
    pub th_dom: f64,
    pub th_confl: f64,
    pub objective: f64,
    pub grid_step: f64,
    /// `search` or `given`.
    pub source: String,
    pub significance_floor: f64,
    pub group_means: BTreeMap<Interaction, Option<[f64; 3]>>,
    pub group_sizes: BTreeMap<Interaction, usize>,
    pub others_magnitude: f64,
}

impl ThresholdsFile {
    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            th_sig: self.th_sig,
            th_dom: self.th_dom,
            th_confl: self.th_confl,
        }
    }
}

/// `templates/itemsets.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemsetsFile {
    pub config: MineConfig,
    pub cutoffs: BTreeMap<Modality, Option<f64>>,
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub labels: Vec<LabelRecord>,
    pub thresholds: ThresholdsFile,
    pub groups: Vec<GroupSummary>,
}

impl Analysis {
    pub fn triples(&self) -> Vec<ImportanceTriple> {
        self.labels.iter().map(LabelRecord::triple).collect()
    }
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, StoreError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn to_jsonl<T: Serialize>(values: &[T]) -> Result<Vec<u8>, StoreError> {
    let mut out = Vec::new();
    for v in values {
        serde_json::to_writer(&mut out, v)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn from_jsonl<T: DeserializeOwned>(bytes: &[u8]) -> Result<Vec<T>, StoreError> {
    let text = std::str::from_utf8(bytes).map_err(|e| StoreError::Stale(e.to_string()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// A store directory.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Self {
        Store { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> Result<StoreManifest, StoreError> {
        let path = self.root.join("manifest.json");
        if !path.exists() {
            return Ok(StoreManifest::default());
        }
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    fn save_manifest(&self, manifest: &StoreManifest) -> Result<(), StoreError> {
        write_atomic(&self.root.join("manifest.json"), &to_json(manifest)?)
    }

    /// Combined fingerprint of every recorded stage output.
    pub fn fingerprint(&self) -> Result<String, StoreError> {
        let m = self.manifest()?;
        let parts: Vec<String> = m
            .stages
            .iter()
            .map(|(s, r)| format!("{}={}", s.as_str(), r.output_fingerprint))
            .collect();
        Ok(fingerprint::combine(parts.iter().map(String::as_str)))
    }

    fn files_fingerprint(&self, files: &[String]) -> Result<String, StoreError> {
        let mut parts = Vec::with_capacity(files.len() * 2);
        for f in files {
            parts.push(f.clone());
            parts.push(fingerprint::of_bytes(&fs::read(self.root.join(f))?));
        }
        Ok(fingerprint::combine(parts.iter().map(String::as_str)))
    }

    /// The stage's record after checking that it exists, is complete, its
    /// files are unchanged, and its inputs are the current upstream outputs.
    pub fn require(&self, stage: Stage) -> Result<StageRecord, PipelineError> {
        let m = self.manifest()?;
        self.require_in(&m, stage)
    }

    fn require_in(&self, m: &StoreManifest, stage: Stage) -> Result<StageRecord, PipelineError> {
        let Some(rec) = m.stages.get(&stage) else {
            return Err(PipelineError::missing(
                stage,
                format!("run `{}` first", stage.as_str()),
            ));
        };
        if !rec.complete {
            return Err(PipelineError::missing(
                stage,
                format!("the last `{}` run is incomplete; re-run it", stage.as_str()),
            ));
        }
        for (up, fp) in &rec.inputs {
            match m.stages.get(up) {
                Some(u) if &u.output_fingerprint == fp => {}
                _ => {
                    return Err(PipelineError::missing(
                        stage,
                        format!(
                            "`{}` changed since `{}` ran; re-run `{}`",
                            up.as_str(),
                            stage.as_str(),
                            stage.as_str()
                        ),
                    ))
                }
            }
        }
        match self.files_fingerprint(&rec.files) {
            Ok(fp) if fp == rec.output_fingerprint => Ok(rec.clone()),
            Ok(_) => Err(StoreError::Stale(format!(
                "`{}` artifacts were modified",
                stage.as_str()
            ))
            .into()),
            Err(StoreError::Io(e)) => Err(PipelineError::missing(
                stage,
                format!("artifact missing ({e}); re-run `{}`", stage.as_str()),
            )),
            Err(e) => Err(e.into()),
        }
    }

    fn upstream_inputs(
        &self,
        m: &StoreManifest,
        stage: Stage,
    ) -> Result<BTreeMap<Stage, String>, PipelineError> {
        stage
            .upstream()
            .iter()
            .map(|&up| Ok((up, self.require_in(m, up)?.output_fingerprint)))
            .collect()
    }

    /// True when the stage already ran with these inputs and config and its
    /// files are intact.
    fn is_fresh(
        &self,
        m: &StoreManifest,
        stage: Stage,
        inputs: &BTreeMap<Stage, String>,
        config_fp: &str,
    ) -> bool {
        match m.stages.get(&stage) {
            Some(rec) => {
                &rec.inputs == inputs
                    && rec.config_fingerprint == config_fp
                    && rec.complete
                    && self
                        .files_fingerprint(&rec.files)
                        .is_ok_and(|fp| fp == rec.output_fingerprint)
            }
            None => false,
        }
    }

    fn record(
        &self,
        stage: Stage,
        inputs: BTreeMap<Stage, String>,
        config_fp: String,
        files: Vec<String>,
        complete: bool,
    ) -> Result<StageOutcome, PipelineError> {
        let output_fingerprint = self.files_fingerprint(&files)?;
        let mut m = self.manifest()?;
        m.stages.insert(
            stage,
            StageRecord {
                inputs,
                config_fingerprint: config_fp,
                files,
                output_fingerprint: output_fingerprint.clone(),
                complete,
            },
        );
        self.save_manifest(&m)?;
        Ok(StageOutcome {
            stage,
            skipped: false,
            output_fingerprint,
            complete,
        })
    }

    fn skipped(&self, m: &StoreManifest, stage: Stage) -> StageOutcome {
        let rec = &m.stages[&stage];
        log::info!("`{}` is up to date", stage.as_str());
        StageOutcome {
            stage,
            skipped: true,
            output_fingerprint: rec.output_fingerprint.clone(),
            complete: rec.complete,
        }
    }

    fn write(&self, rel: &str, bytes: &[u8]) -> Result<String, StoreError> {
        write_atomic(&self.root.join(rel), bytes)?;
        Ok(rel.to_string())
    }

    fn read(&self, stage: Stage, rel: &str) -> Result<Vec<u8>, PipelineError> {
        fs::read(self.root.join(rel))
            .map_err(|e| PipelineError::missing(stage, format!("{rel}: {e}")))
    }

    /// Validates and snapshots the schema and instances. With `lenient`,
    /// invalid lines are reported and skipped instead of failing the stage.
    pub fn ingest(
        &self,
        schema_path: &Path,
        instances_path: &Path,
        lenient: bool,
    ) -> Result<(StageOutcome, IngestReport), PipelineError> {
        let schema = load_schema(schema_path)?;
        let loaded = load_instances_lenient(instances_path, &schema)?;
        let failures: Vec<IngestFailure> = loaded
            .failures
            .iter()
            .map(|f| IngestFailure {
                line: f.line,
                message: f.error.to_string(),
            })
            .collect();
        if !failures.is_empty() && !lenient {
            return Err(PipelineError::Ingest {
                total: loaded.dataset.len() + failures.len(),
                failures,
            });
        }
        let schema_bytes = schema.to_json_string().into_bytes();
        let mut instance_bytes = Vec::new();
        write_instances(&mut instance_bytes, &loaded.dataset)?;
        let report = IngestReport {
            instances: loaded.dataset.len(),
            schema_fingerprint: fingerprint::of_bytes(&schema_bytes),
            dataset_fingerprint: fingerprint::of_bytes(&instance_bytes),
            failures,
        };
        let config_fp = fingerprint::of(&report);
        let m = self.manifest()?;
        if self.is_fresh(&m, Stage::Ingest, &BTreeMap::new(), &config_fp) {
            return Ok((self.skipped(&m, Stage::Ingest), report));
        }
        let files = vec![
            self.write("ingest/schema.json", &schema_bytes)?,
            self.write("ingest/instances.jsonl", &instance_bytes)?,
            self.write("ingest/report.json", &to_json(&report)?)?,
        ];
        Ok((
            self.record(Stage::Ingest, BTreeMap::new(), config_fp, files, true)?,
            report,
        ))
    }

    pub fn load_schema(&self) -> Result<FeatureSchema, PipelineError> {
        self.require(Stage::Ingest)?;
        Ok(FeatureSchema::from_json_str(&String::from_utf8_lossy(
            &self.read(Stage::Ingest, "ingest/schema.json")?,
        ))?)
    }

    pub fn load_ingest_report(&self) -> Result<IngestReport, PipelineError> {
        self.require(Stage::Ingest)?;
        Ok(
            serde_json::from_slice(&self.read(Stage::Ingest, "ingest/report.json")?)
                .map_err(StoreError::from)?,
        )
    }

    pub fn load_dataset(&self) -> Result<(FeatureSchema, Dataset), PipelineError> {
        let schema = self.load_schema()?;
        let dataset = load_instances(&self.root.join("ingest/instances.jsonl"), &schema)?;
        Ok((schema, dataset))
    }

    /// Attributes every ingested instance. Partial results are stored but
    /// leave the stage incomplete.
    pub fn attribute(
        &self,
        provider: &dyn PredictionProvider,
        config: &AttributeConfig,
        jobs: usize,
    ) -> Result<(StageOutcome, Vec<crate::attribution::FailedInstance>), PipelineError> {
        let m = self.manifest()?;
        let inputs = self.upstream_inputs(&m, Stage::Attribute)?;
        let report = self.load_ingest_report()?;
        let config_fp = config.fingerprint(&fingerprint::combine([
            report.dataset_fingerprint.as_str(),
            &report.schema_fingerprint,
        ]));
        if self.is_fresh(&m, Stage::Attribute, &inputs, &config_fp) {
            return Ok((self.skipped(&m, Stage::Attribute), Vec::new()));
        }
        let (_, dataset) = self.load_dataset()?;
        let store = attribute_dataset(
            provider,
            &dataset,
            &report.dataset_fingerprint,
            config,
            jobs,
        )?;
        let store = AttributionStore {
            config_fingerprint: config_fp.clone(),
            ..store
        };
        let dir = store.save(&self.root)?;
        let rel = dir
            .strip_prefix(&self.root)
            .unwrap_or(&dir)
            .join("manifest.json");
        let files = vec![rel.to_string_lossy().replace('\\', "/")];
        let outcome = self.record(
            Stage::Attribute,
            inputs,
            config_fp,
            files,
            store.is_complete(),
        )?;
        Ok((outcome, store.failed))
    }

    pub fn load_attributions(&self) -> Result<AttributionStore, PipelineError> {
        let rec = self.require(Stage::Attribute)?;
        Ok(AttributionStore::load(&self.root, &rec.config_fingerprint)?)
    }

    pub fn analyze(&self, config: &AnalyzeConfig) -> Result<StageOutcome, PipelineError> {
        let m = self.manifest()?;
        let inputs = self.upstream_inputs(&m, Stage::Analyze)?;
        if let Some(th) = &config.thresholds {
            th.validate()?;
        }
        let config_fp = fingerprint::of(config);
        if self.is_fresh(&m, Stage::Analyze, &inputs, &config_fp) {
            return Ok(self.skipped(&m, Stage::Analyze));
        }
        let (_, dataset) = self.load_dataset()?;
        let attributions = self.load_attributions()?;
        let triples: Vec<ImportanceTriple> = attributions
            .records
            .iter()
            .map(|r| aggregate_modality_importance(&r.feature))
            .collect();
        let (best, trace, source) = match config.thresholds {
            Some(th) => (th, Vec::<GridPoint>::new(), "given"),
            None => {
                let r = optimize_thresholds(&triples, config.grid_step)?;
                (r.best, r.trace, "search")
            }
        };
        let labels = label_dataset(&triples, &best);
        let kinds: Vec<Interaction> = labels.iter().map(|l| l.label).collect();
        let parts = objective(&triples, &kinds);
        let groups = group_summary(&labels, &triples, &dataset)?;
        let thresholds = ThresholdsFile {
            th_sig: best.th_sig,
            th_dom: best.th_dom,
            th_confl: best.th_confl,
            objective: parts.value,
            grid_step: config.grid_step,
            source: source.into(),
            significance_floor: significance_floor(&triples),
            group_means: Interaction::ALL
                .iter()
                .map(|g| (*g, parts.group_means[g.index()]))
                .collect(),
            group_sizes: Interaction::ALL
                .iter()
                .map(|g| (*g, parts.group_sizes[g.index()]))
                .collect(),
            others_magnitude: parts.others_magnitude,
        };
        let records: Vec<LabelRecord> = triples
            .iter()
            .zip(&labels)
            .map(|(t, l)| LabelRecord::new(t, l))
            .collect();
        let files = vec![
            self.write("analysis/labels.jsonl", &to_jsonl(&records)?)?,
            self.write("analysis/thresholds.json", &to_json(&thresholds)?)?,
            self.write("analysis/search_trace.json", &to_json(&trace)?)?,
            self.write("analysis/groups.json", &to_json(&groups)?)?,
        ];
        self.record(Stage::Analyze, inputs, config_fp, files, true)
    }

    pub fn load_analysis(&self) -> Result<Analysis, PipelineError> {
        self.require(Stage::Analyze)?;
        let labels = from_jsonl(&self.read(Stage::Analyze, "analysis/labels.jsonl")?)?;
        let thresholds =
            serde_json::from_slice(&self.read(Stage::Analyze, "analysis/thresholds.json")?)
                .map_err(StoreError::from)?;
        let groups = serde_json::from_slice(&self.read(Stage::Analyze, "analysis/groups.json")?)
            .map_err(StoreError::from)?;
        Ok(Analysis {
            labels,
            thresholds,
            groups,
        })
    }

    pub fn mine(&self, config: &MineConfig) -> Result<StageOutcome, PipelineError> {
        let m = self.manifest()?;
        let inputs = self.upstream_inputs(&m, Stage::Mine)?;
        let config_fp = fingerprint::of(config);
        if self.is_fresh(&m, Stage::Mine, &inputs, &config_fp) {
            return Ok(self.skipped(&m, Stage::Mine));
        }
        let (schema, dataset) = self.load_dataset()?;
        let attributions = self.load_attributions()?;
        let build = build_itemsets(&dataset, &schema, &attributions, config.rule)?;
        let all: BTreeSet<String> = dataset.ids().map(str::to_string).collect();
        let templates = mine_templates(&build.transactions, &dataset, &all, config.min_support)?;
        let itemsets = ItemsetsFile {
            config: *config,
            cutoffs: Modality::ALL
                .iter()
                .map(|m| (*m, build.cutoffs[m.index()]))
                .collect(),
            skipped: build.skipped,
        };
        let files = vec![
            self.write(
                "templates/transactions.jsonl",
                &to_jsonl(&build.transactions)?,
            )?,
            self.write("templates/itemsets.json", &to_json(&itemsets)?)?,
            self.write("templates/templates.json", &to_json(&templates)?)?,
        ];
        self.record(Stage::Mine, inputs, config_fp, files, true)
    }

    pub fn load_transactions(&self) -> Result<(ItemsetsFile, Vec<Transaction>), PipelineError> {
        self.require(Stage::Mine)?;
        let tx = from_jsonl(&self.read(Stage::Mine, "templates/transactions.jsonl")?)?;
        let meta = serde_json::from_slice(&self.read(Stage::Mine, "templates/itemsets.json")?)
            .map_err(StoreError::from)?;
        Ok((meta, tx))
    }

    pub fn load_templates(&self) -> Result<Vec<Template>, PipelineError> {
        self.require(Stage::Mine)?;
        Ok(
            serde_json::from_slice(&self.read(Stage::Mine, "templates/templates.json")?)
                .map_err(StoreError::from)?,
        )
    }

    /// Projects all three modalities (in parallel) and writes the glyph
    /// normalization sidecar.
    pub fn project(&self, config: &ProjectConfig) -> Result<StageOutcome, PipelineError> {
        let m = self.manifest()?;
        let inputs = self.upstream_inputs(&m, Stage::Project)?;
        let config_fp = fingerprint::of(config);
        if self.is_fresh(&m, Stage::Project, &inputs, &config_fp) {
            return Ok(self.skipped(&m, Stage::Project));
        }
        let (schema, dataset) = self.load_dataset()?;
        let attributions = self.load_attributions()?;
        let (_, transactions) = self.load_transactions()?;
        let norm = GlyphNormalization::from_dataset(&dataset, &schema);
        let projections: Vec<ModalityProjection> = Modality::ALL
            .par_iter()
            .map(|&m| {
                project_modality(
                    &dataset,
                    &schema,
                    Some(&attributions),
                    &transactions,
                    &norm,
                    m,
                    config,
                    None,
                )
            })
            .collect::<Result<_, _>>()?;
        let mut files = vec![
            self.write("projection/config.json", &to_json(config)?)?,
            self.write("projection/normalization.json", &to_json(&norm)?)?,
        ];
        for p in &projections {
            files.push(self.write(&format!("projection/{}.json", p.modality), &to_json(p)?)?);
        }
        self.record(Stage::Project, inputs, config_fp, files, true)
    }

    pub fn load_projection(&self, m: Modality) -> Result<ModalityProjection, PipelineError> {
        self.require(Stage::Project)?;
        Ok(
            serde_json::from_slice(&self.read(Stage::Project, &format!("projection/{m}.json"))?)
                .map_err(StoreError::from)?,
        )
    }

    pub fn load_normalization(&self) -> Result<GlyphNormalization, PipelineError> {
        self.require(Stage::Project)?;
        Ok(
            serde_json::from_slice(&self.read(Stage::Project, "projection/normalization.json")?)
                .map_err(StoreError::from)?,
        )
    }

    pub fn project_config(&self) -> Result<ProjectConfig, PipelineError> {
        self.require(Stage::Project)?;
        Ok(
            serde_json::from_slice(&self.read(Stage::Project, "projection/config.json")?)
                .map_err(StoreError::from)?,
        )
    }
}
