//! Read-only query layer over a completed store.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::{AttributeConfig, AttributionRecord, AttributionStore, Selector};
use crate::data::{
    bin_distribution, compute_metrics, Dataset, FeatureSchema, Histogram, MetricsReport, Modality,
    SENTIMENT_MAX, SENTIMENT_MIN,
};
use crate::fingerprint;
use crate::interactions::{GroupSummary, ImportanceTriple, Interaction, PREDICTION_BINS};
use crate::pipeline::{
    Analysis, ItemsetsFile, LabelRecord, PipelineError, Stage, StageRecord, Store, ThresholdsFile,
};
use crate::projection::{
    heatmap_grid, Glyph, HeatGrid, HeatMode, ModalityProjection, ProjectConfig,
};
use crate::store::StoreError;
use crate::templates::{
    mine_templates, sort_templates, template_for, Item, Template, TemplateSortKey, Transaction,
};

pub const API_VERSION: &str = "1";
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("analysis not ready; missing stages: {}", .missing.join(", "))]
    NotReady {
        completed: Vec<String>,
        missing: Vec<String>,
    },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid request: {0}")]
    Validation(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<PipelineError> for ServiceError {
    fn from(e: PipelineError) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

/// Serialized form shared by the HTTP server and file exports.
pub fn render<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("responses serialize");
    bytes.push(b'\n');
    bytes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLayer {
    pub histogram: Histogram,
    /// Instance ids sorted by ground truth (ties by dataset order).
    pub order: Vec<String>,
    pub labels: Vec<f64>,
    /// `|ŷ − y|` in `order`.
    pub errors: Vec<f64>,
    pub mean_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityLayer {
    pub modality: Modality,
    /// `Σ |I_m|` over the dataset.
    pub total_influence: f64,
    pub mean_positive: Option<f64>,
    pub mean_negative: Option<f64>,
    /// `I_m` per instance, dataset order.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryResponse {
    pub fingerprint: String,
    pub n: usize,
    pub ids: Vec<String>,
    pub ground_truth: GroundTruthLayer,
    /// Ordered by total influence, largest first.
    pub modalities: Vec<ModalityLayer>,
    pub groups: Vec<GroupSummary>,
    pub thresholds: ThresholdsFile,
}

/// A brush over one group's barcode plus optional slider filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrushQuery {
    pub label: Interaction,
    /// First member position (inclusive); defaults to 0.
    #[serde(default)]
    pub start: Option<usize>,
    /// Last member position (exclusive); defaults to the group size.
    #[serde(default)]
    pub end: Option<usize>,
    /// Inclusive `[lo, hi]` ranges on `I_m`.
    #[serde(default)]
    pub importance: BTreeMap<Modality, [f64; 2]>,
    #[serde(default)]
    pub prediction: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub fingerprint: String,
    pub label: Interaction,
    pub ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TemplateQuery {
    /// `None` means every instance.
    pub scope: Option<Vec<String>>,
    pub sort: Option<TemplateSortKey>,
    pub min_support: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplatesResponse {
    pub fingerprint: String,
    pub scope_fingerprint: String,
    pub scope_size: usize,
    pub sort: TemplateSortKey,
    pub min_support: f64,
    pub templates: Vec<Template>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProjectionQuery {
    pub scope: Option<Vec<String>>,
    pub heat_mode: Option<HeatMode>,
    /// Template items for `template_importance` heat.
    pub template: Option<Vec<Item>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServedPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub glyph: Glyph,
    pub dimmed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResponse {
    pub fingerprint: String,
    pub modality: Modality,
    pub input: String,
    pub kl_final: f64,
    pub points: Vec<ServedPoint>,
    pub heat: HeatGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDetail {
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<String>,
    /// Word-level language φ.
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityRect {
    pub modality: Modality,
    pub value: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLine {
    pub feature: String,
    pub set_name: Option<String>,
    pub phi: f64,
    /// Feature value at each word.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub modality: Modality,
    pub feature: String,
    pub set_name: Option<String>,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResponse {
    pub fingerprint: String,
    pub id: String,
    pub prediction: f64,
    pub label: f64,
    pub error: f64,
    pub base_value: f64,
    pub output: f64,
    pub interaction: Interaction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominant: Option<Modality>,
    pub tokens: Vec<TokenDetail>,
    pub modality_importance: Vec<ModalityRect>,
    pub audio_lines: Vec<FeatureLine>,
    pub vision_lines: Vec<FeatureLine>,
    /// Sorted by |φ| descending.
    pub feature_table: Vec<FeatureRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub label: Interaction,
    pub n: usize,
    pub mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsResponse {
    pub fingerprint: String,
    pub metrics: MetricsReport,
    pub groups: Vec<GroupMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaResponse {
    pub api_version: String,
    pub fingerprint: String,
    pub ready: bool,
    pub completed: Vec<String>,
    pub missing: Vec<String>,
    pub stages: BTreeMap<Stage, StageRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<BTreeMap<Modality, usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribution: Option<AttributeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mining: Option<ItemsetsFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectConfig>,
}

/// Immutable view of a completed store.
struct Snapshot {
    fingerprint: String,
    schema: FeatureSchema,
    dataset: Dataset,
    attributions: AttributionStore,
    records_by_id: HashMap<String, usize>,
    analysis: Analysis,
    triples: Vec<ImportanceTriple>,
    itemsets: ItemsetsFile,
    transactions: Vec<Transaction>,
    projections: BTreeMap<Modality, ModalityProjection>,
    project_config: ProjectConfig,
}

impl Snapshot {
    fn load(store: &Store) -> Result<Self, PipelineError> {
        let fingerprint = store.fingerprint()?;
        let (schema, dataset) = store.load_dataset()?;
        let attributions = store.load_attributions()?;
        let analysis = store.load_analysis()?;
        let (itemsets, transactions) = store.load_transactions()?;
        let mut projections = BTreeMap::new();
        for m in Modality::ALL {
            projections.insert(m, store.load_projection(m)?);
        }
        let project_config = store.project_config()?;
        let records_by_id = attributions
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.feature.instance_id.clone(), i))
            .collect();
        let triples = analysis.triples();
        Ok(Snapshot {
            fingerprint,
            schema,
            dataset,
            attributions,
            records_by_id,
            analysis,
            triples,
            itemsets,
            transactions,
            projections,
            project_config,
        })
    }

    fn label_of(&self, id: &str) -> Option<&LabelRecord> {
        self.dataset
            .position(id)
            .and_then(|i| self.analysis.labels.get(i))
            .filter(|l| l.id == id)
    }
}

/// Query service over one store. Cheap to share across threads.
pub struct AnalysisService {
    store: Store,
    snapshot: RwLock<Option<Arc<Snapshot>>>,
    template_cache: Mutex<HashMap<String, Arc<TemplatesResponse>>>,
    cache_hits: Mutex<u64>,
}

fn progress(store: &Store) -> (Vec<String>, Vec<String>) {
    let mut completed = Vec::new();
    let mut missing = Vec::new();
    for s in Stage::ALL {
        match store.require(s) {
            Ok(_) => completed.push(s.as_str().to_string()),
            Err(_) => missing.push(s.as_str().to_string()),
        }
    }
    (completed, missing)
}

impl AnalysisService {
    /// Opens the store; an incomplete store yields a service whose data
    /// endpoints report `NotReady` until [`reload`](Self::reload) succeeds.
    pub fn open(store: Store) -> Self {
        let service = AnalysisService {
            store,
            snapshot: RwLock::new(None),
            template_cache: Mutex::new(HashMap::new()),
            cache_hits: Mutex::new(0),
        };
        if let Err(e) = service.reload() {
            log::warn!("store not ready: {e}");
        }
        service
    }

    /// Loads a fresh snapshot and swaps it in.
    pub fn reload(&self) -> Result<(), ServiceError> {
        let (completed, missing) = progress(&self.store);
        if !missing.is_empty() {
            *self.snapshot.write().expect("snapshot lock") = None;
            return Err(ServiceError::NotReady { completed, missing });
        }
        let snap = Snapshot::load(&self.store)?;
        *self.snapshot.write().expect("snapshot lock") = Some(Arc::new(snap));
        self.template_cache.lock().expect("cache lock").clear();
        Ok(())
    }

    pub fn cache_hits(&self) -> u64 {
        *self.cache_hits.lock().expect("cache lock")
    }

    /// Current snapshot, reloading first when the store has moved on.
    fn snap(&self) -> Result<Arc<Snapshot>, ServiceError> {
        let current = self
            .store
            .fingerprint()
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        if let Some(s) = self.snapshot.read().expect("snapshot lock").as_ref() {
            if s.fingerprint == current {
                return Ok(s.clone());
            }
        }
        self.reload()?;
        self.snapshot
            .read()
            .expect("snapshot lock")
            .clone()
            .ok_or_else(|| ServiceError::Internal("snapshot vanished".into()))
    }

    fn resolve_scope(
        snap: &Snapshot,
        scope: &Option<Vec<String>>,
    ) -> Result<BTreeSet<String>, ServiceError> {
        match scope {
            None => Ok(snap.dataset.ids().map(str::to_string).collect()),
            Some(ids) => {
                if let Some(bad) = ids.iter().find(|id| snap.dataset.get(id).is_none()) {
                    return Err(ServiceError::Validation(format!(
                        "scope names unknown instance `{bad}`"
                    )));
                }
                Ok(ids.iter().cloned().collect())
            }
        }
    }

    pub fn summary(&self) -> Result<SummaryResponse, ServiceError> {
        let snap = self.snap()?;
        let ds = &snap.dataset;
        let mut order: Vec<usize> = (0..ds.len()).collect();
        order.sort_by(|&a, &b| {
            ds.instances()[a]
                .label
                .total_cmp(&ds.instances()[b].label)
                .then(a.cmp(&b))
        });
        let labels: Vec<f64> = order.iter().map(|&i| ds.instances()[i].label).collect();
        let errors: Vec<f64> = order
            .iter()
            .map(|&i| ds.instances()[i].abs_error())
            .collect();
        let ground_truth = GroundTruthLayer {
            histogram: bin_distribution(&labels, PREDICTION_BINS, (SENTIMENT_MIN, SENTIMENT_MAX))
                .map_err(|e| ServiceError::Internal(e.to_string()))?,
            order: order
                .iter()
                .map(|&i| ds.instances()[i].id.clone())
                .collect(),
            mean_error: crate::stats::mean(&errors).unwrap_or(0.0),
            labels,
            errors,
        };
        let mean_of = |v: Vec<f64>| crate::stats::mean(&v);
        let mut modalities: Vec<ModalityLayer> = Modality::ALL
            .iter()
            .map(|&m| {
                let values: Vec<f64> = snap.triples.iter().map(|t| t.get(m)).collect();
                ModalityLayer {
                    modality: m,
                    total_influence: values.iter().map(|v| v.abs()).sum(),
                    mean_positive: mean_of(values.iter().copied().filter(|v| *v > 0.0).collect()),
                    mean_negative: mean_of(values.iter().copied().filter(|v| *v < 0.0).collect()),
                    values,
                }
            })
            .collect();
        modalities.sort_by(|a, b| b.total_influence.total_cmp(&a.total_influence));
        Ok(SummaryResponse {
            fingerprint: snap.fingerprint.clone(),
            n: ds.len(),
            ids: ds.ids().map(str::to_string).collect(),
            ground_truth,
            modalities,
            groups: snap.analysis.groups.clone(),
            thresholds: snap.analysis.thresholds.clone(),
        })
    }

    pub fn query_group(&self, q: &BrushQuery) -> Result<QueryResponse, ServiceError> {
        let snap = self.snap()?;
        let group = snap
            .analysis
            .groups
            .iter()
            .find(|g| g.label == q.label)
            .ok_or_else(|| ServiceError::NotFound(format!("group `{}`", q.label)))?;
        let len = group.members.len();
        let start = q.start.unwrap_or(0);
        let end = q.end.unwrap_or(len);
        if start > end || end > len {
            return Err(ServiceError::Validation(format!(
                "member range [{start}, {end}) outside [0, {len}]"
            )));
        }
        for (name, r) in q
            .importance
            .iter()
            .map(|(m, r)| (m.as_str(), r))
            .chain(q.prediction.iter().map(|r| ("prediction", r)))
        {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(ServiceError::Validation(format!(
                    "{name} range [{}, {}] is invalid",
                    r[0], r[1]
                )));
            }
        }
        let within = |v: f64, r: &[f64; 2]| v >= r[0] && v <= r[1];
        let ids = group.members[start..end]
            .iter()
            .filter(|id| {
                let Some(label) = snap.label_of(id) else {
                    return false;
                };
                let t = label.triple();
                let inst = snap.dataset.get(id).expect("group members are dataset ids");
                q.importance.iter().all(|(m, r)| within(t.get(*m), r))
                    && q.prediction
                        .as_ref()
                        .is_none_or(|r| within(inst.prediction, r))
            })
            .cloned()
            .collect();
        Ok(QueryResponse {
            fingerprint: snap.fingerprint.clone(),
            label: q.label,
            ids,
        })
    }

    pub fn templates(&self, q: &TemplateQuery) -> Result<Arc<TemplatesResponse>, ServiceError> {
        let snap = self.snap()?;
        let scope = Self::resolve_scope(&snap, &q.scope)?;
        let sort = q.sort.unwrap_or(TemplateSortKey::Support);
        let min_support = q.min_support.unwrap_or(snap.itemsets.config.min_support);
        if !(min_support > 0.0 && min_support <= 1.0) {
            return Err(ServiceError::Validation(format!(
                "min_support {min_support} outside (0, 1]"
            )));
        }
        let scope_fingerprint = fingerprint::of(&scope);
        let key = fingerprint::combine([
            snap.fingerprint.as_str(),
            &scope_fingerprint,
            &fingerprint::of(&(min_support, sort)),
        ]);
        if let Some(hit) = self.template_cache.lock().expect("cache lock").get(&key) {
            *self.cache_hits.lock().expect("cache lock") += 1;
            return Ok(hit.clone());
        }
        let mut templates = mine_templates(&snap.transactions, &snap.dataset, &scope, min_support)
            .map_err(|e| ServiceError::Validation(e.to_string()))?;
        sort_templates(&mut templates, sort);
        let response = Arc::new(TemplatesResponse {
            fingerprint: snap.fingerprint.clone(),
            scope_fingerprint,
            scope_size: scope.len(),
            sort,
            min_support,
            templates,
        });
        self.template_cache
            .lock()
            .expect("cache lock")
            .insert(key, response.clone());
        Ok(response)
    }

    pub fn projection(
        &self,
        modality: Modality,
        q: &ProjectionQuery,
    ) -> Result<ProjectionResponse, ServiceError> {
        let snap = self.snap()?;
        let proj = &snap.projections[&modality];
        let scope = Self::resolve_scope(&snap, &q.scope)?;
        let points: Vec<ServedPoint> = proj
            .points
            .iter()
            .map(|p| ServedPoint {
                id: p.id.clone(),
                x: p.x,
                y: p.y,
                glyph: p.glyph.clone(),
                dimmed: !scope.contains(&p.id),
            })
            .collect();
        let coords: Vec<[f64; 2]> = points.iter().map(|p| [p.x, p.y]).collect();
        let mode = q.heat_mode.unwrap_or(HeatMode::Error);
        let weights: Vec<f64> = match mode {
            HeatMode::Error => points
                .iter()
                .map(|p| {
                    if p.dimmed {
                        0.0
                    } else {
                        snap.dataset.get(&p.id).map_or(0.0, |i| i.abs_error())
                    }
                })
                .collect(),
            HeatMode::TemplateImportance => {
                let items = q
                    .template
                    .clone()
                    .filter(|t| !t.is_empty())
                    .ok_or_else(|| {
                        ServiceError::Validation("template_importance heat needs a template".into())
                    })?;
                let t = template_for(items, &snap.transactions, &snap.dataset, &scope);
                let by_id: HashMap<&str, f64> = t
                    .member_ids
                    .iter()
                    .map(String::as_str)
                    .zip(t.importance_stats.values.iter().copied())
                    .collect();
                points
                    .iter()
                    .map(|p| by_id.get(p.id.as_str()).map_or(0.0, |v| v.abs()))
                    .collect()
            }
        };
        let cfg = &snap.project_config;
        let heat = heatmap_grid(
            &coords,
            &weights,
            cfg.heat_resolution,
            proj.bandwidth(cfg.heat_bandwidth_frac),
            mode,
        )
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
        Ok(ProjectionResponse {
            fingerprint: snap.fingerprint.clone(),
            modality,
            input: proj.input.clone(),
            kl_final: proj.kl_final,
            points,
            heat,
        })
    }

    pub fn instance(&self, id: &str, k: usize) -> Result<InstanceResponse, ServiceError> {
        let snap = self.snap()?;
        let inst = snap
            .dataset
            .get(id)
            .ok_or_else(|| ServiceError::NotFound(format!("instance `{id}`")))?;
        let rec = snap
            .records_by_id
            .get(id)
            .map(|&i| &snap.attributions.records[i])
            .ok_or_else(|| ServiceError::NotFound(format!("attribution for `{id}`")))?;
        let label = snap
            .label_of(id)
            .ok_or_else(|| ServiceError::Internal(format!("no label for `{id}`")))?;

        let word_phi: HashMap<usize, f64> = rec
            .word
            .iter()
            .flat_map(|w| w.modality_values(Modality::Language))
            .filter_map(|v| match v.unit.selector {
                Selector::TimeStep(r) => Some((r, v.phi)),
                _ => None,
            })
            .collect();
        let tokens = inst
            .tokens
            .iter()
            .enumerate()
            .map(|(r, t)| TokenDetail {
                text: t.text.clone(),
                start_s: t.start_s,
                end_s: t.end_s,
                pos: t.pos.clone(),
                phi: word_phi.get(&r).copied(),
            })
            .collect();

        let feature_phi = column_phi(&rec.feature);
        let table: Vec<FeatureRow> = {
            let mut rows: Vec<FeatureRow> = feature_phi
                .iter()
                .map(|(&(m, c), &phi)| {
                    let name = snap.schema.feature_name(m, c);
                    FeatureRow {
                        modality: m,
                        feature: name.to_string(),
                        set_name: snap.schema.set_of(m, name).map(str::to_string),
                        phi,
                    }
                })
                .collect();
            rows.sort_by(|a, b| {
                b.phi
                    .abs()
                    .total_cmp(&a.phi.abs())
                    .then(a.modality.cmp(&b.modality))
                    .then(a.feature.cmp(&b.feature))
            });
            rows
        };
        let lines = |m: Modality| -> Vec<FeatureLine> {
            table
                .iter()
                .filter(|r| r.modality == m)
                .take(k)
                .map(|r| {
                    let c = snap
                        .schema
                        .column(m, &r.feature)
                        .expect("feature from schema");
                    let mat = inst.features.get(m);
                    FeatureLine {
                        feature: r.feature.clone(),
                        set_name: r.set_name.clone(),
                        phi: r.phi,
                        values: (0..mat.rows()).map(|t| mat.get(t, c)).collect(),
                    }
                })
                .collect()
        };
        let t = label.triple();
        Ok(InstanceResponse {
            fingerprint: snap.fingerprint.clone(),
            id: id.to_string(),
            prediction: inst.prediction,
            label: inst.label,
            error: inst.abs_error(),
            base_value: rec.feature.base_value,
            output: rec.feature.output,
            interaction: label.label,
            dominant: label.dominant,
            tokens,
            modality_importance: Modality::ALL
                .iter()
                .map(|&m| ModalityRect {
                    modality: m,
                    value: t.get(m),
                    magnitude: t.get(m).abs(),
                })
                .collect(),
            audio_lines: lines(Modality::Audio),
            vision_lines: lines(Modality::Vision),
            feature_table: table,
        })
    }

    pub fn metrics(&self) -> Result<MetricsResponse, ServiceError> {
        let snap = self.snap()?;
        let metrics =
            compute_metrics(&snap.dataset).map_err(|e| ServiceError::Internal(e.to_string()))?;
        let groups = snap
            .analysis
            .groups
            .iter()
            .map(|g| GroupMetrics {
                label: g.label,
                n: g.members.len(),
                mae: crate::stats::mean(&g.errors),
            })
            .collect();
        Ok(MetricsResponse {
            fingerprint: snap.fingerprint.clone(),
            metrics,
            groups,
        })
    }

    pub fn meta(&self) -> Result<MetaResponse, ServiceError> {
        let manifest = self
            .store
            .manifest()
            .map_err(|e: StoreError| ServiceError::Internal(e.to_string()))?;
        let (completed, missing) = progress(&self.store);
        let snap = self.snap().ok();
        Ok(MetaResponse {
            api_version: API_VERSION.into(),
            fingerprint: self
                .store
                .fingerprint()
                .map_err(|e| ServiceError::Internal(e.to_string()))?,
            ready: snap.is_some(),
            completed,
            missing,
            stages: manifest.stages,
            instances: snap.as_ref().map(|s| s.dataset.len()),
            dims: snap.as_ref().map(|s| {
                Modality::ALL
                    .iter()
                    .map(|&m| (m, s.schema.dims(m)))
                    .collect()
            }),
            attribution: snap.as_ref().map(|s| s.attributions.config.clone()),
            mining: snap.as_ref().map(|s| s.itemsets.clone()),
            projection: snap.as_ref().map(|s| s.project_config.clone()),
        })
    }
}

/// φ per (modality, feature column), summing cells when the record is per
/// cell. Time-step records carry no feature identity and give nothing.
fn column_phi(rec: &AttributionRecord) -> BTreeMap<(Modality, usize), f64> {
    let mut out = BTreeMap::new();
    for v in &rec.values {
        if let Selector::Feature(c) | Selector::Cell(_, c) = v.unit.selector {
            *out.entry((v.unit.modality, c)).or_default() += v.phi;
        }
    }
    out
}
