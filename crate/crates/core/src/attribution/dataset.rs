use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    exact_shapley, kernel_shap, units_for, AttributionError, AttributionRecord, BackgroundSet,
    Granularity, PredictionProvider,
};
use crate::data::{Dataset, Instance, Modality};
use crate::fingerprint;
use crate::store::{write_atomic, StoreError};

/// Unit count up to which `Method::Auto` enumerates coalitions exactly.
const AUTO_EXACT_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Kernel,
    /// Closed form; only for builtin linear providers.
    Linear,
    /// Linear closed form when available, else exact for small unit counts,
    /// else Kernel SHAP.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackgroundSpec {
    Zeros,
    /// Per-feature mean over the first `size` dataset instances.
    Mean {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeConfig {
    /// Provider description; part of the fingerprint.
    pub provider: String,
    pub granularity: Granularity,
    pub method: Method,
    pub n_samples: usize,
    pub seed: u64,
    pub background: BackgroundSpec,
    /// Also run the per-time-step pass used for word-level views.
    pub word_level: bool,
}

impl Default for AttributeConfig {
    fn default() -> Self {
        AttributeConfig {
            provider: String::new(),
            granularity: Granularity::Feature,
            method: Method::Auto,
            n_samples: 512,
            seed: 0,
            background: BackgroundSpec::Mean { size: 100 },
            word_level: true,
        }
    }
}

impl AttributeConfig {
    pub fn fingerprint(&self, dataset_fingerprint: &str) -> String {
        fingerprint::combine([dataset_fingerprint, &fingerprint::of(self)])
    }

    pub fn background_for(&self, dataset: &Dataset) -> Result<BackgroundSet, AttributionError> {
        match self.background {
            BackgroundSpec::Zeros => {
                let first = dataset
                    .instances()
                    .first()
                    .ok_or_else(|| AttributionError::Argument("empty dataset".into()))?;
                Ok(BackgroundSet::zeros(
                    Modality::ALL.map(|m| first.features.get(m).cols()),
                ))
            }
            BackgroundSpec::Mean { size } => {
                let refs: Vec<&Instance> = dataset.iter().take(size.max(1)).collect();
                BackgroundSet::from_instances(&refs)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceAttribution {
    /// Record at the configured granularity (per feature by default).
    pub feature: AttributionRecord,
    /// Per-time-step record, when the word-level pass ran.
    pub word: Option<AttributionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedInstance {
    pub instance_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoreManifest {
    config: AttributeConfig,
    config_fingerprint: String,
    content_fingerprint: String,
    complete: bool,
    instance_ids: Vec<String>,
    failed: Vec<FailedInstance>,
}

/// Attributions for a dataset under one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionStore {
    pub config: AttributeConfig,
    pub config_fingerprint: String,
    /// In dataset order, failed instances omitted.
    pub records: Vec<InstanceAttribution>,
    pub failed: Vec<FailedInstance>,
}

impl AttributionStore {
    pub fn is_complete(&self) -> bool {
        self.failed.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&InstanceAttribution> {
        self.records.iter().find(|r| r.feature.instance_id == id)
    }

    pub fn content_fingerprint(&self) -> String {
        fingerprint::combine([
            self.config_fingerprint.as_str(),
            &fingerprint::of(&self.records),
            &fingerprint::of(&self.failed),
        ])
    }

    pub fn dir(store_root: &Path, config_fingerprint: &str) -> PathBuf {
        store_root
            .join("attributions")
            .join(fingerprint::short(config_fingerprint))
    }

    /// Writes one file per instance, then the manifest.
    pub fn save(&self, store_root: &Path) -> Result<PathBuf, StoreError> {
        let dir = Self::dir(store_root, &self.config_fingerprint);
        fs::create_dir_all(dir.join("records"))?;
        for rec in &self.records {
            let path = dir
                .join("records")
                .join(record_file_name(&rec.feature.instance_id));
            write_atomic(&path, &serde_json::to_vec(rec)?)?;
        }
        let manifest = StoreManifest {
            config: self.config.clone(),
            config_fingerprint: self.config_fingerprint.clone(),
            content_fingerprint: self.content_fingerprint(),
            complete: self.is_complete(),
            instance_ids: self
                .records
                .iter()
                .map(|r| r.feature.instance_id.clone())
                .collect(),
            failed: self.failed.clone(),
        };
        write_atomic(
            &dir.join("manifest.json"),
            &serde_json::to_vec_pretty(&manifest)?,
        )?;
        Ok(dir)
    }

    pub fn load(store_root: &Path, config_fingerprint: &str) -> Result<Self, StoreError> {
        let dir = Self::dir(store_root, config_fingerprint);
        let manifest: StoreManifest =
            serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
        let mut records = Vec::with_capacity(manifest.instance_ids.len());
        for id in &manifest.instance_ids {
            let rec: InstanceAttribution =
                serde_json::from_slice(&fs::read(dir.join("records").join(record_file_name(id)))?)?;
            records.push(rec);
        }
        let store = AttributionStore {
            config: manifest.config,
            config_fingerprint: manifest.config_fingerprint,
            records,
            failed: manifest.failed,
        };
        if store.content_fingerprint() != manifest.content_fingerprint {
            return Err(StoreError::Stale(format!(
                "attribution records under {} do not match their manifest",
                dir.display()
            )));
        }
        Ok(store)
    }
}

/// File name for an instance id: safe characters kept, anything else
/// replaced, with a hash suffix whenever the id was altered.
fn record_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    if safe == id && !id.starts_with('.') {
        format!("{safe}.json")
    } else {
        format!("{safe}-{}.json", &fingerprint::of_bytes(id.as_bytes())[..8])
    }
}

fn instance_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn attribute_one(
    provider: &dyn PredictionProvider,
    instance: &Instance,
    background: &BackgroundSet,
    granularity: Granularity,
    config: &AttributeConfig,
    seed: u64,
) -> Result<AttributionRecord, AttributionError> {
    let units = units_for(&instance.features, granularity);
    let method = match config.method {
        Method::Auto if provider.as_linear().is_some() => Method::Linear,
        Method::Auto if units.len() <= AUTO_EXACT_LIMIT => Method::Exact,
        Method::Auto => Method::Kernel,
        Method::Kernel if units.len() < 2 => Method::Exact,
        m => m,
    };
    match method {
        Method::Exact => exact_shapley(provider, instance, background, &units),
        Method::Kernel => kernel_shap(
            provider,
            instance,
            background,
            &units,
            config.n_samples.max(units.len() + 2),
            seed,
        ),
        Method::Linear => provider
            .as_linear()
            .ok_or_else(|| {
                AttributionError::Argument("linear method needs a builtin linear provider".into())
            })?
            .explain(instance, background, &units),
        Method::Auto => unreachable!(),
    }
}

/// Attributes every instance, in parallel over `jobs` worker threads.
/// Instances whose provider calls fail are ledgered in `failed`; the rest
/// are kept.
pub fn attribute_dataset(
    provider: &dyn PredictionProvider,
    dataset: &Dataset,
    dataset_fingerprint: &str,
    config: &AttributeConfig,
    jobs: usize,
) -> Result<AttributionStore, AttributionError> {
    let background = config.background_for(dataset)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| AttributionError::Argument(e.to_string()))?;
    let results: Vec<Result<InstanceAttribution, (String, AttributionError)>> =
        pool.install(|| {
            dataset
                .instances()
                .par_iter()
                .enumerate()
                .map(|(i, inst)| {
                    let seed = instance_seed(config.seed, i);
                    let run = || -> Result<InstanceAttribution, AttributionError> {
                        let feature = attribute_one(
                            provider,
                            inst,
                            &background,
                            config.granularity,
                            config,
                            seed,
                        )?;
                        let word = if config.word_level {
                            Some(attribute_one(
                                provider,
                                inst,
                                &background,
                                Granularity::TimeStep,
                                config,
                                seed ^ 1,
                            )?)
                        } else {
                            None
                        };
                        Ok(InstanceAttribution { feature, word })
                    };
                    run().map_err(|e| (inst.id.clone(), e))
                })
                .collect()
        });

    let mut records = Vec::new();
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err((instance_id, AttributionError::Provider { context, source })) => {
                log::warn!("provider failed on `{instance_id}`: {source}");
                failed.push(FailedInstance {
                    instance_id,
                    error: format!("{context}: {source}"),
                });
            }
            Err((instance_id, e)) => {
                failed.push(FailedInstance {
                    instance_id,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(AttributionStore {
        config: config.clone(),
        config_fingerprint: config.fingerprint(dataset_fingerprint),
        records,
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{FnProvider, LinearProvider, ProviderError, ProviderKind};
    use super::*;
    use crate::data::{test_support::instance, FeatureMatrix, ModalityFeatures};

    fn dataset(n: usize) -> Dataset {
        Dataset::new(
            (0..n)
                .map(|i| {
                    let mut inst = instance(&format!("i{i}"), 2, 0.0, 0.0);
                    inst.features.language =
                        FeatureMatrix::from_vec(2, 2, vec![i as f64, 1.0, 0.5, -(i as f64)]);
                    inst.features.audio.set(0, 1, i as f64 * 0.1);
                    inst
                })
                .collect(),
        )
        .unwrap()
    }

    fn model() -> LinearProvider {
        LinearProvider {
            language: vec![1.0, -0.5],
            audio: vec![2.0, 1.0],
            vision: vec![0.1, 0.2, 0.3, 0.4],
            bias: 0.1,
        }
    }

    #[test]
    fn ten_instances_all_locally_accurate() {
        let ds = dataset(10);
        for method in [Method::Linear, Method::Exact, Method::Kernel] {
            let cfg = AttributeConfig {
                method,
                background: BackgroundSpec::Mean { size: 4 },
                n_samples: 64,
                ..Default::default()
            };
            let store = attribute_dataset(&model(), &ds, "fp", &cfg, 2).unwrap();
            assert_eq!(store.records.len(), 10);
            for rec in &store.records {
                assert!(rec.feature.local_accuracy_gap().abs() < 1e-9, "{method:?}");
                let word = rec.word.as_ref().unwrap();
                assert_eq!(word.granularity, Granularity::TimeStep);
                assert!(word.local_accuracy_gap().abs() < 1e-9);
            }
        }
    }

    #[test]
    fn reruns_are_identical() {
        let ds = dataset(6);
        let f = FnProvider::new(|x: &ModalityFeatures| {
            (x.language.get(0, 0) * x.audio.get(1, 1)).tanh() + x.vision.get(0, 2)
        });
        let cfg = AttributeConfig {
            method: Method::Kernel,
            n_samples: 40,
            seed: 5,
            ..Default::default()
        };
        let a = attribute_dataset(&f, &ds, "fp", &cfg, 3).unwrap();
        let b = attribute_dataset(&f, &ds, "fp", &cfg, 1).unwrap();
        assert_eq!(a.content_fingerprint(), b.content_fingerprint());
    }

    struct FailsOn(f64);
    impl PredictionProvider for FailsOn {
        fn predict(&self, batch: &[ModalityFeatures]) -> Result<Vec<f64>, ProviderError> {
            if batch.iter().any(|x| x.language.get(0, 0) == self.0) {
                return Err(ProviderError::Remote("boom".into()));
            }
            Ok(batch.iter().map(|x| x.language.get(0, 0)).collect())
        }
        fn kind(&self) -> ProviderKind {
            ProviderKind::Function
        }
    }

    #[test]
    fn provider_failure_is_ledgered_and_persisted() {
        let ds = dataset(10);
        let cfg = AttributeConfig {
            method: Method::Exact,
            background: BackgroundSpec::Zeros,
            ..Default::default()
        };
        let store = attribute_dataset(&FailsOn(7.0), &ds, "fp", &cfg, 4).unwrap();
        assert_eq!(store.records.len(), 9);
        assert_eq!(store.failed.len(), 1);
        assert_eq!(store.failed[0].instance_id, "i7");
        assert!(!store.is_complete());

        let dir = tempfile::tempdir().unwrap();
        store.save(dir.path()).unwrap();
        let loaded = AttributionStore::load(dir.path(), &store.config_fingerprint).unwrap();
        assert_eq!(loaded, store);
    }

    #[test]
    fn file_names_are_safe() {
        assert_eq!(record_file_name("abc_1"), "abc_1.json");
        let odd = record_file_name("a/b c");
        assert!(odd.starts_with("a_b_c-") && odd.ends_with(".json"));
        assert_ne!(record_file_name("a/b"), record_file_name("a?b"));
    }
}
