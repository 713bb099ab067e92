use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{FeatureSchema, Modality, ModalityFeatures};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("remote: {0}")]
    Remote(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    BuiltinLinear,
    BuiltinMlpToy,
    Subprocess,
    HttpCallback,
    /// In-process closure, used by tests and library callers.
    Function,
}

/// Black-box model: one real prediction per input feature triple.
///
/// Implementations must be deterministic for identical inputs within a
/// session and return exactly one output per input.
pub trait PredictionProvider: Send + Sync {
    fn predict(&self, batch: &[ModalityFeatures]) -> Result<Vec<f64>, ProviderError>;

    fn kind(&self) -> ProviderKind;

    /// Largest batch the provider accepts in one call.
    fn max_batch(&self) -> usize {
        usize::MAX
    }

    /// Closed-form model, if the provider is a builtin linear model.
    fn as_linear(&self) -> Option<&LinearProvider> {
        None
    }
}

/// Evaluates `inputs` in provider-sized chunks, checking output counts.
pub fn evaluate(
    provider: &dyn PredictionProvider,
    inputs: &[ModalityFeatures],
) -> Result<Vec<f64>, ProviderError> {
    let chunk = provider.max_batch().max(1);
    let mut out = Vec::with_capacity(inputs.len());
    for batch in inputs.chunks(chunk) {
        let got = provider.predict(batch)?;
        if got.len() != batch.len() {
            return Err(ProviderError::Protocol(format!(
                "{} outputs for a batch of {}",
                got.len(),
                batch.len()
            )));
        }
        if let Some(bad) = got.iter().find(|v| !v.is_finite()) {
            return Err(ProviderError::Protocol(format!("non-finite output {bad}")));
        }
        out.extend(got);
    }
    Ok(out)
}

pub struct FnProvider<F> {
    f: F,
}

impl<F: Fn(&ModalityFeatures) -> f64 + Send + Sync> FnProvider<F> {
    pub fn new(f: F) -> Self {
        FnProvider { f }
    }
}

impl<F: Fn(&ModalityFeatures) -> f64 + Send + Sync> PredictionProvider for FnProvider<F> {
    fn predict(&self, batch: &[ModalityFeatures]) -> Result<Vec<f64>, ProviderError> {
        Ok(batch.iter().map(&self.f).collect())
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::Function
    }
}

/// `f(x) = bias + Σ_m Σ_d w[m][d] · mean_t x_m[t, d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProvider {
    pub language: Vec<f64>,
    pub audio: Vec<f64>,
    pub vision: Vec<f64>,
    pub bias: f64,
}

impl LinearProvider {
    pub fn weights(&self, m: Modality) -> &[f64] {
        match m {
            Modality::Language => &self.language,
            Modality::Audio => &self.audio,
            Modality::Vision => &self.vision,
        }
    }

    pub fn eval(&self, x: &ModalityFeatures) -> f64 {
        let mut acc = self.bias;
        for m in Modality::ALL {
            let means = x.get(m).column_means();
            acc += self
                .weights(m)
                .iter()
                .zip(&means)
                .map(|(w, v)| w * v)
                .sum::<f64>();
        }
        acc
    }

    /// Per-cell weights for an input with `rows` time steps, flattened in
    /// modality-then-row-major order.
    pub fn cell_weights(&self, rows: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for m in Modality::ALL {
            for _ in 0..rows {
                out.extend(self.weights(m).iter().map(|w| w / rows as f64));
            }
        }
        out
    }
}

impl PredictionProvider for LinearProvider {
    fn predict(&self, batch: &[ModalityFeatures]) -> Result<Vec<f64>, ProviderError> {
        for x in batch {
            for m in Modality::ALL {
                if x.get(m).cols() != self.weights(m).len() {
                    return Err(ProviderError::Protocol(format!(
                        "{m} input has {} columns, model expects {}",
                        x.get(m).cols(),
                        self.weights(m).len()
                    )));
                }
            }
        }
        Ok(batch.iter().map(|x| self.eval(x)).collect())
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::BuiltinLinear
    }

    fn as_linear(&self) -> Option<&LinearProvider> {
        Some(self)
    }
}

/// Small fixed-weight network over time-mean features:
/// `3 · tanh(v · tanh(W x + b) + c)`, weights drawn from a seeded RNG.
#[derive(Debug, Clone)]
pub struct MlpToyProvider {
    dims: [usize; 3],
    hidden: Vec<Vec<f64>>,
    hidden_bias: Vec<f64>,
    out: Vec<f64>,
    out_bias: f64,
}

impl MlpToyProvider {
    pub const HIDDEN: usize = 8;

    pub fn new(dims: [usize; 3], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = dims.iter().sum::<usize>().max(1);
        let w = Normal::new(0.0, 1.0 / (input as f64).sqrt()).unwrap();
        let v = Normal::new(0.0, 1.0 / (Self::HIDDEN as f64).sqrt()).unwrap();
        let hidden = (0..Self::HIDDEN)
            .map(|_| (0..input).map(|_| w.sample(&mut rng)).collect())
            .collect();
        let hidden_bias = (0..Self::HIDDEN)
            .map(|_| 0.1 * w.sample(&mut rng))
            .collect();
        let out = (0..Self::HIDDEN).map(|_| v.sample(&mut rng)).collect();
        MlpToyProvider {
            dims,
            hidden,
            hidden_bias,
            out,
            out_bias: 0.0,
        }
    }

    pub fn for_schema(schema: &FeatureSchema, seed: u64) -> Self {
        Self::new(Modality::ALL.map(|m| schema.dims(m)), seed)
    }

    fn eval(&self, x: &ModalityFeatures) -> f64 {
        let input: Vec<f64> = Modality::ALL
            .iter()
            .flat_map(|m| x.get(*m).column_means())
            .collect();
        let h =
            self.hidden.iter().zip(&self.hidden_bias).map(|(row, b)| {
                (row.iter().zip(&input).map(|(w, v)| w * v).sum::<f64>() + b).tanh()
            });
        3.0 * (h.zip(&self.out).map(|(h, v)| h * v).sum::<f64>() + self.out_bias).tanh()
    }
}

impl PredictionProvider for MlpToyProvider {
    fn predict(&self, batch: &[ModalityFeatures]) -> Result<Vec<f64>, ProviderError> {
        for x in batch {
            if Modality::ALL.map(|m| x.get(m).cols()) != self.dims {
                return Err(ProviderError::Protocol(
                    "input width does not match the model".into(),
                ));
            }
        }
        Ok(batch.iter().map(|x| self.eval(x)).collect())
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::BuiltinMlpToy
    }
}

/// First line a subprocess provider writes on startup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    #[serde(default)]
    pub schema_fingerprint: String,
    pub max_batch: usize,
    #[serde(default = "one")]
    pub max_in_flight: usize,
}

fn one() -> usize {
    1
}

#[derive(Serialize)]
struct BatchRequest<'a> {
    batch_id: u64,
    inputs: &'a [ModalityFeatures],
}

#[derive(Deserialize)]
struct BatchResponse {
    batch_id: u64,
    #[serde(default)]
    outputs: Vec<f64>,
    #[serde(default)]
    error: Option<String>,
}

fn check_response(expected_id: u64, resp: BatchResponse) -> Result<Vec<f64>, ProviderError> {
    if let Some(e) = resp.error {
        return Err(ProviderError::Remote(e));
    }
    if resp.batch_id != expected_id {
        return Err(ProviderError::Protocol(format!(
            "response for batch {} while waiting for {expected_id}",
            resp.batch_id
        )));
    }
    Ok(resp.outputs)
}

struct Pipe {
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Model hosted in a child process speaking line-delimited JSON over
/// stdin/stdout. Requests are serialized through one pipe.
pub struct SubprocessProvider {
    child: Mutex<Child>,
    pipe: Mutex<Pipe>,
    handshake: Handshake,
    next_batch: AtomicU64,
}

impl SubprocessProvider {
    /// Spawns `command` through the shell and reads its handshake. When
    /// `schema_fingerprint` is given, a handshake declaring a different
    /// non-empty fingerprint is rejected.
    pub fn spawn(command: &str, schema_fingerprint: Option<&str>) -> Result<Self, ProviderError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut line = String::new();
        if stdout.read_line(&mut line)? == 0 {
            let _ = child.kill();
            return Err(ProviderError::Protocol(
                "provider exited before its handshake".into(),
            ));
        }
        let handshake: Handshake = serde_json::from_str(line.trim()).map_err(|e| {
            ProviderError::Protocol(format!("bad handshake `{}`: {e}", line.trim()))
        })?;
        if let Some(expected) = schema_fingerprint {
            if !handshake.schema_fingerprint.is_empty() && handshake.schema_fingerprint != expected
            {
                let _ = child.kill();
                return Err(ProviderError::Protocol(format!(
                    "provider schema fingerprint {} does not match {expected}",
                    handshake.schema_fingerprint
                )));
            }
        }
        if handshake.max_batch == 0 {
            let _ = child.kill();
            return Err(ProviderError::Protocol(
                "handshake declares max_batch 0".into(),
            ));
        }
        Ok(SubprocessProvider {
            child: Mutex::new(child),
            pipe: Mutex::new(Pipe { stdin, stdout }),
            handshake,
            next_batch: AtomicU64::new(0),
        })
    }

    pub fn handshake(&self) -> &Handshake {
        &self.handshake
    }
}

impl PredictionProvider for SubprocessProvider {
    fn predict(&self, batch: &[ModalityFeatures]) -> Result<Vec<f64>, ProviderError> {
        let batch_id = self.next_batch.fetch_add(1, Ordering::Relaxed);
        let mut pipe = self.pipe.lock().expect("provider pipe poisoned");
        let mut payload = serde_json::to_vec(&BatchRequest {
            batch_id,
            inputs: batch,
        })
        .map_err(|e| ProviderError::Protocol(e.to_string()))?;
        payload.push(b'\n');
        pipe.stdin.write_all(&payload)?;
        pipe.stdin.flush()?;
        let mut line = String::new();
        if pipe.stdout.read_line(&mut line)? == 0 {
            return Err(ProviderError::Protocol("provider closed its output".into()));
        }
        let resp: BatchResponse = serde_json::from_str(line.trim())
            .map_err(|e| ProviderError::Protocol(format!("bad response: {e}")))?;
        check_response(batch_id, resp)
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::Subprocess
    }

    fn max_batch(&self) -> usize {
        self.handshake.max_batch
    }
}

impl Drop for SubprocessProvider {
    fn drop(&mut self) {
        if let Ok(child) = self.child.get_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Model behind an HTTP endpoint: each batch is one POST with the same
/// request/response bodies as the subprocess protocol.
pub struct HttpCallbackProvider {
    url: String,
    client: reqwest::blocking::Client,
    max_batch: usize,
    next_batch: AtomicU64,
}

impl HttpCallbackProvider {
    pub fn new(url: impl Into<String>, max_batch: usize) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| ProviderError::Remote(e.to_string()))?;
        Ok(HttpCallbackProvider {
            url: url.into(),
            client,
            max_batch: max_batch.max(1),
            next_batch: AtomicU64::new(0),
        })
    }
}

impl PredictionProvider for HttpCallbackProvider {
    fn predict(&self, batch: &[ModalityFeatures]) -> Result<Vec<f64>, ProviderError> {
        let batch_id = self.next_batch.fetch_add(1, Ordering::Relaxed);
        let resp = self
            .client
            .post(&self.url)
            .json(&BatchRequest {
                batch_id,
                inputs: batch,
            })
            .send()
            .map_err(|e| ProviderError::Remote(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(ProviderError::Remote(format!("HTTP {}", resp.status())));
        }
        let body: BatchResponse = resp
            .json()
            .map_err(|e| ProviderError::Protocol(e.to_string()))?;
        check_response(batch_id, body)
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::HttpCallback
    }

    fn max_batch(&self) -> usize {
        self.max_batch
    }
}
