//! Pluggable scorers: a deterministic character n-gram linear baseline
//! trained by seeded SGD, and a remote model-server client speaking the
//! /predict protocol. Both consume (topic, text) pairs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::translation::LanguageGroup;

/// Negative/positive class names for a classification task.
pub fn class_names(task: TaskKind) -> Option<(&'static str, &'static str)> {
    match task {
        TaskKind::Stance => Some(("con", "pro")),
        TaskKind::Evidence => Some(("non-evidence", "evidence")),
        TaskKind::Quality => None,
    }
}

/// One model output: a raw score, plus the decided class for
/// classification tasks (score >= 0.5 -> positive class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Prediction {
    fn from_score(score: f64, task: TaskKind) -> Prediction {
        let label = class_names(task).map(|(neg, pos)| {
            if score >= 0.5 {
                pos.to_string()
            } else {
                neg.to_string()
            }
        });
        Prediction { score, label }
    }
}

/// A trained model mapping (topic, text) pairs to predictions.
pub trait Scorer {
    fn predict(&self, items: &[(String, String)]) -> Result<Vec<Prediction>>;
    fn task(&self) -> TaskKind;
}

/// Baseline hyperparameters. Epoch counts default to 10 for
/// classification and 3 for regression; the remaining values are
/// baseline-specific.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineHyperparams {
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub hash_buckets: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for BaselineHyperparams {
    fn default() -> Self {
        BaselineHyperparams {
            ngram_min: 2,
            ngram_max: 4,
            hash_buckets: 1 << 18,
            epochs: 10,
            learning_rate: 0.1,
            l2: 1e-6,
        }
    }
}

impl BaselineHyperparams {
    pub fn default_for(task: TaskKind) -> Self {
        let mut hp = Self::default();
        if task == TaskKind::Quality {
            hp.epochs = 3;
        }
        hp
    }

    pub fn validate(&self) -> Result<()> {
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return Err(Error::Config("ngram_min must be in 1..=ngram_max".into()));
        }
        if !self.hash_buckets.is_power_of_two() {
            return Err(Error::Config("hash_buckets must be a power of two".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Topic/text separator token in the concatenated input.
const SEPARATOR: char = '\u{00a7}'; // §

/// Hashed, L2-normalized character n-gram counts of the lowercased
/// "topic § text" concatenation. Deterministic; output sorted by bucket.
pub fn featurize(topic: &str, text: &str, hp: &BaselineHyperparams) -> Vec<(u32, f64)> {
    let joined = format!(
        "{}{}{}",
        topic.to_lowercase(),
        SEPARATOR,
        text.to_lowercase()
    );
    let chars: Vec<char> = joined.chars().collect();
    let mask = (hp.hash_buckets - 1) as u64;
    let mut counts: HashMap<u32, f64> = HashMap::new();
    let mut buf = String::new();
    for n in hp.ngram_min..=hp.ngram_max {
        if chars.len() < n {
            continue;
        }
        for window in chars.windows(n) {
            buf.clear();
            buf.extend(window.iter());
            let bucket = (fnv1a(buf.as_bytes()) & mask) as u32;
            *counts.entry(bucket).or_insert(0.0) += 1.0;
        }
    }
    let norm: f64 = counts.values().map(|v| v * v).sum::<f64>().sqrt();
    let mut out: Vec<(u32, f64)> = if norm > 0.0 {
        counts.into_iter().map(|(i, v)| (i, v / norm)).collect()
    } else {
        Vec::new()
    };
    out.sort_unstable_by_key(|&(i, _)| i);
    out
}

/// Linear model over hashed character n-grams.
pub struct BaselineScorer {
    weights: Vec<f64>,
    bias: f64,
    task: TaskKind,
    hp: BaselineHyperparams,
    epoch_losses: Vec<f64>,
}

impl BaselineScorer {
    fn raw_score(&self, features: &[(u32, f64)]) -> f64 {
        let mut z = self.bias;
        for &(i, v) in features {
            z += self.weights[i as usize] * v;
        }
        z
    }

    /// Mean training loss measured at the end of each epoch.
    pub fn epoch_losses(&self) -> &[f64] {
        &self.epoch_losses
    }
}

impl Scorer for BaselineScorer {
    fn predict(&self, items: &[(String, String)]) -> Result<Vec<Prediction>> {
        Ok(items
            .iter()
            .map(|(topic, text)| {
                let features = featurize(topic, text, &self.hp);
                let z = self.raw_score(&features);
                let score = if self.task.is_classification() {
                    sigmoid(z)
                } else {
                    z
                };
                Prediction::from_score(score, self.task)
            })
            .collect())
    }

    fn task(&self) -> TaskKind {
        self.task
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Extracts the regression or classification target for a record.
fn train_target(record: &crate::corpus::Record, task: TaskKind) -> Option<f64> {
    match task {
        TaskKind::Quality => record.quality_score,
        TaskKind::Stance | TaskKind::Evidence => {
            let (neg, pos) = class_names(task).unwrap();
            match record.class_label(task) {
                Some(l) if l == pos => Some(1.0),
                Some(l) if l == neg => Some(0.0),
                _ => None,
            }
        }
    }
}

/// Trains the baseline with seeded SGD. Classification uses logistic
/// loss, regression squared error; the last-epoch model is returned with
/// no early stopping.
pub fn fit_baseline(
    train: &Dataset,
    task: TaskKind,
    hp: &BaselineHyperparams,
    seed: u64,
) -> Result<BaselineScorer> {
    hp.validate()?;
    let mut examples: Vec<(Vec<(u32, f64)>, f64)> = Vec::new();
    for r in &train.records {
        if let Some(y) = train_target(r, task) {
            examples.push((featurize(&r.topic, &r.text, hp), y));
        }
    }
    if examples.is_empty() {
        return Err(Error::Model(format!(
            "no trainable records for task {task} in dataset `{}`",
            train.name
        )));
    }
    if task.is_classification() {
        let pos = examples.iter().filter(|(_, y)| *y > 0.5).count();
        if pos == 0 || pos == examples.len() {
            return Err(Error::Model(format!(
                "training set `{}` contains a single class for task {task}",
                train.name
            )));
        }
    }

    let mut weights = vec![0.0; hp.hash_buckets];
    let mut bias = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(hp.epochs);
    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        for &idx in &order {
            let (features, y) = &examples[idx];
            let mut z = bias;
            for &(i, v) in features {
                z += weights[i as usize] * v;
            }
            let grad = if task.is_classification() {
                sigmoid(z) - y
            } else {
                z - y
            };
            for &(i, v) in features {
                let w = &mut weights[i as usize];
                *w -= hp.learning_rate * (grad * v + hp.l2 * *w);
            }
            bias -= hp.learning_rate * grad;
        }
        // end-of-epoch mean loss over the full training set
        let mut loss = 0.0;
        for (features, y) in &examples {
            let mut z = bias;
            for &(i, v) in features {
                z += weights[i as usize] * v;
            }
            loss += if task.is_classification() {
                let p = sigmoid(z).clamp(1e-12, 1.0 - 1e-12);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            } else {
                (z - y) * (z - y)
            };
        }
        epoch_losses.push(loss / examples.len() as f64);
    }

    Ok(BaselineScorer {
        weights,
        bias,
        task,
        hp: hp.clone(),
        epoch_losses,
    })
}

#[derive(Serialize)]
struct PredictRequest<'a> {
    task: &'a str,
    items: Vec<PredictItem<'a>>,
}

#[derive(Serialize)]
struct PredictItem<'a> {
    topic: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
struct PredictResponse {
    scores: Vec<f64>,
}

/// Sends a batch to a model server and applies the classification
/// decision rule client-side.
pub fn remote_predict(
    endpoint: &str,
    items: &[(String, String)],
    task: TaskKind,
) -> Result<Vec<Prediction>> {
    if items.is_empty() {
        return Err(Error::EmptyInput("remote_predict on empty batch".into()));
    }
    let url = format!("{}/predict", endpoint.trim_end_matches('/'));
    let body = PredictRequest {
        task: task.as_str(),
        items: items
            .iter()
            .map(|(topic, text)| PredictItem { topic, text })
            .collect(),
    };
    let client = reqwest::blocking::Client::new();
    let max_attempts = 3;
    let mut last_err = String::new();
    for attempt in 0..max_attempts {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(50 << attempt));
        }
        match client.post(&url).json(&body).send() {
            Ok(resp) if resp.status().is_success() => {
                let parsed: PredictResponse = resp.json().map_err(|e| Error::Remote {
                    endpoint: endpoint.to_string(),
                    attempts: attempt + 1,
                    message: format!("bad response body: {e}"),
                })?;
                if parsed.scores.len() != items.len() {
                    return Err(Error::Remote {
                        endpoint: endpoint.to_string(),
                        attempts: attempt + 1,
                        message: format!(
                            "expected {} scores, got {}",
                            items.len(),
                            parsed.scores.len()
                        ),
                    });
                }
                return Ok(parsed
                    .scores
                    .into_iter()
                    .map(|s| Prediction::from_score(s, task))
                    .collect());
            }
            Ok(resp) => last_err = format!("status {}", resp.status()),
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(Error::Remote {
        endpoint: endpoint.to_string(),
        attempts: max_attempts,
        message: last_err,
    })
}

/// Scorer backed by a model server; the server is assumed trained.
pub struct RemoteScorer {
    pub endpoint: String,
    pub task: TaskKind,
}

impl Scorer for RemoteScorer {
    fn predict(&self, items: &[(String, String)]) -> Result<Vec<Prediction>> {
        remote_predict(&self.endpoint, items, self.task)
    }

    fn task(&self) -> TaskKind {
        self.task
    }
}

/// Which scorer an experiment uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelChoice {
    Baseline { hyperparams: BaselineHyperparams },
    Remote { endpoint: String },
}

/// One experiment cell: a task, a language group, and the seed list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub group: LanguageGroup,
    pub seeds: Vec<u64>,
    pub model: ModelChoice,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if let ModelChoice::Baseline { hyperparams } = &self.model {
            hyperparams.validate()?;
        }
        Ok(())
    }
}

/// Transformer-path training parameters, recorded in remote-experiment
/// manifests for operators running a real model server. The native
/// baseline has no counterpart for these.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteReferenceParams {
    pub max_sequence_length: u32,
    pub batch_size: u32,
    pub dropout: f64,
    pub learning_rate: f64,
    pub epochs: u32,
}

impl RemoteReferenceParams {
    pub fn for_task(task: TaskKind) -> Self {
        if task.is_classification() {
            RemoteReferenceParams {
                max_sequence_length: 128,
                batch_size: 32,
                dropout: 0.1,
                learning_rate: 5e-5,
                epochs: 10,
            }
        } else {
            RemoteReferenceParams {
                max_sequence_length: 100,
                batch_size: 32,
                dropout: 0.1,
                learning_rate: 2e-5,
                epochs: 3,
            }
        }
    }
}

/// Serialized per-item prediction row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub pred: serde_json::Value,
    pub score: f64,
}

/// Manifest describing one experiment cell's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub task: TaskKind,
    pub group: LanguageGroup,
    pub seeds: Vec<u64>,
    pub model: ModelChoice,
    pub n_train: usize,
    pub n_eval: usize,
    pub eval_dataset: String,
    pub prediction_files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remote_reference_params: Option<RemoteReferenceParams>,
}

/// Paths produced by `run_experiment`.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub prediction_files: Vec<PathBuf>,
    pub manifest_file: PathBuf,
}

fn cell_name(cfg: &ExperimentConfig) -> String {
    match &cfg.group.target {
        Some(t) => format!("{}-{}-{}", cfg.task, cfg.group.kind, t),
        None => format!("{}-{}", cfg.task, cfg.group.kind),
    }
}

/// Fits and predicts once per seed, writing one prediction JSONL per seed
/// plus a manifest under `out_dir`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    train: &Dataset,
    eval: &Dataset,
    out_dir: &Path,
) -> Result<ExperimentOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let items: Vec<(String, String)> = eval
        .records
        .iter()
        .map(|r| (r.topic.clone(), r.text.clone()))
        .collect();
    let cell = cell_name(cfg);
    let mut prediction_files = Vec::new();
    for &seed in &cfg.seeds {
        let scorer: Box<dyn Scorer> = match &cfg.model {
            ModelChoice::Baseline { hyperparams } => {
                Box::new(fit_baseline(train, cfg.task, hyperparams, seed)?)
            }
            ModelChoice::Remote { endpoint } => Box::new(RemoteScorer {
                endpoint: endpoint.clone(),
                task: cfg.task,
            }),
        };
        let predictions = scorer.predict(&items)?;
        let path = out_dir.join(format!("pred-{cell}-seed{seed}.jsonl"));
        let mut buf = String::new();
        for (r, p) in eval.records.iter().zip(&predictions) {
            let row = PredictionRow {
                id: r.id.clone(),
                pred: match &p.label {
                    Some(l) => serde_json::Value::String(l.clone()),
                    None => serde_json::json!(p.score),
                },
                score: p.score,
            };
            buf.push_str(&serde_json::to_string(&row).expect("prediction row"));
            buf.push('\n');
        }
        std::fs::write(&path, buf).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        prediction_files.push(path);
    }

    let manifest = ExperimentManifest {
        task: cfg.task,
        group: cfg.group.clone(),
        seeds: cfg.seeds.clone(),
        model: cfg.model.clone(),
        n_train: train.len(),
        n_eval: eval.len(),
        eval_dataset: eval.name.clone(),
        prediction_files: prediction_files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect(),
        remote_reference_params: match cfg.model {
            ModelChoice::Remote { .. } => Some(RemoteReferenceParams::for_task(cfg.task)),
            ModelChoice::Baseline { .. } => None,
        },
    };
    let manifest_file = out_dir.join(format!("manifest-{cell}.json"));
    std::fs::write(
        &manifest_file,
        serde_json::to_string_pretty(&manifest).expect("manifest"),
    )
    .map_err(|e| Error::Io {
        path: manifest_file.display().to_string(),
        source: e,
    })?;
    Ok(ExperimentOutput {
        prediction_files,
        manifest_file,
    })
}
