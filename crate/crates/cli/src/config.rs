//! Declarative pipeline configuration (TOML) and its validation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use argmine_core::corpus::{CorpusKind, FileFormat, SelectionThresholds, TaskKind};
use argmine_core::models::BaselineHyperparams;
use argmine_core::translation::{resolve_group, LanguageGroup};

/// Environment variable overriding any remote endpoint in the config.
pub const ENDPOINT_ENV: &str = "ARGMINE_REMOTE_ENDPOINT";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Raw corpora available to `select` and `translate`.
    #[serde(default)]
    pub corpora: Vec<CorpusEntry>,
    /// Tasks `select` filters each corpus for.
    #[serde(default)]
    pub tasks: Vec<TaskKind>,
    #[serde(default)]
    pub selection: SelectionThresholds,
    /// Crowd-judgment CSV consumed by `aggregate`.
    pub annotations: Option<PathBuf>,
    #[serde(default)]
    pub aggregation: AggregationParams,
    pub translation: Option<TranslationSection>,
    pub assemble: Option<AssembleSection>,
    pub experiment: Option<ExperimentSection>,
    pub preserve: Option<PreserveSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub name: String,
    pub path: PathBuf,
    pub kind: CorpusKind,
    pub format: FileFormat,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AggregationParams {
    pub min_common: usize,
    pub min_peers: usize,
    pub min_answers: usize,
    pub tq_min_accuracy: f64,
    pub max_quality_prior: f64,
}

impl Default for AggregationParams {
    fn default() -> Self {
        AggregationParams {
            min_common: 50,
            min_peers: 5,
            min_answers: 5,
            tq_min_accuracy: 0.75,
            max_quality_prior: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClientKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslationSection {
    /// Dataset to translate: a record-JSONL artifact from `select`, or any
    /// file readable with the given kind/format.
    pub input: PathBuf,
    /// How to read `input`; omitted means record-JSONL artifact.
    pub kind: Option<CorpusKind>,
    #[serde(default = "default_jsonl")]
    pub format: FileFormat,
    #[serde(default)]
    pub targets: Vec<String>,
    pub client: ClientKind,
    pub endpoint: Option<String>,
    pub cache: PathBuf,
    /// Pivot language for the `bleu` subcommand.
    pub pivot: Option<String>,
}

fn default_jsonl() -> FileFormat {
    FileFormat::Jsonl
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssembleSection {
    /// Per-language training sets (record-JSONL artifacts).
    pub datasets: BTreeMap<String, PathBuf>,
    pub groups: Vec<LanguageGroup>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub seeds: Vec<u64>,
    /// Declared run count; must equal the number of seeds.
    pub n_runs: Option<usize>,
    pub model: ModelSection,
    #[serde(default)]
    pub cells: Vec<CellSection>,
    /// Where `evaluate` finds the experiment manifests; defaults to the
    /// evaluate run's own `--out` directory.
    pub experiment_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub endpoint: Option<String>,
    /// Baseline overrides; omitted means task-specific defaults.
    pub hyperparams: Option<BaselineHyperparams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Baseline,
    Remote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSection {
    pub task: TaskKind,
    pub group: LanguageGroup,
    pub train: PathBuf,
    pub eval: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreserveSection {
    /// Aggregated-label JSONL for the original-language items.
    pub original: PathBuf,
    /// Aggregated-label JSONL for the translated items.
    pub translated: PathBuf,
    pub task: TaskKind,
    #[serde(default = "default_min_stance_labels")]
    pub min_stance_labels: usize,
}

fn default_min_stance_labels() -> usize {
    6
}

/// Loads a config and resolves every relative path against the config
/// file's directory, so runs do not depend on the invocation cwd.
pub fn load_config(path: &Path) -> anyhow::Result<PipelineConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    let mut cfg: PipelineConfig = toml::from_str(&text)
        .map_err(|e| anyhow::anyhow!("config {}: {e}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.resolve_paths(base);
    Ok(cfg)
}

impl PipelineConfig {
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        for c in &mut self.corpora {
            fix(&mut c.path);
        }
        if let Some(p) = &mut self.annotations {
            fix(p);
        }
        if let Some(t) = &mut self.translation {
            fix(&mut t.input);
            fix(&mut t.cache);
        }
        if let Some(a) = &mut self.assemble {
            for p in a.datasets.values_mut() {
                fix(p);
            }
        }
        if let Some(e) = &mut self.experiment {
            for cell in &mut e.cells {
                fix(&mut cell.train);
                fix(&mut cell.eval);
            }
            if let Some(d) = &mut e.experiment_dir {
                fix(d);
            }
        }
        if let Some(p) = &mut self.preserve {
            fix(&mut p.original);
            fix(&mut p.translated);
        }
    }

    /// Collects every validation error without executing anything.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        let check_path = |errors: &mut Vec<String>, field: &str, p: &Path| {
            if !p.exists() {
                errors.push(format!("{field}: path does not exist: {}", p.display()));
            }
        };

        if let Err(e) = self.selection.validate() {
            errors.push(format!("selection: {e}"));
        }
        for c in &self.corpora {
            check_path(&mut errors, &format!("corpora[{}].path", c.name), &c.path);
        }
        if let Some(p) = &self.annotations {
            check_path(&mut errors, "annotations", p);
        }
        let agg = &self.aggregation;
        if !(0.0..=1.0).contains(&agg.tq_min_accuracy) {
            errors.push(format!(
                "aggregation.tq_min_accuracy must be in [0, 1], got {}",
                agg.tq_min_accuracy
            ));
        }
        if !(0.0..=1.0).contains(&agg.max_quality_prior) {
            errors.push(format!(
                "aggregation.max_quality_prior must be in [0, 1], got {}",
                agg.max_quality_prior
            ));
        }

        if let Some(t) = &self.translation {
            check_path(&mut errors, "translation.input", &t.input);
            if t.client == ClientKind::Http
                && t.endpoint.is_none()
                && std::env::var(ENDPOINT_ENV).is_err()
            {
                errors.push(format!(
                    "translation.endpoint is required for client = \"http\" \
                     (or set {ENDPOINT_ENV})"
                ));
            }
        }

        if let Some(a) = &self.assemble {
            if a.groups.is_empty() {
                errors.push("assemble.groups must be non-empty".into());
            }
            for (lang, p) in &a.datasets {
                check_path(&mut errors, &format!("assemble.datasets.{lang}"), p);
            }
            for g in &a.groups {
                if let Err(e) = resolve_group(g) {
                    errors.push(format!("assemble.groups: {e}"));
                }
            }
        }

        if let Some(e) = &self.experiment {
            if e.seeds.is_empty() {
                errors.push("experiment.seeds must be non-empty".into());
            }
            let mut sorted = e.seeds.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != e.seeds.len() {
                errors.push("experiment.seeds must be distinct".into());
            }
            if let Some(n) = e.n_runs {
                if n != e.seeds.len() {
                    errors.push(format!(
                        "experiment.n_runs = {n} but experiment.seeds has {} entries",
                        e.seeds.len()
                    ));
                }
            }
            if e.model.kind == ModelKind::Remote
                && e.model.endpoint.is_none()
                && std::env::var(ENDPOINT_ENV).is_err()
            {
                errors.push(format!(
                    "experiment.model.endpoint is required for kind = \"remote\" \
                     (or set {ENDPOINT_ENV})"
                ));
            }
            if let Some(hp) = &e.model.hyperparams {
                if let Err(err) = hp.validate() {
                    errors.push(format!("experiment.model.hyperparams: {err}"));
                }
            }
            for (i, cell) in e.cells.iter().enumerate() {
                check_path(&mut errors, &format!("experiment.cells[{i}].train"), &cell.train);
                check_path(&mut errors, &format!("experiment.cells[{i}].eval"), &cell.eval);
                if let Err(err) = resolve_group(&cell.group) {
                    errors.push(format!("experiment.cells[{i}].group: {err}"));
                }
            }
        }

        if let Some(p) = &self.preserve {
            check_path(&mut errors, "preserve.original", &p.original);
            check_path(&mut errors, "preserve.translated", &p.translated);
        }

        errors
    }
}
