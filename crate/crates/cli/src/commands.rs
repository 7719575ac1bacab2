//! Subcommand implementations. Every command returns the artifact paths it
//! wrote; the run manifest is written last by `main`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;

use argmine_core::annotation::{
    aggregate_wa, annotation_stats, annotator_agreement, filter_by_quality_prior,
    filter_by_test_questions, load_annotations, AggregatedLabel, Question,
};
use argmine_core::corpus::{corpus_stats, load_corpus, select_for_task, Dataset, Record, TaskKind};
use argmine_core::evaluation::{
    aggregate_runs, corpus_bleu, label_preservation, macro_f1, pearson, per_topic, EvalEntry,
    EvalReport, MetricName, TopicTable,
};
use argmine_core::models::{
    run_experiment, BaselineHyperparams, ExperimentConfig, ExperimentManifest, ModelChoice,
    PredictionRow,
};
use argmine_core::translation::{
    assemble_group, back_translate, translate_records, HttpTranslationClient, MockTranslator,
    TranslationCache, TranslationClient,
};

use crate::config::{
    CellSection, ClientKind, ModelKind, PipelineConfig, TranslationSection, ENDPOINT_ENV,
};

pub fn run(
    name: &str,
    cfg: &PipelineConfig,
    seed_offset: u64,
    out: &Path,
) -> anyhow::Result<Vec<PathBuf>> {
    match name {
        "select" => select(cfg, out),
        "translate" => translate(cfg, out),
        "assemble" => assemble(cfg, out),
        "experiment" => experiment(cfg, seed_offset, out),
        "evaluate" => evaluate(cfg, out),
        "aggregate" => aggregate(cfg, out),
        "bleu" => bleu(cfg, out),
        "preserve" => preserve(cfg, out),
        other => bail!("unknown subcommand {other}"),
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    created_utc: String,
    version: &'a str,
    seed_offset: u64,
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    artifacts: Vec<String>,
    config: &'a PipelineConfig,
}

pub fn write_run_manifest(
    out: &Path,
    command: &str,
    cfg: &PipelineConfig,
    seed_offset: u64,
    status: &str,
    error: Option<String>,
    artifacts: Vec<PathBuf>,
) -> anyhow::Result<()> {
    let manifest = RunManifest {
        command,
        created_utc: chrono::Utc::now().to_rfc3339(),
        version: env!("CARGO_PKG_VERSION"),
        seed_offset,
        status,
        error,
        artifacts: artifacts
            .iter()
            .map(|p| {
                p.strip_prefix(out)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .into_owned()
            })
            .collect(),
        config: cfg,
    };
    let path = out.join("run-manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Reads a record-JSONL artifact (one serialized `Record` per line).
fn read_records_jsonl(path: &Path, name: &str) -> anyhow::Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading dataset {}", path.display()))?;
    let mut ds = Dataset::new(name);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: bad record", path.display(), i + 1))?;
        ds.records.push(record);
    }
    Ok(ds)
}

fn write_dataset(ds: &Dataset, path: &Path) -> anyhow::Result<()> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    ds.write_jsonl(std::io::BufWriter::new(file))?;
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn select(cfg: &PipelineConfig, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if cfg.corpora.is_empty() {
        bail!("select requires at least one [[corpora]] entry");
    }
    if cfg.tasks.is_empty() {
        bail!("select requires a non-empty `tasks` list");
    }
    let mut artifacts = Vec::new();
    for entry in &cfg.corpora {
        let ds = load_corpus(&entry.path, entry.kind, entry.format)?;
        for &task in &cfg.tasks {
            let sel = select_for_task(&ds, task, &cfg.selection);
            let stem = format!("{}-{}", entry.name, task);

            let data_path = out.join(format!("{stem}-selected.jsonl"));
            write_dataset(&sel.dataset, &data_path)?;
            artifacts.push(data_path);

            let stats_path = out.join(format!("{stem}-stats.csv"));
            std::fs::write(&stats_path, corpus_stats(&sel.dataset, task).to_csv())
                .with_context(|| format!("writing {}", stats_path.display()))?;
            artifacts.push(stats_path);

            let counts_path = out.join(format!("{stem}-counts.json"));
            write_json(&sel.counts, &counts_path)?;
            artifacts.push(counts_path);
        }
    }
    Ok(artifacts)
}

fn translation_input(t: &TranslationSection) -> anyhow::Result<Dataset> {
    match t.kind {
        Some(kind) => Ok(load_corpus(&t.input, kind, t.format)?),
        None => {
            let name = t
                .input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "input".into());
            read_records_jsonl(&t.input, &name)
        }
    }
}

fn translation_client(t: &TranslationSection) -> anyhow::Result<Box<dyn TranslationClient>> {
    match t.client {
        ClientKind::Mock => Ok(Box::new(MockTranslator::new())),
        ClientKind::Http => {
            let endpoint = std::env::var(ENDPOINT_ENV)
                .ok()
                .or_else(|| t.endpoint.clone())
                .context("translation endpoint not configured")?;
            Ok(Box::new(HttpTranslationClient::new(endpoint)))
        }
    }
}

fn translate(cfg: &PipelineConfig, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let t = cfg
        .translation
        .as_ref()
        .context("translate requires a [translation] section")?;
    if t.targets.is_empty() {
        bail!("translation.targets must be non-empty");
    }
    let ds = translation_input(t)?;
    let client = translation_client(t)?;
    let mut cache = TranslationCache::open(&t.cache)?;
    let mut artifacts = Vec::new();
    for tgt in &t.targets {
        let translated = translate_records(&ds, tgt, client.as_ref(), &mut cache)?;
        let path = out.join(format!("{}.jsonl", translated.name));
        write_dataset(&translated, &path)?;
        artifacts.push(path);
    }
    Ok(artifacts)
}

fn assemble(cfg: &PipelineConfig, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let a = cfg
        .assemble
        .as_ref()
        .context("assemble requires an [assemble] section")?;
    let mut per_lang = BTreeMap::new();
    for (lang, path) in &a.datasets {
        per_lang.insert(lang.clone(), read_records_jsonl(path, lang)?);
    }
    let mut artifacts = Vec::new();
    for group in &a.groups {
        let ds = assemble_group(&per_lang, group)?;
        let path = out.join(format!("group-{}.jsonl", ds.name));
        write_dataset(&ds, &path)?;
        artifacts.push(path);
    }
    Ok(artifacts)
}

fn cell_experiment_config(
    cell: &CellSection,
    cfg: &PipelineConfig,
    seed_offset: u64,
) -> anyhow::Result<ExperimentConfig> {
    let e = cfg.experiment.as_ref().unwrap();
    let model = match e.model.kind {
        ModelKind::Baseline => ModelChoice::Baseline {
            hyperparams: e
                .model
                .hyperparams
                .clone()
                .unwrap_or_else(|| BaselineHyperparams::default_for(cell.task)),
        },
        ModelKind::Remote => ModelChoice::Remote {
            endpoint: std::env::var(ENDPOINT_ENV)
                .ok()
                .or_else(|| e.model.endpoint.clone())
                .context("remote model endpoint not configured")?,
        },
    };
    Ok(ExperimentConfig {
        task: cell.task,
        group: cell.group.clone(),
        seeds: e.seeds.iter().map(|s| s + seed_offset).collect(),
        model,
    })
}

fn experiment(cfg: &PipelineConfig, seed_offset: u64, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let e = cfg
        .experiment
        .as_ref()
        .context("experiment requires an [experiment] section")?;
    if e.cells.is_empty() {
        bail!("experiment.cells must be non-empty");
    }
    let mut artifacts = Vec::new();
    for cell in &e.cells {
        let train = read_records_jsonl(&cell.train, "train")?;
        let eval = read_records_jsonl(&cell.eval, "eval")?;
        let exp_cfg = cell_experiment_config(cell, cfg, seed_offset)?;
        let output = run_experiment(&exp_cfg, &train, &eval, out)?;
        artifacts.extend(output.prediction_files);
        artifacts.push(output.manifest_file);
    }
    Ok(artifacts)
}

fn cell_name(cell: &CellSection) -> String {
    match &cell.group.target {
        Some(t) => format!("{}-{}-{}", cell.task, cell.group.kind, t),
        None => format!("{}-{}", cell.task, cell.group.kind),
    }
}

fn read_predictions(path: &Path) -> anyhow::Result<Vec<PredictionRow>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading predictions {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line)
                .with_context(|| format!("{}:{}: bad prediction row", path.display(), i + 1))
        })
        .collect()
}

fn gold_labels(eval: &Dataset, task: TaskKind) -> anyhow::Result<Vec<String>> {
    eval.records
        .iter()
        .map(|r| {
            r.class_label(task)
                .map(str::to_string)
                .with_context(|| format!("record {} has no {task} label", r.id))
        })
        .collect()
}

fn metric_for_run(
    eval: &Dataset,
    task: TaskKind,
    rows: &[PredictionRow],
) -> anyhow::Result<f64> {
    if rows.len() != eval.len() {
        bail!(
            "prediction count {} does not match eval set size {}",
            rows.len(),
            eval.len()
        );
    }
    if task.is_classification() {
        let gold = gold_labels(eval, task)?;
        let pred: Vec<String> = rows
            .iter()
            .map(|r| {
                r.pred
                    .as_str()
                    .map(str::to_string)
                    .with_context(|| format!("prediction for {} is not a label", r.id))
            })
            .collect::<anyhow::Result<_>>()?;
        Ok(macro_f1(&gold, &pred)?)
    } else {
        let gold: Vec<f64> = eval
            .records
            .iter()
            .map(|r| {
                r.quality_score
                    .with_context(|| format!("record {} has no quality score", r.id))
            })
            .collect::<anyhow::Result<_>>()?;
        let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
        Ok(pearson(&gold, &scores)?)
    }
}

fn eval_lang(eval: &Dataset) -> String {
    let langs: BTreeSet<&str> = eval.records.iter().map(|r| r.lang.as_str()).collect();
    match langs.len() {
        0 => "-".into(),
        1 => langs.into_iter().next().unwrap().into(),
        _ => "mixed".into(),
    }
}

fn evaluate(cfg: &PipelineConfig, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let e = cfg
        .experiment
        .as_ref()
        .context("evaluate requires an [experiment] section")?;
    if e.cells.is_empty() {
        bail!("experiment.cells must be non-empty");
    }
    let exp_dir = e.experiment_dir.clone().unwrap_or_else(|| out.to_path_buf());
    let mut report = EvalReport::default();
    let mut artifacts = Vec::new();
    let mut tasks_seen = BTreeSet::new();
    for cell in &e.cells {
        let cell_label = cell_name(cell);
        let manifest_path = exp_dir.join(format!("manifest-{cell_label}.json"));
        let manifest: ExperimentManifest = serde_json::from_str(
            &std::fs::read_to_string(&manifest_path)
                .with_context(|| format!("reading {}", manifest_path.display()))?,
        )
        .with_context(|| format!("parsing {}", manifest_path.display()))?;

        let eval = read_records_jsonl(&cell.eval, "eval")?;
        let mut values = Vec::new();
        let mut first_rows = None;
        for file in &manifest.prediction_files {
            let rows = read_predictions(&exp_dir.join(file))?;
            values.push(metric_for_run(&eval, cell.task, &rows)?);
            if first_rows.is_none() {
                first_rows = Some(rows);
            }
        }
        let (mean, std) = aggregate_runs(&values)?;
        report.entries.push(EvalEntry {
            model: match manifest.model {
                ModelChoice::Baseline { .. } => "baseline".into(),
                ModelChoice::Remote { .. } => "remote".into(),
            },
            group: cell.group.kind,
            lang: eval_lang(&eval),
            task: cell.task,
            metric: MetricName::for_task(cell.task),
            mean,
            std,
            n_runs: values.len(),
        });
        tasks_seen.insert(cell.task);

        if cell.task.is_classification() {
            if let Some(rows) = first_rows {
                let gold = gold_labels(&eval, cell.task)?;
                let pred: Vec<String> = rows
                    .iter()
                    .map(|r| r.pred.as_str().unwrap_or_default().to_string())
                    .collect();
                let topics: Vec<i64> = eval.records.iter().map(|r| r.topic_id).collect();
                let by_topic = per_topic(&gold, &pred, &topics)?;
                let csv = TopicTable::argument_test_set().per_topic_csv(&by_topic);
                let path = out.join(format!("per-topic-{cell_label}.csv"));
                std::fs::write(&path, csv)
                    .with_context(|| format!("writing {}", path.display()))?;
                artifacts.push(path);
            }
        }
    }

    let report_path = out.join("report.csv");
    std::fs::write(&report_path, report.to_csv())
        .with_context(|| format!("writing {}", report_path.display()))?;
    artifacts.push(report_path);
    for task in tasks_seen {
        let path = out.join(format!("table-{task}.txt"));
        std::fs::write(&path, report.render_table(task))
            .with_context(|| format!("writing {}", path.display()))?;
        artifacts.push(path);
    }
    Ok(artifacts)
}

fn aggregate(cfg: &PipelineConfig, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let path = cfg
        .annotations
        .as_ref()
        .context("aggregate requires an `annotations` path")?;
    let agg = &cfg.aggregation;
    let mut artifacts = Vec::new();
    for set in load_annotations(path)? {
        let q = set.question().as_str();
        let tq = filter_by_test_questions(&set, agg.tq_min_accuracy);
        let mut removed = tq.removed.clone();
        let mut filtered = tq.set;
        if filtered.question() == Question::Quality {
            let prior = filter_by_quality_prior(&filtered, agg.max_quality_prior)?;
            removed.extend(prior.removed.clone());
            filtered = prior.set;
        }
        let agreement = annotator_agreement(&filtered, agg.min_common, agg.min_peers);
        let labels = aggregate_wa(&filtered, &agreement, agg.min_answers);
        let stats = annotation_stats(&filtered, &agreement, &labels);

        #[derive(Serialize)]
        struct AgreementArtifact<'a> {
            question: &'a str,
            filtered_out: &'a BTreeMap<String, f64>,
            unassessed: &'a BTreeSet<String>,
            agreement: &'a argmine_core::annotation::AgreementReport,
        }
        let agreement_path = out.join(format!("agreement-{q}.json"));
        write_json(
            &AgreementArtifact {
                question: q,
                filtered_out: &removed,
                unassessed: &tq.unassessed,
                agreement: &agreement,
            },
            &agreement_path,
        )?;
        artifacts.push(agreement_path);

        let labels_path = out.join(format!("labels-{q}.jsonl"));
        let mut w = std::io::BufWriter::new(
            std::fs::File::create(&labels_path)
                .with_context(|| format!("creating {}", labels_path.display()))?,
        );
        for label in &labels {
            serde_json::to_writer(&mut w, label)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        artifacts.push(labels_path);

        let stats_path = out.join(format!("stats-{q}.json"));
        write_json(&stats, &stats_path)?;
        artifacts.push(stats_path);
    }
    Ok(artifacts)
}

fn bleu(cfg: &PipelineConfig, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let t = cfg
        .translation
        .as_ref()
        .context("bleu requires a [translation] section")?;
    let pivot = t
        .pivot
        .as_ref()
        .context("bleu requires translation.pivot")?;
    let ds = translation_input(t)?;
    let client = translation_client(t)?;
    let mut cache = TranslationCache::open(&t.cache)?;
    let pairs = back_translate(&ds, pivot, client.as_ref(), &mut cache)?;
    let originals: Vec<&str> = pairs.iter().map(|p| p.original.as_str()).collect();
    let round_trips: Vec<&str> = pairs.iter().map(|p| p.round_trip.as_str()).collect();
    let score = corpus_bleu(&round_trips, &originals)?;

    let mut artifacts = Vec::new();
    let pairs_path = out.join(format!("back-translation-{pivot}.jsonl"));
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(&pairs_path)
            .with_context(|| format!("creating {}", pairs_path.display()))?,
    );
    for pair in &pairs {
        serde_json::to_writer(&mut w, pair)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    artifacts.push(pairs_path);

    #[derive(Serialize)]
    struct BleuArtifact<'a> {
        pivot: &'a str,
        n_records: usize,
        bleu: f64,
    }
    let bleu_path = out.join("bleu.json");
    write_json(
        &BleuArtifact {
            pivot,
            n_records: pairs.len(),
            bleu: score,
        },
        &bleu_path,
    )?;
    artifacts.push(bleu_path);
    Ok(artifacts)
}

fn read_labels_jsonl(path: &Path) -> anyhow::Result<Vec<AggregatedLabel>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading labels {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line)
                .with_context(|| format!("{}:{}: bad aggregated label", path.display(), i + 1))
        })
        .collect()
}

fn preserve(cfg: &PipelineConfig, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let p = cfg
        .preserve
        .as_ref()
        .context("preserve requires a [preserve] section")?;
    let original = read_labels_jsonl(&p.original)?;
    let translated = read_labels_jsonl(&p.translated)?;
    let r = label_preservation(
        &original,
        &translated,
        p.task,
        &cfg.selection,
        p.min_stance_labels,
    )?;

    #[derive(Serialize)]
    struct PreserveArtifact {
        task: TaskKind,
        min_stance_labels: usize,
        n_original: usize,
        n_translated: usize,
        pearson: f64,
    }
    let path = out.join("preserve.json");
    write_json(
        &PreserveArtifact {
            task: p.task,
            min_stance_labels: p.min_stance_labels,
            n_original: original.len(),
            n_translated: translated.len(),
            pearson: r,
        },
        &path,
    )?;
    Ok(vec![path])
}
