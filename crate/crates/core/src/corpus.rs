//! Corpus ingestion, task-specific selection and dataset statistics.
//!
//! Input files are CSV or JSONL with one argument or evidence sentence per
//! row. Selection applies the per-task score thresholds and attaches the
//! derived binary class where the task calls for one.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dataset split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "dev" => Some(Split::Dev),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Stance of an argument or sentence towards its topic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StanceLabel {
    Pro,
    Con,
    Neutral,
}

impl StanceLabel {
    pub fn parse(s: &str) -> Option<StanceLabel> {
        match s {
            "pro" => Some(StanceLabel::Pro),
            "con" => Some(StanceLabel::Con),
            "neutral" => Some(StanceLabel::Neutral),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            StanceLabel::Pro => "pro",
            StanceLabel::Con => "con",
            StanceLabel::Neutral => "neutral",
        }
    }
}

/// Provenance of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    ArgCorpus,
    EviCorpus,
    VldCorpus,
    HumanGenerated,
    MachineTranslated,
}

impl Source {
    pub fn parse(s: &str) -> Option<Source> {
        match s {
            "arg_corpus" => Some(Source::ArgCorpus),
            "evi_corpus" => Some(Source::EviCorpus),
            "vld_corpus" => Some(Source::VldCorpus),
            "human_generated" => Some(Source::HumanGenerated),
            "machine_translated" => Some(Source::MachineTranslated),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Source::ArgCorpus => "arg_corpus",
            Source::EviCorpus => "evi_corpus",
            Source::VldCorpus => "vld_corpus",
            Source::HumanGenerated => "human_generated",
            Source::MachineTranslated => "machine_translated",
        }
    }
}

/// The three argument mining tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Stance,
    Quality,
    Evidence,
}

impl TaskKind {
    pub fn parse(s: &str) -> Option<TaskKind> {
        match s {
            "stance" => Some(TaskKind::Stance),
            "quality" => Some(TaskKind::Quality),
            "evidence" => Some(TaskKind::Evidence),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Stance => "stance",
            TaskKind::Quality => "quality",
            TaskKind::Evidence => "evidence",
        }
    }

    /// True for stance and evidence, false for quality regression.
    pub fn is_classification(&self) -> bool {
        !matches!(self, TaskKind::Quality)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One argument or evidence sentence with its labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub topic_id: i64,
    pub topic: String,
    pub text: String,
    pub lang: String,
    pub split: Split,
    #[serde(default)]
    pub stance_label: Option<StanceLabel>,
    #[serde(default)]
    pub stance_conf: Option<f64>,
    #[serde(default)]
    pub quality_score: Option<f64>,
    #[serde(default)]
    pub evidence_score: Option<f64>,
    pub source: Source,
    /// Binary class attached by selection (quality: high/low; evidence:
    /// evidence/non-evidence). Absent on raw records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived_label: Option<String>,
}

impl Record {
    /// The class name used for classification training/evaluation, if any.
    pub fn class_label(&self, task: TaskKind) -> Option<&str> {
        match task {
            TaskKind::Stance => self.stance_label.map(|l| l.as_str()),
            TaskKind::Quality | TaskKind::Evidence => self.derived_label.as_deref(),
        }
    }
}

/// Ordered collection of records; iteration order is insertion order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn new(name: impl Into<String>) -> Self {
        Dataset {
            name: name.into(),
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self, split: Split) -> Dataset {
        Dataset {
            name: format!("{}-{}", self.name, split),
            records: self
                .records
                .iter()
                .filter(|r| r.split == split)
                .cloned()
                .collect(),
        }
    }

    /// Serializes to JSONL, one record per line.
    pub fn write_jsonl<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            let line = serde_json::to_string(r).expect("record serialization");
            writeln!(w, "{line}").map_err(|e| Error::Io {
                path: self.name.clone(),
                source: e,
            })?;
        }
        Ok(())
    }
}

/// Which corpus a file holds; sets the default source when the column is
/// absent or empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusKind {
    Arg,
    Evi,
    Vld,
    Human,
    AnnotationsFree,
}

impl CorpusKind {
    fn default_source(&self) -> Source {
        match self {
            CorpusKind::Arg => Source::ArgCorpus,
            CorpusKind::Evi => Source::EviCorpus,
            CorpusKind::Vld => Source::VldCorpus,
            CorpusKind::Human | CorpusKind::AnnotationsFree => Source::HumanGenerated,
        }
    }
}

/// Input file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Csv,
    Jsonl,
}

/// Score thresholds for task-specific data selection.
///
/// All comparisons are strict: boundary values are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionThresholds {
    pub stance_conf_min: f64,
    pub quality_high_min: f64,
    pub quality_low_max: f64,
    pub evidence_pos_min: f64,
    pub evidence_neg_max: f64,
    pub vld_pos_min: f64,
    pub vld_neg_max: f64,
}

impl Default for SelectionThresholds {
    fn default() -> Self {
        SelectionThresholds {
            stance_conf_min: 0.75,
            quality_high_min: 0.9,
            quality_low_max: 0.4,
            evidence_pos_min: 0.7,
            evidence_neg_max: 0.3,
            vld_pos_min: 0.95,
            vld_neg_max: 0.05,
        }
    }
}

impl SelectionThresholds {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        let all = [
            self.stance_conf_min,
            self.quality_high_min,
            self.quality_low_max,
            self.evidence_pos_min,
            self.evidence_neg_max,
            self.vld_pos_min,
            self.vld_neg_max,
        ];
        if !all.iter().all(|&v| in_unit(v)) {
            return Err(Error::Config("selection thresholds must lie in [0,1]".into()));
        }
        if self.quality_low_max >= self.quality_high_min {
            return Err(Error::Config(
                "quality_low_max must be below quality_high_min".into(),
            ));
        }
        if self.evidence_neg_max >= self.evidence_pos_min {
            return Err(Error::Config(
                "evidence_neg_max must be below evidence_pos_min".into(),
            ));
        }
        if self.vld_neg_max >= self.vld_pos_min {
            return Err(Error::Config("vld_neg_max must be below vld_pos_min".into()));
        }
        Ok(())
    }
}

const KNOWN_FIELDS: &[&str] = &[
    "id",
    "topic_id",
    "topic",
    "text",
    "lang",
    "split",
    "stance_label",
    "stance_conf",
    "quality_score",
    "evidence_score",
    "source",
    "derived_label",
];

#[derive(Default)]
struct RawRow {
    id: Option<String>,
    topic_id: Option<i64>,
    topic: Option<String>,
    text: Option<String>,
    lang: Option<String>,
    split: Option<String>,
    stance_label: Option<String>,
    stance_conf: Option<f64>,
    quality_score: Option<f64>,
    evidence_score: Option<f64>,
    source: Option<String>,
    derived_label: Option<String>,
}

fn bad(path: &str, line: usize, field: &str, msg: impl Into<String>) -> Error {
    Error::MalformedRow {
        path: path.to_string(),
        line,
        field: field.to_string(),
        message: msg.into(),
    }
}

fn check_score(path: &str, line: usize, field: &str, v: Option<f64>) -> Result<Option<f64>> {
    if let Some(x) = v {
        if !(0.0..=1.0).contains(&x) {
            return Err(bad(path, line, field, format!("score {x} outside [0,1]")));
        }
    }
    Ok(v)
}

fn finish_row(raw: RawRow, kind: CorpusKind, path: &str, line: usize) -> Result<Record> {
    let id = raw
        .id
        .filter(|s| !s.is_empty())
        .ok_or_else(|| bad(path, line, "id", "missing"))?;
    let topic_id = raw
        .topic_id
        .ok_or_else(|| bad(path, line, "topic_id", "missing or not an integer"))?;
    let topic = raw
        .topic
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| bad(path, line, "topic", "missing or empty"))?;
    let text = raw
        .text
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| bad(path, line, "text", "missing or empty"))?;
    let lang = raw
        .lang
        .filter(|s| !s.is_empty())
        .ok_or_else(|| bad(path, line, "lang", "missing"))?;
    let split_str = raw
        .split
        .filter(|s| !s.is_empty())
        .ok_or_else(|| bad(path, line, "split", "missing"))?;
    let split = Split::parse(&split_str)
        .ok_or_else(|| bad(path, line, "split", format!("unknown split `{split_str}`")))?;
    let stance_label = match raw.stance_label.filter(|s| !s.is_empty()) {
        Some(s) => Some(
            StanceLabel::parse(&s)
                .ok_or_else(|| bad(path, line, "stance_label", format!("unknown label `{s}`")))?,
        ),
        None => None,
    };
    let source = match raw.source.filter(|s| !s.is_empty()) {
        Some(s) => Source::parse(&s)
            .ok_or_else(|| bad(path, line, "source", format!("unknown source `{s}`")))?,
        None => kind.default_source(),
    };
    Ok(Record {
        id,
        topic_id,
        topic,
        text,
        lang,
        split,
        stance_label,
        stance_conf: check_score(path, line, "stance_conf", raw.stance_conf)?,
        quality_score: check_score(path, line, "quality_score", raw.quality_score)?,
        evidence_score: check_score(path, line, "evidence_score", raw.evidence_score)?,
        source,
        derived_label: raw.derived_label.filter(|s| !s.is_empty()),
    })
}

/// Loads a corpus file, validating every row. Row order is preserved and
/// (id, lang) must be unique.
pub fn load_corpus(path: &Path, kind: CorpusKind, format: FileFormat) -> Result<Dataset> {
    let path_str = path.display().to_string();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path_str.clone());
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path_str.clone(),
        source: e,
    })?;
    let mut ds = Dataset::new(name);
    let mut seen: HashSet<(String, String)> = HashSet::new();

    match format {
        FileFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(true)
                .from_reader(file);
            let headers: Vec<String> = reader
                .headers()
                .map_err(|e| bad(&path_str, 1, "<header>", e.to_string()))?
                .iter()
                .map(|h| h.trim().to_string())
                .collect();
            for h in &headers {
                if !KNOWN_FIELDS.contains(&h.as_str()) {
                    log::warn!("{path_str}: ignoring unknown column `{h}`");
                }
            }
            for (i, row) in reader.records().enumerate() {
                let line = i + 2; // header is line 1
                let row = row.map_err(|e| bad(&path_str, line, "<row>", e.to_string()))?;
                let mut raw = RawRow::default();
                for (h, cell) in headers.iter().zip(row.iter()) {
                    let cell = cell.trim();
                    let opt = (!cell.is_empty()).then(|| cell.to_string());
                    match h.as_str() {
                        "id" => raw.id = opt,
                        "topic_id" => {
                            raw.topic_id = match opt {
                                Some(v) => Some(v.parse().map_err(|_| {
                                    bad(&path_str, line, "topic_id", format!("not an integer: `{v}`"))
                                })?),
                                None => None,
                            }
                        }
                        "topic" => raw.topic = opt,
                        "text" => raw.text = opt,
                        "lang" => raw.lang = opt,
                        "split" => raw.split = opt,
                        "stance_label" => raw.stance_label = opt,
                        "stance_conf" | "quality_score" | "evidence_score" => {
                            let parsed = match opt {
                                Some(v) => Some(v.parse().map_err(|_| {
                                    bad(&path_str, line, h, format!("not a number: `{v}`"))
                                })?),
                                None => None,
                            };
                            match h.as_str() {
                                "stance_conf" => raw.stance_conf = parsed,
                                "quality_score" => raw.quality_score = parsed,
                                _ => raw.evidence_score = parsed,
                            }
                        }
                        "source" => raw.source = opt,
                        "derived_label" => raw.derived_label = opt,
                        _ => {}
                    }
                }
                push_record(&mut ds, &mut seen, finish_row(raw, kind, &path_str, line)?, line)?;
            }
        }
        FileFormat::Jsonl => {
            let reader = BufReader::new(file);
            for (i, line_res) in reader.lines().enumerate() {
                let line = i + 1;
                let text = line_res.map_err(|e| Error::Io {
                    path: path_str.clone(),
                    source: e,
                })?;
                if text.trim().is_empty() {
                    continue;
                }
                let value: serde_json::Value = serde_json::from_str(&text)
                    .map_err(|e| bad(&path_str, line, "<json>", e.to_string()))?;
                let obj = value
                    .as_object()
                    .ok_or_else(|| bad(&path_str, line, "<json>", "not an object"))?;
                for key in obj.keys() {
                    if !KNOWN_FIELDS.contains(&key.as_str()) {
                        log::warn!("{path_str}:{line}: ignoring unknown key `{key}`");
                    }
                }
                let get_str = |f: &str| -> Result<Option<String>> {
                    match obj.get(f) {
                        None | Some(serde_json::Value::Null) => Ok(None),
                        Some(serde_json::Value::String(s)) => Ok(Some(s.clone())),
                        Some(other) => Err(bad(
                            &path_str,
                            line,
                            f,
                            format!("expected string, got {other}"),
                        )),
                    }
                };
                let get_num = |f: &str| -> Result<Option<f64>> {
                    match obj.get(f) {
                        None | Some(serde_json::Value::Null) => Ok(None),
                        Some(v) => v.as_f64().map(Some).ok_or_else(|| {
                            bad(&path_str, line, f, format!("expected number, got {v}"))
                        }),
                    }
                };
                let raw = RawRow {
                    id: get_str("id")?,
                    topic_id: match obj.get("topic_id") {
                        None | Some(serde_json::Value::Null) => None,
                        Some(v) => Some(v.as_i64().ok_or_else(|| {
                            bad(&path_str, line, "topic_id", format!("expected integer, got {v}"))
                        })?),
                    },
                    topic: get_str("topic")?,
                    text: get_str("text")?,
                    lang: get_str("lang")?,
                    split: get_str("split")?,
                    stance_label: get_str("stance_label")?,
                    stance_conf: get_num("stance_conf")?,
                    quality_score: get_num("quality_score")?,
                    evidence_score: get_num("evidence_score")?,
                    source: get_str("source")?,
                    derived_label: get_str("derived_label")?,
                };
                push_record(&mut ds, &mut seen, finish_row(raw, kind, &path_str, line)?, line)?;
            }
        }
    }
    Ok(ds)
}

fn push_record(
    ds: &mut Dataset,
    seen: &mut HashSet<(String, String)>,
    record: Record,
    line: usize,
) -> Result<()> {
    let key = (record.id.clone(), record.lang.clone());
    if !seen.insert(key) {
        return Err(Error::DuplicateRecord {
            id: record.id,
            lang: record.lang,
            line,
        });
    }
    ds.records.push(record);
    Ok(())
}

/// Membership counts from a selection pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionCounts {
    pub kept: usize,
    pub dropped: usize,
    pub skipped: usize,
}

/// A filtered dataset together with its selection counts.
#[derive(Debug, Clone)]
pub struct Selection {
    pub dataset: Dataset,
    pub counts: SelectionCounts,
}

/// Applies the task-specific thresholds. Records lacking the required score
/// are skipped (counted); boundary values are dropped (strict comparisons).
pub fn select_for_task(ds: &Dataset, task: TaskKind, th: &SelectionThresholds) -> Selection {
    let mut out = Dataset::new(format!("{}-{}", ds.name, task));
    let mut counts = SelectionCounts::default();
    for r in &ds.records {
        match classify(r, task, th) {
            Membership::Keep(derived) => {
                let mut r = r.clone();
                if derived.is_some() {
                    r.derived_label = derived;
                }
                out.records.push(r);
                counts.kept += 1;
            }
            Membership::Drop => counts.dropped += 1,
            Membership::Skip => counts.skipped += 1,
        }
    }
    Selection {
        dataset: out,
        counts,
    }
}

enum Membership {
    Keep(Option<String>),
    Drop,
    Skip,
}

fn classify(r: &Record, task: TaskKind, th: &SelectionThresholds) -> Membership {
    match task {
        TaskKind::Stance => match r.source {
            // The evidence corpora carry stance labels without confidence.
            Source::EviCorpus | Source::VldCorpus => match r.stance_label {
                Some(StanceLabel::Pro) | Some(StanceLabel::Con) => Membership::Keep(None),
                Some(StanceLabel::Neutral) => Membership::Drop,
                None => Membership::Skip,
            },
            _ => match (r.stance_label, r.stance_conf) {
                (Some(StanceLabel::Neutral), _) => Membership::Drop,
                (Some(_), Some(conf)) => {
                    if conf > th.stance_conf_min {
                        Membership::Keep(None)
                    } else {
                        Membership::Drop
                    }
                }
                _ => Membership::Skip,
            },
        },
        TaskKind::Quality => match r.quality_score {
            Some(q) if q > th.quality_high_min => Membership::Keep(Some("high".into())),
            Some(q) if q < th.quality_low_max => Membership::Keep(Some("low".into())),
            Some(_) => Membership::Drop,
            None => Membership::Skip,
        },
        TaskKind::Evidence => {
            let (pos, neg) = if r.source == Source::VldCorpus {
                (th.vld_pos_min, th.vld_neg_max)
            } else {
                (th.evidence_pos_min, th.evidence_neg_max)
            };
            match r.evidence_score {
                Some(e) if e > pos => Membership::Keep(Some("evidence".into())),
                Some(e) if e < neg => Membership::Keep(Some("non-evidence".into())),
                Some(_) => Membership::Drop,
                None => Membership::Skip,
            }
        }
    }
}

/// Per-split topic and label counts for a task-selected dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub split: Option<Split>,
    pub n_topics: usize,
    pub n_records: usize,
    pub label_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub task: TaskKind,
    pub rows: Vec<StatsRow>,
    pub total: StatsRow,
}

impl StatsReport {
    pub fn to_csv(&self) -> String {
        let mut labels: BTreeSet<&str> = BTreeSet::new();
        for row in self.rows.iter().chain(std::iter::once(&self.total)) {
            labels.extend(row.label_counts.keys().map(|s| s.as_str()));
        }
        let mut out = String::from("split,n_topics,n_records");
        for l in &labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for row in self.rows.iter().chain(std::iter::once(&self.total)) {
            let split = row.split.map(|s| s.as_str()).unwrap_or("total");
            out.push_str(&format!("{},{},{}", split, row.n_topics, row.n_records));
            for l in &labels {
                out.push_str(&format!(",{}", row.label_counts.get(*l).copied().unwrap_or(0)));
            }
            out.push('\n');
        }
        out
    }
}

/// Computes per-split topic counts and label counts for a selected dataset.
pub fn corpus_stats(ds: &Dataset, task: TaskKind) -> StatsReport {
    let mut rows = Vec::new();
    for split in [Split::Train, Split::Dev, Split::Test] {
        rows.push(stats_row(
            Some(split),
            ds.records.iter().filter(|r| r.split == split),
            task,
        ));
    }
    let total = stats_row(None, ds.records.iter(), task);
    StatsReport { task, rows, total }
}

fn stats_row<'a>(
    split: Option<Split>,
    records: impl Iterator<Item = &'a Record>,
    task: TaskKind,
) -> StatsRow {
    let mut topics: BTreeSet<i64> = BTreeSet::new();
    let mut label_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut n_records = 0;
    for r in records {
        n_records += 1;
        topics.insert(r.topic_id);
        if let Some(label) = r.class_label(task) {
            *label_counts.entry(label.to_string()).or_insert(0) += 1;
        }
    }
    StatsRow {
        split,
        n_topics: topics.len(),
        n_records,
        label_counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str, ext: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn record(id: &str, topic_id: i64, split: Split) -> Record {
        Record {
            id: id.into(),
            topic_id,
            topic: format!("topic {topic_id}"),
            text: "some text".into(),
            lang: "en".into(),
            split,
            stance_label: None,
            stance_conf: None,
            quality_score: None,
            evidence_score: None,
            source: Source::ArgCorpus,
            derived_label: None,
        }
    }

    #[test]
    fn load_empty_csv() {
        let f = write_temp("id,topic_id,topic,text,lang,split,source\n", ".csv");
        let ds = load_corpus(f.path(), CorpusKind::Arg, FileFormat::Csv).unwrap();
        assert_eq!(ds.len(), 0);
    }

    #[test]
    fn load_documented_example_row() {
        let f = write_temp(
            "id,topic_id,topic,text,lang,split,stance_label,stance_conf\n\
             a1,10,We should legalize cannabis,Cannabis can provide relief for a number of ailments without side effects.,en,train,pro,0.95\n",
            ".csv",
        );
        let ds = load_corpus(f.path(), CorpusKind::Arg, FileFormat::Csv).unwrap();
        assert_eq!(ds.len(), 1);
        let r = &ds.records[0];
        assert_eq!(r.topic, "We should legalize cannabis");
        assert_eq!(r.stance_label, Some(StanceLabel::Pro));
        assert_eq!(r.source, Source::ArgCorpus);
    }

    #[test]
    fn missing_text_cites_row_and_field() {
        let f = write_temp(
            "id,topic_id,topic,text,lang,split\n\
             a1,1,t,hello,en,train\n\
             a2,1,t,,en,train\n\
             a3,1,t,world,en,train\n",
            ".csv",
        );
        let err = load_corpus(f.path(), CorpusKind::Arg, FileFormat::Csv).unwrap_err();
        match err {
            Error::MalformedRow { line, field, .. } => {
                // data row 2 is file line 3
                assert_eq!(line, 3);
                assert_eq!(field, "text");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_lang_rejected() {
        let f = write_temp(
            "{\"id\":\"a\",\"topic_id\":1,\"topic\":\"t\",\"text\":\"x\",\"lang\":\"en\",\"split\":\"train\",\"source\":\"arg_corpus\"}\n\
             {\"id\":\"a\",\"topic_id\":1,\"topic\":\"t\",\"text\":\"y\",\"lang\":\"en\",\"split\":\"train\",\"source\":\"arg_corpus\"}\n",
            ".jsonl",
        );
        let err = load_corpus(f.path(), CorpusKind::Arg, FileFormat::Jsonl).unwrap_err();
        assert!(matches!(err, Error::DuplicateRecord { .. }));
    }

    #[test]
    fn unknown_split_rejected() {
        let f = write_temp(
            "id,topic_id,topic,text,lang,split\na1,1,t,x,en,validation\n",
            ".csv",
        );
        let err = load_corpus(f.path(), CorpusKind::Arg, FileFormat::Csv).unwrap_err();
        match err {
            Error::MalformedRow { field, .. } => assert_eq!(field, "split"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn score_out_of_range_rejected() {
        let f = write_temp(
            "id,topic_id,topic,text,lang,split,quality_score\na1,1,t,x,en,train,1.2\n",
            ".csv",
        );
        assert!(load_corpus(f.path(), CorpusKind::Arg, FileFormat::Csv).is_err());
    }

    #[test]
    fn stance_selection_strict_threshold() {
        let mut ds = Dataset::new("fixture");
        for (i, conf) in [0.74, 0.75, 0.76].iter().enumerate() {
            let mut r = record(&format!("a{i}"), 1, Split::Train);
            r.stance_label = Some(StanceLabel::Pro);
            r.stance_conf = Some(*conf);
            ds.records.push(r);
        }
        let sel = select_for_task(&ds, TaskKind::Stance, &SelectionThresholds::default());
        assert_eq!(sel.counts.kept, 1);
        assert_eq!(sel.counts.dropped, 2);
        assert_eq!(sel.dataset.records[0].id, "a2");
    }

    #[test]
    fn evidence_boundary_dropped() {
        let mut ds = Dataset::new("fixture");
        let mut r = record("e1", 1, Split::Train);
        r.source = Source::EviCorpus;
        r.evidence_score = Some(0.7);
        ds.records.push(r);
        let sel = select_for_task(&ds, TaskKind::Evidence, &SelectionThresholds::default());
        assert_eq!(sel.counts.dropped, 1);
        assert_eq!(sel.counts.kept, 0);
    }

    #[test]
    fn quality_selection_attaches_class() {
        let mut ds = Dataset::new("fixture");
        for (i, q) in [0.95, 0.2, 0.5].iter().enumerate() {
            let mut r = record(&format!("q{i}"), 1, Split::Train);
            r.quality_score = Some(*q);
            ds.records.push(r);
        }
        let sel = select_for_task(&ds, TaskKind::Quality, &SelectionThresholds::default());
        assert_eq!(sel.counts.kept, 2);
        assert_eq!(sel.counts.dropped, 1);
        assert_eq!(sel.dataset.records[0].derived_label.as_deref(), Some("high"));
        assert_eq!(sel.dataset.records[1].derived_label.as_deref(), Some("low"));
    }

    #[test]
    fn vld_source_uses_vld_thresholds() {
        let mut ds = Dataset::new("fixture");
        let mut r = record("v1", 1, Split::Train);
        r.source = Source::VldCorpus;
        r.evidence_score = Some(0.9); // above evi threshold, below vld threshold
        ds.records.push(r);
        let sel = select_for_task(&ds, TaskKind::Evidence, &SelectionThresholds::default());
        assert_eq!(sel.counts.dropped, 1);
    }

    #[test]
    fn missing_score_skipped_not_fatal() {
        let mut ds = Dataset::new("fixture");
        ds.records.push(record("x1", 1, Split::Train));
        let sel = select_for_task(&ds, TaskKind::Quality, &SelectionThresholds::default());
        assert_eq!(sel.counts.skipped, 1);
    }

    #[test]
    fn selection_is_idempotent() {
        let mut ds = Dataset::new("fixture");
        for i in 0..20 {
            let mut r = record(&format!("r{i}"), i % 3, Split::Train);
            r.quality_score = Some(i as f64 / 20.0);
            ds.records.push(r);
        }
        let once = select_for_task(&ds, TaskKind::Quality, &SelectionThresholds::default());
        let twice = select_for_task(
            &once.dataset,
            TaskKind::Quality,
            &SelectionThresholds::default(),
        );
        assert_eq!(once.dataset.records, twice.dataset.records);
        assert_eq!(twice.counts.kept, once.counts.kept);
        assert_eq!(twice.counts.dropped + twice.counts.skipped, 0);
    }

    #[test]
    fn stats_on_hand_built_fixture() {
        // 2 topics, 4 pro / 2 con
        let mut ds = Dataset::new("fixture");
        for (i, (topic, label)) in [
            (1, StanceLabel::Pro),
            (1, StanceLabel::Pro),
            (1, StanceLabel::Con),
            (2, StanceLabel::Pro),
            (2, StanceLabel::Pro),
            (2, StanceLabel::Con),
        ]
        .iter()
        .enumerate()
        {
            let mut r = record(&format!("s{i}"), *topic, Split::Train);
            r.stance_label = Some(*label);
            ds.records.push(r);
        }
        let stats = corpus_stats(&ds, TaskKind::Stance);
        assert_eq!(stats.total.n_topics, 2);
        assert_eq!(stats.total.label_counts["pro"], 4);
        assert_eq!(stats.total.label_counts["con"], 2);
        let train = &stats.rows[0];
        assert_eq!(train.split, Some(Split::Train));
        assert_eq!(train.n_topics, 2);
    }

    #[test]
    fn stats_empty_dataset_all_zero() {
        let ds = Dataset::new("empty");
        let stats = corpus_stats(&ds, TaskKind::Evidence);
        assert_eq!(stats.total.n_topics, 0);
        assert_eq!(stats.total.n_records, 0);
        assert!(stats.rows.iter().all(|r| r.n_records == 0));
    }

    #[test]
    fn stats_totals_are_split_sums() {
        let mut ds = Dataset::new("fixture");
        for (i, split) in [Split::Train, Split::Train, Split::Dev, Split::Test]
            .iter()
            .enumerate()
        {
            let mut r = record(&format!("r{i}"), i as i64, *split);
            r.stance_label = Some(StanceLabel::Pro);
            ds.records.push(r);
        }
        let stats = corpus_stats(&ds, TaskKind::Stance);
        let sum: usize = stats.rows.iter().map(|r| r.n_records).sum();
        assert_eq!(sum, stats.total.n_records);
        let pro_sum: usize = stats
            .rows
            .iter()
            .map(|r| r.label_counts.get("pro").copied().unwrap_or(0))
            .sum();
        assert_eq!(pro_sum, stats.total.label_counts["pro"]);
    }
}
