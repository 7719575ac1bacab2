//! Crowd annotation aggregation.
//!
//! Raw per-annotator judgments are turned into labels in three stages:
//! reliability filtering (test-question accuracy, quality-prior check),
//! pairwise-kappa agreement scoring with peer-based exclusion, and
//! agreement-weighted vote aggregation (WA score).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Annotation question type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Question {
    Stance,
    Quality,
    Evidence,
}

impl Question {
    pub fn parse(s: &str) -> Option<Question> {
        match s {
            "stance" => Some(Question::Stance),
            "quality" => Some(Question::Quality),
            "evidence" => Some(Question::Evidence),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Question::Stance => "stance",
            Question::Quality => "quality",
            Question::Evidence => "evidence",
        }
    }

    /// Closed option set for the question.
    pub fn options(&self) -> &'static [&'static str] {
        match self {
            Question::Stance => &["pro", "con", "neutral"],
            Question::Quality => &["yes", "no"],
            Question::Evidence => &["accept-pro", "accept-con", "reject"],
        }
    }

    /// Whether an answer counts as "positive" for collection statistics
    /// (supporting / high-quality / accepted evidence).
    pub fn is_positive(&self, answer: &str) -> bool {
        match self {
            Question::Stance => answer == "pro",
            Question::Quality => answer == "yes",
            Question::Evidence => answer.starts_with("accept"),
        }
    }
}

/// One answer by one annotator on one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub item_id: String,
    pub annotator_id: String,
    pub question: Question,
    pub answer: String,
    pub is_test_question: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
}

/// All judgments for one question, at most one per (item, annotator).
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    question: Question,
    judgments: Vec<Judgment>,
}

impl AnnotationSet {
    pub fn new(question: Question, judgments: Vec<Judgment>) -> Result<Self> {
        let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
        for j in &judgments {
            if j.question != question {
                return Err(Error::Annotation(format!(
                    "judgment on item `{}` has question {:?}, set is {:?}",
                    j.item_id, j.question, question
                )));
            }
            if !question.options().contains(&j.answer.as_str()) {
                return Err(Error::Annotation(format!(
                    "answer `{}` not in option set of {:?}",
                    j.answer, question
                )));
            }
            if j.is_test_question != j.gold_answer.is_some() {
                return Err(Error::Annotation(format!(
                    "item `{}` by `{}`: gold_answer must be present iff is_test_question",
                    j.item_id, j.annotator_id
                )));
            }
            if !seen.insert((j.item_id.as_str(), j.annotator_id.as_str())) {
                return Err(Error::Annotation(format!(
                    "duplicate judgment for item `{}` by annotator `{}`",
                    j.item_id, j.annotator_id
                )));
            }
        }
        Ok(AnnotationSet {
            question,
            judgments,
        })
    }

    pub fn question(&self) -> Question {
        self.question
    }

    pub fn judgments(&self) -> &[Judgment] {
        &self.judgments
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    pub fn annotators(&self) -> BTreeSet<&str> {
        self.judgments
            .iter()
            .map(|j| j.annotator_id.as_str())
            .collect()
    }

    /// item -> (annotator -> answer), in sorted order.
    fn by_annotator(&self) -> BTreeMap<&str, BTreeMap<&str, &str>> {
        let mut map: BTreeMap<&str, BTreeMap<&str, &str>> = BTreeMap::new();
        for j in &self.judgments {
            map.entry(j.annotator_id.as_str())
                .or_default()
                .insert(j.item_id.as_str(), j.answer.as_str());
        }
        map
    }

    fn retain_annotators(&self, keep: &BTreeSet<String>) -> AnnotationSet {
        AnnotationSet {
            question: self.question,
            judgments: self
                .judgments
                .iter()
                .filter(|j| keep.contains(&j.annotator_id))
                .cloned()
                .collect(),
        }
    }
}

/// Loads annotation CSVs (columns: item_id, annotator_id, question, answer,
/// is_test_question, gold_answer), one set per question present.
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationSet>> {
    let path_str = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path_str.clone(),
        source: e,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Annotation(format!("{path_str}: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let idx = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Annotation(format!("{path_str}: missing column `{name}`")))
    };
    let (i_item, i_ann, i_q, i_ans, i_tq) = (
        idx("item_id")?,
        idx("annotator_id")?,
        idx("question")?,
        idx("answer")?,
        idx("is_test_question")?,
    );
    let i_gold = headers.iter().position(|h| h == "gold_answer");

    let mut per_question: BTreeMap<&'static str, Vec<Judgment>> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Annotation(format!("{path_str}:{line}: {e}")))?;
        let cell = |i: usize| row.get(i).unwrap_or("").trim().to_string();
        let question = Question::parse(&cell(i_q)).ok_or_else(|| {
            Error::Annotation(format!("{path_str}:{line}: unknown question `{}`", cell(i_q)))
        })?;
        let is_tq = matches!(cell(i_tq).as_str(), "true" | "1" | "yes");
        let gold = i_gold.map(cell).filter(|s| !s.is_empty());
        per_question.entry(question.as_str()).or_default().push(Judgment {
            item_id: cell(i_item),
            annotator_id: cell(i_ann),
            question,
            answer: cell(i_ans),
            is_test_question: is_tq,
            gold_answer: gold,
        });
    }
    per_question
        .into_values()
        .map(|js| {
            let q = js[0].question;
            AnnotationSet::new(q, js)
        })
        .collect()
}

/// Cohen's kappa over two aligned answer sequences.
///
/// Returns `None` when chance agreement is 1 (both marginals are
/// concentrated on a single shared category), where kappa is undefined.
pub fn cohen_kappa<S: AsRef<str>, T: AsRef<str>>(a: &[S], b: &[T]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("cohen_kappa on empty overlap".into()));
    }
    let n = a.len() as f64;
    let mut marg_a: HashMap<&str, usize> = HashMap::new();
    let mut marg_b: HashMap<&str, usize> = HashMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b.iter()) {
        let (x, y) = (x.as_ref(), y.as_ref());
        *marg_a.entry(x).or_insert(0) += 1;
        *marg_b.entry(y).or_insert(0) += 1;
        if x == y {
            agree += 1;
        }
    }
    let p_o = agree as f64 / n;
    let mut p_e = 0.0;
    for (cat, ca) in &marg_a {
        if let Some(cb) = marg_b.get(cat) {
            p_e += (*ca as f64 / n) * (*cb as f64 / n);
        }
    }
    if (1.0 - p_e).abs() < 1e-12 {
        return Ok(None);
    }
    Ok(Some((p_o - p_e) / (1.0 - p_e)))
}

/// Why an annotator was excluded from the agreement report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExclusionReason {
    TooFewPeers { peers: usize, required: usize },
    NoDefinedAgreement,
}

/// Per-annotator average pairwise kappa, with peer-based exclusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Retained annotators and their average pairwise kappa.
    pub retained: BTreeMap<String, f64>,
    pub excluded: BTreeMap<String, ExclusionReason>,
    /// Unweighted mean over retained annotators; `None` if none retained.
    pub overall_iaa: Option<f64>,
}

/// Computes pairwise kappas over peers sharing at least `min_common` items
/// and excludes annotators with fewer than `min_peers` qualifying peers.
/// Undefined pairwise kappas are omitted from the averages.
pub fn annotator_agreement(
    set: &AnnotationSet,
    min_common: usize,
    min_peers: usize,
) -> AgreementReport {
    let by_ann = set.by_annotator();
    let ids: Vec<&str> = by_ann.keys().copied().collect();

    let mut retained = BTreeMap::new();
    let mut excluded = BTreeMap::new();
    for &a in &ids {
        let answers_a = &by_ann[a];
        let mut peer_count = 0usize;
        let mut kappas = Vec::new();
        for &b in &ids {
            if a == b {
                continue;
            }
            let answers_b = &by_ann[b];
            let mut va = Vec::new();
            let mut vb = Vec::new();
            for (item, ans) in answers_a {
                if let Some(other) = answers_b.get(item) {
                    va.push(*ans);
                    vb.push(*other);
                }
            }
            if va.len() < min_common {
                continue;
            }
            peer_count += 1;
            if let Ok(Some(k)) = cohen_kappa(&va, &vb) {
                kappas.push(k);
            }
        }
        if peer_count < min_peers {
            excluded.insert(
                a.to_string(),
                ExclusionReason::TooFewPeers {
                    peers: peer_count,
                    required: min_peers,
                },
            );
        } else if kappas.is_empty() {
            excluded.insert(a.to_string(), ExclusionReason::NoDefinedAgreement);
        } else {
            let avg = kappas.iter().sum::<f64>() / kappas.len() as f64;
            retained.insert(a.to_string(), avg);
        }
    }
    let overall_iaa = if retained.is_empty() {
        None
    } else {
        Some(retained.values().sum::<f64>() / retained.len() as f64)
    };
    AgreementReport {
        retained,
        excluded,
        overall_iaa,
    }
}

/// Outcome of a reliability filter: the surviving set plus who was removed.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub set: AnnotationSet,
    /// Removed annotators and the statistic that removed them.
    pub removed: BTreeMap<String, f64>,
    /// Annotators the filter could not assess (e.g. zero test questions);
    /// they are retained.
    pub unassessed: BTreeSet<String>,
}

/// Removes all judgments of annotators whose test-question accuracy is
/// below `min_accuracy`. Annotators with no test questions are retained.
pub fn filter_by_test_questions(set: &AnnotationSet, min_accuracy: f64) -> FilterOutcome {
    let mut correct: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for ann in set.annotators() {
        correct.insert(ann, (0, 0));
    }
    for j in set.judgments() {
        if j.is_test_question {
            let entry = correct.get_mut(j.annotator_id.as_str()).unwrap();
            entry.1 += 1;
            if Some(j.answer.as_str()) == j.gold_answer.as_deref() {
                entry.0 += 1;
            }
        }
    }
    let mut keep = BTreeSet::new();
    let mut removed = BTreeMap::new();
    let mut unassessed = BTreeSet::new();
    for (ann, (ok, total)) in correct {
        if total == 0 {
            unassessed.insert(ann.to_string());
            keep.insert(ann.to_string());
        } else {
            let acc = ok as f64 / total as f64;
            if acc < min_accuracy {
                removed.insert(ann.to_string(), acc);
            } else {
                keep.insert(ann.to_string());
            }
        }
    }
    FilterOutcome {
        set: set.retain_annotators(&keep),
        removed,
        unassessed,
    }
}

/// Removes annotators who labeled more than `max_high_fraction` of their
/// quality items as high quality. Only valid on the quality question.
pub fn filter_by_quality_prior(set: &AnnotationSet, max_high_fraction: f64) -> Result<FilterOutcome> {
    if set.question() != Question::Quality {
        return Err(Error::Annotation(format!(
            "quality-prior filter applies to the quality question, got {:?}",
            set.question()
        )));
    }
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for j in set.judgments() {
        let entry = counts.entry(j.annotator_id.as_str()).or_insert((0, 0));
        entry.1 += 1;
        if j.answer == "yes" {
            entry.0 += 1;
        }
    }
    let mut keep = BTreeSet::new();
    let mut removed = BTreeMap::new();
    for (ann, (yes, total)) in counts {
        let frac = yes as f64 / total as f64;
        if frac > max_high_fraction {
            removed.insert(ann.to_string(), frac);
        } else {
            keep.insert(ann.to_string());
        }
    }
    Ok(FilterOutcome {
        set: set.retain_annotators(&keep),
        removed,
        unassessed: BTreeSet::new(),
    })
}

/// Agreement-weighted aggregated label for one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedLabel {
    pub item_id: String,
    pub question: Question,
    pub label: String,
    pub confidence: f64,
    pub n_answers: usize,
    pub option_scores: BTreeMap<String, f64>,
}

/// Aggregates answers item-wise, weighting each retained annotator by
/// `max(avg kappa, 0)`. Falls back to unweighted vote shares when all
/// weights are zero. Items with fewer than `min_answers` retained answers
/// are omitted, as are test questions. Ties break lexicographically.
pub fn aggregate_wa(
    set: &AnnotationSet,
    report: &AgreementReport,
    min_answers: usize,
) -> Vec<AggregatedLabel> {
    let mut per_item: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
    for j in set.judgments() {
        if j.is_test_question {
            continue;
        }
        let Some(kappa) = report.retained.get(&j.annotator_id) else {
            continue;
        };
        per_item
            .entry(j.item_id.as_str())
            .or_default()
            .push((j.answer.as_str(), kappa.max(0.0)));
    }

    let mut out = Vec::new();
    for (item, answers) in per_item {
        if answers.len() < min_answers {
            continue;
        }
        let total_weight: f64 = answers.iter().map(|(_, w)| w).sum();
        let mut scores: BTreeMap<String, f64> = BTreeMap::new();
        if total_weight > 0.0 {
            for (ans, w) in &answers {
                *scores.entry(ans.to_string()).or_insert(0.0) += w / total_weight;
            }
        } else {
            let n = answers.len() as f64;
            for (ans, _) in &answers {
                *scores.entry(ans.to_string()).or_insert(0.0) += 1.0 / n;
            }
        }
        // BTreeMap iteration is sorted, so the first maximum wins ties
        // lexicographically.
        let (label, confidence) = scores
            .iter()
            .fold((String::new(), f64::NEG_INFINITY), |best, (opt, score)| {
                if *score > best.1 {
                    (opt.clone(), *score)
                } else {
                    best
                }
            });
        out.push(AggregatedLabel {
            item_id: item.to_string(),
            question: set.question(),
            label,
            confidence,
            n_answers: answers.len(),
            option_scores: scores,
        });
    }
    out
}

/// Collection-level statistics for an annotation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionStats {
    pub question: Question,
    pub n_items: usize,
    pub n_labeled: usize,
    pub overall_iaa: Option<f64>,
    /// Fraction of positive answers per annotator, averaged over annotators.
    pub avg_positive_fraction: Option<f64>,
}

/// Computes item counts, the overall IAA and the per-annotator-averaged
/// positive-answer fraction.
pub fn annotation_stats(
    set: &AnnotationSet,
    report: &AgreementReport,
    labels: &[AggregatedLabel],
) -> CollectionStats {
    let items: BTreeSet<&str> = set
        .judgments()
        .iter()
        .filter(|j| !j.is_test_question)
        .map(|j| j.item_id.as_str())
        .collect();
    let mut per_ann: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for j in set.judgments() {
        if j.is_test_question {
            continue;
        }
        let entry = per_ann.entry(j.annotator_id.as_str()).or_insert((0, 0));
        entry.1 += 1;
        if set.question().is_positive(&j.answer) {
            entry.0 += 1;
        }
    }
    let fractions: Vec<f64> = per_ann
        .values()
        .filter(|(_, total)| *total > 0)
        .map(|(pos, total)| *pos as f64 / *total as f64)
        .collect();
    let avg_positive_fraction = if fractions.is_empty() {
        None
    } else {
        Some(fractions.iter().sum::<f64>() / fractions.len() as f64)
    };
    CollectionStats {
        question: set.question(),
        n_items: items.len(),
        n_labeled: labels.len(),
        overall_iaa: report.overall_iaa,
        avg_positive_fraction,
    }
}
