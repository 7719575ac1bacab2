//! Metric battery: macro-F1, Pearson correlation, corpus BLEU,
//! per-topic breakdowns, multi-run aggregation and translated-label
//! preservation analysis.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::annotation::AggregatedLabel;
use crate::corpus::{SelectionThresholds, TaskKind};
use crate::error::{Error, Result};
use crate::translation::GroupKind;

/// Unweighted mean of per-class F1. Per-class F1 is 0 when precision and
/// recall are both 0. The class set is the union of labels in gold and
/// pred.
pub fn macro_f1<S: AsRef<str>, T: AsRef<str>>(gold: &[S], pred: &[T]) -> Result<f64> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::EmptyInput("macro_f1 on empty sequences".into()));
    }
    let mut classes: BTreeSet<&str> = BTreeSet::new();
    for g in gold {
        classes.insert(g.as_ref());
    }
    for p in pred {
        classes.insert(p.as_ref());
    }
    let mut sum = 0.0;
    for class in &classes {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (g, p) in gold.iter().zip(pred.iter()) {
            let g_is = g.as_ref() == *class;
            let p_is = p.as_ref() == *class;
            match (g_is, p_is) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        sum += if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        };
    }
    Ok(sum / classes.len() as f64)
}

/// Product-moment correlation. Errors on length mismatch, fewer than two
/// points, or zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::EmptyInput("pearson needs at least 2 points".into()));
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 {
        return Err(Error::ZeroVariance("x"));
    }
    if var_y == 0.0 {
        return Err(Error::ZeroVariance("y"));
    }
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

fn ngram_counts<'a>(tokens: &[&'a str], n: usize) -> HashMap<Vec<&'a str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU: clipped modified n-gram precisions for n = 1..4
/// pooled over the corpus, uniform weights, geometric mean, brevity
/// penalty exp(1 - r/c) when c < r. No smoothing: any zero pooled
/// precision gives BLEU = 0. Whitespace tokenization.
pub fn corpus_bleu<S: AsRef<str>, T: AsRef<str>>(candidates: &[S], references: &[T]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::LengthMismatch {
            left: candidates.len(),
            right: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(Error::EmptyInput("corpus_bleu on empty corpus".into()));
    }
    let cand_tokens: Vec<Vec<&str>> = candidates
        .iter()
        .map(|c| c.as_ref().split_whitespace().collect())
        .collect();
    let ref_tokens: Vec<Vec<&str>> = references
        .iter()
        .map(|r| r.as_ref().split_whitespace().collect())
        .collect();

    let c: usize = cand_tokens.iter().map(|t| t.len()).sum();
    let r: usize = ref_tokens.iter().map(|t| t.len()).sum();
    if c == 0 {
        return Ok(0.0);
    }

    let mut log_precision_sum = 0.0;
    for n in 1..=4usize {
        let mut matched = 0usize;
        let mut total = 0usize;
        for (cand, refr) in cand_tokens.iter().zip(ref_tokens.iter()) {
            let cc = ngram_counts(cand, n);
            let rc = ngram_counts(refr, n);
            for (gram, count) in &cc {
                total += count;
                matched += rc.get(gram).map(|&rcount| (*count).min(rcount)).unwrap_or(0);
            }
        }
        if matched == 0 || total == 0 {
            return Ok(0.0);
        }
        log_precision_sum += (matched as f64 / total as f64).ln();
    }
    let bp = if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    Ok(bp * (log_precision_sum / 4.0).exp())
}

/// Per-topic metric value, flagged when the topic's gold labels are a
/// single class (the per-class-zero rule applies there).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopicValue {
    pub value: f64,
    pub degenerate: bool,
}

/// Computes macro-F1 per topic partition. Output ordering is left to the
/// caller (e.g. by English performance).
pub fn per_topic<S: AsRef<str>, T: AsRef<str>>(
    gold: &[S],
    pred: &[T],
    topic_ids: &[i64],
) -> Result<BTreeMap<i64, TopicValue>> {
    if gold.len() != pred.len() || gold.len() != topic_ids.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len().min(topic_ids.len()),
        });
    }
    let mut by_topic: BTreeMap<i64, (Vec<&str>, Vec<&str>)> = BTreeMap::new();
    for ((g, p), &t) in gold.iter().zip(pred.iter()).zip(topic_ids.iter()) {
        let entry = by_topic.entry(t).or_default();
        entry.0.push(g.as_ref());
        entry.1.push(p.as_ref());
    }
    let mut out = BTreeMap::new();
    for (topic, (g, p)) in by_topic {
        let classes: BTreeSet<&&str> = g.iter().collect();
        out.insert(
            topic,
            TopicValue {
                value: macro_f1(&g, &p)?,
                degenerate: classes.len() < 2,
            },
        );
    }
    Ok(out)
}

/// Arithmetic mean and sample (n-1) standard deviation; the std is
/// undefined for a single value.
pub fn aggregate_runs(values: &[f64]) -> Result<(f64, Option<f64>)> {
    if values.is_empty() {
        return Err(Error::EmptyInput("aggregate_runs on empty values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() >= 2 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        Some(var.sqrt())
    } else {
        None
    };
    Ok((mean, std))
}

/// WA score of an aggregated label for preservation analysis: the mass of
/// the task's positive option(s).
pub fn wa_score(label: &AggregatedLabel, task: TaskKind) -> f64 {
    match task {
        TaskKind::Stance => label.option_scores.get("pro").copied().unwrap_or(0.0),
        TaskKind::Quality => label.option_scores.get("yes").copied().unwrap_or(0.0),
        TaskKind::Evidence => label
            .option_scores
            .iter()
            .filter(|(opt, _)| opt.starts_with("accept"))
            .map(|(_, v)| v)
            .sum(),
    }
}

/// Pearson correlation between original and translated WA-scores,
/// matched by item id. Evidence and quality apply the selection-score
/// criteria on the original side; stance requires at least
/// `min_stance_labels` answers on the translated side.
pub fn label_preservation(
    original: &[AggregatedLabel],
    translated: &[AggregatedLabel],
    task: TaskKind,
    filters: &SelectionThresholds,
    min_stance_labels: usize,
) -> Result<f64> {
    let orig: BTreeMap<&str, &AggregatedLabel> = original
        .iter()
        .map(|l| (l.item_id.as_str(), l))
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for trans in translated {
        let Some(orig_label) = orig.get(trans.item_id.as_str()) else {
            continue;
        };
        let orig_score = wa_score(orig_label, task);
        let keep = match task {
            TaskKind::Stance => trans.n_answers >= min_stance_labels,
            TaskKind::Quality => {
                orig_score > filters.quality_high_min || orig_score < filters.quality_low_max
            }
            TaskKind::Evidence => {
                orig_score > filters.evidence_pos_min || orig_score < filters.evidence_neg_max
            }
        };
        if keep {
            xs.push(orig_score);
            ys.push(wa_score(trans, task));
        }
    }
    if xs.len() < 2 {
        return Err(Error::Evaluation(format!(
            "fewer than 2 matched items after filtering ({} left)",
            xs.len()
        )));
    }
    pearson(&xs, &ys)
}

/// Supported report metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    MacroF1,
    Pearson,
    Bleu,
}

impl MetricName {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricName::MacroF1 => "macro_f1",
            MetricName::Pearson => "pearson",
            MetricName::Bleu => "bleu",
        }
    }

    pub fn for_task(task: TaskKind) -> MetricName {
        if task.is_classification() {
            MetricName::MacroF1
        } else {
            MetricName::Pearson
        }
    }
}

/// One report cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub model: String,
    pub group: GroupKind,
    pub lang: String,
    pub task: TaskKind,
    pub metric: MetricName,
    pub mean: f64,
    pub std: Option<f64>,
    pub n_runs: usize,
}

/// Metric values per (model, group, language, task), with multi-run
/// mean/std.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub entries: Vec<EvalEntry>,
}

/// Canonical column order for rendered tables.
const LANG_ORDER: &[&str] = &[
    "en", "de", "nl", "es", "fr", "it", "da", "sv", "nb", "pl", "sk", "ru", "ar", "he", "zh",
    "zt", "ja",
];

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,group,lang,task,metric,mean,std,n_runs\n");
        for e in &self.entries {
            let std = e.std.map(|s| format!("{s:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{:.6},{},{}\n",
                e.model,
                e.group,
                e.lang,
                e.task,
                e.metric.as_str(),
                e.mean,
                std,
                e.n_runs
            ));
        }
        out
    }

    /// Rendered results table: rows are model groups, columns languages,
    /// values in percent.
    pub fn render_table(&self, task: TaskKind) -> String {
        let entries: Vec<&EvalEntry> = self.entries.iter().filter(|e| e.task == task).collect();
        let mut langs: Vec<&str> = LANG_ORDER
            .iter()
            .copied()
            .filter(|l| entries.iter().any(|e| e.lang == *l))
            .collect();
        for e in &entries {
            if !langs.contains(&e.lang.as_str()) {
                langs.push(&e.lang);
            }
        }
        let mut groups: Vec<GroupKind> = Vec::new();
        for e in &entries {
            if !groups.contains(&e.group) {
                groups.push(e.group);
            }
        }
        let mut out = String::from("Model");
        for l in &langs {
            out.push_str(&format!("\t{}", l.to_uppercase()));
        }
        out.push('\n');
        for g in &groups {
            out.push_str(g.as_str());
            for l in &langs {
                let cell = entries
                    .iter()
                    .find(|e| e.group == *g && e.lang == *l)
                    .map(|e| format!("{:.1}", e.mean * 100.0))
                    .unwrap_or_else(|| "-".into());
                out.push_str(&format!("\t{cell}"));
            }
            out.push('\n');
        }
        out
    }
}

/// The 15 test-split topics of the argument corpus, keyed by analysis ID.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicTable {
    pub topics: BTreeMap<i64, String>,
}

impl TopicTable {
    /// Topic table of the argument-corpus test split.
    pub fn argument_test_set() -> TopicTable {
        let entries = [
            (1, "We should abolish the Olympic Games"),
            (2, "We should ban factory farming"),
            (3, "We should ban algorithmic trading"),
            (4, "We should ban targeted killing"),
            (5, "We should prohibit school prayer"),
            (6, "We should ban private military companies"),
            (7, "We should adopt libertarianism"),
            (8, "We should ban missionary work"),
            (9, "Social media brings more harm than good"),
            (10, "We should legalize cannabis"),
            (11, "We should abolish the three-strikes laws"),
            (12, "We should prohibit women in combat"),
            (13, "Holocaust denial should be a criminal offence"),
            (14, "The use of public defenders should be mandatory"),
            (15, "We should adopt atheism"),
        ];
        TopicTable {
            topics: entries
                .into_iter()
                .map(|(id, t)| (id, t.to_string()))
                .collect(),
        }
    }

    pub fn per_topic_csv(&self, values: &BTreeMap<i64, TopicValue>) -> String {
        let mut out = String::from("topic_id,topic,value,degenerate\n");
        for (id, tv) in values {
            let topic = self.topics.get(id).map(String::as_str).unwrap_or("");
            out.push_str(&format!(
                "{},\"{}\",{:.6},{}\n",
                id, topic, tv.value, tv.degenerate
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn macro_f1_perfect() {
        let g = ["P", "N", "P", "N"];
        assert_abs_diff_eq!(macro_f1(&g, &g).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn macro_f1_derived_fixture() {
        // (2/3 + 1/2) / 2 = 7/12
        let gold = ["P", "P", "P", "N", "N"];
        let pred = ["P", "N", "P", "N", "P"];
        assert_abs_diff_eq!(
            macro_f1(&gold, &pred).unwrap(),
            7.0 / 12.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn macro_f1_total_miss_is_zero() {
        let gold = ["P", "P", "P"];
        let pred = ["N", "N", "N"];
        assert_abs_diff_eq!(macro_f1(&gold, &pred).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn macro_f1_length_mismatch() {
        let gold = ["P"];
        let pred = ["P", "N"];
        assert!(macro_f1(&gold, &pred).is_err());
    }

    #[test]
    fn pearson_exact_linear() {
        assert_abs_diff_eq!(
            pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pearson_derived_fixture() {
        // cov 4, variances 5 and 5 -> 0.8
        assert_abs_diff_eq!(
            pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap(),
            0.8,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pearson_zero_variance_errors() {
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn bleu_identity() {
        let corpus = ["this is a full sentence", "and another one right here"];
        assert_abs_diff_eq!(corpus_bleu(&corpus, &corpus).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bleu_brevity_penalty_fixture() {
        // precisions all 1, BP = exp(1 - 5/4)
        let cand = ["a b c d"];
        let refr = ["a b c d e"];
        assert_abs_diff_eq!(
            corpus_bleu(&cand, &refr).unwrap(),
            (1.0f64 - 5.0 / 4.0).exp(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn bleu_empty_candidate_is_zero_match() {
        let cand = ["", "a b c d"];
        let refr = ["x y", "a b c d"];
        let v = corpus_bleu(&cand, &refr).unwrap();
        assert!(v < 1.0);
        assert!(v >= 0.0);
    }

    #[test]
    fn bleu_zero_on_no_overlap() {
        let cand = ["p q r s"];
        let refr = ["a b c d"];
        assert_abs_diff_eq!(corpus_bleu(&cand, &refr).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn per_topic_single_topic_matches_global() {
        let gold = ["P", "P", "N", "N"];
        let pred = ["P", "N", "N", "N"];
        let topics = [3i64, 3, 3, 3];
        let map = per_topic(&gold, &pred, &topics).unwrap();
        assert_eq!(map.len(), 1);
        assert_abs_diff_eq!(
            map[&3].value,
            macro_f1(&gold, &pred).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn per_topic_perfect_and_total_miss() {
        let gold = ["P", "N", "P", "N"];
        let pred = ["P", "N", "N", "P"];
        let topics = [1i64, 1, 2, 2];
        let map = per_topic(&gold, &pred, &topics).unwrap();
        assert_abs_diff_eq!(map[&1].value, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(map[&2].value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn per_topic_degenerate_flagged() {
        let gold = ["P", "P"];
        let pred = ["P", "N"];
        let topics = [1i64, 1];
        let map = per_topic(&gold, &pred, &topics).unwrap();
        assert!(map[&1].degenerate);
    }

    #[test]
    fn aggregate_runs_examples() {
        let (mean, std) = aggregate_runs(&[0.5]).unwrap();
        assert_abs_diff_eq!(mean, 0.5, epsilon = 1e-12);
        assert!(std.is_none());

        let (mean, std) = aggregate_runs(&[0.4, 0.6]).unwrap();
        assert_abs_diff_eq!(mean, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(std.unwrap(), 0.02f64.sqrt(), epsilon = 1e-12);

        let (_, std) = aggregate_runs(&[0.3; 5]).unwrap();
        assert_abs_diff_eq!(std.unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn topic_table_has_fifteen_entries() {
        let table = TopicTable::argument_test_set();
        assert_eq!(table.topics.len(), 15);
        assert_eq!(table.topics[&10], "We should legalize cannabis");
    }

    fn agg(item: &str, scores: &[(&str, f64)], n: usize) -> AggregatedLabel {
        let option_scores: BTreeMap<String, f64> = scores
            .iter()
            .map(|(o, v)| (o.to_string(), *v))
            .collect();
        let (label, confidence) = scores
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .map(|(o, v)| (o.to_string(), *v))
            .unwrap();
        AggregatedLabel {
            item_id: item.into(),
            question: crate::annotation::Question::Stance,
            label,
            confidence,
            n_answers: n,
            option_scores,
        }
    }

    #[test]
    fn preservation_identity_is_one() {
        let orig: Vec<AggregatedLabel> = (0..10)
            .map(|i| {
                let p = 0.3 + 0.05 * i as f64;
                agg(&format!("i{i}"), &[("pro", p), ("con", 1.0 - p)], 8)
            })
            .collect();
        let th = SelectionThresholds::default();
        let r = label_preservation(&orig, &orig, TaskKind::Stance, &th, 6).unwrap();
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn preservation_stance_min_labels_filter() {
        let orig: Vec<AggregatedLabel> = (0..4)
            .map(|i| agg(&format!("i{i}"), &[("pro", 0.2 * i as f64 + 0.1)], 8))
            .collect();
        // i0 has only 5 translated labels -> excluded
        let mut trans = orig.clone();
        trans[0].n_answers = 5;
        let th = SelectionThresholds::default();
        let r = label_preservation(&orig, &trans, TaskKind::Stance, &th, 6).unwrap();
        // remaining three pairs are identical -> correlation 1
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn preservation_too_few_pairs_errors() {
        let orig = vec![agg("a", &[("pro", 0.9)], 8)];
        let th = SelectionThresholds::default();
        assert!(label_preservation(&orig, &orig, TaskKind::Stance, &th, 6).is_err());
    }
}
