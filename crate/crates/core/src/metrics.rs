//! Answer, supporting-fact, and joint scoring.
//!
//! Answer strings are compared after SQuAD-style normalization: lowercase,
//! strip ASCII punctuation, drop the articles `a`/`an`/`the` as whole tokens,
//! and collapse whitespace. F1 is computed over token multisets. Supporting
//! facts are compared as deduplicated sets of (title, sentence_index) pairs.
//! Joint scores multiply the answer and supporting-fact precisions and
//! recalls, so both halves must be right for credit.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{sf_count_bucket, HotpotExample, Level, QuestionType, SfBucket, SupportingFact};

/// Answers that force all-or-nothing comparison: when either side normalizes
/// to one of these and the two sides differ, token overlap earns no credit.
const ALL_OR_NOTHING: [&str; 3] = ["yes", "no", "noanswer"];

/// Normalizes an answer string for comparison: lowercase, remove ASCII
/// punctuation, drop article tokens, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    no_punct
        .split_whitespace()
        .filter(|token| !matches!(*token, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Exact-match and token-level F1 for one answer pair. `em` is 0.0 or 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnswerScore {
    pub em: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

fn multiset_overlap(pred: &[&str], gold: &[&str]) -> usize {
    let mut remaining: HashMap<&str, usize> = HashMap::new();
    for token in gold {
        *remaining.entry(token).or_insert(0) += 1;
    }
    let mut same = 0;
    for token in pred {
        if let Some(count) = remaining.get_mut(token) {
            if *count > 0 {
                *count -= 1;
                same += 1;
            }
        }
    }
    same
}

/// Scores a predicted answer against the gold answer.
pub fn score_answer(prediction: &str, gold: &str) -> AnswerScore {
    let pred_norm = normalize_answer(prediction);
    let gold_norm = normalize_answer(gold);
    if pred_norm == gold_norm {
        return AnswerScore {
            em: 1.0,
            f1: 1.0,
            precision: 1.0,
            recall: 1.0,
        };
    }
    let special = ALL_OR_NOTHING.contains(&pred_norm.as_str())
        || ALL_OR_NOTHING.contains(&gold_norm.as_str());
    if special {
        return AnswerScore {
            em: 0.0,
            f1: 0.0,
            precision: 0.0,
            recall: 0.0,
        };
    }
    let pred_tokens: Vec<&str> = pred_norm.split_whitespace().collect();
    let gold_tokens: Vec<&str> = gold_norm.split_whitespace().collect();
    let same = multiset_overlap(&pred_tokens, &gold_tokens);
    if same == 0 {
        return AnswerScore {
            em: 0.0,
            f1: 0.0,
            precision: 0.0,
            recall: 0.0,
        };
    }
    let precision = same as f64 / pred_tokens.len() as f64;
    let recall = same as f64 / gold_tokens.len() as f64;
    let f1 = 2.0 * precision * recall / (precision + recall);
    AnswerScore {
        em: 0.0,
        f1,
        precision,
        recall,
    }
}

/// Set-level scores for supporting facts. `em` is 0.0 or 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpScore {
    pub em: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Scores predicted supporting facts against gold. Both sides are
/// deduplicated before comparison. An empty prediction against empty gold
/// counts as a perfect match; against non-empty gold it earns nothing.
pub fn score_sp(prediction: &[SupportingFact], gold: &[SupportingFact]) -> SpScore {
    let pred: BTreeSet<(&str, usize)> = prediction
        .iter()
        .map(|sf| (sf.title.as_str(), sf.sentence_index))
        .collect();
    let gold: BTreeSet<(&str, usize)> = gold
        .iter()
        .map(|sf| (sf.title.as_str(), sf.sentence_index))
        .collect();
    let tp = pred.intersection(&gold).count() as f64;
    let em = if pred == gold { 1.0 } else { 0.0 };
    let precision = if pred.is_empty() {
        if gold.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        tp / pred.len() as f64
    };
    let recall = if gold.is_empty() {
        if pred.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        tp / gold.len() as f64
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    SpScore {
        em,
        f1,
        precision,
        recall,
    }
}

/// Combined answer and supporting-fact score. `em` is 0.0 or 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointScore {
    pub em: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Combines an answer score and a supporting-fact score. Precision and
/// recall multiply; exact match requires both halves to match exactly.
pub fn score_joint(answer: &AnswerScore, sp: &SpScore) -> JointScore {
    let precision = answer.precision * sp.precision;
    let recall = answer.recall * sp.recall;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    JointScore {
        em: answer.em * sp.em,
        f1,
        precision,
        recall,
    }
}

/// A model's final output for one example. A failed parse yields an empty
/// prediction with `parse_failed` set and the reason recorded; it is scored
/// like any other prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub answer: String,
    pub supporting_facts: Vec<SupportingFact>,
    #[serde(default)]
    pub parse_failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
}

impl Prediction {
    pub fn new(answer: impl Into<String>, supporting_facts: Vec<SupportingFact>) -> Self {
        Prediction {
            answer: answer.into(),
            supporting_facts,
            parse_failed: false,
            failure_reason: None,
        }
    }

    /// An empty prediction marked as a parse failure.
    pub fn failed(reason: impl Into<String>) -> Self {
        Prediction {
            answer: String::new(),
            supporting_facts: Vec::new(),
            parse_failed: true,
            failure_reason: Some(reason.into()),
        }
    }
}

/// Scores a prediction against an example's gold answer and supporting facts.
pub fn score_prediction(
    prediction: &Prediction,
    example: &HotpotExample,
) -> (AnswerScore, SpScore, JointScore) {
    let answer = score_answer(&prediction.answer, &example.answer);
    let sp = score_sp(&prediction.supporting_facts, &example.supporting_facts);
    let joint = score_joint(&answer, &sp);
    (answer, sp, joint)
}

/// Grouping keys an example contributes to when aggregating.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StrataKeys {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sf_bucket: Option<SfBucket>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qtype: Option<QuestionType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Level>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
}

/// Per-example scores plus grouping keys, the unit of aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub id: String,
    pub answer: AnswerScore,
    pub sp: SpScore,
    pub joint: JointScore,
    #[serde(default)]
    pub strata: StrataKeys,
}

/// Scores a prediction and attaches the example's grouping keys.
pub fn example_score(
    example: &HotpotExample,
    prediction: &Prediction,
    scenario: Option<&str>,
) -> ExampleScore {
    let (answer, sp, joint) = score_prediction(prediction, example);
    ExampleScore {
        id: example.id.clone(),
        answer,
        sp,
        joint,
        strata: StrataKeys {
            sf_bucket: Some(sf_count_bucket(example)),
            qtype: Some(example.qtype),
            level: Some(example.level),
            scenario: scenario.map(str::to_string),
        },
    }
}

/// A stratification axis for aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    SfBucket,
    QType,
    Level,
    Scenario,
}

impl Stratum {
    pub fn all() -> [Stratum; 4] {
        [
            Stratum::SfBucket,
            Stratum::QType,
            Stratum::Level,
            Stratum::Scenario,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Stratum::SfBucket => "sf_bucket",
            Stratum::QType => "qtype",
            Stratum::Level => "level",
            Stratum::Scenario => "scenario",
        }
    }

    fn group_key(&self, score: &ExampleScore) -> Option<String> {
        match self {
            Stratum::SfBucket => score.strata.sf_bucket.map(|b| b.to_string()),
            Stratum::QType => score.strata.qtype.map(|q| q.to_string()),
            Stratum::Level => score.strata.level.map(|l| l.to_string()),
            Stratum::Scenario => score.strata.scenario.clone(),
        }
    }
}

/// Mean scores over a group of examples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreMeans {
    pub em: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Aggregated scores for one group. Means are absent when the group is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub count: usize,
    pub answer: Option<ScoreMeans>,
    pub sp: Option<ScoreMeans>,
    pub joint: Option<ScoreMeans>,
}

impl MetricSummary {
    pub fn empty() -> Self {
        MetricSummary {
            count: 0,
            answer: None,
            sp: None,
            joint: None,
        }
    }
}

pub fn summarize(scores: &[&ExampleScore]) -> MetricSummary {
    if scores.is_empty() {
        return MetricSummary::empty();
    }
    let n = scores.len() as f64;
    let mean = |f: &dyn Fn(&ExampleScore) -> (f64, f64, f64, f64)| {
        let mut sums = (0.0, 0.0, 0.0, 0.0);
        for s in scores {
            let (em, f1, p, r) = f(s);
            sums.0 += em;
            sums.1 += f1;
            sums.2 += p;
            sums.3 += r;
        }
        ScoreMeans {
            em: sums.0 / n,
            f1: sums.1 / n,
            precision: sums.2 / n,
            recall: sums.3 / n,
        }
    };
    MetricSummary {
        count: scores.len(),
        answer: Some(mean(&|s| {
            (s.answer.em, s.answer.f1, s.answer.precision, s.answer.recall)
        })),
        sp: Some(mean(&|s| (s.sp.em, s.sp.f1, s.sp.precision, s.sp.recall))),
        joint: Some(mean(&|s| {
            (s.joint.em, s.joint.f1, s.joint.precision, s.joint.recall)
        })),
    }
}

/// Aggregated scores: an overall summary plus one summary per group for each
/// requested stratification axis. Aggregation sorts by example id first, so
/// the result is identical under any input permutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub overall: MetricSummary,
    pub strata: BTreeMap<String, BTreeMap<String, MetricSummary>>,
}

/// Aggregates per-example scores into a report.
pub fn aggregate(scores: &[ExampleScore], strata: &[Stratum]) -> MetricReport {
    let mut ordered: Vec<&ExampleScore> = scores.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    let overall = summarize(&ordered);
    let mut out: BTreeMap<String, BTreeMap<String, MetricSummary>> = BTreeMap::new();
    for stratum in strata {
        let mut groups: BTreeMap<String, Vec<&ExampleScore>> = BTreeMap::new();
        for score in &ordered {
            if let Some(key) = stratum.group_key(score) {
                groups.entry(key).or_default().push(score);
            }
        }
        let summaries: BTreeMap<String, MetricSummary> = groups
            .into_iter()
            .map(|(key, members)| (key, summarize(&members)))
            .collect();
        out.insert(stratum.name().to_string(), summaries);
    }
    MetricReport {
        overall,
        strata: out,
    }
}
