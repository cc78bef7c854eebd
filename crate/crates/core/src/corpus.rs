//! Loading, validation, and indexing of HotpotQA-format corpora.
//!
//! The on-disk format is the public HotpotQA JSON schema: a single JSON array
//! of records with `_id`, `question`, `answer`, `type`, `level`,
//! `supporting_facts` (list of `[title, sentence_index]` pairs), and `context`
//! (list of `[title, [sentence, ...]]` pairs). In the distractor setting each
//! record carries ten paragraphs, two of which are gold.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read corpus file {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus file {path} is not a JSON array of records: {source}")]
    NotAnArray {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("failed to write corpus file {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Question category as labelled in the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionType {
    Bridge,
    Comparison,
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuestionType::Bridge => write!(f, "bridge"),
            QuestionType::Comparison => write!(f, "comparison"),
        }
    }
}

/// Difficulty label as carried by the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Easy,
    Medium,
    Hard,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Easy => write!(f, "easy"),
            Level::Medium => write!(f, "medium"),
            Level::Hard => write!(f, "hard"),
        }
    }
}

/// One titled paragraph: a title plus its ordered sentences.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Paragraph {
    pub title: String,
    pub sentences: Vec<String>,
}

/// A reference to one sentence of one titled paragraph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SupportingFact {
    pub title: String,
    pub sentence_index: usize,
}

impl SupportingFact {
    pub fn new(title: impl Into<String>, sentence_index: usize) -> Self {
        SupportingFact {
            title: title.into(),
            sentence_index,
        }
    }
}

impl fmt::Display for SupportingFact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.title, self.sentence_index)
    }
}

/// Structural problems found while validating a record. Flagged records are
/// kept (and the flags travel with the example) unless strict mode drops them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "flag", rename_all = "snake_case")]
pub enum ValidationFlag {
    /// A supporting fact cites a title absent from the context.
    UnresolvableSupportingFact { title: String, sentence_index: usize },
    /// A supporting fact cites a sentence index past the end of its paragraph.
    SentenceIndexOutOfRange {
        title: String,
        sentence_index: usize,
        sentence_count: usize,
    },
    /// The supporting facts do not name exactly two distinct titles.
    GoldTitleCount { distinct: usize },
    /// The context does not hold exactly ten paragraphs.
    ContextLength { len: usize },
    /// Two context paragraphs share a title.
    DuplicateTitle { title: String },
    /// A context paragraph has no sentences.
    EmptyParagraph { title: String },
    /// A context paragraph has an empty title.
    EmptyTitle { position: usize },
    /// Fewer than two supporting facts.
    FewSupportingFacts { count: usize },
}

impl fmt::Display for ValidationFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationFlag::UnresolvableSupportingFact {
                title,
                sentence_index,
            } => write!(f, "unresolvable supporting fact {title}#{sentence_index}"),
            ValidationFlag::SentenceIndexOutOfRange {
                title,
                sentence_index,
                sentence_count,
            } => write!(
                f,
                "supporting fact {title}#{sentence_index} out of range (paragraph has {sentence_count} sentences)"
            ),
            ValidationFlag::GoldTitleCount { distinct } => {
                write!(f, "supporting facts name {distinct} distinct titles, expected 2")
            }
            ValidationFlag::ContextLength { len } => {
                write!(f, "context holds {len} paragraphs, expected 10")
            }
            ValidationFlag::DuplicateTitle { title } => {
                write!(f, "duplicate paragraph title {title:?}")
            }
            ValidationFlag::EmptyParagraph { title } => {
                write!(f, "paragraph {title:?} has no sentences")
            }
            ValidationFlag::EmptyTitle { position } => {
                write!(f, "paragraph at position {position} has an empty title")
            }
            ValidationFlag::FewSupportingFacts { count } => {
                write!(f, "only {count} supporting facts, expected at least 2")
            }
        }
    }
}

/// One corpus record, validated. `flags` records structural problems found at
/// load time; a clean record has none.
#[derive(Debug, Clone, PartialEq)]
pub struct HotpotExample {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub qtype: QuestionType,
    pub level: Level,
    pub context: Vec<Paragraph>,
    pub supporting_facts: Vec<SupportingFact>,
    pub flags: Vec<ValidationFlag>,
}

/// Wire-format record, matching the public schema field for field.
#[derive(Debug, Serialize, Deserialize)]
struct RawExample {
    #[serde(rename = "_id")]
    id: String,
    question: String,
    answer: String,
    #[serde(rename = "type")]
    qtype: QuestionType,
    level: Level,
    supporting_facts: Vec<(String, usize)>,
    context: Vec<(String, Vec<String>)>,
}

impl HotpotExample {
    fn from_raw(raw: RawExample) -> HotpotExample {
        let context: Vec<Paragraph> = raw
            .context
            .into_iter()
            .map(|(title, sentences)| Paragraph { title, sentences })
            .collect();
        let supporting_facts: Vec<SupportingFact> = raw
            .supporting_facts
            .into_iter()
            .map(|(title, sentence_index)| SupportingFact {
                title,
                sentence_index,
            })
            .collect();
        let flags = validate(&context, &supporting_facts);
        HotpotExample {
            id: raw.id,
            question: raw.question,
            answer: raw.answer,
            qtype: raw.qtype,
            level: raw.level,
            context,
            supporting_facts,
            flags,
        }
    }

    fn to_raw(&self) -> RawExample {
        RawExample {
            id: self.id.clone(),
            question: self.question.clone(),
            answer: self.answer.clone(),
            qtype: self.qtype,
            level: self.level,
            supporting_facts: self
                .supporting_facts
                .iter()
                .map(|sf| (sf.title.clone(), sf.sentence_index))
                .collect(),
            context: self
                .context
                .iter()
                .map(|p| (p.title.clone(), p.sentences.clone()))
                .collect(),
        }
    }

    /// Looks up a paragraph by exact title match.
    pub fn paragraph(&self, title: &str) -> Option<&Paragraph> {
        self.context.iter().find(|p| p.title == title)
    }

    /// Resolves a supporting fact to its sentence text, if it resolves.
    pub fn resolve_fact(&self, fact: &SupportingFact) -> Option<&str> {
        self.paragraph(&fact.title)
            .and_then(|p| p.sentences.get(fact.sentence_index))
            .map(String::as_str)
    }
}

pub fn validate(context: &[Paragraph], supporting_facts: &[SupportingFact]) -> Vec<ValidationFlag> {
    let mut flags = Vec::new();
    if context.len() != 10 {
        flags.push(ValidationFlag::ContextLength { len: context.len() });
    }
    let mut seen_titles: BTreeSet<&str> = BTreeSet::new();
    for (position, paragraph) in context.iter().enumerate() {
        if paragraph.title.is_empty() {
            flags.push(ValidationFlag::EmptyTitle { position });
        }
        if paragraph.sentences.is_empty() {
            flags.push(ValidationFlag::EmptyParagraph {
                title: paragraph.title.clone(),
            });
        }
        if !seen_titles.insert(paragraph.title.as_str()) {
            flags.push(ValidationFlag::DuplicateTitle {
                title: paragraph.title.clone(),
            });
        }
    }
    let by_title: HashMap<&str, &Paragraph> = context
        .iter()
        .map(|p| (p.title.as_str(), p))
        .collect();
    for sf in supporting_facts {
        match by_title.get(sf.title.as_str()) {
            None => flags.push(ValidationFlag::UnresolvableSupportingFact {
                title: sf.title.clone(),
                sentence_index: sf.sentence_index,
            }),
            Some(p) if sf.sentence_index >= p.sentences.len() => {
                flags.push(ValidationFlag::SentenceIndexOutOfRange {
                    title: sf.title.clone(),
                    sentence_index: sf.sentence_index,
                    sentence_count: p.sentences.len(),
                })
            }
            Some(_) => {}
        }
    }
    let distinct: BTreeSet<&str> = supporting_facts.iter().map(|sf| sf.title.as_str()).collect();
    if distinct.len() != 2 {
        flags.push(ValidationFlag::GoldTitleCount {
            distinct: distinct.len(),
        });
    }
    if supporting_facts.len() < 2 {
        flags.push(ValidationFlag::FewSupportingFacts {
            count: supporting_facts.len(),
        });
    }
    flags
}

/// Which split a corpus file is treated as. The schema is identical; the
/// label travels into reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
}

/// Whether flagged records are kept (default) or dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidationMode {
    #[default]
    FlagAndKeep,
    Strict,
}

/// A record that failed structural parsing and was skipped.
#[derive(Debug, Clone)]
pub struct RecordError {
    pub index: usize,
    pub message: String,
}

/// The result of loading one corpus file. Record order follows the file.
#[derive(Debug)]
pub struct LoadedCorpus {
    pub split: Split,
    pub examples: Vec<HotpotExample>,
    pub record_errors: Vec<RecordError>,
    /// Count of flagged records dropped under strict validation.
    pub dropped_flagged: usize,
}

/// Loads a corpus file in flag-and-keep mode.
pub fn load_corpus(path: &Path, split: Split) -> Result<LoadedCorpus, CorpusError> {
    load_corpus_with_mode(path, split, ValidationMode::FlagAndKeep)
}

/// Loads a corpus file. Malformed records are skipped and reported per
/// record; structurally valid records with semantic problems are flagged,
/// and strict mode drops them.
pub fn load_corpus_with_mode(
    path: &Path,
    split: Split,
    mode: ValidationMode,
) -> Result<LoadedCorpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let values: Vec<serde_json::Value> =
        serde_json::from_str(&text).map_err(|source| CorpusError::NotAnArray {
            path: path.display().to_string(),
            source,
        })?;
    let mut examples = Vec::with_capacity(values.len());
    let mut record_errors = Vec::new();
    for (index, value) in values.into_iter().enumerate() {
        match serde_json::from_value::<RawExample>(value) {
            Ok(raw) => examples.push(HotpotExample::from_raw(raw)),
            Err(err) => record_errors.push(RecordError {
                index,
                message: err.to_string(),
            }),
        }
    }
    let mut dropped_flagged = 0;
    if mode == ValidationMode::Strict {
        let before = examples.len();
        examples.retain(|e| e.flags.is_empty());
        dropped_flagged = before - examples.len();
    }
    if !record_errors.is_empty() {
        log::warn!(
            "{}: skipped {} malformed record(s)",
            path.display(),
            record_errors.len()
        );
    }
    Ok(LoadedCorpus {
        split,
        examples,
        record_errors,
        dropped_flagged,
    })
}

/// Serializes examples back to the wire schema as a pretty-printed JSON array.
pub fn save_corpus(examples: &[HotpotExample], path: &Path) -> Result<(), CorpusError> {
    let raw: Vec<RawExample> = examples.iter().map(HotpotExample::to_raw).collect();
    let text = serde_json::to_string_pretty(&raw).expect("corpus records serialize");
    fs::write(path, text).map_err(|source| CorpusError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// The paragraphs named by the example's supporting facts, in context order.
pub fn gold_paragraphs(example: &HotpotExample) -> Vec<&Paragraph> {
    let titles: BTreeSet<&str> = example
        .supporting_facts
        .iter()
        .map(|sf| sf.title.as_str())
        .collect();
    example
        .context
        .iter()
        .filter(|p| titles.contains(p.title.as_str()))
        .collect()
}

/// The context paragraphs not named by any supporting fact, in context order.
pub fn non_gold_paragraphs(example: &HotpotExample) -> Vec<&Paragraph> {
    let titles: BTreeSet<&str> = example
        .supporting_facts
        .iter()
        .map(|sf| sf.title.as_str())
        .collect();
    example
        .context
        .iter()
        .filter(|p| !titles.contains(p.title.as_str()))
        .collect()
}

/// Difficulty bucket by supporting-fact count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SfBucket {
    Two,
    Three,
    FourPlus,
}

impl SfBucket {
    /// Header label used in text report tables.
    pub fn label(&self) -> &'static str {
        match self {
            SfBucket::Two => "Two",
            SfBucket::Three => "Three",
            SfBucket::FourPlus => "Four or More",
        }
    }

    pub fn all() -> [SfBucket; 3] {
        [SfBucket::Two, SfBucket::Three, SfBucket::FourPlus]
    }
}

impl fmt::Display for SfBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SfBucket::Two => write!(f, "two"),
            SfBucket::Three => write!(f, "three"),
            SfBucket::FourPlus => write!(f, "four_plus"),
        }
    }
}

/// Buckets a supporting-fact count. Counts below two land in the two-bucket;
/// such records carry a [`ValidationFlag::FewSupportingFacts`] flag from
/// load-time validation.
pub fn bucket_for_count(count: usize) -> SfBucket {
    match count {
        0..=2 => SfBucket::Two,
        3 => SfBucket::Three,
        _ => SfBucket::FourPlus,
    }
}

/// Buckets an example by its supporting-fact count.
pub fn sf_count_bucket(example: &HotpotExample) -> SfBucket {
    bucket_for_count(example.supporting_facts.len())
}

/// Corpus composition counts. Every bucket key is present, zero when empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub total: usize,
    pub by_sf_bucket: BTreeMap<SfBucket, usize>,
    pub by_qtype: BTreeMap<QuestionType, usize>,
    pub by_level: BTreeMap<Level, usize>,
    pub flagged: usize,
}

/// Computes composition stats over a corpus slice.
pub fn corpus_stats(examples: &[HotpotExample]) -> CorpusStats {
    let mut by_sf_bucket: BTreeMap<SfBucket, usize> =
        SfBucket::all().into_iter().map(|b| (b, 0)).collect();
    let mut by_qtype: BTreeMap<QuestionType, usize> =
        [(QuestionType::Bridge, 0), (QuestionType::Comparison, 0)].into();
    let mut by_level: BTreeMap<Level, usize> =
        [(Level::Easy, 0), (Level::Medium, 0), (Level::Hard, 0)].into();
    let mut flagged = 0;
    for example in examples {
        *by_sf_bucket.entry(sf_count_bucket(example)).or_insert(0) += 1;
        *by_qtype.entry(example.qtype).or_insert(0) += 1;
        *by_level.entry(example.level).or_insert(0) += 1;
        if !example.flags.is_empty() {
            flagged += 1;
        }
    }
    CorpusStats {
        total: examples.len(),
        by_sf_bucket,
        by_qtype,
        by_level,
        flagged,
    }
}

/// An id-addressable view over a loaded corpus, shared by oracle backends
/// and the scoring paths.
#[derive(Debug)]
pub struct CorpusIndex {
    examples: Vec<HotpotExample>,
    by_id: HashMap<String, usize>,
}

impl CorpusIndex {
    /// Builds an index. On duplicate ids the first occurrence wins.
    pub fn new(examples: Vec<HotpotExample>) -> CorpusIndex {
        let mut by_id = HashMap::with_capacity(examples.len());
        for (i, example) in examples.iter().enumerate() {
            if by_id.contains_key(&example.id) {
                log::warn!("duplicate example id {:?}; keeping the first", example.id);
            } else {
                by_id.insert(example.id.clone(), i);
            }
        }
        CorpusIndex { examples, by_id }
    }

    pub fn get(&self, id: &str) -> Option<&HotpotExample> {
        self.by_id.get(id).map(|&i| &self.examples[i])
    }

    pub fn examples(&self) -> &[HotpotExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paragraph(title: &str, sentences: &[&str]) -> (String, Vec<String>) {
        (
            title.to_string(),
            sentences.iter().map(|s| s.to_string()).collect(),
        )
    }

    fn raw_record(id: &str, sf: &[(&str, usize)], titles: &[&str]) -> serde_json::Value {
        let context: Vec<(String, Vec<String>)> = titles
            .iter()
            .map(|t| paragraph(t, &["First sentence.", "Second sentence.", "Third sentence."]))
            .collect();
        serde_json::json!({
            "_id": id,
            "question": format!("What links {} and {}?", titles[0], titles[1]),
            "answer": "a link",
            "type": "bridge",
            "level": "medium",
            "supporting_facts": sf.iter().map(|(t, i)| serde_json::json!([t, i])).collect::<Vec<_>>(),
            "context": context,
        })
    }

    fn ten_titles() -> Vec<String> {
        (0..10).map(|i| format!("Title {i}")).collect()
    }

    fn well_formed(id: &str) -> serde_json::Value {
        let titles = ten_titles();
        let title_refs: Vec<&str> = titles.iter().map(String::as_str).collect();
        raw_record(id, &[("Title 0", 0), ("Title 3", 1)], &title_refs)
    }

    fn write_corpus_json(values: &[serde_json::Value]) -> tempfile::NamedTempFile {
        let file = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(file.path(), serde_json::to_string(&values).unwrap()).unwrap();
        file
    }

    #[test]
    fn loads_well_formed_records_without_flags() {
        let file = write_corpus_json(&[well_formed("a"), well_formed("b")]);
        let loaded = load_corpus(file.path(), Split::Dev).unwrap();
        assert_eq!(loaded.examples.len(), 2);
        assert!(loaded.record_errors.is_empty());
        assert!(loaded.examples.iter().all(|e| e.flags.is_empty()));
        assert_eq!(loaded.examples[0].id, "a");
        assert_eq!(loaded.examples[0].context.len(), 10);
        assert_eq!(loaded.examples[0].supporting_facts.len(), 2);
    }

    #[test]
    fn flags_unresolvable_supporting_fact_and_keeps_record() {
        let titles = ten_titles();
        let title_refs: Vec<&str> = titles.iter().map(String::as_str).collect();
        let record = raw_record("x", &[("Absent Title", 0), ("Title 1", 0)], &title_refs);
        let file = write_corpus_json(&[record]);
        let loaded = load_corpus(file.path(), Split::Dev).unwrap();
        assert_eq!(loaded.examples.len(), 1);
        assert!(loaded.examples[0].flags.contains(
            &ValidationFlag::UnresolvableSupportingFact {
                title: "Absent Title".to_string(),
                sentence_index: 0,
            }
        ));
    }

    #[test]
    fn strict_mode_drops_flagged_records() {
        let titles = ten_titles();
        let title_refs: Vec<&str> = titles.iter().map(String::as_str).collect();
        let bad = raw_record("bad", &[("Absent", 0), ("Title 1", 0)], &title_refs);
        let file = write_corpus_json(&[well_formed("good"), bad]);
        let loaded =
            load_corpus_with_mode(file.path(), Split::Dev, ValidationMode::Strict).unwrap();
        assert_eq!(loaded.examples.len(), 1);
        assert_eq!(loaded.examples[0].id, "good");
        assert_eq!(loaded.dropped_flagged, 1);
    }

    #[test]
    fn malformed_record_is_skipped_with_a_per_record_error() {
        let file = write_corpus_json(&[
            well_formed("ok"),
            serde_json::json!({"_id": "broken", "question": 7}),
        ]);
        let loaded = load_corpus(file.path(), Split::Dev).unwrap();
        assert_eq!(loaded.examples.len(), 1);
        assert_eq!(loaded.record_errors.len(), 1);
        assert_eq!(loaded.record_errors[0].index, 1);
    }

    #[test]
    fn out_of_range_sentence_index_is_flagged() {
        let titles = ten_titles();
        let title_refs: Vec<&str> = titles.iter().map(String::as_str).collect();
        let record = raw_record("x", &[("Title 0", 99), ("Title 1", 0)], &title_refs);
        let file = write_corpus_json(&[record]);
        let loaded = load_corpus(file.path(), Split::Dev).unwrap();
        assert_eq!(
            loaded.examples[0].flags,
            vec![ValidationFlag::SentenceIndexOutOfRange {
                title: "Title 0".to_string(),
                sentence_index: 99,
                sentence_count: 3,
            }]
        );
    }

    #[test]
    fn context_length_and_duplicate_titles_are_flagged() {
        let record = raw_record("x", &[("A", 0), ("B", 0)], &["A", "B", "B"]);
        let file = write_corpus_json(&[record]);
        let loaded = load_corpus(file.path(), Split::Dev).unwrap();
        let flags = &loaded.examples[0].flags;
        assert!(flags.contains(&ValidationFlag::ContextLength { len: 3 }));
        assert!(flags.contains(&ValidationFlag::DuplicateTitle {
            title: "B".to_string()
        }));
    }

    #[test]
    fn gold_paragraphs_follow_context_order() {
        let titles = ten_titles();
        let title_refs: Vec<&str> = titles.iter().map(String::as_str).collect();
        let record = raw_record("x", &[("Title 7", 0), ("Title 2", 1)], &title_refs);
        let file = write_corpus_json(&[record]);
        let loaded = load_corpus(file.path(), Split::Dev).unwrap();
        let gold = gold_paragraphs(&loaded.examples[0]);
        let names: Vec<&str> = gold.iter().map(|p| p.title.as_str()).collect();
        assert_eq!(names, vec!["Title 2", "Title 7"]);
    }

    #[test]
    fn single_gold_title_yields_one_paragraph_and_a_flag() {
        let titles = ten_titles();
        let title_refs: Vec<&str> = titles.iter().map(String::as_str).collect();
        let record = raw_record("x", &[("Title 4", 0), ("Title 4", 1)], &title_refs);
        let file = write_corpus_json(&[record]);
        let loaded = load_corpus(file.path(), Split::Dev).unwrap();
        let example = &loaded.examples[0];
        assert_eq!(gold_paragraphs(example).len(), 1);
        assert!(example
            .flags
            .contains(&ValidationFlag::GoldTitleCount { distinct: 1 }));
    }

    #[test]
    fn bucket_boundaries() {
        assert_eq!(bucket_for_count(0), SfBucket::Two);
        assert_eq!(bucket_for_count(1), SfBucket::Two);
        assert_eq!(bucket_for_count(2), SfBucket::Two);
        assert_eq!(bucket_for_count(3), SfBucket::Three);
        assert_eq!(bucket_for_count(4), SfBucket::FourPlus);
        assert_eq!(bucket_for_count(9), SfBucket::FourPlus);
    }

    #[test]
    fn bucket_order_is_monotone_in_count() {
        let mut last = bucket_for_count(0);
        for count in 1..12 {
            let bucket = bucket_for_count(count);
            assert!(bucket >= last);
            last = bucket;
        }
    }

    #[test]
    fn stats_on_empty_corpus_are_all_zero() {
        let stats = corpus_stats(&[]);
        assert_eq!(stats.total, 0);
        assert!(stats.by_sf_bucket.values().all(|&v| v == 0));
        assert!(stats.by_qtype.values().all(|&v| v == 0));
        assert!(stats.by_level.values().all(|&v| v == 0));
    }

    #[test]
    fn stats_histogram_matches_hand_count() {
        let titles = ten_titles();
        let title_refs: Vec<&str> = titles.iter().map(String::as_str).collect();
        let two = raw_record("two", &[("Title 0", 0), ("Title 1", 0)], &title_refs);
        let three = raw_record(
            "three",
            &[("Title 0", 0), ("Title 0", 1), ("Title 1", 0)],
            &title_refs,
        );
        let four = raw_record(
            "four",
            &[("Title 0", 0), ("Title 0", 1), ("Title 1", 0), ("Title 1", 1)],
            &title_refs,
        );
        let file = write_corpus_json(&[two, three, four]);
        let loaded = load_corpus(file.path(), Split::Dev).unwrap();
        let stats = corpus_stats(&loaded.examples);
        assert_eq!(stats.total, 3);
        assert_eq!(stats.by_sf_bucket[&SfBucket::Two], 1);
        assert_eq!(stats.by_sf_bucket[&SfBucket::Three], 1);
        assert_eq!(stats.by_sf_bucket[&SfBucket::FourPlus], 1);
        assert_eq!(stats.by_qtype[&QuestionType::Bridge], 3);
        assert_eq!(stats.by_level[&Level::Medium], 3);
    }

    #[test]
    fn save_and_reload_round_trips_structurally() {
        let file = write_corpus_json(&[well_formed("a"), well_formed("b")]);
        let loaded = load_corpus(file.path(), Split::Dev).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        save_corpus(&loaded.examples, out.path()).unwrap();
        let reloaded = load_corpus(out.path(), Split::Dev).unwrap();
        assert_eq!(loaded.examples, reloaded.examples);
    }

    #[test]
    fn index_resolves_ids_and_keeps_first_duplicate() {
        let file = write_corpus_json(&[well_formed("a"), well_formed("b")]);
        let mut loaded = load_corpus(file.path(), Split::Dev).unwrap();
        loaded.examples[1].question = "second".to_string();
        let mut dup = loaded.examples[0].clone();
        dup.question = "duplicate".to_string();
        loaded.examples.push(dup);
        let index = CorpusIndex::new(loaded.examples);
        assert_eq!(index.len(), 3);
        assert_ne!(index.get("a").unwrap().question, "duplicate");
        assert_eq!(index.get("b").unwrap().question, "second");
        assert!(index.get("missing").is_none());
    }

    #[test]
    fn resolve_fact_returns_sentence_text() {
        let file = write_corpus_json(&[well_formed("a")]);
        let loaded = load_corpus(file.path(), Split::Dev).unwrap();
        let example = &loaded.examples[0];
        let sf = SupportingFact::new("Title 3", 1);
        assert_eq!(example.resolve_fact(&sf), Some("Second sentence."));
        assert_eq!(example.resolve_fact(&SupportingFact::new("Title 3", 9)), None);
        assert_eq!(example.resolve_fact(&SupportingFact::new("Nope", 0)), None);
    }
}
