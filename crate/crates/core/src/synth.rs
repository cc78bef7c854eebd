//! Deterministic generation of schema-identical corpora.
//!
//! Synthetic examples follow the same shape as the real data: ten titled
//! paragraphs, two of them gold, supporting facts that resolve, and a mix
//! of bridge and comparison questions with yes/no and phrase answers.
//! Every question carries a `[case <id>]` token so scripted backends can
//! address individual examples with one regex each.
//!
//! Generation is a pure function of `(n, seed)`: the same arguments always
//! produce byte-identical corpora, which is what resume and determinism
//! tests lean on.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    validate, CorpusIndex, HotpotExample, Level, Paragraph, QuestionType, SupportingFact,
};

const TOPICS: [&str; 20] = [
    "Harbor", "Meridian", "Lantern", "Quarry", "Orchard", "Viaduct", "Citadel", "Estuary",
    "Foundry", "Glacier", "Monsoon", "Obelisk", "Paddock", "Reservoir", "Savanna", "Terrace",
    "Uplands", "Velodrome", "Windmill", "Zenith",
];

const FILLERS: [&str; 16] = [
    "archive", "ballast", "compass", "dynamo", "estate", "furnace", "granite", "harvest",
    "incline", "junction", "keystone", "ledger", "mosaic", "narrows", "outpost", "pavilion",
];

/// Supporting-fact counts cycle through this pattern so every bucket
/// (two, three, four or more) is populated at a fixed ratio.
const SF_COUNTS: [usize; 8] = [2, 2, 3, 2, 4, 2, 3, 2];

fn title_for(i: usize, j: usize, rng: &mut ChaCha8Rng) -> String {
    let topic = TOPICS[rng.gen_range(0..TOPICS.len())];
    format!("{topic} {}", i * 10 + j)
}

fn filler_sentence(title: &str, rng: &mut ChaCha8Rng) -> String {
    let a = FILLERS[rng.gen_range(0..FILLERS.len())];
    let b = FILLERS[rng.gen_range(0..FILLERS.len())];
    format!("{title} is recorded alongside the {a} and the {b}.")
}

fn synth_example(i: usize, rng: &mut ChaCha8Rng) -> HotpotExample {
    let id = format!("synth-{i:05}");
    let qtype = if i % 2 == 0 {
        QuestionType::Bridge
    } else {
        QuestionType::Comparison
    };
    let level = match i % 3 {
        0 => Level::Easy,
        1 => Level::Medium,
        _ => Level::Hard,
    };
    let sf_count = SF_COUNTS[i % SF_COUNTS.len()];

    let titles: Vec<String> = (0..10).map(|j| title_for(i, j, rng)).collect();
    let mut positions: Vec<usize> = (0..10).collect();
    positions.shuffle(rng);
    let mut gold: [usize; 2] = [positions[0], positions[1]];
    gold.sort();
    let gold_a = titles[gold[0]].clone();
    let gold_b = titles[gold[1]].clone();

    // Facts split across the two gold paragraphs: 2 -> 1+1, 3 -> 2+1, 4 -> 2+2.
    let per_gold = [sf_count - sf_count / 2, sf_count / 2];

    let answer = match i % 4 {
        1 => "yes".to_string(),
        3 => "no".to_string(),
        _ => {
            let a = FILLERS[rng.gen_range(0..FILLERS.len())];
            let b = FILLERS[rng.gen_range(0..FILLERS.len())];
            format!("the {a} {b}")
        }
    };

    let question = match qtype {
        QuestionType::Bridge => format!(
            "What connects {gold_a} with {gold_b}? [case {id}]"
        ),
        QuestionType::Comparison => format!(
            "Considering {gold_a} and {gold_b}, what is the shared finding? [case {id}]"
        ),
    };

    let mut context = Vec::with_capacity(10);
    let mut supporting_facts = Vec::new();
    for (j, title) in titles.iter().enumerate() {
        let gold_slot = gold.iter().position(|&g| g == j);
        let sentence_count = match gold_slot {
            Some(slot) => per_gold[slot].max(2) + 1,
            None => rng.gen_range(2..=4),
        };
        let mut sentences: Vec<String> =
            (0..sentence_count).map(|_| filler_sentence(title, rng)).collect();
        if let Some(slot) = gold_slot {
            let other = &titles[gold[1 - slot]];
            // Fact sentences sit at the front of the paragraph; the first one
            // names the answer so the evidence actually supports it.
            sentences[0] = format!(
                "{title} is tied to {other}, and the key detail is {answer}."
            );
            for k in 1..per_gold[slot] {
                sentences[k] = format!(
                    "{title} also documents {other} in entry {k}."
                );
            }
            for k in 0..per_gold[slot] {
                supporting_facts.push(SupportingFact::new(title.clone(), k));
            }
        }
        context.push(Paragraph {
            title: title.clone(),
            sentences,
        });
    }

    // Keep facts in the order the gold paragraphs appear in context.
    supporting_facts.sort_by(|a, b| {
        let pa = titles.iter().position(|t| *t == a.title);
        let pb = titles.iter().position(|t| *t == b.title);
        (pa, a.sentence_index).cmp(&(pb, b.sentence_index))
    });

    let flags = validate(&context, &supporting_facts);
    HotpotExample {
        id,
        question,
        answer,
        qtype,
        level,
        context,
        supporting_facts,
        flags,
    }
}

/// Generates `n` examples from `seed`. Identical arguments yield identical
/// corpora.
pub fn synth_corpus(n: usize, seed: u64) -> Vec<HotpotExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| synth_example(i, &mut rng)).collect()
}

/// [`synth_corpus`] wrapped in an index.
pub fn synth_index(n: usize, seed: u64) -> CorpusIndex {
    CorpusIndex::new(synth_corpus(n, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{corpus_stats, gold_paragraphs, SfBucket};

    #[test]
    fn generation_is_deterministic() {
        let a = synth_corpus(40, 7);
        let b = synth_corpus(40, 7);
        assert_eq!(a, b);
        let c = synth_corpus(40, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn examples_are_clean_and_well_formed() {
        let corpus = synth_corpus(64, 1);
        for ex in &corpus {
            assert!(ex.flags.is_empty(), "{}: {:?}", ex.id, ex.flags);
            assert_eq!(ex.context.len(), 10);
            assert_eq!(gold_paragraphs(ex).len(), 2);
            for sf in &ex.supporting_facts {
                assert!(ex.resolve_fact(sf).is_some());
            }
            assert!(ex.question.contains(&format!("[case {}]", ex.id)));
        }
    }

    #[test]
    fn sf_buckets_and_types_are_all_populated() {
        let corpus = synth_corpus(64, 2);
        let stats = corpus_stats(&corpus);
        for bucket in SfBucket::all() {
            assert!(stats.by_sf_bucket[&bucket] > 0, "{bucket:?} empty");
        }
        assert_eq!(stats.by_qtype[&QuestionType::Bridge], 32);
        assert_eq!(stats.by_qtype[&QuestionType::Comparison], 32);
        assert_eq!(stats.total, 64);
        assert_eq!(stats.flagged, 0);
    }

    #[test]
    fn fact_counts_follow_the_cycle() {
        let corpus = synth_corpus(16, 3);
        for (i, ex) in corpus.iter().enumerate() {
            assert_eq!(ex.supporting_facts.len(), SF_COUNTS[i % 8], "{}", ex.id);
        }
    }

    #[test]
    fn answers_mix_yes_no_and_phrases() {
        let corpus = synth_corpus(8, 4);
        assert_eq!(corpus[1].answer, "yes");
        assert_eq!(corpus[3].answer, "no");
        assert!(corpus[0].answer.starts_with("the "));
        for ex in &corpus {
            let first = &ex.supporting_facts[0];
            let sentence = ex.resolve_fact(first).unwrap();
            assert!(
                sentence.contains(&ex.answer),
                "{}: answer {:?} not in {:?}",
                ex.id,
                ex.answer,
                sentence
            );
        }
    }

    #[test]
    fn round_trips_through_save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synth.json");
        let corpus = synth_corpus(12, 5);
        crate::corpus::save_corpus(&corpus, &path).unwrap();
        let loaded = crate::corpus::load_corpus(&path, crate::corpus::Split::Dev).unwrap();
        assert_eq!(loaded.examples, corpus);
        assert!(loaded.record_errors.is_empty());
    }
}
