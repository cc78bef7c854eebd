//! Question-similarity ranking of non-gold paragraphs.
//!
//! The hardest distractors for a reader are the non-gold paragraphs whose
//! text is most similar to the question. Each example costs exactly one
//! embedding call: the question and every non-gold paragraph go out as a
//! single batch, and paragraphs are ranked by cosine similarity against
//! the question vector. Ties break toward earlier context position, so
//! the choice is fully deterministic.

use serde::{Deserialize, Serialize};

use crate::backend::{cosine_similarity, Backend, BackendError};
use crate::corpus::{gold_paragraphs, HotpotExample, Paragraph};

/// Paragraph text as embedded: title and sentences, space-joined.
pub fn paragraph_text(paragraph: &Paragraph) -> String {
    format!("{} {}", paragraph.title, paragraph.sentences.join(" "))
}

/// The ranked outcome for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistractorChoice {
    pub example_id: String,
    /// Chosen distractor titles, most question-similar first.
    pub chosen: Vec<String>,
    /// Every non-gold title with its similarity, in ranked order.
    pub scores: Vec<(String, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// Picks the `k` non-gold paragraphs most similar to the question. When
/// fewer than `k` exist, all of them are chosen and the shortfall is
/// flagged.
pub fn select_distractors(
    example: &HotpotExample,
    embedder: &Backend,
    k: usize,
) -> Result<DistractorChoice, BackendError> {
    let gold: Vec<&str> = gold_paragraphs(example)
        .iter()
        .map(|p| p.title.as_str())
        .collect();
    let candidates: Vec<(usize, &Paragraph)> = example
        .context
        .iter()
        .enumerate()
        .filter(|(_, p)| !gold.contains(&p.title.as_str()))
        .collect();

    let mut flags = Vec::new();
    if candidates.is_empty() {
        flags.push("no non-gold paragraphs to rank".to_string());
        return Ok(DistractorChoice {
            example_id: example.id.clone(),
            chosen: Vec::new(),
            scores: Vec::new(),
            flags,
        });
    }

    let mut texts = Vec::with_capacity(candidates.len() + 1);
    texts.push(example.question.clone());
    texts.extend(candidates.iter().map(|(_, p)| paragraph_text(p)));
    let vectors = embedder.embed(&texts)?;
    let question_vec = &vectors[0];

    let mut ranked: Vec<(usize, &Paragraph, f64)> = candidates
        .iter()
        .zip(&vectors[1..])
        .map(|(&(position, paragraph), vector)| {
            (
                position,
                paragraph,
                cosine_similarity(&question_vec.values, &vector.values),
            )
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });

    if ranked.len() < k {
        flags.push(format!(
            "only {} non-gold paragraphs available, wanted {k}",
            ranked.len()
        ));
    }
    let chosen = ranked
        .iter()
        .take(k)
        .map(|(_, p, _)| p.title.clone())
        .collect();
    let scores = ranked
        .iter()
        .map(|(_, p, score)| (p.title.clone(), *score))
        .collect();
    Ok(DistractorChoice {
        example_id: example.id.clone(),
        chosen,
        scores,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synth_corpus;

    #[test]
    fn picks_top_k_by_brute_force_agreement() {
        let corpus = synth_corpus(20, 17);
        let embedder = Backend::mock_embed();
        for ex in &corpus {
            let choice = select_distractors(ex, &embedder, 2).unwrap();
            assert_eq!(choice.chosen.len(), 2);
            assert!(choice.flags.is_empty());
            assert_eq!(choice.scores.len(), 8);

            // Brute force: embed one at a time, rank the same way.
            let question = embedder.embed(&[ex.question.clone()]).unwrap().remove(0);
            let gold: Vec<&str> = gold_paragraphs(ex).iter().map(|p| p.title.as_str()).collect();
            let mut expected: Vec<(usize, String, f64)> = ex
                .context
                .iter()
                .enumerate()
                .filter(|(_, p)| !gold.contains(&p.title.as_str()))
                .map(|(i, p)| {
                    let v = embedder.embed(&[paragraph_text(p)]).unwrap().remove(0);
                    (i, p.title.clone(), cosine_similarity(&question.values, &v.values))
                })
                .collect();
            expected.sort_by(|a, b| {
                b.2.partial_cmp(&a.2)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.0.cmp(&b.0))
            });
            let expected_titles: Vec<String> =
                expected.iter().take(2).map(|(_, t, _)| t.clone()).collect();
            assert_eq!(choice.chosen, expected_titles, "{}", ex.id);
        }
    }

    #[test]
    fn selection_is_deterministic() {
        let corpus = synth_corpus(5, 23);
        let embedder = Backend::mock_embed();
        for ex in &corpus {
            let a = select_distractors(ex, &embedder, 2).unwrap();
            let b = select_distractors(ex, &embedder, 2).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn gold_titles_are_never_chosen() {
        let corpus = synth_corpus(10, 29);
        let embedder = Backend::mock_embed();
        for ex in &corpus {
            let choice = select_distractors(ex, &embedder, 8).unwrap();
            let gold: Vec<&str> = gold_paragraphs(ex).iter().map(|p| p.title.as_str()).collect();
            for title in &choice.chosen {
                assert!(!gold.contains(&title.as_str()));
            }
            assert_eq!(choice.chosen.len(), 8);
        }
    }

    #[test]
    fn shortfall_is_flagged() {
        let mut corpus = synth_corpus(1, 31);
        let ex = &mut corpus[0];
        let gold: Vec<String> = gold_paragraphs(ex).iter().map(|p| p.title.clone()).collect();
        ex.context.retain(|p| gold.contains(&p.title));
        let embedder = Backend::mock_embed();
        let choice = select_distractors(ex, &embedder, 2).unwrap();
        assert!(choice.chosen.is_empty());
        assert_eq!(choice.flags.len(), 1);

        let mut one_extra = synth_corpus(1, 31);
        let ex = &mut one_extra[0];
        let gold: Vec<String> = gold_paragraphs(ex).iter().map(|p| p.title.clone()).collect();
        let keep: Vec<String> = ex
            .context
            .iter()
            .filter(|p| !gold.contains(&p.title))
            .take(1)
            .map(|p| p.title.clone())
            .chain(gold.clone())
            .collect();
        ex.context.retain(|p| keep.contains(&p.title));
        let choice = select_distractors(ex, &embedder, 2).unwrap();
        assert_eq!(choice.chosen.len(), 1);
        assert!(choice.flags[0].contains("wanted 2"));
    }

    #[test]
    fn chat_backend_is_rejected() {
        let corpus = synth_corpus(1, 37);
        let reader = Backend::scripted(vec![]).unwrap();
        let err = select_distractors(&corpus[0], &reader, 2).unwrap_err();
        assert!(matches!(err, BackendError::WrongKind { .. }));
    }
}
