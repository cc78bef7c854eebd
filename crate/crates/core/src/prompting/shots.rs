//! In-context example pools. Shot selection is deterministic: the pool
//! order is fixed at construction, selection interleaves bridge and
//! comparison examples so any request of two or more shots covers both
//! question types, and chain-of-thought requests require every selected
//! shot to carry a rationale.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{HotpotExample, Level, QuestionType};

use super::PromptError;

/// One worked example: question, evidence sentences as (title, sentence)
/// pairs, the answer, and an optional rationale for chain-of-thought use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotExample {
    pub question: String,
    pub evidence: Vec<(String, String)>,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    pub qtype: QuestionType,
}

/// An ordered pool of shots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotPool {
    shots: Vec<ShotExample>,
}

const BUILTIN_POOL: &str = include_str!("../../assets/shot_pool.json");

impl ShotPool {
    pub fn new(shots: Vec<ShotExample>) -> ShotPool {
        ShotPool { shots }
    }

    /// The built-in pool: eight handwritten shots, four bridge and four
    /// comparison, all with rationales.
    pub fn builtin() -> ShotPool {
        serde_json::from_str::<Vec<ShotExample>>(BUILTIN_POOL)
            .map(ShotPool::new)
            .expect("built-in shot pool parses")
    }

    pub fn from_file(path: &Path) -> Result<ShotPool, PromptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|err| PromptError::ShotPool(format!("cannot read {}: {err}", path.display())))?;
        serde_json::from_str::<Vec<ShotExample>>(&text)
            .map(ShotPool::new)
            .map_err(|err| PromptError::ShotPool(format!("cannot parse {}: {err}", path.display())))
    }

    /// Derives a pool from hard-level corpus examples: seeded shuffle within
    /// each question type, then bridge/comparison interleaving. Evidence is
    /// the resolved gold supporting facts; examples with unresolvable facts
    /// are skipped. `rationales` (by example id) populates the rationale
    /// field when given.
    pub fn from_corpus(
        corpus: &[HotpotExample],
        size: usize,
        seed: u64,
        rationales: Option<&std::collections::BTreeMap<String, String>>,
    ) -> Result<ShotPool, PromptError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bridges = Vec::new();
        let mut comparisons = Vec::new();
        for example in corpus.iter().filter(|e| e.level == Level::Hard) {
            let evidence: Vec<(String, String)> = example
                .supporting_facts
                .iter()
                .filter_map(|sf| {
                    example
                        .resolve_fact(sf)
                        .map(|s| (sf.title.clone(), s.to_string()))
                })
                .collect();
            if evidence.len() != example.supporting_facts.len() || evidence.is_empty() {
                continue;
            }
            let shot = ShotExample {
                question: example.question.clone(),
                evidence,
                answer: example.answer.clone(),
                rationale: rationales.and_then(|map| map.get(&example.id).cloned()),
                qtype: example.qtype,
            };
            match example.qtype {
                QuestionType::Bridge => bridges.push(shot),
                QuestionType::Comparison => comparisons.push(shot),
            }
        }
        bridges.shuffle(&mut rng);
        comparisons.shuffle(&mut rng);
        let interleaved = interleave(&bridges, &comparisons);
        if interleaved.len() < size {
            return Err(PromptError::ShotPool(format!(
                "corpus yields only {} usable hard-level shots, need {size}",
                interleaved.len()
            )));
        }
        Ok(ShotPool::new(
            interleaved.into_iter().take(size).cloned().collect(),
        ))
    }

    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    pub fn shots(&self) -> &[ShotExample] {
        &self.shots
    }

    /// Picks `count` shots. For one shot the pool's first entry is used;
    /// for two or more, bridge and comparison examples are interleaved so
    /// both types appear. With `cot` set, every selected shot must carry a
    /// rationale.
    pub fn select(&self, count: usize, cot: bool) -> Result<Vec<&ShotExample>, PromptError> {
        if count == 0 {
            return Ok(Vec::new());
        }
        if count > self.shots.len() {
            return Err(PromptError::ShotPool(format!(
                "pool holds {} shots, {count} requested",
                self.shots.len()
            )));
        }
        let selected: Vec<&ShotExample> = if count == 1 {
            vec![&self.shots[0]]
        } else {
            let bridges: Vec<&ShotExample> = self
                .shots
                .iter()
                .filter(|s| s.qtype == QuestionType::Bridge)
                .collect();
            let comparisons: Vec<&ShotExample> = self
                .shots
                .iter()
                .filter(|s| s.qtype == QuestionType::Comparison)
                .collect();
            if bridges.is_empty() || comparisons.is_empty() {
                return Err(PromptError::ShotPool(
                    "pool must hold both bridge and comparison shots for 2 or more".to_string(),
                ));
            }
            interleave_refs(&bridges, &comparisons)
                .into_iter()
                .take(count)
                .collect()
        };
        if cot {
            for (i, shot) in selected.iter().enumerate() {
                if shot.rationale.is_none() {
                    return Err(PromptError::MissingRationale(i));
                }
            }
        }
        Ok(selected)
    }
}

fn interleave<'a, T>(a: &'a [T], b: &'a [T]) -> Vec<&'a T> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut ia = a.iter();
    let mut ib = b.iter();
    loop {
        match (ia.next(), ib.next()) {
            (Some(x), Some(y)) => {
                out.push(x);
                out.push(y);
            }
            (Some(x), None) => {
                out.push(x);
                out.extend(ia.by_ref());
                break;
            }
            (None, Some(y)) => {
                out.push(y);
                out.extend(ib.by_ref());
                break;
            }
            (None, None) => break,
        }
    }
    out
}

fn interleave_refs<'a, T>(a: &[&'a T], b: &[&'a T]) -> Vec<&'a T> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut ia = a.iter();
    let mut ib = b.iter();
    loop {
        match (ia.next(), ib.next()) {
            (Some(x), Some(y)) => {
                out.push(*x);
                out.push(*y);
            }
            (Some(x), None) => {
                out.push(*x);
                out.extend(ia.by_ref().copied());
                break;
            }
            (None, Some(y)) => {
                out.push(*y);
                out.extend(ib.by_ref().copied());
                break;
            }
            (None, None) => break,
        }
    }
    out
}
