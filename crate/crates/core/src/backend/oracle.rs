//! Oracle backends: corpus-backed providers that answer with the gold
//! selector output or the gold answer for the request's example. They give
//! pipelines a perfect upper-bound stage and make end-to-end wiring
//! testable without a model.

use crate::corpus::{gold_paragraphs, CorpusIndex, HotpotExample};
use crate::prompting::wire::{format_reader_output, format_selector_output};

use super::{BackendError, ChatRequest};

fn resolve<'a>(
    index: &'a CorpusIndex,
    request: &ChatRequest,
) -> Result<&'a HotpotExample, BackendError> {
    let id = request
        .example_id
        .as_deref()
        .ok_or(BackendError::MissingExampleId)?;
    index
        .get(id)
        .ok_or_else(|| BackendError::UnknownExample(id.to_string()))
}

/// Gold titles and supporting facts, in the same wire format selector
/// prompts ask for.
pub(super) fn selector_reply(
    index: &CorpusIndex,
    request: &ChatRequest,
) -> Result<String, BackendError> {
    let example = resolve(index, request)?;
    let titles: Vec<String> = gold_paragraphs(example)
        .into_iter()
        .map(|p| p.title.clone())
        .collect();
    Ok(format_selector_output(&titles, &example.supporting_facts))
}

/// The gold answer under the reader's answer-line convention.
pub(super) fn reader_reply(
    index: &CorpusIndex,
    request: &ChatRequest,
) -> Result<String, BackendError> {
    let example = resolve(index, request)?;
    Ok(format_reader_output(None, &example.answer))
}
