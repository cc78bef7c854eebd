//! Scripted chat backend: an ordered rule list mapping prompt patterns to
//! canned replies. Deterministic, so pipeline tests can pin exact outputs.

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::BackendError;

/// One reply rule. Rules are checked in order against the full prompt text
/// (system prompt plus message contents); the first match wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "match", rename_all = "snake_case")]
pub enum ScriptRule {
    /// The whole prompt equals `pattern`.
    Exact { pattern: String, reply: String },
    /// The prompt starts with `pattern`.
    Prefix { pattern: String, reply: String },
    /// `pattern` matches anywhere in the prompt (unanchored).
    Regex { pattern: String, reply: String },
}

enum Compiled {
    Exact { pattern: String, reply: String },
    Prefix { pattern: String, reply: String },
    Regex { pattern: Regex, reply: String },
}

pub(super) struct ScriptSet {
    rules: Vec<Compiled>,
}

impl ScriptSet {
    pub(super) fn compile(rules: &[ScriptRule]) -> Result<ScriptSet, BackendError> {
        let mut compiled = Vec::with_capacity(rules.len());
        for (i, rule) in rules.iter().enumerate() {
            compiled.push(match rule {
                ScriptRule::Exact { pattern, reply } => Compiled::Exact {
                    pattern: pattern.clone(),
                    reply: reply.clone(),
                },
                ScriptRule::Prefix { pattern, reply } => Compiled::Prefix {
                    pattern: pattern.clone(),
                    reply: reply.clone(),
                },
                ScriptRule::Regex { pattern, reply } => Compiled::Regex {
                    pattern: Regex::new(pattern).map_err(|err| {
                        BackendError::Config(format!("rule {i}: bad regex {pattern:?}: {err}"))
                    })?,
                    reply: reply.clone(),
                },
            });
        }
        Ok(ScriptSet { rules: compiled })
    }

    pub(super) fn reply_for(&self, content: &str) -> Option<&str> {
        for rule in &self.rules {
            let hit = match rule {
                Compiled::Exact { pattern, .. } => content == pattern,
                Compiled::Prefix { pattern, .. } => content.starts_with(pattern.as_str()),
                Compiled::Regex { pattern, .. } => pattern.is_match(content),
            };
            if hit {
                return Some(match rule {
                    Compiled::Exact { reply, .. }
                    | Compiled::Prefix { reply, .. }
                    | Compiled::Regex { reply, .. } => reply,
                });
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_matching_rule_wins() {
        let set = ScriptSet::compile(&[
            ScriptRule::Regex {
                pattern: "alpha".to_string(),
                reply: "first".to_string(),
            },
            ScriptRule::Regex {
                pattern: "alpha|beta".to_string(),
                reply: "second".to_string(),
            },
        ])
        .unwrap();
        assert_eq!(set.reply_for("has alpha inside"), Some("first"));
        assert_eq!(set.reply_for("has beta inside"), Some("second"));
        assert_eq!(set.reply_for("gamma"), None);
    }

    #[test]
    fn exact_requires_full_equality() {
        let set = ScriptSet::compile(&[ScriptRule::Exact {
            pattern: "whole prompt".to_string(),
            reply: "r".to_string(),
        }])
        .unwrap();
        assert_eq!(set.reply_for("whole prompt"), Some("r"));
        assert_eq!(set.reply_for("whole prompt plus"), None);
    }
}
