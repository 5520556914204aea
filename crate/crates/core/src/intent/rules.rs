//! Deterministic reference interpreter.
//!
//! Rules are tried in order and the first match wins:
//!
//! | rule | condition | result |
//! |------|-----------|--------|
//! | R1 | pending error and a resolution keyword | resume the active task |
//! | R2 | names a capability, a task id, or two description keywords of one capability | execute that task |
//! | R3 | pending error and the failed part is mentioned | resume the active task |
//! | R4 | no pending error and nothing but resolution keywords | unknown |
//! | R5 | anything else | unknown |

use std::collections::BTreeSet;

use crate::error::InterpretError;
use crate::model::{OperatorCommand, PartClass, TaskRegistry};

use super::{Intent, InterpretationContext, InterpreterBackend};

/// Words and phrases an operator uses to say an error has been dealt with.
pub const RESOLUTION_KEYWORDS: [&str; 17] = [
    "resolved",
    "fixed",
    "corrected",
    "done",
    "completed",
    "handled",
    "adjusted",
    "addressed",
    "sorted",
    "placed",
    "all set",
    "under control",
    "managed",
    "settled",
    "proceed",
    "resume",
    "continue",
];

const STOPWORDS: [&str; 32] = [
    "a", "an", "the", "and", "or", "of", "on", "in", "into", "to", "from", "with", "for", "by",
    "at", "it", "its", "is", "are", "be", "this", "that", "each", "then", "please", "can", "you",
    "i", "me", "my", "now", "up",
];

/// Lowercases, collapses whitespace and strips terminal punctuation.
pub fn normalize(text: &str) -> String {
    let collapsed = text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .trim_end()
        .to_string()
}

fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '_' || c == '-'))
        .map(|t| t.trim_matches(|c| c == '\'' || c == '-'))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

fn significant(tokens: &[String]) -> BTreeSet<String> {
    tokens
        .iter()
        .filter(|t| t.len() >= 3 && !STOPWORDS.contains(&t.as_str()))
        .cloned()
        .collect()
}

/// Positions `[start, end)` where `phrase` occurs as consecutive tokens.
fn phrase_spans(tokens: &[String], phrase: &str) -> Vec<(usize, usize)> {
    let words: Vec<&str> = phrase.split(' ').collect();
    if words.is_empty() || tokens.len() < words.len() {
        return Vec::new();
    }
    (0..=tokens.len() - words.len())
        .filter(|&i| words.iter().zip(&tokens[i..]).all(|(w, t)| t == w))
        .map(|i| (i, i + words.len()))
        .collect()
}

struct Keywords {
    found: Vec<&'static str>,
    /// Every token belongs to some keyword occurrence.
    covers_all: bool,
}

fn resolution_keywords(tokens: &[String]) -> Keywords {
    let mut covered = vec![false; tokens.len()];
    let mut found = Vec::new();
    for kw in RESOLUTION_KEYWORDS {
        let spans = phrase_spans(tokens, kw);
        if !spans.is_empty() {
            found.push(kw);
        }
        for (s, e) in spans {
            covered[s..e].iter_mut().for_each(|c| *c = true);
        }
    }
    Keywords {
        covers_all: !tokens.is_empty() && covered.iter().all(|c| *c),
        found,
    }
}

fn part_mentioned(tokens: &[String], part: PartClass) -> Option<String> {
    let name = part.display_name();
    let joined = name.replace(' ', "");
    let snake = name.replace(' ', "_");
    if !phrase_spans(tokens, name).is_empty() {
        return Some(name.to_string());
    }
    tokens
        .iter()
        .find(|t| **t == joined || **t == snake)
        .map(|t| t.to_string())
}

enum CapabilityMatch {
    None,
    One(Intent),
    Ambiguous,
}

fn match_capability(tokens: &[String], registry: &TaskRegistry) -> CapabilityMatch {
    let present: BTreeSet<&str> = tokens.iter().map(String::as_str).collect();

    let mentioned_task = registry
        .tasks
        .iter()
        .find(|t| present.contains(t.id.to_lowercase().as_str()));

    let mut scored: Vec<(u32, &str, Vec<String>)> = Vec::new();
    for cap in &registry.capabilities {
        let mut score = 0;
        let mut matched = Vec::new();

        let name_words = significant(&tokenize(&cap.name.to_lowercase()));
        if !name_words.is_empty() && name_words.iter().all(|w| present.contains(w.as_str())) {
            score += 100;
            matched.push(cap.name.to_lowercase());
        }
        if present.contains(cap.id.to_lowercase().as_str()) {
            score += 100;
            matched.push(cap.id.clone());
        }
        if let Some(task) = mentioned_task.filter(|t| t.capability_id == cap.id) {
            score += 100;
            matched.push(task.id.clone());
        }
        if score == 0 {
            let hits: Vec<String> = significant(&tokenize(&cap.description.to_lowercase()))
                .into_iter()
                .filter(|w| present.contains(w.as_str()))
                .collect();
            if hits.len() >= 2 {
                score += hits.len() as u32;
                matched.extend(hits);
            }
        }
        if score > 0 {
            scored.push((score, cap.id.as_str(), matched));
        }
    }

    let Some(best) = scored.iter().map(|(s, _, _)| *s).max() else {
        return CapabilityMatch::None;
    };
    let mut top = scored.into_iter().filter(|(s, _, _)| *s == best);
    let (_, cap_id, mut matched) = top.next().expect("max exists");
    if top.next().is_some() {
        return CapabilityMatch::Ambiguous;
    }

    let task_id = match mentioned_task.filter(|t| t.capability_id == cap_id) {
        Some(t) => t.id.clone(),
        None => {
            let mut tasks = registry.tasks_for_capability(cap_id);
            match (tasks.next(), tasks.next()) {
                (Some(t), None) => t.id.clone(),
                (None, _) => {
                    return CapabilityMatch::One(Intent::unknown(format!(
                        "capability {cap_id} has no task"
                    )))
                }
                (Some(_), Some(_)) => return CapabilityMatch::Ambiguous,
            }
        }
    };
    matched.insert(0, "R2".into());
    CapabilityMatch::One(Intent::execute(task_id, matched))
}

/// Applies rules R1 to R5 to `command` in `context`.
pub fn interpret_rule_based(command: &OperatorCommand, context: &InterpretationContext<'_>) -> Intent {
    let text = normalize(&command.raw_text);
    let tokens = tokenize(&text);
    let keywords = resolution_keywords(&tokens);
    let pending = context
        .progress
        .and_then(|p| p.pending_error.as_ref().map(|e| (p.task_id.as_str(), e)));

    // R1
    if let Some((task_id, _)) = pending {
        if !keywords.found.is_empty() {
            let mut matched = vec!["R1".to_string()];
            matched.extend(keywords.found.iter().map(|k| k.to_string()));
            return Intent::resume(task_id, matched);
        }
    }

    // R2
    match match_capability(&tokens, context.registry) {
        CapabilityMatch::One(intent) => return intent,
        CapabilityMatch::Ambiguous => return Intent::unknown("ambiguous capability"),
        CapabilityMatch::None => {}
    }

    // R3
    if let Some((task_id, error)) = pending {
        if let Some(part) = error.details.part {
            if let Some(phrase) = part_mentioned(&tokens, part) {
                return Intent::resume(task_id, vec!["R3".into(), phrase]);
            }
        }
    }

    // R4
    if pending.is_none() && keywords.covers_all {
        return Intent::unknown("ack with no pending error");
    }

    Intent::unknown("no rule matched")
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RuleInterpreter;

impl InterpreterBackend for RuleInterpreter {
    fn name(&self) -> &str {
        "rule"
    }

    fn interpret(
        &self,
        command: &OperatorCommand,
        context: &InterpretationContext<'_>,
    ) -> Result<Intent, InterpretError> {
        Ok(interpret_rule_based(command, context))
    }
}
