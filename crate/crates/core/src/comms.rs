//! Operator-facing messages: error and completion text from templates, with
//! optional rephrasing through a chat model.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::CommsError;
use crate::llm::{first_message, ChatBackend};
use crate::model::{ErrorEvent, ErrorKind, MessageKind, RobotMessage, TaskRegistry, TaskSpec};

const PLACEHOLDERS: [&str; 6] = [
    "task_name",
    "subtask_name",
    "subtask_number",
    "subtask_count",
    "part",
    "detail",
];

/// Message patterns keyed by message kind; see `data/templates.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageTemplates {
    pub overlap: String,
    pub missing_component: String,
    pub misassembled: String,
    pub invalid_sensor_data: String,
    pub completion: String,
    pub clarification: String,
}

impl Default for MessageTemplates {
    fn default() -> Self {
        Self::from_json(crate::data::TEMPLATES_JSON).expect("bundled templates are valid")
    }
}

impl MessageTemplates {
    pub fn from_json(text: &str) -> Result<Self, CommsError> {
        let t: MessageTemplates =
            serde_json::from_str(text).map_err(|e| CommsError::Template(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn for_error(&self, kind: ErrorKind) -> &str {
        match kind {
            ErrorKind::Overlap => &self.overlap,
            ErrorKind::MissingComponent => &self.missing_component,
            ErrorKind::Misassembled => &self.misassembled,
            ErrorKind::InvalidSensorData => &self.invalid_sensor_data,
        }
    }

    fn all(&self) -> [(&'static str, &str); 6] {
        [
            ("overlap", &self.overlap),
            ("missing_component", &self.missing_component),
            ("misassembled", &self.misassembled),
            ("invalid_sensor_data", &self.invalid_sensor_data),
            ("completion", &self.completion),
            ("clarification", &self.clarification),
        ]
    }

    /// Every template is non-empty and uses only known placeholders.
    pub fn validate(&self) -> Result<(), CommsError> {
        for (key, pattern) in self.all() {
            if pattern.trim().is_empty() {
                return Err(CommsError::Template(format!("template {key} is empty")));
            }
            for name in placeholders(pattern) {
                if !PLACEHOLDERS.contains(&name) {
                    return Err(CommsError::Template(format!(
                        "template {key} uses unknown placeholder {{{name}}}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn placeholders(pattern: &str) -> impl Iterator<Item = &str> {
    pattern.split('{').skip(1).filter_map(|s| s.split_once('}').map(|(name, _)| name))
}

fn fill(pattern: &str, values: &[(&str, String)]) -> String {
    let mut out = pattern.to_string();
    for (name, value) in values {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

fn error_detail(e: &ErrorEvent) -> String {
    if let Some(reason) = &e.details.reason {
        return reason.clone();
    }
    match e.kind {
        ErrorKind::Overlap if !e.details.detection_ids.is_empty() => {
            let ids: Vec<String> = e.details.detection_ids.iter().map(u32::to_string).collect();
            format!("overlapping detections {}", ids.join(", "))
        }
        ErrorKind::Misassembled => "orientation does not match the assembly".into(),
        _ => "no further detail".into(),
    }
}

pub fn render_error(
    e: &ErrorEvent,
    registry: &TaskRegistry,
    templates: &MessageTemplates,
) -> Result<RobotMessage, CommsError> {
    let task = registry
        .task(&e.task_id)
        .ok_or_else(|| CommsError::UnknownTask(e.task_id.clone()))?;
    let subtask = task
        .subtask(e.subtask_index)
        .ok_or_else(|| CommsError::UnknownSubtask {
            task_id: e.task_id.clone(),
            index: e.subtask_index,
        })?;
    let part = e.details.part.unwrap_or(subtask.expected_part);

    let text = fill(
        templates.for_error(e.kind),
        &[
            ("task_name", task.name.clone()),
            ("subtask_name", subtask.name.clone()),
            ("subtask_number", e.subtask_index.to_string()),
            ("subtask_count", task.len().to_string()),
            ("part", part.display_name().to_string()),
            ("detail", error_detail(e)),
        ],
    );
    Ok(RobotMessage {
        kind: MessageKind::Error,
        text,
        task_id: Some(e.task_id.clone()),
        subtask_index: Some(e.subtask_index),
        correlation_id: format!("{}:{}:error", e.task_id, e.subtask_index),
        degraded: false,
    })
}

pub fn render_completion(task: &TaskSpec, templates: &MessageTemplates) -> RobotMessage {
    let text = fill(
        &templates.completion,
        &[
            ("task_name", task.name.clone()),
            ("subtask_count", task.len().to_string()),
        ],
    );
    RobotMessage {
        kind: MessageKind::Completion,
        text,
        task_id: Some(task.id.clone()),
        subtask_index: None,
        correlation_id: format!("{}:completion", task.id),
        degraded: false,
    }
}

pub fn render_clarification(
    reason: &str,
    task_id: Option<&str>,
    templates: &MessageTemplates,
) -> RobotMessage {
    RobotMessage {
        kind: MessageKind::Clarification,
        text: fill(&templates.clarification, &[("detail", reason.to_string())]),
        task_id: task_id.map(str::to_owned),
        subtask_index: None,
        correlation_id: format!("{}:clarification", task_id.unwrap_or("session")),
        degraded: false,
    }
}

const REPHRASE_PROMPT: &str = "You relay robot error reports to an assembly-line operator. Rewrite the report below as one or two short spoken sentences. Keep the part name, the step that failed and the action the operator must take. Reply with the sentences only.";

/// Asks the backend to rephrase the template text. Any backend failure or an
/// empty reply yields the template text with `degraded` set.
pub fn render_via_backend(
    e: &ErrorEvent,
    registry: &TaskRegistry,
    templates: &MessageTemplates,
    backend: &dyn ChatBackend,
) -> Result<RobotMessage, CommsError> {
    let mut message = render_error(e, registry, templates)?;
    let request = json!({
        "model": backend.model(),
        "messages": [
            { "role": "system", "content": REPHRASE_PROMPT },
            { "role": "user", "content": json!({ "report": message.text, "error": e }).to_string() },
        ],
        "temperature": 0.3,
    });
    let rephrased = backend.complete(&request).ok().and_then(|resp| {
        first_message(&resp)
            .ok()
            .and_then(|m| m.get("content"))
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
    });
    match rephrased {
        Some(text) => message.text = text,
        None => message.degraded = true,
    }
    Ok(message)
}

#[derive(Debug, thiserror::Error)]
#[error("speech adapter: {0}")]
pub struct SpeechError(pub String);

/// Audio to text. Implemented outside this crate (e.g. a hosted
/// transcription model); the engine only consumes the resulting text.
pub trait SpeechToText: Send + Sync {
    fn transcribe(&self, audio: &[u8]) -> Result<String, SpeechError>;
}

/// Text to audio, the counterpart of [`SpeechToText`].
pub trait TextToSpeech: Send + Sync {
    fn synthesize(&self, text: &str) -> Result<Vec<u8>, SpeechError>;
}
