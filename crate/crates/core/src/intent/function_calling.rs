use std::sync::Arc;

use serde_json::{json, Value};

use crate::error::InterpretError;
use crate::llm::{first_message, ChatBackend};
use crate::model::{OperatorCommand, TaskRegistry};

use super::{
    build_function_schema, build_init_prompt, Intent, InterpretationContext, InterpreterBackend,
    CLARIFY_FUNCTION, RESUME_FUNCTION,
};

/// Interpreter that lets a chat model choose one declared function.
pub struct FunctionCallingInterpreter {
    backend: Arc<dyn ChatBackend>,
}

impl FunctionCallingInterpreter {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self { backend }
    }

    pub fn build_request(
        &self,
        command: &OperatorCommand,
        context: &InterpretationContext<'_>,
    ) -> Value {
        let prompt = build_init_prompt(context.registry);
        let schema = build_function_schema(context.registry);
        json!({
            "model": self.backend.model(),
            "messages": [
                { "role": "system", "content": prompt },
                { "role": "system", "content": format!("Current context: {}", context_summary(context)) },
                { "role": "user", "content": command.raw_text },
            ],
            "tools": schema.to_tools_json(),
            "tool_choice": "auto",
            "temperature": 0,
        })
    }
}

impl InterpreterBackend for FunctionCallingInterpreter {
    fn name(&self) -> &str {
        "external"
    }

    fn interpret(
        &self,
        command: &OperatorCommand,
        context: &InterpretationContext<'_>,
    ) -> Result<Intent, InterpretError> {
        let request = self.build_request(command, context);
        let response = self.backend.complete(&request)?;
        intent_from_response(&response, context.registry)
    }
}

/// JSON summary of the session context handed to the model alongside the
/// command. This layout is this crate's own convention.
pub fn context_summary(context: &InterpretationContext<'_>) -> Value {
    let mut out = json!({ "active_task": null });
    if let Some(progress) = context.progress {
        let task = context.registry.task(&progress.task_id);
        out["active_task"] = json!(progress.task_id);
        out["completed_subtasks"] = json!(progress.completed_index);
        out["total_subtasks"] = json!(task.map(|t| t.len()));
        if let Some(sub) = task.and_then(|t| t.subtask(progress.next_index())) {
            out["current_subtask"] = json!({
                "index": progress.next_index(),
                "id": sub.id,
                "name": sub.name,
            });
        }
        if let Some(err) = &progress.pending_error {
            out["pending_error"] = json!(err);
        }
    }
    if let Some(msg) = context.last_robot_message {
        out["last_robot_message"] = json!(msg.text);
    }
    out
}

/// Maps a chat-completions response onto an intent.
///
/// A tool call is required for any actionable intent; a plain text reply
/// becomes `Unknown` carrying that text.
pub fn intent_from_response(response: &Value, registry: &TaskRegistry) -> Result<Intent, InterpretError> {
    let message = first_message(response)?;
    let call = message
        .get("tool_calls")
        .and_then(|c| c.as_array())
        .and_then(|c| c.first())
        .map(|c| c.get("function").unwrap_or(c));

    let Some(call) = call else {
        let text = message
            .get("content")
            .and_then(Value::as_str)
            .unwrap_or("")
            .trim();
        let reason = if text.is_empty() { "empty response" } else { text };
        return Ok(Intent::unknown(reason));
    };

    let name = call
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| InterpretError::MalformedResponse("tool call without a name".into()))?;
    let args: Value = match call.get("arguments") {
        None | Some(Value::Null) => json!({}),
        Some(Value::String(s)) if s.trim().is_empty() => json!({}),
        Some(Value::String(s)) => serde_json::from_str(s)
            .map_err(|e| InterpretError::MalformedResponse(format!("arguments of {name}: {e}")))?,
        Some(other) => other.clone(),
    };
    let arg = |key: &str| args.get(key).and_then(Value::as_str).map(str::to_owned);
    let matched = vec![format!("function:{name}")];

    match name {
        RESUME_FUNCTION => {
            let task_id = arg("task_id").ok_or_else(|| {
                InterpretError::MalformedResponse("resume_task without task_id".into())
            })?;
            if registry.task(&task_id).is_none() {
                return Ok(Intent::unknown(format!("model named unknown task {task_id}")));
            }
            Ok(Intent::resume(task_id, matched))
        }
        CLARIFY_FUNCTION => Ok(Intent::unknown(
            arg("reason").unwrap_or_else(|| "clarification requested".into()),
        )),
        cap_id => {
            if registry.capability(cap_id).is_none() {
                return Ok(Intent::unknown(format!("model called unknown function {cap_id}")));
            }
            let explicit = arg("task_id").filter(|t| {
                registry
                    .task(t)
                    .is_some_and(|task| task.capability_id == cap_id)
            });
            let task_id = match explicit {
                Some(t) => t,
                None => {
                    let mut tasks = registry.tasks_for_capability(cap_id);
                    match (tasks.next(), tasks.next()) {
                        (Some(t), None) => t.id.clone(),
                        (None, _) => {
                            return Ok(Intent::unknown(format!("capability {cap_id} has no task")))
                        }
                        (Some(_), Some(_)) => return Ok(Intent::unknown("ambiguous capability")),
                    }
                }
            };
            Ok(Intent::execute(task_id, matched))
        }
    }
}
