//! Command interpretation: maps operator text plus session context onto a
//! capability of the registry.
//!
//! Two backends implement [`InterpreterBackend`]: the deterministic
//! [`RuleInterpreter`] and [`FunctionCallingInterpreter`], which asks a
//! chat-completions endpoint to pick one of the functions produced by
//! [`build_function_schema`].

mod function_calling;
mod rules;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use function_calling::{context_summary, intent_from_response, FunctionCallingInterpreter};
pub use rules::{interpret_rule_based, normalize, RuleInterpreter, RESOLUTION_KEYWORDS};

use crate::error::InterpretError;
use crate::model::{OperatorCommand, RobotMessage, TaskProgress, TaskRegistry};

/// Initialization prompt given to the robot agent, verbatim.
pub const INIT_PROMPT: &str = "You are a robot agent in a human-robot collaborative assembly system designed to assist in tasks and respond to commands. Upon receiving a request within your capability range, execute the service. In the event of encountering errors, request assistance from a human operator for error correction, providing clear and understandable explanations.";

const ERROR_PROTOCOL: &str = "Error-assistance protocol: when a subtask fails its sensor check, the task pauses at that subtask and the operator is told what went wrong. The operator's role is to correct the error. When the operator reports that the problem is dealt with, call resume_task with the interrupted task id; the robot re-checks the sensor data and continues from the interrupted subtask. If a command cannot be matched to a capability, call request_clarification.";

pub const RESUME_FUNCTION: &str = "resume_task";
pub const CLARIFY_FUNCTION: &str = "request_clarification";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum IntentKind {
    ExecuteTask(String),
    ResumeTask(String),
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub kind: IntentKind,
    pub confidence: f64,
    /// Rule label and the phrases that triggered it.
    #[serde(default)]
    pub matched_phrases: Vec<String>,
}

impl Intent {
    pub fn execute(task_id: impl Into<String>, matched: Vec<String>) -> Self {
        Self {
            kind: IntentKind::ExecuteTask(task_id.into()),
            confidence: 1.0,
            matched_phrases: matched,
        }
    }

    pub fn resume(task_id: impl Into<String>, matched: Vec<String>) -> Self {
        Self {
            kind: IntentKind::ResumeTask(task_id.into()),
            confidence: 1.0,
            matched_phrases: matched,
        }
    }

    pub fn unknown(reason: impl Into<String>) -> Self {
        Self {
            kind: IntentKind::Unknown(reason.into()),
            confidence: 0.0,
            matched_phrases: Vec::new(),
        }
    }
}

/// What the interpreter knows besides the command text.
#[derive(Debug, Clone, Copy)]
pub struct InterpretationContext<'a> {
    pub progress: Option<&'a TaskProgress>,
    pub last_robot_message: Option<&'a RobotMessage>,
    pub registry: &'a TaskRegistry,
}

impl<'a> InterpretationContext<'a> {
    pub fn idle(registry: &'a TaskRegistry) -> Self {
        Self {
            progress: None,
            last_robot_message: None,
            registry,
        }
    }
}

pub trait InterpreterBackend: Send + Sync {
    fn name(&self) -> &str;

    fn interpret(
        &self,
        command: &OperatorCommand,
        context: &InterpretationContext<'_>,
    ) -> Result<Intent, InterpretError>;
}

/// The initialization prompt followed by one line per capability and the
/// error-assistance protocol.
pub fn build_init_prompt(registry: &TaskRegistry) -> String {
    let mut out = String::from(INIT_PROMPT);
    out.push_str("\n\nCapabilities:\n");
    for cap in &registry.capabilities {
        let params = if cap.parameters.is_empty() {
            "none".to_string()
        } else {
            cap.parameters
                .iter()
                .map(|p| {
                    let req = if p.required { "required" } else { "optional" };
                    format!("{} ({}, {req})", p.name, p.kind)
                })
                .collect::<Vec<_>>()
                .join(", ")
        };
        out.push_str(&format!(
            "- {}: {}. {} Parameters: {params}.\n",
            cap.id, cap.name, cap.description
        ));
    }
    out.push('\n');
    out.push_str(ERROR_PROTOCOL);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionDecl {
    pub name: String,
    pub description: String,
    /// JSON-schema object describing the arguments.
    pub parameters: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSchema {
    pub functions: Vec<FunctionDecl>,
}

impl FunctionSchema {
    pub fn get(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// `tools` array in chat-completions wire shape.
    pub fn to_tools_json(&self) -> Value {
        Value::Array(
            self.functions
                .iter()
                .map(|f| {
                    json!({
                        "type": "function",
                        "function": {
                            "name": f.name,
                            "description": f.description,
                            "parameters": f.parameters,
                        }
                    })
                })
                .collect(),
        )
    }
}

fn json_type(kind: &str) -> &'static str {
    match kind {
        "integer" | "int" => "integer",
        "number" | "float" | "real" => "number",
        "boolean" | "bool" => "boolean",
        _ => "string",
    }
}

/// One callable per capability plus the fixed `resume_task` and
/// `request_clarification` entries.
pub fn build_function_schema(registry: &TaskRegistry) -> FunctionSchema {
    let mut functions: Vec<FunctionDecl> = registry
        .capabilities
        .iter()
        .map(|cap| {
            let mut props = serde_json::Map::new();
            let mut required = Vec::new();
            for p in &cap.parameters {
                props.insert(p.name.clone(), json!({ "type": json_type(&p.kind) }));
                if p.required {
                    required.push(Value::String(p.name.clone()));
                }
            }
            FunctionDecl {
                name: cap.id.clone(),
                description: format!("{}. {}", cap.name, cap.description),
                parameters: json!({
                    "type": "object",
                    "properties": props,
                    "required": required,
                }),
            }
        })
        .collect();

    functions.push(FunctionDecl {
        name: RESUME_FUNCTION.into(),
        description: "Resume an interrupted task from the subtask where it stopped, after the operator has corrected the error.".into(),
        parameters: json!({
            "type": "object",
            "properties": { "task_id": { "type": "string" } },
            "required": ["task_id"],
        }),
    });
    functions.push(FunctionDecl {
        name: CLARIFY_FUNCTION.into(),
        description: "Ask the operator to clarify a command that does not match any capability.".into(),
        parameters: json!({
            "type": "object",
            "properties": { "reason": { "type": "string" } },
            "required": ["reason"],
        }),
    });
    FunctionSchema { functions }
}
