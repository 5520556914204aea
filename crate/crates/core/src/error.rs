use thiserror::Error;

use crate::model::{ErrorKind, Violation};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("command text is empty")]
    EmptyCommand,
    #[error("registry has {count} violation(s): {0:?}", count = .0.len())]
    InvalidRegistry(Vec<Violation>),
    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Failures of an interpreter backend. A command that cannot be understood
/// is not an error; it yields `Intent::Unknown`.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InterpretError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("request timed out")]
    Timeout,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("degenerate camera transform (|det| = {det:e})")]
    DegenerateTransform { det: f64 },
    #[error("invalid bounding box ({x1}, {y1}, {x2}, {y2})")]
    InvalidBBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("part {0} already has an active fault")]
    DuplicateFault(crate::model::PartClass),
    #[error("no active fault matches {kind:?} on {part:?}")]
    NoSuchFault {
        kind: ErrorKind,
        part: Option<crate::model::PartClass>,
    },
    #[error("malformed scene: {0}")]
    Scene(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CommsError {
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("task {task_id} has no subtask {index}")]
    UnknownSubtask { task_id: String, index: usize },
    #[error("template error: {0}")]
    Template(String),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario {0}")]
    UnknownScenario(u8),
    #[error("script stalled in state {state} after {lines} line(s)")]
    ScriptStall { state: String, lines: usize },
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Interpret(#[from] InterpretError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("corrupt log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
