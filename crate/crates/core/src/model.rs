//! Shared domain types: capabilities, tasks and their subtasks, progress
//! bookkeeping, error events and operator/robot messages.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Part classes the vision system is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartClass {
    Housing,
    Wedge,
    Spring,
    EndCap,
}

impl PartClass {
    pub const ALL: [PartClass; 4] = [
        PartClass::Housing,
        PartClass::Wedge,
        PartClass::Spring,
        PartClass::EndCap,
    ];

    /// Operator-facing name ("end cap", not "end_cap").
    pub fn display_name(self) -> &'static str {
        match self {
            PartClass::Housing => "housing",
            PartClass::Wedge => "wedge",
            PartClass::Spring => "spring",
            PartClass::EndCap => "end cap",
        }
    }
}

impl fmt::Display for PartClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// Part orientation relative to the camera x-axis. Parts are assumed to lie
/// either parallel (0°) or perpendicular (90°) to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub enum Orientation {
    Parallel,
    Perpendicular,
}

impl Orientation {
    pub fn degrees(self) -> u16 {
        match self {
            Orientation::Parallel => 0,
            Orientation::Perpendicular => 90,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Orientation::Parallel => Orientation::Perpendicular,
            Orientation::Perpendicular => Orientation::Parallel,
        }
    }
}

impl TryFrom<u16> for Orientation {
    type Error = String;

    fn try_from(deg: u16) -> Result<Self, Self::Error> {
        match deg {
            0 => Ok(Orientation::Parallel),
            90 => Ok(Orientation::Perpendicular),
            other => Err(format!("orientation must be 0 or 90 degrees, got {other}")),
        }
    }
}

impl From<Orientation> for u16 {
    fn from(o: Orientation) -> u16 {
        o.degrees()
    }
}

/// Planar pose: x/y in the robot frame (mm) plus orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPose {
    pub x: f64,
    pub y: f64,
    pub orientation: Orientation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    /// Semantic type, e.g. `"string"`, `"integer"`, `"number"`, `"boolean"`.
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub required: bool,
}

/// An action the robot is programmed to perform.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capability {
    pub id: String,
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub parameters: Vec<ParameterSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subtask {
    pub id: String,
    pub name: String,
    pub expected_part: PartClass,
    pub target_pose: TargetPose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub name: String,
    pub capability_id: String,
    pub subtasks: Vec<Subtask>,
}

impl TaskSpec {
    /// Number of subtasks `k`.
    pub fn len(&self) -> usize {
        self.subtasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtasks.is_empty()
    }

    /// Subtask by 1-based index.
    pub fn subtask(&self, index: usize) -> Option<&Subtask> {
        index.checked_sub(1).and_then(|i| self.subtasks.get(i))
    }
}

/// The predefined task set together with the capability registry.
///
/// Both lists keep file order; prompts and schemas are emitted in that order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskRegistry {
    #[serde(default)]
    pub capabilities: Vec<Capability>,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
}

/// A registry invariant that does not hold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    DuplicateCapabilityId { capability_id: String },
    EmptyDescription { capability_id: String },
    DuplicateTaskId { task_id: String },
    EmptyTaskName { task_id: String },
    UnresolvedCapability { task_id: String, capability_id: String },
    EmptySubtasks { task_id: String },
    DuplicateSubtaskId { task_id: String, subtask_id: String },
}

impl TaskRegistry {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let registry: TaskRegistry = serde_json::from_str(text)?;
        let violations = validate_registry(&registry);
        if violations.is_empty() {
            Ok(registry)
        } else {
            Err(ModelError::InvalidRegistry(violations))
        }
    }

    pub fn task(&self, id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn capability(&self, id: &str) -> Option<&Capability> {
        self.capabilities.iter().find(|c| c.id == id)
    }

    pub fn tasks_for_capability<'a>(
        &'a self,
        capability_id: &'a str,
    ) -> impl Iterator<Item = &'a TaskSpec> + 'a {
        self.tasks
            .iter()
            .filter(move |t| t.capability_id == capability_id)
    }

    /// The shipped cable-shark registry.
    pub fn cable_shark() -> Self {
        Self::from_json(crate::data::REGISTRY_JSON).expect("bundled registry is valid")
    }
}

/// Checks every registry invariant; an empty list means the registry is valid.
pub fn validate_registry(registry: &TaskRegistry) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut cap_ids = HashSet::new();
    for cap in &registry.capabilities {
        if !cap_ids.insert(cap.id.as_str()) {
            out.push(Violation::DuplicateCapabilityId {
                capability_id: cap.id.clone(),
            });
        }
        if cap.description.trim().is_empty() {
            out.push(Violation::EmptyDescription {
                capability_id: cap.id.clone(),
            });
        }
    }

    let mut task_ids = HashSet::new();
    for task in &registry.tasks {
        if !task_ids.insert(task.id.as_str()) {
            out.push(Violation::DuplicateTaskId {
                task_id: task.id.clone(),
            });
        }
        if task.name.trim().is_empty() {
            out.push(Violation::EmptyTaskName {
                task_id: task.id.clone(),
            });
        }
        if !cap_ids.contains(task.capability_id.as_str()) {
            out.push(Violation::UnresolvedCapability {
                task_id: task.id.clone(),
                capability_id: task.capability_id.clone(),
            });
        }
        if task.subtasks.is_empty() {
            out.push(Violation::EmptySubtasks {
                task_id: task.id.clone(),
            });
        }
        let mut sub_ids = HashSet::new();
        for sub in &task.subtasks {
            if !sub_ids.insert(sub.id.as_str()) {
                out.push(Violation::DuplicateSubtaskId {
                    task_id: task.id.clone(),
                    subtask_id: sub.id.clone(),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Overlap,
    MissingComponent,
    Misassembled,
    InvalidSensorData,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 4] = [
        ErrorKind::Overlap,
        ErrorKind::MissingComponent,
        ErrorKind::Misassembled,
        ErrorKind::InvalidSensorData,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ErrorDetails {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part: Option<PartClass>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detection_ids: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// A detected condition that interrupts a task and needs a human to fix it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ErrorEvent {
    pub kind: ErrorKind,
    pub task_id: String,
    /// 1-based index of the interrupted subtask (`completed_index + 1`).
    pub subtask_index: usize,
    #[serde(default)]
    pub details: ErrorDetails,
}

/// Progress through one task attempt.
///
/// `completed_index` counts finished subtasks, so 0 means nothing is done and
/// the subtask being worked on is always `completed_index + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskProgress {
    pub task_id: String,
    pub completed_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending_error: Option<ErrorEvent>,
}

impl TaskProgress {
    pub fn start(task_id: impl Into<String>) -> Self {
        Self {
            task_id: task_id.into(),
            completed_index: 0,
            pending_error: None,
        }
    }

    pub fn next_index(&self) -> usize {
        self.completed_index + 1
    }

    /// Invariant check against a task with `k` subtasks.
    pub fn is_consistent(&self, k: usize) -> bool {
        if self.completed_index > k {
            return false;
        }
        match &self.pending_error {
            Some(e) => self.completed_index < k && e.subtask_index == self.next_index(),
            None => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Error,
    Completion,
    Clarification,
}

/// Operator-facing natural-language message plus its machine-readable context.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RobotMessage {
    pub kind: MessageKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtask_index: Option<usize>,
    pub correlation_id: String,
    /// Set when a rephrasing backend failed and the template text was used.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degraded: bool,
}

/// Transcribed operator utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorCommand {
    pub raw_text: String,
    pub session_id: String,
    pub timestamp_ms: u64,
}

impl OperatorCommand {
    pub fn new(
        raw_text: impl Into<String>,
        session_id: impl Into<String>,
        timestamp_ms: u64,
    ) -> Result<Self, ModelError> {
        let raw_text = raw_text.into();
        if raw_text.trim().is_empty() {
            return Err(ModelError::EmptyCommand);
        }
        Ok(Self {
            raw_text,
            session_id: session_id.into(),
            timestamp_ms,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sub(id: &str, part: PartClass) -> Subtask {
        Subtask {
            id: id.into(),
            name: format!("{part} assembly"),
            expected_part: part,
            target_pose: TargetPose {
                x: 0.0,
                y: 0.0,
                orientation: Orientation::Parallel,
            },
        }
    }

    #[test]
    fn bundled_registry_is_valid() {
        let reg = TaskRegistry::cable_shark();
        assert!(validate_registry(&reg).is_empty());
        let t1 = reg.task("t1").unwrap();
        assert_eq!(t1.capability_id, "assemble_cable_shark");
        assert_eq!(t1.len(), 4);
        let parts: Vec<_> = t1.subtasks.iter().map(|s| s.expected_part).collect();
        assert_eq!(parts, PartClass::ALL);
    }

    #[test]
    fn unresolved_capability_is_reported() {
        let mut reg = TaskRegistry::cable_shark();
        reg.tasks[0].capability_id = "weld".into();
        assert_eq!(
            validate_registry(&reg),
            vec![Violation::UnresolvedCapability {
                task_id: "t1".into(),
                capability_id: "weld".into()
            }]
        );
    }

    #[test]
    fn duplicate_subtask_ids_are_reported() {
        let mut reg = TaskRegistry::cable_shark();
        reg.tasks[0].subtasks = vec![sub("t11", PartClass::Housing), sub("t11", PartClass::Wedge)];
        assert_eq!(
            validate_registry(&reg),
            vec![Violation::DuplicateSubtaskId {
                task_id: "t1".into(),
                subtask_id: "t11".into()
            }]
        );
    }

    #[test]
    fn empty_subtasks_and_description() {
        let mut reg = TaskRegistry::cable_shark();
        reg.tasks[0].subtasks.clear();
        reg.capabilities[0].description = "  ".into();
        let v = validate_registry(&reg);
        assert!(v.contains(&Violation::EmptySubtasks { task_id: "t1".into() }));
        assert!(v.contains(&Violation::EmptyDescription {
            capability_id: "assemble_cable_shark".into()
        }));
    }

    #[test]
    fn from_json_rejects_invalid_registry() {
        let text = r#"{"capabilities": [], "tasks": [{"id": "t1", "name": "x", "capability_id": "nope",
            "subtasks": [{"id": "a", "name": "a", "expected_part": "wedge",
                          "target_pose": {"x": 0, "y": 0, "orientation": 90}}]}]}"#;
        assert!(matches!(
            TaskRegistry::from_json(text),
            Err(ModelError::InvalidRegistry(_))
        ));
    }

    #[test]
    fn orientation_only_accepts_right_angles() {
        assert!(serde_json::from_str::<Orientation>("45").is_err());
        assert_eq!(serde_json::from_str::<Orientation>("90").unwrap(), Orientation::Perpendicular);
        assert_eq!(serde_json::to_string(&Orientation::Parallel).unwrap(), "0");
    }

    #[test]
    fn empty_command_rejected() {
        assert!(matches!(
            OperatorCommand::new(" \t\n", "s", 0),
            Err(ModelError::EmptyCommand)
        ));
        assert!(OperatorCommand::new("Fixed.", "s", 0).is_ok());
    }

    #[test]
    fn progress_consistency() {
        let mut p = TaskProgress::start("t1");
        assert!(p.is_consistent(4));
        p.completed_index = 1;
        p.pending_error = Some(ErrorEvent {
            kind: ErrorKind::Misassembled,
            task_id: "t1".into(),
            subtask_index: 2,
            details: ErrorDetails::default(),
        });
        assert!(p.is_consistent(4));
        p.completed_index = 4;
        assert!(!p.is_consistent(4));
    }
}
