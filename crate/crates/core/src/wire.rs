//! JSON wire protocol between the session service and operator consoles,
//! and the JSONL event-log record format.
//!
//! Every message is an envelope `{"session_id", "seq", "type", "payload"}`.
//! See `docs/protocol.md` for examples of each message type.

use serde::{Deserialize, Serialize};

use crate::model::{ErrorEvent, MessageKind, PartClass, RobotMessage, TaskRegistry};
use crate::orchestrator::{Effect, Event, Phase, SessionState};
use crate::sensor::{CameraId, CellScene, Detection, Fault, FaultKind, SensorFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub session_id: String,
    pub seq: u64,
    #[serde(flatten)]
    pub body: T,
}

/// Console to server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum ClientMessage {
    Command { text: String },
    InjectFault { kind: FaultKind, part: PartClass },
    LoadScenario { id: u8 },
}

/// Server to console.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum ServerMessage {
    State {
        snapshot: StateSnapshot,
    },
    RobotMessage {
        kind: MessageKind,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subtask_index: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        task_id: Option<String>,
        correlation_id: String,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        degraded: bool,
    },
    Frame {
        camera_id: CameraId,
        detections: Vec<Detection>,
    },
    Error {
        reason: String,
    },
}

impl ServerMessage {
    pub fn robot_message(m: &RobotMessage) -> Self {
        ServerMessage::RobotMessage {
            kind: m.kind,
            text: m.text.clone(),
            subtask_index: m.subtask_index,
            task_id: m.task_id.clone(),
            correlation_id: m.correlation_id.clone(),
            degraded: m.degraded,
        }
    }

    pub fn frame(frame: &SensorFrame) -> Self {
        ServerMessage::Frame {
            camera_id: frame.camera_id,
            detections: frame.detections.clone(),
        }
    }

    pub fn error(reason: impl Into<String>) -> Self {
        ServerMessage::Error {
            reason: reason.into(),
        }
    }
}

/// Console-facing view of a session. Subtask numbers are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub phase: String,
    pub task_id: Option<String>,
    /// Subtask being worked on or interrupted; absent when idle or complete.
    pub subtask_index: Option<usize>,
    pub subtask_name: Option<String>,
    pub completed_index: usize,
    pub total_subtasks: Option<usize>,
    pub pending_error: Option<ErrorEvent>,
    pub scenario_id: Option<u8>,
    pub faults: Vec<Fault>,
    /// Full machine state, for replay checks.
    pub state: SessionState,
}

/// Pure function of the session state, the scene and the registry.
pub fn snapshot(state: &SessionState, scene: &CellScene, registry: &TaskRegistry) -> StateSnapshot {
    build_snapshot(state, registry, scene.scenario_id, scene.faults.clone())
}

impl StateSnapshot {
    /// True iff every field other than the scene fields follows from `state`.
    pub fn is_derived_from_state(&self, registry: &TaskRegistry) -> bool {
        *self == build_snapshot(&self.state, registry, self.scenario_id, self.faults.clone())
    }
}

fn build_snapshot(state: &SessionState, registry: &TaskRegistry, scenario_id: Option<u8>, faults: Vec<Fault>) -> StateSnapshot {
    let (task_id, subtask_index) = match &state.phase {
        Phase::Idle => (None, None),
        Phase::AwaitingSensor { task_id, subtask_index }
        | Phase::Executing { task_id, subtask_index } => (Some(task_id.clone()), Some(*subtask_index)),
        Phase::AwaitingHuman { task_id, error } => (Some(task_id.clone()), Some(error.subtask_index)),
        Phase::Completed { task_id } => (Some(task_id.clone()), None),
    };
    let task = task_id.as_deref().and_then(|t| registry.task(t));
    StateSnapshot {
        phase: state.phase.name().to_string(),
        subtask_name: task
            .zip(subtask_index)
            .and_then(|(t, i)| t.subtask(i))
            .map(|s| s.name.clone()),
        total_subtasks: task.map(|t| t.len()),
        task_id,
        subtask_index,
        completed_index: state.progress.as_ref().map_or(0, |p| p.completed_index),
        pending_error: state.progress.as_ref().and_then(|p| p.pending_error.clone()),
        scenario_id,
        faults,
        state: state.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    In,
    Out,
    Internal,
}

/// What a log line records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", content = "body", rename_all = "snake_case")]
pub enum LogEntry {
    /// Client message as received.
    Inbound(ClientMessage),
    /// Server message as sent; its wire seq is the record seq.
    Outbound(ServerMessage),
    /// Event fed to the state machine.
    Event(Event),
    /// Effect returned by the state machine.
    Effect(Effect),
    /// Session reset to idle with a new scene.
    Reset { scenario_id: Option<u8> },
    /// Scene fault added or removed outside the state machine.
    SceneChanged { fault: Fault, active: bool },
}

impl LogEntry {
    pub fn direction(&self) -> Direction {
        match self {
            LogEntry::Inbound(_) => Direction::In,
            LogEntry::Outbound(_) => Direction::Out,
            _ => Direction::Internal,
        }
    }
}

/// One line of a session's JSONL event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub timestamp_ms: u64,
    pub session_id: String,
    pub seq: u64,
    pub direction: Direction,
    #[serde(flatten)]
    pub entry: LogEntry,
}

pub fn to_jsonl(records: &[LogRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("log records serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ErrorKind;
    use serde_json::json;

    #[test]
    fn client_messages_parse() {
        let m: Envelope<ClientMessage> = serde_json::from_value(json!({
            "session_id": "s1", "seq": 3, "type": "command", "payload": {"text": "Fixed."}
        }))
        .unwrap();
        assert_eq!(m.seq, 3);
        assert_eq!(m.body, ClientMessage::Command { text: "Fixed.".into() });

        let m: Envelope<ClientMessage> = serde_json::from_str(
            r#"{"session_id":"s1","seq":4,"type":"inject_fault","payload":{"kind":"overlap","part":"end_cap"}}"#,
        )
        .unwrap();
        assert_eq!(m.body, ClientMessage::InjectFault { kind: FaultKind::Overlap, part: PartClass::EndCap });

        assert!(serde_json::from_str::<Envelope<ClientMessage>>(r#"{"session_id":"s","seq":1,"type":"dance"}"#).is_err());
    }

    #[test]
    fn server_message_shape() {
        let v = serde_json::to_value(Envelope {
            session_id: "s1".into(),
            seq: 9,
            body: ServerMessage::error("bad"),
        })
        .unwrap();
        assert_eq!(v, json!({"session_id": "s1", "seq": 9, "type": "error", "payload": {"reason": "bad"}}));
    }

    #[test]
    fn snapshot_reports_interrupted_subtask() {
        let reg = TaskRegistry::cable_shark();
        let scene = CellScene::preset(1).unwrap();
        let error = ErrorEvent {
            kind: ErrorKind::Overlap,
            task_id: "t1".into(),
            subtask_index: 1,
            details: Default::default(),
        };
        let state = SessionState {
            phase: Phase::AwaitingHuman { task_id: "t1".into(), error: error.clone() },
            progress: Some(crate::model::TaskProgress {
                task_id: "t1".into(),
                completed_index: 0,
                pending_error: Some(error),
            }),
        };
        let s = snapshot(&state, &scene, &reg);
        assert_eq!(s.phase, "awaiting_human");
        assert_eq!(s.subtask_index, Some(1));
        assert_eq!(s.subtask_name.as_deref(), Some("housing assembly"));
        assert_eq!(s.total_subtasks, Some(4));
        assert_eq!(s.scenario_id, Some(1));
        assert_eq!(s, snapshot(&state.clone(), &scene.clone(), &reg));
    }

    #[test]
    fn log_record_roundtrip() {
        let r = LogRecord {
            timestamp_ms: 5,
            session_id: "s".into(),
            seq: 2,
            direction: Direction::Internal,
            entry: LogEntry::Event(Event::MotionDone { subtask_index: 1 }),
        };
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.contains(r#""record":"event""#));
        assert_eq!(serde_json::from_str::<LogRecord>(&line).unwrap(), r);
    }
}
