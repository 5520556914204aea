//! Headless scripted runs of the three case-study scenarios.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::comms::MessageTemplates;
use crate::error::ScenarioError;
use crate::intent::{InterpreterBackend, IntentKind};
use crate::model::{MessageKind, PartClass, TaskRegistry};
use crate::orchestrator::{Effect, Event, Phase, SessionState, TaskController};
use crate::sensor::{CellScene, Fault};
use crate::session::{Clock, Session, SessionConfig};
use crate::wire::{ClientMessage, LogEntry, LogRecord, ServerMessage};

/// One operator turn. A bare string means the operator fixed the reported
/// fault (if any) and then spoke.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptLine {
    Say(String),
    Turn {
        say: String,
        #[serde(default = "yes")]
        fix: bool,
    },
}

fn yes() -> bool {
    true
}

impl ScriptLine {
    pub fn text(&self) -> &str {
        match self {
            ScriptLine::Say(s) | ScriptLine::Turn { say: s, .. } => s,
        }
    }

    pub fn fixes(&self) -> bool {
        match self {
            ScriptLine::Say(_) => true,
            ScriptLine::Turn { fix, .. } => *fix,
        }
    }
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptLine>, serde_json::Error> {
    serde_json::from_str(text)
}

/// The script shipped for scenario `id`.
pub fn bundled_script(id: u8) -> Option<Vec<ScriptLine>> {
    crate::data::SCRIPTS
        .iter()
        .find(|(n, _)| *n == id)
        .map(|(_, text)| parse_script(text).expect("bundled script is valid"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum TranscriptEntry {
    Command { text: String },
    Interpreted { intent: IntentKind },
    FaultResolved { fault: Fault },
    SensorRequest { subtask_index: usize, part: PartClass },
    Motion { subtask_index: usize },
    RobotMessage {
        kind: MessageKind,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subtask_index: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub scenario_id: u8,
    pub interpreter: String,
    pub entries: Vec<TranscriptEntry>,
    pub final_state: SessionState,
}

/// Coarse step kinds of the interaction sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Command,
    SensorRequest,
    Error,
    Completion,
}

impl Transcript {
    /// Commands, sensor requests, errors and completions in order, with runs
    /// of consecutive sensor requests collapsed into one. Clarifications,
    /// motions and bookkeeping entries are dropped.
    pub fn steps(&self) -> Vec<Step> {
        let mut out: Vec<Step> = Vec::new();
        for e in &self.entries {
            let step = match e {
                TranscriptEntry::Command { .. } => Step::Command,
                TranscriptEntry::SensorRequest { .. } => Step::SensorRequest,
                TranscriptEntry::RobotMessage { kind: MessageKind::Error, .. } => Step::Error,
                TranscriptEntry::RobotMessage { kind: MessageKind::Completion, .. } => Step::Completion,
                _ => continue,
            };
            if step == Step::SensorRequest && out.last() == Some(&Step::SensorRequest) {
                continue;
            }
            out.push(step);
        }
        out
    }

    pub fn messages(&self) -> impl Iterator<Item = (MessageKind, &str, Option<usize>)> {
        self.entries.iter().filter_map(|e| match e {
            TranscriptEntry::RobotMessage { kind, text, subtask_index } => Some((*kind, text.as_str(), *subtask_index)),
            _ => None,
        })
    }
}

/// True iff `steps` reads command, sensor request, zero or more
/// (error, command, sensor request) rounds, completion.
pub fn is_interaction_sequence(steps: &[Step]) -> bool {
    use Step::*;
    let Some(([Command, SensorRequest], rest)) = steps.split_first_chunk::<2>() else {
        return false;
    };
    let Some((last, mut middle)) = rest.split_last() else {
        return false;
    };
    if *last != Completion {
        return false;
    }
    while let Some(([Error, Command, SensorRequest], tail)) = middle.split_first_chunk::<3>() {
        middle = tail;
    }
    middle.is_empty()
}

/// Builds the transcript view of a session log.
pub fn transcript_from_log(records: &[LogRecord], scenario_id: u8, interpreter: &str, final_state: SessionState) -> Transcript {
    let entries = records
        .iter()
        .filter_map(|r| match &r.entry {
            LogEntry::Inbound(ClientMessage::Command { text }) => Some(TranscriptEntry::Command { text: text.clone() }),
            LogEntry::Event(Event::CommandInterpreted(intent)) => {
                Some(TranscriptEntry::Interpreted { intent: intent.kind.clone() })
            }
            LogEntry::SceneChanged { fault, active: false } => Some(TranscriptEntry::FaultResolved { fault: *fault }),
            LogEntry::Effect(Effect::RequestSensorFrame { subtask_index, part, .. }) => {
                Some(TranscriptEntry::SensorRequest { subtask_index: *subtask_index, part: *part })
            }
            LogEntry::Effect(Effect::ExecuteMotion { subtask_index, .. }) => {
                Some(TranscriptEntry::Motion { subtask_index: *subtask_index })
            }
            LogEntry::Outbound(ServerMessage::RobotMessage { kind, text, subtask_index, .. }) => {
                Some(TranscriptEntry::RobotMessage { kind: *kind, text: text.clone(), subtask_index: *subtask_index })
            }
            _ => None,
        })
        .collect();
    Transcript { scenario_id, interpreter: interpreter.to_string(), entries, final_state }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub transcript: Transcript,
    pub log: Vec<LogRecord>,
}

/// Runs scenario `id` with the bundled registry and templates.
pub fn run_scenario(
    id: u8,
    interpreter: Arc<dyn InterpreterBackend>,
    script: &[ScriptLine],
) -> Result<ScenarioRun, ScenarioError> {
    let controller = Arc::new(TaskController::new(TaskRegistry::cable_shark(), MessageTemplates::default()));
    let scene = CellScene::preset(id).ok_or(ScenarioError::UnknownScenario(id))?;
    run_scenario_with(controller, scene, interpreter, script)
}

/// Feeds each script line to a fresh session on `scene`. Fails with
/// `ScriptStall` unless the task has completed once the script runs out.
pub fn run_scenario_with(
    controller: Arc<TaskController>,
    scene: CellScene,
    interpreter: Arc<dyn InterpreterBackend>,
    script: &[ScriptLine],
) -> Result<ScenarioRun, ScenarioError> {
    let scenario_id = scene.scenario_id.unwrap_or(0);
    let name = interpreter.name().to_string();
    let config = SessionConfig { auto_resolve: false, clock: Clock::Logical, ..Default::default() };
    let mut session = Session::new(format!("scenario-{scenario_id}"), controller, interpreter, scene, config);

    for line in script {
        if line.fixes() && matches!(session.state().phase, Phase::AwaitingHuman { .. }) {
            // Nothing to fix for errors not backed by a scene fault.
            let _ = session.resolve_pending_fault();
        }
        session.say(line.text())?;
    }

    if !matches!(session.state().phase, Phase::Completed { .. }) {
        return Err(ScenarioError::ScriptStall {
            state: session.state().phase.name().to_string(),
            lines: script.len(),
        });
    }
    let log = session.log().to_vec();
    let transcript = transcript_from_log(&log, scenario_id, &name, session.state().clone());
    Ok(ScenarioRun { transcript, log })
}
