//! Per-session driver: wire messages in, wire messages out, every step
//! appended to an event log that [`replay`] can fold back into a state.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::comms::render_via_backend;
use crate::error::{ReplayError, SensorError};
use crate::intent::{Intent, InterpretationContext, InterpreterBackend};
use crate::llm::ChatBackend;
use crate::model::{MessageKind, OperatorCommand, RobotMessage};
use crate::orchestrator::{Effect, Event, Phase, SessionState, TaskController};
use crate::sensor::{resolve_fault, CellScene, Fault, ValidityCriteria};
use crate::wire::{self, ClientMessage, Envelope, LogEntry, LogRecord, ServerMessage, StateSnapshot};
use crate::InterpretError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Clock {
    /// Wall-clock milliseconds since the Unix epoch.
    #[default]
    System,
    /// Timestamp equals the record seq. Makes logs byte-reproducible.
    Logical,
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub criteria: ValidityCriteria,
    /// Treat a command received while awaiting the operator as preceded by
    /// the physical fix of the reported fault.
    pub auto_resolve: bool,
    pub clock: Clock,
    /// Scenes `load_scenario` can select, by scenario id. Empty means the
    /// bundled presets.
    pub scenes: Vec<CellScene>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            criteria: ValidityCriteria::default(),
            auto_resolve: true,
            clock: Clock::System,
            scenes: Vec::new(),
        }
    }
}

impl SessionConfig {
    pub fn scene(&self, id: u8) -> Option<CellScene> {
        if self.scenes.is_empty() {
            return CellScene::preset(id);
        }
        self.scenes.iter().find(|s| s.scenario_id == Some(id)).cloned()
    }
}

pub struct Session {
    id: String,
    controller: Arc<TaskController>,
    interpreter: Arc<dyn InterpreterBackend>,
    rephraser: Option<Arc<dyn ChatBackend>>,
    config: SessionConfig,
    state: SessionState,
    scene: CellScene,
    last_message: Option<RobotMessage>,
    seq: u64,
    log: Vec<LogRecord>,
}

type Outbox = Vec<Envelope<ServerMessage>>;

impl Session {
    pub fn new(
        id: impl Into<String>,
        controller: Arc<TaskController>,
        interpreter: Arc<dyn InterpreterBackend>,
        scene: CellScene,
        config: SessionConfig,
    ) -> Self {
        let mut session = Self {
            id: id.into(),
            controller,
            interpreter,
            rephraser: None,
            config,
            state: SessionState::idle(),
            scene,
            last_message: None,
            seq: 0,
            log: Vec::new(),
        };
        let scenario_id = session.scene.scenario_id;
        session.record(LogEntry::Reset { scenario_id });
        session
    }

    /// Error messages are rephrased by `backend`, falling back to the
    /// template text when it fails.
    pub fn with_rephraser(mut self, backend: Arc<dyn ChatBackend>) -> Self {
        self.rephraser = Some(backend);
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn scene(&self) -> &CellScene {
        &self.scene
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn controller(&self) -> &TaskController {
        &self.controller
    }

    pub fn last_message(&self) -> Option<&RobotMessage> {
        self.last_message.as_ref()
    }

    pub fn snapshot(&self) -> StateSnapshot {
        wire::snapshot(&self.state, &self.scene, self.controller.registry())
    }

    /// Current state, as sent to a console on connect.
    pub fn hello(&mut self) -> Outbox {
        let mut out = Vec::new();
        self.send_state(&mut out);
        out
    }

    /// Parses one raw wire message and handles it. Malformed input yields an
    /// `error` reply and leaves the session untouched.
    pub fn handle_text(&mut self, text: &str) -> Outbox {
        match serde_json::from_str::<Envelope<ClientMessage>>(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => {
                let mut out = Vec::new();
                self.send(&mut out, ServerMessage::error(format!("malformed message: {e}")));
                out
            }
        }
    }

    pub fn handle(&mut self, msg: Envelope<ClientMessage>) -> Outbox {
        let mut out = Vec::new();
        if msg.session_id != self.id {
            self.send(
                &mut out,
                ServerMessage::error(format!("message for session {} sent to session {}", msg.session_id, self.id)),
            );
            return out;
        }
        self.record(LogEntry::Inbound(msg.body.clone()));
        match msg.body {
            ClientMessage::Command { text } => {
                let _ = self.command(&text, &mut out);
            }
            ClientMessage::InjectFault { kind, part } => match self.scene.inject(Fault { kind, part }) {
                Ok(()) => {
                    self.record(LogEntry::SceneChanged { fault: Fault { kind, part }, active: true });
                    self.send_state(&mut out);
                }
                Err(e) => self.send(&mut out, ServerMessage::error(e.to_string())),
            },
            ClientMessage::LoadScenario { id } => match self.config.scene(id) {
                Some(scene) => self.reset(scene, &mut out),
                None => self.send(&mut out, ServerMessage::error(format!("unknown scenario {id}"))),
            },
        }
        out
    }

    /// Wraps and handles a client message for this session.
    pub fn submit(&mut self, body: ClientMessage) -> Outbox {
        let seq = self.log.iter().filter(|r| matches!(r.entry, LogEntry::Inbound(_))).count() as u64 + 1;
        self.handle(Envelope { session_id: self.id.clone(), seq, body })
    }

    /// Replaces the scene and returns the session to idle.
    pub fn reset(&mut self, scene: CellScene, out: &mut Outbox) {
        self.scene = scene;
        self.state = SessionState::idle();
        self.last_message = None;
        let scenario_id = self.scene.scenario_id;
        self.record(LogEntry::Reset { scenario_id });
        self.send_state(out);
    }

    /// Interprets `text` in the current context without acting on it.
    pub fn interpret(&self, text: &str) -> Result<Intent, InterpretError> {
        let command = OperatorCommand::new(text, &self.id, self.now())
            .map_err(|e| InterpretError::MalformedResponse(e.to_string()))?;
        self.interpreter.interpret(&command, &self.context())
    }

    /// Starts `task_id` as if the operator had requested it, bypassing the
    /// interpreter.
    pub fn start_task(&mut self, task_id: &str) -> Outbox {
        let mut out = Vec::new();
        let intent = Intent::execute(task_id, vec!["direct".into()]);
        self.pump(Event::CommandInterpreted(intent), &mut out);
        out
    }

    /// Removes the fault behind the pending error, if the scene has one.
    pub fn resolve_pending_fault(&mut self) -> Result<Fault, SensorError> {
        let Phase::AwaitingHuman { error, .. } = &self.state.phase else {
            return Err(SensorError::Scene("no pending error".into()));
        };
        let fixed = resolve_fault(&self.scene, error)?;
        let removed = self
            .scene
            .faults
            .iter()
            .copied()
            .find(|f| !fixed.faults.contains(f))
            .expect("resolve_fault removes one fault");
        self.scene = fixed;
        self.record(LogEntry::SceneChanged { fault: removed, active: false });
        Ok(removed)
    }

    fn context(&self) -> InterpretationContext<'_> {
        InterpretationContext {
            progress: self.state.progress.as_ref(),
            last_robot_message: self.last_message.as_ref(),
            registry: self.controller.registry(),
        }
    }

    /// Handles an operator command like a wire `command` message but
    /// reports interpreter failures to the caller. The `error` reply is
    /// still logged.
    pub fn say(&mut self, text: &str) -> Result<Outbox, InterpretError> {
        let mut out = Vec::new();
        self.record(LogEntry::Inbound(ClientMessage::Command { text: text.into() }));
        self.command(text, &mut out)?;
        Ok(out)
    }

    fn command(&mut self, text: &str, out: &mut Outbox) -> Result<(), InterpretError> {
        if self.config.auto_resolve && matches!(self.state.phase, Phase::AwaitingHuman { .. }) {
            let _ = self.resolve_pending_fault();
        }
        let command = match OperatorCommand::new(text, &self.id, self.now()) {
            Ok(c) => c,
            Err(e) => {
                self.send(out, ServerMessage::error(e.to_string()));
                return Ok(());
            }
        };
        match self.interpreter.interpret(&command, &self.context()) {
            Ok(intent) => {
                self.pump(Event::CommandInterpreted(intent), out);
                Ok(())
            }
            Err(e) => {
                self.send(out, ServerMessage::error(format!("interpreter failed: {e}")));
                Err(e)
            }
        }
    }

    /// Feeds `first` to the state machine and carries out the effects it
    /// produces until none are left.
    fn pump(&mut self, first: Event, out: &mut Outbox) {
        let mut queue = VecDeque::from([first]);
        while let Some(event) = queue.pop_front() {
            self.record(LogEntry::Event(event.clone()));
            let (next, effects) = self.controller.handle_event(&self.state, &event);
            self.state = next;
            self.send_state(out);
            for effect in effects {
                self.record(LogEntry::Effect(effect.clone()));
                match effect {
                    Effect::RequestSensorFrame { camera, task_id, subtask_index, .. } => {
                        let (frame, result) = self.controller.sense(
                            &self.scene,
                            camera,
                            &task_id,
                            subtask_index,
                            &self.config.criteria,
                        );
                        self.send(out, ServerMessage::frame(&frame));
                        queue.push_back(Event::SensorResult(result));
                    }
                    Effect::ExecuteMotion { subtask_index, .. } => {
                        queue.push_back(Event::MotionDone { subtask_index });
                    }
                    Effect::Emit { message } => {
                        let message = self.rephrase(message);
                        self.send(out, ServerMessage::robot_message(&message));
                        self.last_message = Some(message);
                    }
                }
            }
        }
    }

    fn rephrase(&self, message: RobotMessage) -> RobotMessage {
        let (Some(backend), MessageKind::Error, Phase::AwaitingHuman { error, .. }) =
            (&self.rephraser, message.kind, &self.state.phase)
        else {
            return message;
        };
        render_via_backend(error, self.controller.registry(), self.controller.templates(), backend.as_ref())
            .unwrap_or(message)
    }

    fn send_state(&mut self, out: &mut Outbox) {
        let snapshot = self.snapshot();
        self.send(out, ServerMessage::State { snapshot });
    }

    fn send(&mut self, out: &mut Outbox, body: ServerMessage) {
        let seq = self.record(LogEntry::Outbound(body.clone()));
        out.push(Envelope { session_id: self.id.clone(), seq, body });
    }

    fn now(&self) -> u64 {
        match self.config.clock {
            Clock::Logical => self.seq,
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis() as u64),
        }
    }

    fn record(&mut self, entry: LogEntry) -> u64 {
        self.seq += 1;
        self.log.push(LogRecord {
            timestamp_ms: self.now(),
            session_id: self.id.clone(),
            seq: self.seq,
            direction: entry.direction(),
            entry,
        });
        self.seq
    }
}

/// Result of folding a log through the state machine.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub final_state: SessionState,
    /// State carried by the last logged snapshot, if any.
    pub recorded_state: Option<SessionState>,
    /// Seq of the first logged snapshot that disagrees with the replayed
    /// state at that point.
    pub first_divergence: Option<u64>,
    pub events: usize,
}

impl Replay {
    pub fn is_consistent(&self) -> bool {
        self.first_divergence.is_none()
            && self.recorded_state.as_ref().is_none_or(|s| *s == self.final_state)
    }
}

/// Parses JSONL; blank lines are skipped, anything else unparsable is
/// reported with its 1-based line number.
pub fn parse_log(text: &str) -> Result<Vec<LogRecord>, ReplayError> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| ReplayError::CorruptLog {
            line: i + 1,
            reason: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Re-runs the logged events from idle. Needs only the registry; the
/// interpreter and scene are not consulted because their outputs are logged.
pub fn replay(records: &[LogRecord], controller: &TaskController) -> Result<Replay, ReplayError> {
    let mut out = Replay {
        final_state: SessionState::idle(),
        recorded_state: None,
        first_divergence: None,
        events: 0,
    };
    let mut prev: Option<&LogRecord> = None;
    for (i, r) in records.iter().enumerate() {
        if let Some(p) = prev {
            let reason = if r.session_id != p.session_id {
                Some(format!("session id changed from {} to {}", p.session_id, r.session_id))
            } else if r.seq <= p.seq {
                Some(format!("seq {} does not follow {}", r.seq, p.seq))
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(ReplayError::CorruptLog { line: i + 1, reason });
            }
        }
        if r.direction != r.entry.direction() {
            return Err(ReplayError::CorruptLog {
                line: i + 1,
                reason: format!("direction {:?} does not match entry", r.direction),
            });
        }
        match &r.entry {
            LogEntry::Reset { .. } => out.final_state = SessionState::idle(),
            LogEntry::Event(ev) => {
                out.final_state = controller.handle_event(&out.final_state, ev).0;
                out.events += 1;
            }
            LogEntry::Outbound(ServerMessage::State { snapshot }) => {
                let diverged = snapshot.state != out.final_state || !snapshot.is_derived_from_state(controller.registry());
                if diverged && out.first_divergence.is_none() {
                    out.first_divergence = Some(r.seq);
                }
                out.recorded_state = Some(snapshot.state.clone());
            }
            _ => {}
        }
        prev = Some(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comms::MessageTemplates;
    use crate::intent::RuleInterpreter;
    use crate::model::TaskRegistry;
    use crate::sensor::FaultKind;

    fn session(scenario: u8) -> Session {
        Session::new(
            "s1",
            Arc::new(TaskController::new(TaskRegistry::cable_shark(), MessageTemplates::default())),
            Arc::new(RuleInterpreter),
            CellScene::preset(scenario).unwrap(),
            SessionConfig { clock: Clock::Logical, ..Default::default() },
        )
    }

    fn say(s: &mut Session, text: &str) -> Outbox {
        s.submit(ClientMessage::Command { text: text.into() })
    }

    #[test]
    fn overlap_scenario_interrupts_then_completes() {
        let mut s = session(1);
        let out = say(&mut s, "Please assemble the cable shark");
        assert_eq!(s.state().phase.name(), "awaiting_human");
        assert!(out.iter().any(|m| matches!(&m.body,
            ServerMessage::RobotMessage { kind: MessageKind::Error, subtask_index: Some(1), .. })));

        let out = say(&mut s, "Overlap resolved. Proceed with the task.");
        assert_eq!(s.state().phase, Phase::Completed { task_id: "t1".into() });
        assert!(s.scene().faults.is_empty());
        let frames = out.iter().filter(|m| matches!(m.body, ServerMessage::Frame { .. })).count();
        assert_eq!(frames, 4);
    }

    #[test]
    fn outbound_seq_increases() {
        let mut s = session(2);
        let mut seqs: Vec<u64> = s.hello().iter().map(|m| m.seq).collect();
        seqs.extend(say(&mut s, "assemble the cable shark").iter().map(|m| m.seq));
        assert!(seqs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn malformed_text_keeps_state() {
        let mut s = session(1);
        let out = s.handle_text("{\"type\": ");
        assert_eq!(out.len(), 1);
        assert!(matches!(out[0].body, ServerMessage::Error { .. }));
        assert_eq!(*s.state(), SessionState::idle());
    }

    #[test]
    fn wrong_session_id_rejected() {
        let mut s = session(1);
        let out = s.handle(Envelope {
            session_id: "other".into(),
            seq: 1,
            body: ClientMessage::Command { text: "assemble the cable shark".into() },
        });
        assert!(matches!(out[0].body, ServerMessage::Error { .. }));
        assert_eq!(*s.state(), SessionState::idle());
    }

    #[test]
    fn inject_and_load() {
        let mut s = session(1);
        let out = s.submit(ClientMessage::InjectFault { kind: FaultKind::Missing, part: crate::model::PartClass::Housing });
        assert!(matches!(out[0].body, ServerMessage::Error { .. }), "housing already faulted");
        s.submit(ClientMessage::LoadScenario { id: 3 });
        assert_eq!(s.scene().scenario_id, Some(3));
        let out = s.submit(ClientMessage::LoadScenario { id: 9 });
        assert!(matches!(out[0].body, ServerMessage::Error { .. }));
    }

    #[test]
    fn replay_matches_live_state() {
        let mut s = session(3);
        say(&mut s, "Please assemble the cable shark");
        say(&mut s, "what?");
        say(&mut s, "I've placed the spring component. Please proceed.");
        let records = parse_log(&wire::to_jsonl(s.log())).unwrap();
        let r = replay(&records, s.controller()).unwrap();
        assert!(r.is_consistent());
        assert_eq!(r.final_state, *s.state());
    }

    #[test]
    fn replay_rejects_bad_logs() {
        let mut s = session(1);
        say(&mut s, "Please assemble the cable shark");
        let text = wire::to_jsonl(s.log());
        let cut = &text[..text.len() - 10];
        assert!(matches!(parse_log(cut), Err(ReplayError::CorruptLog { .. })));

        let mut records = s.log().to_vec();
        records.swap(1, 2);
        assert!(matches!(replay(&records, s.controller()), Err(ReplayError::CorruptLog { line: 3, .. })));

        let empty = replay(&[], s.controller()).unwrap();
        assert_eq!(empty.final_state, SessionState::idle());
    }
}
