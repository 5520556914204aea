//! Task control: a total, I/O-free state machine over session events.
//!
//! `handle_event` consumes one event and returns the next state plus the
//! effects the caller must carry out (request a frame, run a motion, emit a
//! message). Any state/event pair not listed below leaves the state untouched
//! and emits a clarification.
//!
//! | state | event | next state | effects |
//! |---|---|---|---|
//! | Idle, Completed | execute(t) | AwaitingSensor(t, 1) | request frame |
//! | AwaitingSensor(t, j) | valid frame | Executing(t, j) | run motion |
//! | AwaitingSensor(t, j) | invalid frame | AwaitingHuman(t, e@j) | error message |
//! | Executing(t, j) | motion done j, j < k | AwaitingSensor(t, j+1) | request frame |
//! | Executing(t, k) | motion done k | Completed(t) | completion message |
//! | Executing(t, j) | motion failed j | AwaitingHuman(t, e@j) | error message |
//! | AwaitingHuman(t, e@j) | resume(t) | AwaitingSensor(t, j) | request frame |

use serde::{Deserialize, Serialize};

use crate::comms::{render_clarification, render_completion, render_error, MessageTemplates};
use crate::intent::{Intent, IntentKind};
use crate::model::{
    ErrorDetails, ErrorEvent, ErrorKind, MessageKind, PartClass, RobotMessage, TaskProgress,
    TaskRegistry,
};
use crate::sensor::{
    render_frame, validate_frame, CameraId, CellScene, PickupPose, SensorFrame, ValidityCriteria,
    ValidityResult,
};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Phase {
    Idle,
    AwaitingSensor { task_id: String, subtask_index: usize },
    Executing { task_id: String, subtask_index: usize },
    AwaitingHuman { task_id: String, error: ErrorEvent },
    Completed { task_id: String },
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Idle => "idle",
            Phase::AwaitingSensor { .. } => "awaiting_sensor",
            Phase::Executing { .. } => "executing",
            Phase::AwaitingHuman { .. } => "awaiting_human",
            Phase::Completed { .. } => "completed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SessionState {
    pub phase: Phase,
    /// Absent only while idle before the first task.
    pub progress: Option<TaskProgress>,
}

impl Default for SessionState {
    fn default() -> Self {
        Self::idle()
    }
}

impl SessionState {
    pub fn idle() -> Self {
        Self {
            phase: Phase::Idle,
            progress: None,
        }
    }

    pub fn active_task(&self) -> Option<&str> {
        match &self.phase {
            Phase::Idle | Phase::Completed { .. } => None,
            Phase::AwaitingSensor { task_id, .. }
            | Phase::Executing { task_id, .. }
            | Phase::AwaitingHuman { task_id, .. } => Some(task_id),
        }
    }

    /// Checks the phase/progress invariants; returns a description of the
    /// first violation.
    pub fn check(&self, registry: &TaskRegistry) -> Result<(), String> {
        let k_of = |task_id: &str| {
            registry
                .task(task_id)
                .map(|t| t.len())
                .ok_or_else(|| format!("unknown task {task_id}"))
        };
        let progress_for = |task_id: &str| match &self.progress {
            Some(p) if p.task_id == task_id => Ok(p),
            _ => Err(format!("progress does not track {task_id}")),
        };
        if let Some(p) = &self.progress {
            if !p.is_consistent(k_of(&p.task_id)?) {
                return Err(format!("inconsistent progress {p:?}"));
            }
        }
        match &self.phase {
            Phase::Idle => Ok(()),
            Phase::AwaitingSensor { task_id, subtask_index }
            | Phase::Executing { task_id, subtask_index } => {
                let p = progress_for(task_id)?;
                if *subtask_index != p.next_index() || *subtask_index > k_of(task_id)? {
                    return Err(format!("subtask {subtask_index} with {} completed", p.completed_index));
                }
                if p.pending_error.is_some() {
                    return Err("pending error outside awaiting_human".into());
                }
                Ok(())
            }
            Phase::AwaitingHuman { task_id, error } => {
                let p = progress_for(task_id)?;
                if p.pending_error.as_ref() != Some(error) {
                    return Err("awaiting_human without matching pending error".into());
                }
                Ok(())
            }
            Phase::Completed { task_id } => {
                let p = progress_for(task_id)?;
                if p.completed_index != k_of(task_id)? || p.pending_error.is_some() {
                    return Err("completed before the last subtask".into());
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", content = "data", rename_all = "snake_case")]
pub enum Event {
    CommandInterpreted(Intent),
    SensorResult(ValidityResult),
    MotionDone { subtask_index: usize },
    MotionFailed { subtask_index: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum Effect {
    RequestSensorFrame {
        camera: CameraId,
        task_id: String,
        subtask_index: usize,
        part: PartClass,
    },
    ExecuteMotion {
        task_id: String,
        subtask_index: usize,
        pose: PickupPose,
    },
    Emit { message: RobotMessage },
}

/// Camera used to locate parts before picking.
pub const PICKUP_CAMERA: CameraId = CameraId::MatCamera;

/// Registry and message templates the state machine renders against.
#[derive(Debug, Clone)]
pub struct TaskController {
    registry: TaskRegistry,
    templates: MessageTemplates,
}

impl TaskController {
    pub fn new(registry: TaskRegistry, templates: MessageTemplates) -> Self {
        Self {
            registry,
            templates,
        }
    }

    pub fn registry(&self) -> &TaskRegistry {
        &self.registry
    }

    pub fn templates(&self) -> &MessageTemplates {
        &self.templates
    }

    fn clarify(&self, state: &SessionState, reason: &str) -> (SessionState, Vec<Effect>) {
        let message = render_clarification(reason, state.active_task(), &self.templates);
        (state.clone(), vec![Effect::Emit { message }])
    }

    fn request(&self, task_id: &str, subtask_index: usize) -> Option<Effect> {
        let sub = self.registry.task(task_id)?.subtask(subtask_index)?;
        Some(Effect::RequestSensorFrame {
            camera: PICKUP_CAMERA,
            task_id: task_id.to_string(),
            subtask_index,
            part: sub.expected_part,
        })
    }

    fn interrupt(
        &self,
        progress: &TaskProgress,
        kind: ErrorKind,
        details: ErrorDetails,
    ) -> (SessionState, Vec<Effect>) {
        let error = ErrorEvent {
            kind,
            task_id: progress.task_id.clone(),
            subtask_index: progress.next_index(),
            details,
        };
        let message = render_error(&error, &self.registry, &self.templates).unwrap_or_else(|e| {
            RobotMessage {
                kind: MessageKind::Error,
                text: format!("Task {} stopped at step {}: {e}. Please check the cell.", error.task_id, error.subtask_index),
                task_id: Some(error.task_id.clone()),
                subtask_index: Some(error.subtask_index),
                correlation_id: format!("{}:{}:error", error.task_id, error.subtask_index),
                degraded: true,
            }
        });
        let mut progress = progress.clone();
        progress.pending_error = Some(error.clone());
        let state = SessionState {
            phase: Phase::AwaitingHuman {
                task_id: progress.task_id.clone(),
                error,
            },
            progress: Some(progress),
        };
        (state, vec![Effect::Emit { message }])
    }

    fn start(&self, state: &SessionState, task_id: &str) -> (SessionState, Vec<Effect>) {
        match self.request(task_id, 1) {
            Some(effect) => (
                SessionState {
                    phase: Phase::AwaitingSensor {
                        task_id: task_id.to_string(),
                        subtask_index: 1,
                    },
                    progress: Some(TaskProgress::start(task_id)),
                },
                vec![effect],
            ),
            None => self.clarify(state, &format!("unknown task {task_id}")),
        }
    }

    /// Total transition function; never panics.
    pub fn handle_event(&self, state: &SessionState, event: &Event) -> (SessionState, Vec<Effect>) {
        let progress = state.progress.as_ref();
        match (&state.phase, event) {
            (Phase::Idle | Phase::Completed { .. }, Event::CommandInterpreted(intent)) => {
                match &intent.kind {
                    IntentKind::ExecuteTask(t) => self.start(state, t),
                    IntentKind::ResumeTask(_) => self.clarify(state, "there is no interrupted task to resume"),
                    IntentKind::Unknown(reason) => self.clarify(state, reason),
                }
            }

            (Phase::AwaitingSensor { task_id, subtask_index }, Event::SensorResult(result)) => {
                let Some(p) = progress.filter(|p| p.task_id == *task_id) else {
                    return self.clarify(state, "no progress record for the active task");
                };
                match result {
                    ValidityResult::Valid { pose, .. } => (
                        SessionState {
                            phase: Phase::Executing {
                                task_id: task_id.clone(),
                                subtask_index: *subtask_index,
                            },
                            progress: Some(p.clone()),
                        },
                        vec![Effect::ExecuteMotion {
                            task_id: task_id.clone(),
                            subtask_index: *subtask_index,
                            pose: *pose,
                        }],
                    ),
                    ValidityResult::Invalid {
                        kind,
                        part,
                        detection_ids,
                        reason,
                    } => self.interrupt(
                        p,
                        *kind,
                        ErrorDetails {
                            part: Some(*part),
                            detection_ids: detection_ids.clone(),
                            reason: reason.clone(),
                        },
                    ),
                }
            }

            (Phase::Executing { task_id, subtask_index }, Event::MotionDone { subtask_index: done })
                if done == subtask_index =>
            {
                let (Some(p), Some(task)) = (
                    progress.filter(|p| p.task_id == *task_id),
                    self.registry.task(task_id),
                ) else {
                    return self.clarify(state, "no progress record for the active task");
                };
                let mut p = p.clone();
                p.completed_index = *done;
                if p.completed_index >= task.len() {
                    let message = render_completion(task, &self.templates);
                    (
                        SessionState {
                            phase: Phase::Completed {
                                task_id: task_id.clone(),
                            },
                            progress: Some(p),
                        },
                        vec![Effect::Emit { message }],
                    )
                } else {
                    let next = p.next_index();
                    match self.request(task_id, next) {
                        Some(effect) => (
                            SessionState {
                                phase: Phase::AwaitingSensor {
                                    task_id: task_id.clone(),
                                    subtask_index: next,
                                },
                                progress: Some(p),
                            },
                            vec![effect],
                        ),
                        None => self.clarify(state, "next subtask is not defined"),
                    }
                }
            }

            (
                Phase::Executing { task_id, subtask_index },
                Event::MotionFailed { subtask_index: failed, reason },
            ) if failed == subtask_index => {
                let Some(p) = progress.filter(|p| p.task_id == *task_id) else {
                    return self.clarify(state, "no progress record for the active task");
                };
                let part = self
                    .registry
                    .task(task_id)
                    .and_then(|t| t.subtask(*subtask_index))
                    .map(|s| s.expected_part);
                self.interrupt(
                    p,
                    ErrorKind::InvalidSensorData,
                    ErrorDetails {
                        part,
                        detection_ids: Vec::new(),
                        reason: Some(format!("motion failed: {reason}")),
                    },
                )
            }

            (Phase::AwaitingHuman { task_id, error }, Event::CommandInterpreted(intent)) => {
                match &intent.kind {
                    IntentKind::ResumeTask(t) if t == task_id => {
                        let Some(p) = progress.filter(|p| p.task_id == *task_id) else {
                            return self.clarify(state, "no progress record for the active task");
                        };
                        let mut p = p.clone();
                        p.pending_error = None;
                        let index = error.subtask_index;
                        match self.request(task_id, index) {
                            Some(effect) if index == p.next_index() => (
                                SessionState {
                                    phase: Phase::AwaitingSensor {
                                        task_id: task_id.clone(),
                                        subtask_index: index,
                                    },
                                    progress: Some(p),
                                },
                                vec![effect],
                            ),
                            _ => self.clarify(state, "interrupted subtask is not defined"),
                        }
                    }
                    IntentKind::ResumeTask(t) => {
                        self.clarify(state, &format!("task {t} is not the interrupted task"))
                    }
                    IntentKind::ExecuteTask(_) => self.clarify(
                        state,
                        &format!("task {task_id} is waiting for an error to be resolved"),
                    ),
                    IntentKind::Unknown(reason) => self.clarify(state, reason),
                }
            }

            (Phase::AwaitingSensor { task_id, .. } | Phase::Executing { task_id, .. }, Event::CommandInterpreted(intent)) => {
                match &intent.kind {
                    IntentKind::ExecuteTask(_) => {
                        self.clarify(state, &format!("task {task_id} is in progress"))
                    }
                    IntentKind::ResumeTask(_) => {
                        self.clarify(state, &format!("task {task_id} is not interrupted"))
                    }
                    IntentKind::Unknown(reason) => self.clarify(state, reason),
                }
            }

            (_, Event::SensorResult(_)) => self.clarify(state, "unexpected sensor result"),
            (_, Event::MotionDone { subtask_index }) => {
                self.clarify(state, &format!("unexpected motion completion for step {subtask_index}"))
            }
            (_, Event::MotionFailed { subtask_index, .. }) => {
                self.clarify(state, &format!("unexpected motion failure for step {subtask_index}"))
            }
        }
    }

    /// Renders and validates the frame a `RequestSensorFrame` effect asks for.
    pub fn sense(
        &self,
        scene: &CellScene,
        camera: CameraId,
        task_id: &str,
        subtask_index: usize,
        criteria: &ValidityCriteria,
    ) -> (SensorFrame, ValidityResult) {
        let frame = render_frame(scene, camera);
        let result = match self.registry.task(task_id).and_then(|t| t.subtask(subtask_index)) {
            Some(sub) => validate_frame(&frame, sub, criteria, &scene.camera_transform),
            None => ValidityResult::Invalid {
                kind: ErrorKind::InvalidSensorData,
                part: PartClass::Housing,
                detection_ids: Vec::new(),
                reason: Some(format!("task {task_id} has no subtask {subtask_index}")),
            },
        };
        (frame, result)
    }

    /// Drives one subtask from `AwaitingSensor`: sense, validate, and on a
    /// valid frame run the (simulated, always successful) motion.
    pub fn run_subtask_cycle(
        &self,
        state: &SessionState,
        scene: &CellScene,
        criteria: &ValidityCriteria,
    ) -> CycleOutcome {
        let mut outcome = CycleOutcome {
            state: state.clone(),
            messages: Vec::new(),
            effects: Vec::new(),
        };
        let Phase::AwaitingSensor { task_id, subtask_index } = &state.phase else {
            return outcome;
        };
        let (_, result) = self.sense(scene, PICKUP_CAMERA, task_id, *subtask_index, criteria);
        let mut event = Some(Event::SensorResult(result));
        while let Some(ev) = event.take() {
            let (next, effects) = self.handle_event(&outcome.state, &ev);
            outcome.state = next;
            for effect in effects {
                match &effect {
                    Effect::Emit { message } => outcome.messages.push(message.clone()),
                    Effect::ExecuteMotion { subtask_index, .. } => {
                        event = Some(Event::MotionDone {
                            subtask_index: *subtask_index,
                        })
                    }
                    Effect::RequestSensorFrame { .. } => {}
                }
                outcome.effects.push(effect);
            }
        }
        outcome
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutcome {
    pub state: SessionState,
    pub messages: Vec<RobotMessage>,
    pub effects: Vec<Effect>,
}

/// [`TaskController::handle_event`] with the bundled message templates.
pub fn handle_event(
    state: &SessionState,
    event: &Event,
    registry: &TaskRegistry,
) -> (SessionState, Vec<Effect>) {
    TaskController::new(registry.clone(), MessageTemplates::default()).handle_event(state, event)
}
