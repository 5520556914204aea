//! Bounded exhaustive checking of the task state machine.
//!
//! [`explore`] visits every event sequence up to a given length over a
//! fixed event alphabet, starting from idle, and checks each transition
//! against the properties in [`Property`]. Every property is a predicate on
//! a single `(state, event, next state, effects)` step, so it is enough to
//! check each reachable state with each remaining depth once. A state is
//! re-expanded only when reached with more remaining depth than before.
//!
//! [`enumerate`] walks the same sequences one by one with no sharing; it
//! is exponential and exists to cross-check [`explore`] at small depths.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use crate::intent::Intent;
use crate::model::{ErrorKind, MessageKind, Orientation, PartClass};
use crate::orchestrator::{Effect, Event, Phase, SessionState, TaskController};
use crate::sensor::{PickupPose, ValidityResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    /// Resuming the interrupted task lands on the interrupted subtask.
    ResumeTarget,
    /// Within one task run completed_index only stays or grows by one, and
    /// only a finished motion grows it.
    ProgressStep,
    /// One error message exactly when AwaitingHuman is entered.
    ErrorPerInterrupt,
    /// One completion message exactly when Completed is entered.
    CompletionPerTask,
    /// The next state satisfies [`SessionState::check`].
    StateInvariant,
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Property::ResumeTarget => "resume targets the interrupted subtask",
            Property::ProgressStep => "completed_index never skips or regresses",
            Property::ErrorPerInterrupt => "one error message per interrupt",
            Property::CompletionPerTask => "one completion message per task",
            Property::StateInvariant => "state invariants hold",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub property: Property,
    pub detail: String,
    /// Events from idle up to and including the offending one.
    pub path: Vec<Event>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub max_depth: usize,
    pub alphabet_size: usize,
    pub distinct_states: usize,
    pub transitions_checked: u64,
    /// Number of event sequences of length 0..=max_depth, all of which the
    /// run accounts for.
    pub sequences_covered: u128,
    pub counterexamples: Vec<Counterexample>,
    #[serde(skip)]
    pub states: HashSet<SessionState>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.counterexamples.is_empty()
    }
}

/// The event alphabet for `task_id`: every command intent the machine
/// distinguishes (including a resume for a task that does not exist), a
/// valid frame, an invalid frame of each error kind, and a motion completion
/// and failure for each subtask index `1..=subtasks`.
pub fn alphabet(task_id: &str, subtasks: usize) -> Vec<Event> {
    let mut events = vec![
        Event::CommandInterpreted(Intent::execute(task_id, vec![])),
        Event::CommandInterpreted(Intent::resume(task_id, vec![])),
        Event::CommandInterpreted(Intent::resume("no_such_task", vec![])),
        Event::CommandInterpreted(Intent::unknown("unmatched")),
        Event::SensorResult(ValidityResult::Valid {
            detection_id: 0,
            pose: PickupPose { x: 0.0, y: 0.0, z: 0.0, orientation: Orientation::Parallel },
        }),
    ];
    for kind in [ErrorKind::Overlap, ErrorKind::MissingComponent, ErrorKind::Misassembled, ErrorKind::InvalidSensorData] {
        events.push(Event::SensorResult(ValidityResult::Invalid {
            kind,
            part: PartClass::Housing,
            detection_ids: vec![],
            reason: None,
        }));
    }
    for i in 1..=subtasks {
        events.push(Event::MotionDone { subtask_index: i });
    }
    for i in 1..=subtasks {
        events.push(Event::MotionFailed { subtask_index: i, reason: "stalled".into() });
    }
    events
}

fn count(effects: &[Effect], kind: MessageKind) -> usize {
    effects
        .iter()
        .filter(|e| matches!(e, Effect::Emit { message } if message.kind == kind))
        .count()
}

/// Checks one step. Returns every property it violates.
pub fn check_step(
    controller: &TaskController,
    before: &SessionState,
    event: &Event,
    after: &SessionState,
    effects: &[Effect],
) -> Vec<(Property, String)> {
    let mut out = Vec::new();

    if let Err(e) = after.check(controller.registry()) {
        out.push((Property::StateInvariant, e));
    }

    if let (Phase::AwaitingHuman { task_id, error }, Event::CommandInterpreted(intent)) = (&before.phase, event) {
        if intent.kind == crate::intent::IntentKind::ResumeTask(task_id.clone()) {
            let want = Phase::AwaitingSensor { task_id: task_id.clone(), subtask_index: error.subtask_index };
            if after.phase != want {
                out.push((Property::ResumeTarget, format!("resumed into {:?}, expected {want:?}", after.phase)));
            }
        }
    }

    let from_rest = matches!(before.phase, Phase::Idle | Phase::Completed { .. });
    match (&before.progress, &after.progress) {
        _ if from_rest && after.phase == before.phase => {
            if after.progress != before.progress {
                out.push((Property::ProgressStep, "progress changed while at rest".into()));
            }
        }
        (_, Some(a)) if from_rest => {
            if a.completed_index != 0 {
                out.push((Property::ProgressStep, format!("task started at completed_index {}", a.completed_index)));
            }
        }
        (Some(b), Some(a)) => {
            let grew = a.completed_index as i64 - b.completed_index as i64;
            let by_motion = matches!(
                (&before.phase, event),
                (Phase::Executing { subtask_index, .. }, Event::MotionDone { subtask_index: d }) if d == subtask_index
            );
            if a.task_id != b.task_id || !(grew == 0 || (grew == 1 && by_motion)) {
                out.push((
                    Property::ProgressStep,
                    format!("completed_index {} -> {} on {event:?}", b.completed_index, a.completed_index),
                ));
            }
        }
        (Some(_), None) => out.push((Property::ProgressStep, "progress dropped".into())),
        _ => {}
    }

    let entered_human = matches!(after.phase, Phase::AwaitingHuman { .. })
        && !matches!(before.phase, Phase::AwaitingHuman { .. });
    let errors = count(effects, MessageKind::Error);
    if errors != usize::from(entered_human) {
        out.push((
            Property::ErrorPerInterrupt,
            format!("{errors} error message(s), entered awaiting_human: {entered_human}"),
        ));
    }

    let entered_done =
        matches!(after.phase, Phase::Completed { .. }) && !matches!(before.phase, Phase::Completed { .. });
    let completions = count(effects, MessageKind::Completion);
    if completions != usize::from(entered_done) {
        out.push((
            Property::CompletionPerTask,
            format!("{completions} completion message(s), entered completed: {entered_done}"),
        ));
    }

    out
}

struct Explorer<'a> {
    controller: &'a TaskController,
    alphabet: &'a [Event],
    best: HashMap<SessionState, usize>,
    path: Vec<Event>,
    transitions: u64,
    counterexamples: Vec<Counterexample>,
}

impl Explorer<'_> {
    fn visit(&mut self, state: &SessionState, remaining: usize) {
        match self.best.get(state) {
            Some(&r) if r >= remaining => return,
            _ => {
                self.best.insert(state.clone(), remaining);
            }
        }
        if remaining == 0 {
            return;
        }
        for event in self.alphabet {
            let (next, effects) = self.controller.handle_event(state, event);
            self.transitions += 1;
            self.path.push(event.clone());
            for (property, detail) in check_step(self.controller, state, event, &next, &effects) {
                self.counterexamples.push(Counterexample { property, detail, path: self.path.clone() });
            }
            self.visit(&next, remaining - 1);
            self.path.pop();
        }
    }
}

/// Number of sequences of length `0..=depth` over `n` symbols.
pub fn sequence_count(n: usize, depth: usize) -> u128 {
    (0..=depth as u32).map(|k| (n as u128).pow(k)).sum()
}

pub fn explore(controller: &TaskController, alphabet: &[Event], max_depth: usize) -> CheckReport {
    let mut ex = Explorer {
        controller,
        alphabet,
        best: HashMap::new(),
        path: Vec::new(),
        transitions: 0,
        counterexamples: Vec::new(),
    };
    ex.visit(&SessionState::idle(), max_depth);
    CheckReport {
        max_depth,
        alphabet_size: alphabet.len(),
        distinct_states: ex.best.len(),
        transitions_checked: ex.transitions,
        sequences_covered: sequence_count(alphabet.len(), max_depth),
        counterexamples: ex.counterexamples,
        states: ex.best.into_keys().collect(),
    }
}

/// Literal enumeration of every sequence of length `0..=max_depth`.
/// Returns the sequence count, the reachable states and the properties
/// violated anywhere.
pub fn enumerate(
    controller: &TaskController,
    alphabet: &[Event],
    max_depth: usize,
) -> (u128, HashSet<SessionState>, HashSet<Property>) {
    let mut sequences = 0u128;
    let mut states = HashSet::new();
    let mut violated = HashSet::new();
    let mut digits = Vec::with_capacity(max_depth);
    for len in 0..=max_depth {
        digits.clear();
        digits.resize(len, 0usize);
        loop {
            let mut state = SessionState::idle();
            states.insert(state.clone());
            for &d in &digits {
                let (next, effects) = controller.handle_event(&state, &alphabet[d]);
                for (p, _) in check_step(controller, &state, &alphabet[d], &next, &effects) {
                    violated.insert(p);
                }
                state = next;
                states.insert(state.clone());
            }
            sequences += 1;
            // Odometer increment.
            let mut i = len;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                digits[i] += 1;
                if digits[i] < alphabet.len() {
                    break;
                }
                digits[i] = 0;
            }
            if digits.iter().all(|&d| d == 0) {
                break;
            }
        }
    }
    (sequences, states, violated)
}
