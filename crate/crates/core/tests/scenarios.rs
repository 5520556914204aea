//! Scripted scenario runs, their event logs, and log replay.

use std::sync::Arc;

use hrc_core::comms::MessageTemplates;
use hrc_core::error::ScenarioError;
use hrc_core::eval::{run_eval, Category, CorpusEntry, InstructionCorpus};
use hrc_core::intent::{Intent, InterpretationContext, InterpreterBackend, RuleInterpreter};
use hrc_core::model::{MessageKind, OperatorCommand, TaskRegistry};
use hrc_core::orchestrator::{Phase, TaskController};
use hrc_core::scenario::{bundled_script, is_interaction_sequence, run_scenario, ScriptLine, TranscriptEntry};
use hrc_core::sensor::CellScene;
use hrc_core::session::{parse_log, replay, Clock, Session, SessionConfig};
use hrc_core::wire::{to_jsonl, ClientMessage, ServerMessage};
use hrc_core::{InterpretError, ReplayError};

fn controller() -> TaskController {
    TaskController::new(TaskRegistry::cable_shark(), MessageTemplates::default())
}

fn rule() -> Arc<dyn InterpreterBackend> {
    Arc::new(RuleInterpreter)
}

#[test]
fn bundled_scenarios_replay_exactly() {
    for id in 1..=3 {
        let run = run_scenario(id, rule(), &bundled_script(id).unwrap()).unwrap();
        let records = parse_log(&to_jsonl(&run.log)).unwrap();
        let r = replay(&records, &controller()).unwrap();
        assert!(r.is_consistent(), "scenario {id}");
        assert_eq!(r.final_state, run.transcript.final_state);
        assert_eq!(r.final_state.phase, Phase::Completed { task_id: "t1".into() });
    }
}

#[test]
fn logs_and_transcripts_are_byte_identical_across_runs() {
    for id in 1..=3 {
        let script = bundled_script(id).unwrap();
        let a = run_scenario(id, rule(), &script).unwrap();
        let b = run_scenario(id, rule(), &script).unwrap();
        assert_eq!(to_jsonl(&a.log), to_jsonl(&b.log));
        assert_eq!(serde_json::to_string(&a.transcript).unwrap(), serde_json::to_string(&b.transcript).unwrap());
    }
}

#[test]
fn error_messages_name_the_faulted_part() {
    for (id, part) in [(1, "housing"), (2, "wedge"), (3, "spring")] {
        let run = run_scenario(id, rule(), &bundled_script(id).unwrap()).unwrap();
        let (kind, text, _) = run.transcript.messages().next().unwrap();
        assert_eq!(kind, MessageKind::Error);
        assert!(text.contains(part), "{text}");
    }
}

#[test]
fn fix_is_applied_before_the_resume_command() {
    let run = run_scenario(3, rule(), &bundled_script(3).unwrap()).unwrap();
    let pos = |pred: &dyn Fn(&TranscriptEntry) -> bool| run.transcript.entries.iter().position(pred).unwrap();
    let fixed = pos(&|e| matches!(e, TranscriptEntry::FaultResolved { .. }));
    let second_command = run
        .transcript
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| matches!(e, TranscriptEntry::Command { .. }))
        .nth(1)
        .unwrap()
        .0;
    assert!(fixed < second_command);
}

#[test]
fn clarification_round_adds_a_command() {
    let script = [
        ScriptLine::Say("Please assemble the cable shark".into()),
        ScriptLine::Turn { say: "hmm".into(), fix: false },
        ScriptLine::Say("Fixed.".into()),
    ];
    let run = run_scenario(2, rule(), &script).unwrap();
    let kinds: Vec<MessageKind> = run.transcript.messages().map(|m| m.0).collect();
    assert_eq!(kinds, [MessageKind::Error, MessageKind::Clarification, MessageKind::Completion]);
    use hrc_core::scenario::Step::*;
    let steps = run.transcript.steps();
    assert_eq!(steps, [Command, SensorRequest, Error, Command, Command, SensorRequest, Completion]);
    assert!(!is_interaction_sequence(&steps));
}

struct Failing;

impl InterpreterBackend for Failing {
    fn name(&self) -> &str {
        "failing"
    }
    fn interpret(&self, _: &OperatorCommand, _: &InterpretationContext<'_>) -> Result<Intent, InterpretError> {
        Err(InterpretError::Timeout)
    }
}

#[test]
fn interpreter_failure_surfaces_as_error() {
    let script = [ScriptLine::Say("Please assemble the cable shark".into())];
    assert!(matches!(
        run_scenario(1, Arc::new(Failing), &script),
        Err(ScenarioError::Interpret(InterpretError::Timeout))
    ));

    let mut s = Session::new(
        "s",
        Arc::new(controller()),
        Arc::new(Failing),
        CellScene::preset(1).unwrap(),
        SessionConfig { clock: Clock::Logical, ..Default::default() },
    );
    let out = s.submit(ClientMessage::Command { text: "Please assemble the cable shark".into() });
    assert_eq!(out.len(), 1);
    assert!(matches!(&out[0].body, ServerMessage::Error { reason } if reason.contains("timed out")));
    assert_eq!(s.state().phase, Phase::Idle);
}

#[test]
fn unknown_scenario_rejected() {
    assert!(matches!(run_scenario(7, rule(), &[]), Err(ScenarioError::UnknownScenario(7))));
}

#[test]
fn tampered_log_is_detected() {
    let run = run_scenario(1, rule(), &bundled_script(1).unwrap()).unwrap();
    let mut records = run.log.clone();
    // Drop the final motion; the last snapshot no longer follows.
    let last_motion = records
        .iter()
        .rposition(|r| matches!(r.entry, hrc_core::wire::LogEntry::Event(hrc_core::orchestrator::Event::MotionDone { .. })))
        .unwrap();
    records.remove(last_motion);
    let r = replay(&records, &controller()).unwrap();
    assert!(!r.is_consistent());

    let text = to_jsonl(&run.log).replacen("\"seq\":5", "\"seq\":1", 1);
    let parsed = parse_log(&text).unwrap();
    assert!(matches!(replay(&parsed, &controller()), Err(ReplayError::CorruptLog { .. })));

    assert!(matches!(parse_log("{\"seq\":\n"), Err(ReplayError::CorruptLog { line: 1, .. })));
    assert_eq!(replay(&parse_log("").unwrap(), &controller()).unwrap().final_state, Default::default());
}

#[test]
fn vague_instructions_fail_under_rule_backend() {
    // Negative control: phrasings with no keyword and no part name are not
    // understood, so the harness can report less than 100%.
    let texts = ["ok", "go on then", "it's good now", "ready", "next please"];
    let entries = texts
        .iter()
        .enumerate()
        .map(|(i, t)| CorpusEntry {
            scenario: 1,
            category: Category::LeastSpecific,
            variation: i as u8 + 1,
            text: t.to_string(),
            reconstructed: true,
        })
        .collect();
    let report = run_eval(&InstructionCorpus { entries }, rule(), 3);
    let cell = report.cell(1, Category::LeastSpecific).unwrap();
    assert_eq!((cell.trials, cell.successes, cell.success_rate), (15, 0, 0));
    assert_eq!(report.failures.len(), 15);
}
