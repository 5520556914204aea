//! Instruction-variation experiment: feeds each corpus instruction to an
//! interpreter while a scenario is waiting on the operator, and tabulates
//! first-shot success rates.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::comms::MessageTemplates;
use crate::intent::{IntentKind, InterpreterBackend};
use crate::model::TaskRegistry;
use crate::orchestrator::{Phase, TaskController};
use crate::sensor::CellScene;
use crate::session::{Clock, Session, SessionConfig};

pub const VARIATIONS_PER_CELL: usize = 5;
pub const SCENARIOS: [u8; 3] = [1, 2, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Specific,
    ModeratelySpecific,
    LeastSpecific,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Specific, Category::ModeratelySpecific, Category::LeastSpecific];

    pub fn label(self) -> &'static str {
        match self {
            Category::Specific => "Specific",
            Category::ModeratelySpecific => "Moderately Specific",
            Category::LeastSpecific => "Least Specific",
        }
    }
}

pub fn scenario_label(id: u8) -> String {
    match id {
        1 => "Scenario 1: Component Overlap".into(),
        2 => "Scenario 2: Incorrectly Assembled Part".into(),
        3 => "Scenario 3: Missing Component".into(),
        n => format!("Scenario {n}"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub scenario: u8,
    pub category: Category,
    pub variation: u8,
    pub text: String,
    /// Completed by hand rather than printed in full in the source table.
    #[serde(default)]
    pub reconstructed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InstructionCorpus {
    pub entries: Vec<CorpusEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("malformed corpus: {0}")]
    Json(String),
    #[error("entry {index}: scenario {scenario} has no preset")]
    UnknownScenario { index: usize, scenario: u8 },
    #[error("entry {index}: variation {variation} outside 1..={VARIATIONS_PER_CELL}")]
    BadVariation { index: usize, variation: u8 },
    #[error("entry {index}: empty text")]
    EmptyText { index: usize },
    #[error("scenario {scenario} {category:?} variation {variation} appears more than once")]
    Duplicate { scenario: u8, category: Category, variation: u8 },
    #[error("scenario {scenario} {category:?} has {count} variation(s), expected {VARIATIONS_PER_CELL}")]
    IncompleteCell { scenario: u8, category: Category, count: usize },
}

impl InstructionCorpus {
    /// Parses without validating.
    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        serde_json::from_str(text).map_err(|e| CorpusError::Json(e.to_string()))
    }

    /// The shipped 45-entry corpus.
    pub fn bundled() -> Self {
        Self::from_json(crate::data::CORPUS_JSON).expect("bundled corpus parses")
    }

    /// Exactly five variations, numbered 1 to 5, in each of the nine
    /// (scenario, category) cells.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen: BTreeMap<(u8, Category), Vec<u8>> = BTreeMap::new();
        for (index, e) in self.entries.iter().enumerate() {
            if !SCENARIOS.contains(&e.scenario) {
                return Err(CorpusError::UnknownScenario { index, scenario: e.scenario });
            }
            if !(1..=VARIATIONS_PER_CELL as u8).contains(&e.variation) {
                return Err(CorpusError::BadVariation { index, variation: e.variation });
            }
            if e.text.trim().is_empty() {
                return Err(CorpusError::EmptyText { index });
            }
            let cell = seen.entry((e.scenario, e.category)).or_default();
            if cell.contains(&e.variation) {
                return Err(CorpusError::Duplicate { scenario: e.scenario, category: e.category, variation: e.variation });
            }
            cell.push(e.variation);
        }
        for scenario in SCENARIOS {
            for category in Category::ALL {
                let count = seen.get(&(scenario, category)).map_or(0, Vec::len);
                if count != VARIATIONS_PER_CELL {
                    return Err(CorpusError::IncompleteCell { scenario, category, count });
                }
            }
        }
        Ok(())
    }
}

/// `round(100 * successes / trials)` with halves rounded up; 0 for no trials.
pub fn success_percent(successes: usize, trials: usize) -> u32 {
    if trials == 0 {
        return 0;
    }
    ((200 * successes + trials) / (2 * trials)) as u32
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellResult {
    pub scenario: u8,
    pub category: Category,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryAverage {
    pub category: Category,
    /// Half-up rounded mean of the per-scenario cell percentages.
    pub success_rate: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub scenario: u8,
    pub category: Category,
    pub variation: u8,
    pub repetition: u32,
    pub text: String,
    /// Interpreted intent, or the interpreter error.
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalReport {
    pub interpreter: String,
    pub repetitions: u32,
    pub total_trials: usize,
    pub cells: Vec<CellResult>,
    pub category_averages: Vec<CategoryAverage>,
    pub failures: Vec<TrialFailure>,
}

impl EvalReport {
    pub fn cell(&self, scenario: u8, category: Category) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.scenario == scenario && c.category == category)
    }

    /// Specific ≥ moderately specific ≥ least specific in every scenario
    /// that has all three cells.
    pub fn is_monotonic(&self) -> bool {
        SCENARIOS.iter().all(|&s| {
            let rates: Option<Vec<u32>> =
                Category::ALL.iter().map(|&c| self.cell(s, c).map(|r| r.success_rate)).collect();
            rates.is_none_or(|r| r.windows(2).all(|w| w[0] >= w[1]))
        })
    }
}

/// Builds per-cell and per-category figures from raw counts, in
/// (scenario, category) order.
pub fn aggregate(
    interpreter: &str,
    repetitions: u32,
    counts: &BTreeMap<(u8, Category), (usize, usize)>,
    failures: Vec<TrialFailure>,
) -> EvalReport {
    let cells: Vec<CellResult> = counts
        .iter()
        .map(|(&(scenario, category), &(trials, successes))| CellResult {
            scenario,
            category,
            trials,
            successes,
            success_rate: success_percent(successes, trials),
        })
        .collect();
    let category_averages = Category::ALL
        .iter()
        .filter_map(|&category| {
            let rates: Vec<u32> = cells.iter().filter(|c| c.category == category).map(|c| c.success_rate).collect();
            (!rates.is_empty()).then(|| CategoryAverage {
                category,
                success_rate: success_percent(rates.iter().sum::<u32>() as usize, rates.len() * 100),
            })
        })
        .collect();
    EvalReport {
        interpreter: interpreter.to_string(),
        repetitions,
        total_trials: cells.iter().map(|c| c.trials).sum(),
        cells,
        category_averages,
        failures,
    }
}

/// Runs every entry `repetitions` times. Each trial sees the scenario
/// interrupted at its faulted subtask; it succeeds iff the first
/// interpretation resumes the active task.
pub fn run_eval(corpus: &InstructionCorpus, interpreter: Arc<dyn InterpreterBackend>, repetitions: u32) -> EvalReport {
    let controller = Arc::new(TaskController::new(TaskRegistry::cable_shark(), MessageTemplates::default()));
    run_eval_with(controller, corpus, interpreter, repetitions)
}

pub fn run_eval_with(
    controller: Arc<TaskController>,
    corpus: &InstructionCorpus,
    interpreter: Arc<dyn InterpreterBackend>,
    repetitions: u32,
) -> EvalReport {
    let mut entries: Vec<&CorpusEntry> = corpus.entries.iter().collect();
    entries.sort_by_key(|e| (e.scenario, e.category, e.variation));

    let task_id = "t1";
    let mut sessions: BTreeMap<u8, Option<Session>> = BTreeMap::new();
    let mut counts: BTreeMap<(u8, Category), (usize, usize)> = BTreeMap::new();
    let mut failures = Vec::new();

    for e in entries {
        let session = sessions.entry(e.scenario).or_insert_with(|| {
            let scene = CellScene::preset(e.scenario)?;
            let config = SessionConfig { clock: Clock::Logical, ..Default::default() };
            let mut s = Session::new(format!("eval-{}", e.scenario), controller.clone(), interpreter.clone(), scene, config);
            s.start_task(task_id);
            Some(s)
        });
        let cell = counts.entry((e.scenario, e.category)).or_default();
        for repetition in 1..=repetitions {
            cell.0 += 1;
            let outcome = match session {
                Some(s) if matches!(s.state().phase, Phase::AwaitingHuman { .. }) => s.interpret(&e.text),
                Some(s) => Err(crate::InterpretError::Transport(format!(
                    "scenario did not interrupt (phase {})",
                    s.state().phase.name()
                ))),
                None => Err(crate::InterpretError::Transport(format!("scenario {} has no preset", e.scenario))),
            };
            match outcome {
                Ok(intent) if intent.kind == IntentKind::ResumeTask(task_id.into()) => cell.1 += 1,
                other => failures.push(TrialFailure {
                    scenario: e.scenario,
                    category: e.category,
                    variation: e.variation,
                    repetition,
                    text: e.text.clone(),
                    outcome: match other {
                        Ok(intent) => format!("{:?}", intent.kind),
                        Err(err) => err.to_string(),
                    },
                }),
            }
        }
    }
    aggregate(interpreter.name(), repetitions, &counts, failures)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
}

const HEADER: [&str; 3] = ["Scenario", "Instruction Category", "Success Rate"];

/// Table: one row per cell, scenario label on the first row of each group,
/// then the category averages. JSON: the report as is.
pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Table => render_table(report),
    }
}

fn render_table(report: &EvalReport) -> String {
    let mut rows: Vec<[String; 3]> = Vec::new();
    let mut last = None;
    for c in &report.cells {
        let label = if last == Some(c.scenario) { String::new() } else { scenario_label(c.scenario) };
        last = Some(c.scenario);
        rows.push([label, c.category.label().into(), format!("{}%", c.success_rate)]);
    }
    let averages: Vec<[String; 3]> = report
        .category_averages
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let label = if i == 0 { "Average".into() } else { String::new() };
            [label, a.category.label().into(), format!("{}%", a.success_rate)]
        })
        .collect();

    let mut widths = HEADER.map(str::len);
    for r in rows.iter().chain(&averages) {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |out: &mut String, r: [&str; 3]| {
        let _ = writeln!(out, "{:<w0$} | {:<w1$} | {}", r[0], r[1], r[2], w0 = widths[0], w1 = widths[1]);
    };
    let rule = format!("{}-+-{}-+-{}\n", "-".repeat(widths[0]), "-".repeat(widths[1]), "-".repeat(widths[2]));

    let mut out = String::new();
    line(&mut out, HEADER);
    out.push_str(&rule);
    for r in &rows {
        line(&mut out, [&r[0], &r[1], &r[2]]);
    }
    if !averages.is_empty() {
        out.push_str(&rule);
        for r in &averages {
            line(&mut out, [&r[0], &r[1], &r[2]]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intent::RuleInterpreter;

    #[test]
    fn bundled_corpus_is_valid() {
        let c = InstructionCorpus::bundled();
        c.validate().unwrap();
        assert_eq!(c.entries.len(), 45);
    }

    #[test]
    fn validation_catches_gaps_and_duplicates() {
        let mut c = InstructionCorpus::bundled();
        c.entries.pop();
        assert!(matches!(c.validate(), Err(CorpusError::IncompleteCell { count: 4, .. })));
        let mut c = InstructionCorpus::bundled();
        c.entries[1].variation = c.entries[0].variation;
        assert!(matches!(c.validate(), Err(CorpusError::Duplicate { .. })));
        let mut c = InstructionCorpus::bundled();
        c.entries[0].scenario = 4;
        assert!(matches!(c.validate(), Err(CorpusError::UnknownScenario { .. })));
        assert!(InstructionCorpus::default().validate().is_err());
    }

    #[test]
    fn rounding_oracle() {
        // Independent oracle: nearest integer by comparing distances, ties up.
        for n in 1..=60usize {
            for k in 0..=n {
                let exact = 100.0 * k as f64 / n as f64;
                let lo = exact.floor();
                let want = if exact - lo >= 0.5 { lo + 1.0 } else { lo } as u32;
                assert_eq!(success_percent(k, n), want, "{k}/{n}");
            }
        }
        assert_eq!(success_percent(11, 15), 73);
        assert_eq!(success_percent(1, 8), 13);
        assert_eq!(success_percent(0, 0), 0);
    }

    #[test]
    fn table_two_values_reachable_with_fifteen_trials() {
        let reachable: Vec<u32> = (0..=15).map(|k| success_percent(k, 15)).collect();
        for (pct, k) in [(100, 15), (93, 14), (87, 13), (73, 11), (67, 10), (53, 8), (27, 4)] {
            assert_eq!(reachable[k], pct);
        }
    }

    #[test]
    fn averages_of_published_cells() {
        let table = [
            (1, [15, 11, 4]),
            (2, [14, 13, 8]),
            (3, [15, 10, 4]),
        ];
        let mut counts = BTreeMap::new();
        for (s, ks) in table {
            for (c, k) in Category::ALL.into_iter().zip(ks) {
                counts.insert((s, c), (15, k));
            }
        }
        let r = aggregate("fixture", 3, &counts, vec![]);
        let avg: Vec<u32> = r.category_averages.iter().map(|a| a.success_rate).collect();
        assert_eq!(avg, [98, 76, 36]);
        assert!(r.is_monotonic());
        assert_eq!(r.total_trials, 135);
    }

    #[test]
    fn rule_backend_full_run() {
        let r = run_eval(&InstructionCorpus::bundled(), Arc::new(RuleInterpreter), 3);
        assert_eq!(r.total_trials, 135);
        assert_eq!(r.cells.len(), 9);
        assert!(r.cells.iter().all(|c| c.trials == 15 && c.successes % 3 == 0));
        assert!(r.is_monotonic());
    }

    #[test]
    fn table_layout() {
        let r = run_eval(&InstructionCorpus::bundled(), Arc::new(RuleInterpreter), 1);
        let text = render_report(&r, ReportFormat::Table);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("Scenario"));
        assert!(lines[2].starts_with("Scenario 1: Component Overlap"));
        let data = lines.iter().filter(|l| l.ends_with('%')).count();
        assert_eq!(data, 9 + 3);
        let empty = render_report(&aggregate("rule", 3, &BTreeMap::new(), vec![]), ReportFormat::Table);
        assert_eq!(empty.lines().count(), 2);

        let json: EvalReport = serde_json::from_str(&render_report(&r, ReportFormat::Json)).unwrap();
        assert_eq!(json, r);
    }
}
