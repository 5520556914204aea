use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hrc_cell::config::{self, InterpreterChoice};
use hrc_cell::server::{self, ServerConfig};
use hrc_core::eval::{self, InstructionCorpus, ReportFormat};
use hrc_core::intent::build_init_prompt;
use hrc_core::scenario::{self, ScriptLine};
use hrc_core::sensor::CellScene;
use hrc_core::session;
use hrc_core::wire;

#[derive(Parser)]
#[command(name = "hrc-cell", version, about = "Simulated human-robot assembly cell")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve operator sessions over WebSocket.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Capability registry (JSON). Defaults to the bundled cable-shark registry.
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Directory of scene presets (JSON). Defaults to the bundled scenarios.
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "rule")]
        interpreter: InterpreterChoice,
        /// Append each session's log to <DIR>/<session_id>.jsonl.
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
    /// Run a scripted scenario headlessly and write its transcript.
    Scenario {
        #[arg(long)]
        id: u8,
        /// JSON list of operator lines. Defaults to the bundled script.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Transcript destination; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the session event log (JSONL).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "rule")]
        interpreter: InterpreterChoice,
    },
    /// Run the instruction-variation experiment.
    Eval {
        /// Instruction corpus (JSON). Defaults to the bundled corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "rule")]
        interpreter: InterpreterChoice,
        #[arg(long, default_value_t = 3)]
        reps: u32,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-derive the final state from an event log.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Print the interpreter initialization prompt for a registry.
    Prompt {
        #[arg(long)]
        registry: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_scenario_cmd(
    id: u8,
    script: Option<&Path>,
    out: Option<&Path>,
    log: Option<&Path>,
    registry: Option<&Path>,
    scenes: Option<&Path>,
    interpreter: InterpreterChoice,
) -> Result<()> {
    let script: Vec<ScriptLine> = match script {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            scenario::parse_script(&text).with_context(|| format!("parsing script {}", p.display()))?
        }
        None => scenario::bundled_script(id).with_context(|| format!("no bundled script for scenario {id}"))?,
    };
    let scene: CellScene = config::load_scenes(scenes)?
        .into_iter()
        .find(|s| s.scenario_id == Some(id))
        .with_context(|| format!("unknown scenario {id}"))?;
    let run = scenario::run_scenario_with(
        config::load_controller(registry)?,
        scene,
        config::make_interpreter(interpreter)?,
        &script,
    )?;
    if let Some(p) = log {
        fs::write(p, wire::to_jsonl(&run.log)).with_context(|| format!("writing {}", p.display()))?;
    }
    let mut text = serde_json::to_string_pretty(&run.transcript)?;
    text.push('\n');
    write_or_print(out, &text)
}

fn run_eval_cmd(
    corpus: Option<&Path>,
    interpreter: InterpreterChoice,
    reps: u32,
    format: Format,
    registry: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let corpus = match corpus {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            InstructionCorpus::from_json(&text)?
        }
        None => InstructionCorpus::bundled(),
    };
    corpus.validate()?;
    let report = eval::run_eval_with(
        config::load_controller(registry)?,
        &corpus,
        config::make_interpreter(interpreter)?,
        reps,
    );
    let format = match format {
        Format::Table => ReportFormat::Table,
        Format::Json => ReportFormat::Json,
    };
    write_or_print(out, &eval::render_report(&report, format))
}

fn run_replay_cmd(log: &Path, registry: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(log).with_context(|| format!("reading {}", log.display()))?;
    let records = session::parse_log(&text)?;
    let controller = config::load_controller(registry)?;
    let replay = session::replay(&records, &controller)?;
    let summary = serde_json::json!({
        "records": records.len(),
        "events": replay.events,
        "final_state": replay.final_state,
        "matches_recorded": replay.is_consistent(),
        "first_divergence": replay.first_divergence,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if !replay.is_consistent() {
        bail!("replayed state differs from the recorded state");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve { port, host, registry, scenes, interpreter, log_dir } => {
            let addr: SocketAddr = format!("{host}:{port}").parse().with_context(|| format!("bad address {host}:{port}"))?;
            let config = ServerConfig {
                controller: config::load_controller(registry.as_deref())?,
                interpreter: config::make_interpreter(interpreter)?,
                scenes: config::load_scenes(scenes.as_deref())?,
                log_dir,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(config, addr))
        }
        Command::Scenario { id, script, out, log, registry, scenes, interpreter } => run_scenario_cmd(
            id,
            script.as_deref(),
            out.as_deref(),
            log.as_deref(),
            registry.as_deref(),
            scenes.as_deref(),
            interpreter,
        ),
        Command::Eval { corpus, interpreter, reps, format, registry, out } => {
            run_eval_cmd(corpus.as_deref(), interpreter, reps, format, registry.as_deref(), out.as_deref())
        }
        Command::Replay { log, registry } => run_replay_cmd(&log, registry.as_deref()),
        Command::Prompt { registry } => {
            println!("{}", build_init_prompt(&config::load_registry(registry.as_deref())?));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
