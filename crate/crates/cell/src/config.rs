use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use hrc_core::comms::MessageTemplates;
use hrc_core::intent::{FunctionCallingInterpreter, InterpreterBackend, RuleInterpreter};
use hrc_core::llm::{EndpointConfig, HttpChatClient};
use hrc_core::model::TaskRegistry;
use hrc_core::orchestrator::TaskController;
use hrc_core::sensor::CellScene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InterpreterChoice {
    /// Deterministic keyword rules.
    Rule,
    /// OpenAI-compatible chat endpoint configured through HRC_LLM_* variables.
    External,
}

pub fn load_registry(path: Option<&Path>) -> Result<TaskRegistry> {
    match path {
        None => Ok(TaskRegistry::cable_shark()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            TaskRegistry::from_json(&text).with_context(|| format!("loading registry {}", p.display()))
        }
    }
}

pub fn load_controller(registry: Option<&Path>) -> Result<Arc<TaskController>> {
    Ok(Arc::new(TaskController::new(load_registry(registry)?, MessageTemplates::default())))
}

/// Reads every `*.json` scene in `dir`; each must carry a scenario id.
/// `None` yields the bundled presets.
pub fn load_scenes(dir: Option<&Path>) -> Result<Vec<CellScene>> {
    let Some(dir) = dir else {
        return Ok((1..=3).filter_map(CellScene::preset).collect());
    };
    let mut paths: Vec<_> = fs::read_dir(dir)
        .with_context(|| format!("reading scene directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut scenes: Vec<CellScene> = Vec::new();
    for p in paths {
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        let scene = CellScene::from_json(&text).with_context(|| format!("loading scene {}", p.display()))?;
        let Some(id) = scene.scenario_id else {
            bail!("scene {} has no scenario_id", p.display());
        };
        if scenes.iter().any(|s| s.scenario_id == Some(id)) {
            bail!("scenario {id} defined twice in {}", dir.display());
        }
        scenes.push(scene);
    }
    if scenes.is_empty() {
        bail!("no scenes found in {}", dir.display());
    }
    Ok(scenes)
}

pub fn make_interpreter(choice: InterpreterChoice) -> Result<Arc<dyn InterpreterBackend>> {
    Ok(match choice {
        InterpreterChoice::Rule => Arc::new(RuleInterpreter),
        InterpreterChoice::External => {
            let config = EndpointConfig::from_env().map_err(anyhow::Error::msg)?;
            Arc::new(FunctionCallingInterpreter::new(Arc::new(HttpChatClient::new(config))))
        }
    })
}
