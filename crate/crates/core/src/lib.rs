//! Orchestration engine and simulated assembly cell for language-driven
//! human-robot collaborative assembly.
//!
//! An operator's (transcribed) command is interpreted against a capability
//! registry ([`intent`]), the task controller ([`orchestrator`]) runs the
//! task's subtasks against simulated vision ([`sensor`]), and any failed
//! check interrupts the task with an operator-facing message ([`comms`]).
//! Once the operator has fixed the cell and says so, the task resumes at the
//! interrupted subtask.
//!
//! [`session`] glues these into a per-session driver with an append-only
//! event log; [`scenario`] and [`eval`] run the scripted case-study
//! scenarios and the instruction-variation experiment on top of it.

pub mod comms;
pub mod data;
pub mod error;
pub mod eval;
pub mod intent;
pub mod llm;
pub mod model;
pub mod orchestrator;
pub mod scenario;
pub mod sensor;
pub mod session;
pub mod verify;
pub mod wire;

pub use error::{CommsError, InterpretError, ModelError, ReplayError, ScenarioError, SensorError};
