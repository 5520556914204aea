//! Session service and command-line plumbing for the simulated assembly cell.

pub mod config;
pub mod server;
