//! Rollback-resilient replicated read/write registers on a deterministic
//! message-passing simulator, with linearizability checkers and scripted
//! counterexamples against earlier recovery designs.

pub mod checker;
pub mod config;
pub mod experiment;
pub mod protocol;
pub mod scenarios;
pub mod sim;
pub mod types;
