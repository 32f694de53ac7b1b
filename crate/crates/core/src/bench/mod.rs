//! Configuration, persistence, evaluation and comparison harness.

pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod eval;
pub mod export;
pub mod run;
