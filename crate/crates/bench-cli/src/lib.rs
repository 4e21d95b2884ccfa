//! Experiment harness for the multi-grained convolution engine: scene
//! sets, oracle verification, benchmark records, grain maps and the
//! comparison against a full-grid-only mapping.

pub mod cli;
mod error;
pub mod run;
pub mod scenes;

pub use error::BenchError;
