//! Library surface of the `postselect-lab` CLI: configuration, protocol
//! runners, and report writers. The binary in `main.rs` is a thin argument
//! parser over these.

pub mod config;
pub mod output;
pub mod run;

pub use config::{DatasetSpec, ExperimentConfig, NestedSpec, OutputSpec, Protocol, SplitSpec};
pub use run::{run, RunOutcome};
