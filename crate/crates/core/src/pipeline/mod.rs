//! Configuration, artifact files and the end-to-end run.

pub mod config;
pub mod converge;
pub mod io;
pub mod run;

pub use config::Config;
pub use converge::{convergence_experiment, ConvergenceReport, ConvergenceRow};
pub use run::{run_pipeline, Manifest, Stage, StageError};
