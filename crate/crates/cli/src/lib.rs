//! File formats, configuration, synthetic scenes and the end-to-end
//! commands built on `scenefit`.

pub mod cache;
pub mod config;
pub mod formats;
pub mod io;
pub mod pipeline;
pub mod synthetic;

pub use config::PipelineConfig;
pub use pipeline::{export_dataset, run, FeatureSource, Manifest, RunArgs, RunOutcome, Status};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const NO_VALID_FIT: i32 = 2;
}
