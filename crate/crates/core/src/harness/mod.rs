//! Synthetic instance generation, file IO, pipeline orchestration and reporting.

pub mod config;
pub mod instance;
pub mod io;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod synth;

pub use config::PipelineConfig;
pub use instance::{ClipQueryMatrix, Instance};
pub use pipeline::run_pipeline;
pub use report::Report;
pub use synth::{synth_generate, ArchetypeMix, SynthSpec};
