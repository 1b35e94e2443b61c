//! File formats, procedural inputs, network weights and batch jobs around
//! [`smokestyle_core`].

pub mod config;
pub mod imageio;
pub mod job;
pub mod procedural;
pub mod styles;
pub mod sweep;
pub mod volf;
pub mod weights;

pub use config::JobConfig;
pub use job::{run_job, JobError, JobOptions, JobReport};
pub use procedural::{make_procedural_smoke, SmokeKind, SmokeSequence};
pub use volf::Volume;
