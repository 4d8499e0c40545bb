//! Evidence-grounded news verification.
//!
//! An article flows through preprocessing, cross-modal evidence retrieval with
//! reliability fusion, multi-persona question rounds over a shared memory, and a
//! constrained pseudo-labeling step with optional persuasion analysis. Every
//! external service sits behind a provider trait with record/replay support.

pub mod config;
pub mod context;
pub mod error;
pub mod eval;
pub mod evidence;
pub mod mmaf;
pub mod model;
pub mod pipeline;
pub mod pkm;
pub mod preprocess;
pub mod prompts;
pub mod providers;
pub mod slm;
pub mod text;
pub mod verdict;

pub use config::{PipelineConfig, Variant};
pub use error::{Error, ProviderError, Result};
pub use model::*;
pub use pipeline::Pipeline;
pub use providers::{ProviderEnv, ProviderMode, Providers};
