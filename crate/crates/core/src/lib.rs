//! Rare-class tabular classification toolkit.

pub mod dataset;
pub mod error;
pub mod featsel;
pub mod impute;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod resample;
pub mod rng;
pub mod synth;

pub use dataset::{ColumnStats, Dataset, FeatureMatrix, Partition};
pub use error::{Error, Result};
pub use pipeline::{EvalReport, PipelineConfig, ScenarioId};
