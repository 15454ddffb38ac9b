//! Datasets, training, evaluation and reports.

pub mod dataset;
pub mod evaluate;
pub mod experiment;
pub mod report;
pub mod synth;
pub mod train;

use std::path::PathBuf;

use thiserror::Error;

use crate::codestream::CodestreamError;
use crate::io::IoError;
use crate::model::ModelError;
use crate::nn::NnError;
use crate::wavelet::WaveletError;

pub use dataset::{load_dataset, scan_dataset, split_indices, Dataset, IngestOptions, Item, Manifest, Split, SplitName};
pub use evaluate::{evaluate, method_label, EvalOptions, MetricsReport, RmseEntry, Timing};
pub use experiment::{load_trained, prepare_experiment, run_experiment, ExperimentConfig, ExperimentOutcome};
pub use report::{emit_report, parse_json_reports, ReportFormat};
pub use synth::{generate, natural_image, write_fixture, write_natural_fixture, SynthConfig};
pub use train::{train, EpochLog, TrainOptions, TrainOutcome};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("class directory {} holds no images", .0.display())]
    EmptyClass(PathBuf),
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("checkpoint: {0}")]
    MissingCheckpoint(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Codestream(#[from] CodestreamError),
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<NnError> for PipelineError {
    fn from(e: NnError) -> Self {
        Self::Model(ModelError::Nn(e))
    }
}
