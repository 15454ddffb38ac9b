//! Experiment files and the split, train, evaluate sequence.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{load_dataset, Dataset, IngestOptions, SplitName, DEFAULT_FRACTIONS};
use super::evaluate::{archive_header, evaluate, EvalOptions, MetricsReport};
use super::report::ReportFormat;
use super::train::{train, EpochLog, TrainOptions};
use super::PipelineError;
use crate::codestream::CodeblockGrid;
use crate::model::{build_model, Model, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Root with one sub-directory per class.
    pub dataset: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub block_size: usize,
    pub fractions: [f64; 3],
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the split, the initialization and the batch order.
    pub seed: u64,
    pub threads: usize,
    pub eval_split: SplitName,
    pub report_format: ReportFormat,
    pub report_path: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub model: ModelConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            cache_dir: None,
            block_size: CodeblockGrid::DEFAULT_SIZE,
            fractions: DEFAULT_FRACTIONS,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            threads: 1,
            eval_split: SplitName::Test,
            report_format: ReportFormat::Json,
            report_path: None,
            checkpoint: None,
            model: ModelConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parse a TOML experiment file. A relative dataset path is taken
    /// relative to `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self, PipelineError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        if let Some(base) = base {
            for p in [Some(&mut cfg.dataset), cfg.cache_dir.as_mut(), cfg.report_path.as_mut(), cfg.checkpoint.as_mut()]
                .into_iter()
                .flatten()
            {
                if p.is_relative() && !p.as_os_str().is_empty() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn ingest_options(&self) -> IngestOptions {
        IngestOptions {
            levels: self.model.levels,
            block_size: self.block_size,
            cache_dir: self.cache_dir.clone(),
            threads: self.threads,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }
}

/// Scan and split the dataset, then size the model after its archives.
pub fn prepare_experiment(cfg: &ExperimentConfig) -> Result<(Dataset, ModelConfig), PipelineError> {
    let dataset = load_dataset(&cfg.dataset, &cfg.ingest_options(), cfg.fractions, cfg.seed)?;
    let header = archive_header(&dataset.items[0].archive)?;
    let mut model = cfg.model.clone();
    model.image_width = header.width as usize;
    model.image_height = header.height as usize;
    model.bands = header.bands as usize;
    model.classes = dataset.classes.len().max(2);
    model.seed = cfg.seed;
    model.validate()?;
    Ok((dataset, model))
}

pub struct ExperimentOutcome {
    pub report: MetricsReport,
    pub log: Vec<EpochLog>,
    pub model: Model,
    pub dataset: Dataset,
}

/// Split, train, then evaluate on the configured split. Validation time
/// is the timed classification of the validation split.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    eval: &EvalOptions,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<ExperimentOutcome, PipelineError> {
    let (dataset, model_cfg) = prepare_experiment(cfg)?;
    let (mut model, log, train_s) = if cfg.epochs == 0 {
        (build_model(&model_cfg)?, Vec::new(), 0.0)
    } else {
        let out = train(&dataset, &model_cfg, &cfg.train_options(), on_epoch)?;
        (out.model, out.log, out.train_seconds)
    };
    let val_s = if dataset.split.val.is_empty() {
        0.0
    } else {
        let quick = EvalOptions { rmse: false, ..*eval };
        evaluate(&mut model, &dataset, SplitName::Val, &quick)?.timing.test_s
    };
    let mut report = evaluate(&mut model, &dataset, cfg.eval_split, eval)?;
    report.timing.train_s = train_s;
    report.timing.val_s = val_s;
    report.epochs = cfg.epochs;
    report.batch_size = cfg.batch_size;
    report.seed = cfg.seed;
    if let Some(path) = &cfg.checkpoint {
        let file = std::fs::File::create(path).map_err(|e| PipelineError::Dataset(format!("{}: {e}", path.display())))?;
        model.save_checkpoint(std::io::BufWriter::new(file))?;
    }
    Ok(ExperimentOutcome {
        report,
        log,
        model,
        dataset,
    })
}

/// Rebuild a trained model from its experiment file and checkpoint.
pub fn load_trained(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<(Dataset, Model), PipelineError> {
    let (dataset, model_cfg) = prepare_experiment(cfg)?;
    let mut model = build_model(&model_cfg)?;
    let file = std::fs::File::open(checkpoint)
        .map_err(|e| PipelineError::MissingCheckpoint(format!("{}: {e}", checkpoint.display())))?;
    model.load_checkpoint(std::io::BufReader::new(file))?;
    Ok((dataset, model))
}
