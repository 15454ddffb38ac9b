//! Decoding archives into network tensors and the training loop.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Item, SplitName};
use super::PipelineError;
use crate::codestream::decode_stream;
use crate::model::{argmax, build_model, Model, ModelConfig, Scenario};
use crate::nn::Tensor;
use crate::wavelet::SubbandPyramid;

/// Coefficients of `level` as a `(1, C, H, W)` tensor scaled by `scale`.
/// Levels above 0 give four channels per band (LL, LH, HL, HH, band
/// after band); level 0 gives the image bands.
pub fn level_tensor(pyr: &SubbandPyramid, level: usize, scale: f64) -> Result<Tensor, PipelineError> {
    let (w, h) = pyr.dims_at(level);
    let mut data = Vec::new();
    if level == 0 {
        let img = if pyr.levels == 0 { pyr.clone() } else { pyr.reconstruct(0)? };
        for b in &img.bands {
            data.extend(b.ll.data.iter().map(|&v| v as f64 * scale));
        }
        return Ok(Tensor::from_vec(&[1, pyr.bands.len(), h, w], data)?);
    }
    for planes in pyr.level_subbands(level)? {
        for p in &planes {
            if (p.width, p.height) != (w, h) {
                return Err(PipelineError::Config(format!(
                    "level {level} sub-bands are not all {w}x{h}; image size must be divisible by 2^{level}"
                )));
            }
            data.extend(p.data.iter().map(|&v| v as f64 * scale));
        }
    }
    Ok(Tensor::from_vec(&[1, 4 * pyr.bands.len(), h, w], data)?)
}

fn check_header(pyr: &SubbandPyramid, cfg: &ModelConfig, path: &Path) -> Result<(), PipelineError> {
    let levels_ok = cfg.scenario == Scenario::Full || pyr.levels == cfg.levels;
    if (pyr.width, pyr.height, pyr.bands.len()) != (cfg.image_width, cfg.image_height, cfg.bands) || !levels_ok {
        return Err(PipelineError::Config(format!(
            "{}: archive is {}x{}x{} with {} levels, model expects {}x{}x{} with {}",
            path.display(),
            pyr.width,
            pyr.height,
            pyr.bands.len(),
            pyr.levels,
            cfg.image_width,
            cfg.image_height,
            cfg.bands,
            cfg.levels
        )));
    }
    Ok(())
}

/// Decode only what the network reads. Returns the input tensor and the
/// number of codestream bytes consumed.
pub fn network_input(path: &Path, cfg: &ModelConfig) -> Result<(Tensor, u64), PipelineError> {
    let file = File::open(path).map_err(|e| PipelineError::Dataset(format!("{}: {e}", path.display())))?;
    let level = cfg.input_level();
    let out = decode_stream(BufReader::new(file), level)?;
    check_header(&out.pyramid, cfg, path)?;
    Ok((level_tensor(&out.pyramid, level, cfg.coefficient_scale)?, out.bytes_read))
}

/// A decoded training example.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub input: Tensor,
    /// Decoded coefficients for each approximated level, coarsest first.
    pub targets: Vec<Tensor>,
    pub label: usize,
}

/// Decode an archive down to the target level and build input and
/// supervision tensors.
pub fn prepare(item: &Item, cfg: &ModelConfig) -> Result<Prepared, PipelineError> {
    let path = &item.archive;
    let file = File::open(path).map_err(|e| PipelineError::Dataset(format!("{}: {e}", path.display())))?;
    let out = decode_stream(BufReader::new(file), cfg.target_level())?;
    check_header(&out.pyramid, cfg, path)?;
    let scale = cfg.coefficient_scale;
    let input = level_tensor(&out.pyramid, cfg.input_level(), scale)?;
    let targets = cfg
        .approx_levels()
        .into_iter()
        .map(|l| level_tensor(&out.pyramid, l, scale))
        .collect::<Result<_, _>>()?;
    Ok(Prepared {
        input,
        targets,
        label: item.label,
    })
}

pub fn prepare_all(items: &[&Item], cfg: &ModelConfig) -> Result<Vec<Prepared>, PipelineError> {
    items.iter().map(|i| prepare(i, cfg)).collect()
}

/// Stack samples into a batch.
pub fn batch(samples: &[&Prepared]) -> Result<(Tensor, Vec<Tensor>, Vec<usize>), PipelineError> {
    let inputs: Vec<&Tensor> = samples.iter().map(|s| &s.input).collect();
    let levels = samples.first().map_or(0, |s| s.targets.len());
    let targets = (0..levels)
        .map(|l| Tensor::concat_batch(&samples.iter().map(|s| &s.targets[l]).collect::<Vec<_>>()))
        .collect::<Result<_, _>>()?;
    Ok((
        Tensor::concat_batch(&inputs)?,
        targets,
        samples.iter().map(|s| s.label).collect(),
    ))
}

/// Eval-mode predictions for prepared samples.
pub fn predict_prepared(model: &mut Model, samples: &[Prepared], batch_size: usize) -> Result<Vec<usize>, PipelineError> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Prepared> = chunk.iter().collect();
        let (x, _, _) = batch(&refs)?;
        out.extend(model.predict(&x)?);
    }
    Ok(out)
}

type ModelState = Vec<(String, Tensor)>;

fn accuracy(preds: &[usize], samples: &[Prepared]) -> f64 {
    let correct = preds.iter().zip(samples).filter(|(p, s)| **p == s.label).count();
    100.0 * correct as f64 / samples.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Batch-size weighted means over the epoch.
    pub loss: f64,
    pub classification_loss: f64,
    pub approximation_loss: f64,
    /// Accuracy of the training-mode predictions made during the epoch.
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation accuracy (the
    /// last epoch when there is no validation split).
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    /// Wall time of decoding plus optimization.
    pub train_seconds: f64,
}

/// Train a fresh model from `cfg`, calling `on_epoch` after every epoch.
pub fn train(
    dataset: &Dataset,
    cfg: &ModelConfig,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, PipelineError> {
    let start = Instant::now();
    let train_items = dataset.split_items(SplitName::Train);
    if train_items.is_empty() {
        return Err(PipelineError::EmptySplit("train"));
    }
    let mut model = build_model(cfg)?;
    let train_set = prepare_all(&train_items, cfg)?;
    let val_set = prepare_all(&dataset.split_items(SplitName::Val), cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x05ee_d0fb_a7c4);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(opts.epochs);
    // (score, epoch, state)
    let mut best: Option<(f64, usize, ModelState)> = None;
    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut cls, mut approx, mut correct) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(opts.batch_size.max(1)) {
            let refs: Vec<&Prepared> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (x, targets, labels) = batch(&refs)?;
            let (loss, logits) = model.train_step_with_logits(&x, &targets, &labels)?;
            let n = labels.len() as f64;
            total += loss.total * n;
            cls += loss.classification * n;
            approx += loss.approximation * n;
            let q = cfg.classes;
            correct += labels
                .iter()
                .enumerate()
                .filter(|(i, &l)| argmax(&logits.data()[i * q..(i + 1) * q]) == l)
                .count();
        }
        let n = train_set.len() as f64;
        let val_accuracy = if val_set.is_empty() {
            None
        } else {
            let preds = predict_prepared(&mut model, &val_set, opts.batch_size)?;
            Some(accuracy(&preds, &val_set))
        };
        let entry = EpochLog {
            epoch,
            loss: total / n,
            classification_loss: cls / n,
            approximation_loss: approx / n,
            train_accuracy: 100.0 * correct as f64 / n,
            val_accuracy,
        };
        on_epoch(&entry);
        let score = val_accuracy.unwrap_or(f64::INFINITY);
        if best.as_ref().is_none_or(|(s, _, _)| score > *s || val_accuracy.is_none()) {
            best = Some((score, epoch, model.state()));
        }
        log.push(entry);
    }
    let best_epoch = match best {
        Some((_, epoch, state)) => {
            model.load_state(&state)?;
            epoch
        }
        None => 0,
    };
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        train_seconds: start.elapsed().as_secs_f64(),
    })
}
