//! Timed evaluation and the metrics report.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Item, SplitName};
use super::train::{batch, network_input, prepare, Prepared};
use super::PipelineError;
use crate::codestream::CodestreamReader;
use crate::model::{argmax, shape_chain, Model, ModelConfig, Scenario};
use crate::nn::{Mode, Tensor};
use crate::wavelet::SubbandKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// RMSE of one approximated band and sub-band, in coefficient units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseEntry {
    pub level: usize,
    pub band: usize,
    /// `LL`, `LH`, `HL`, `HH`, or `image` for level 0.
    pub subband: String,
    pub rmse: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub train_s: f64,
    pub val_s: f64,
    pub test_s: f64,
    /// Decoding share of `test_s`.
    pub decode_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Row group, e.g. `Scenario 1`.
    pub group: String,
    /// Size chain of the approximation layers.
    pub method: String,
    pub split: String,
    /// Percent correct.
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub per_class: Vec<ClassAccuracy>,
    pub rmse: Vec<RmseEntry>,
    pub timing: Timing,
    /// Codestream bytes consumed while classifying the split.
    pub bytes_read: u64,
    /// Sum of the codestream prefix lengths the scenario needs.
    pub bytes_expected: u64,
    /// Full size of the split's codestreams.
    pub bytes_total: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub model: ModelConfig,
}

impl MetricsReport {
    /// Copy with every wall-time field zeroed.
    pub fn without_timing(&self) -> Self {
        Self {
            timing: Timing::default(),
            ..self.clone()
        }
    }

    pub fn mean_rmse(&self, detail: bool) -> Option<f64> {
        let vals: Vec<f64> = self
            .rmse
            .iter()
            .filter(|e| (e.subband == "LL") != detail && e.subband != "image")
            .map(|e| e.rmse)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Row group and size-chain label of a configuration.
pub fn method_label(cfg: &ModelConfig) -> (String, String) {
    let group = match (cfg.scenario, cfg.approx_layers) {
        (Scenario::Minimal, 0) => "Without decompression",
        (Scenario::Minimal, _) => "Scenario 1",
        (Scenario::Partial, _) => "Scenario 2",
        (Scenario::Full, _) => "Fully decompressed",
    };
    let chain = shape_chain(cfg)
        .map(|c| {
            c.iter()
                .map(|s| format!("({}x{})", s[2], s[1]))
                .collect::<Vec<_>>()
                .join(" -> ")
        })
        .unwrap_or_default();
    (group.to_string(), chain)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub batch_size: usize,
    /// Also decode the supervision levels and report approximation RMSE.
    pub rmse: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            batch_size: 32,
            rmse: true,
        }
    }
}

struct TimedPass {
    predictions: Vec<usize>,
    bytes_read: u64,
    decode_s: f64,
    total_s: f64,
}

fn classify(model: &mut Model, items: &[&Item], batch_size: usize) -> Result<TimedPass, PipelineError> {
    let cfg = model.config.clone();
    let start = Instant::now();
    let mut decode_s = 0.0;
    let mut bytes_read = 0;
    let mut predictions = Vec::with_capacity(items.len());
    for chunk in items.chunks(batch_size.max(1)) {
        let t = Instant::now();
        let mut inputs = Vec::with_capacity(chunk.len());
        for item in chunk {
            let (x, n) = network_input(&item.archive, &cfg)?;
            bytes_read += n;
            inputs.push(x);
        }
        decode_s += t.elapsed().as_secs_f64();
        let x = Tensor::concat_batch(&inputs.iter().collect::<Vec<_>>())?;
        predictions.extend(model.predict(&x)?);
    }
    Ok(TimedPass {
        predictions,
        bytes_read,
        decode_s,
        total_s: start.elapsed().as_secs_f64(),
    })
}

/// Time decoding plus inference over `items`, after one untimed warm-up
/// batch.
fn timed_classify(model: &mut Model, items: &[&Item], batch_size: usize) -> Result<TimedPass, PipelineError> {
    let warm = &items[..items.len().min(batch_size.max(1))];
    classify(model, warm, batch_size)?;
    classify(model, items, batch_size)
}

fn rmse_entries(model: &mut Model, items: &[&Item], batch_size: usize) -> Result<Vec<RmseEntry>, PipelineError> {
    let cfg = model.config.clone();
    let levels = cfg.approx_levels();
    let bands = cfg.bands;
    // [level][channel] -> (sum of squares, count)
    let mut acc: Vec<Vec<(f64, usize)>> = levels.iter().map(|&l| vec![(0.0, 0); cfg.channels_at(l)]).collect();
    for chunk in items.chunks(batch_size.max(1)) {
        let prepared: Vec<Prepared> = chunk.iter().map(|i| prepare(i, &cfg)).collect::<Result<_, _>>()?;
        let (x, targets, _) = batch(&prepared.iter().collect::<Vec<_>>())?;
        let out = model.forward(&x, Mode::Eval)?;
        for (li, (a, d)) in out.approximations.iter().zip(&targets).enumerate() {
            let (n, c, h, w) = a.dims4()?;
            let plane = h * w;
            for s in 0..n {
                for ch in 0..c {
                    let off = (s * c + ch) * plane;
                    let sum: f64 = a.data()[off..off + plane]
                        .iter()
                        .zip(&d.data()[off..off + plane])
                        .map(|(p, q)| (p - q) * (p - q))
                        .sum();
                    acc[li][ch].0 += sum;
                    acc[li][ch].1 += plane;
                }
            }
        }
    }
    let scale = cfg.coefficient_scale;
    let mut out = Vec::new();
    for (li, &level) in levels.iter().enumerate() {
        for (ch, &(sum, count)) in acc[li].iter().enumerate() {
            let (band, subband) = if level == 0 {
                (ch, "image".to_string())
            } else {
                (ch / 4, SubbandKind::ALL[ch % 4].name().to_string())
            };
            debug_assert!(band < bands);
            out.push(RmseEntry {
                level,
                band,
                subband,
                rmse: (sum / count.max(1) as f64).sqrt() / scale,
            });
        }
    }
    Ok(out)
}

fn stream_sizes(items: &[&Item], cfg: &ModelConfig) -> Result<(u64, u64), PipelineError> {
    let mut expected = 0;
    let mut total = 0;
    for item in items {
        let bytes = std::fs::read(&item.archive)
            .map_err(|e| PipelineError::Dataset(format!("{}: {e}", item.archive.display())))?;
        let cs = crate::codestream::Codestream::from_bytes(&bytes)?;
        expected += cs.prefix_len(cfg.input_level()) as u64;
        total += bytes.len() as u64;
    }
    Ok((expected, total))
}

/// Classify a split, timing decode plus inference; optionally measure
/// approximation RMSE in a separate untimed pass.
pub fn evaluate(
    model: &mut Model,
    dataset: &Dataset,
    split: SplitName,
    opts: &EvalOptions,
) -> Result<MetricsReport, PipelineError> {
    let items = dataset.split_items(split);
    if items.is_empty() {
        return Err(PipelineError::EmptySplit(split.name()));
    }
    let pass = timed_classify(model, &items, opts.batch_size)?;
    let mut per_class: Vec<ClassAccuracy> = dataset
        .classes
        .iter()
        .map(|c| ClassAccuracy {
            class: c.clone(),
            correct: 0,
            total: 0,
            accuracy: 0.0,
        })
        .collect();
    for (item, &p) in items.iter().zip(&pass.predictions) {
        let e = &mut per_class[item.label];
        e.total += 1;
        e.correct += usize::from(p == item.label);
    }
    for e in &mut per_class {
        e.accuracy = if e.total == 0 { 0.0 } else { 100.0 * e.correct as f64 / e.total as f64 };
    }
    let correct: usize = per_class.iter().map(|e| e.correct).sum();
    let rmse = if opts.rmse && model.stage_count() > 0 {
        rmse_entries(model, &items, opts.batch_size)?
    } else {
        Vec::new()
    };
    let (bytes_expected, bytes_total) = stream_sizes(&items, &model.config)?;
    let (group, method) = method_label(&model.config);
    Ok(MetricsReport {
        group,
        method,
        split: split.name().to_string(),
        accuracy: 100.0 * correct as f64 / items.len() as f64,
        correct,
        total: items.len(),
        per_class,
        rmse,
        timing: Timing {
            test_s: pass.total_s,
            decode_s: pass.decode_s,
            ..Timing::default()
        },
        bytes_read: pass.bytes_read,
        bytes_expected,
        bytes_total,
        epochs: 0,
        batch_size: opts.batch_size,
        seed: model.config.seed,
        model: model.config.clone(),
    })
}

/// Predicted label for a single archive.
pub fn predict_archive(model: &mut Model, path: &std::path::Path) -> Result<usize, PipelineError> {
    let (x, _) = network_input(path, &model.config.clone())?;
    let out = model.forward(&x, Mode::Eval)?;
    Ok(argmax(out.logits.data()))
}

/// Header of an archive, read without touching packet data.
pub fn archive_header(path: &std::path::Path) -> Result<crate::codestream::CodestreamHeader, PipelineError> {
    let file = std::fs::File::open(path).map_err(|e| PipelineError::Dataset(format!("{}: {e}", path.display())))?;
    Ok(*CodestreamReader::new(std::io::BufReader::new(file))?.header())
}
