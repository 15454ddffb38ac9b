//! Transposed-convolution approximation layers feeding a convolutional
//! classification head, trained with a joint loss.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::checkpoint::{read_checkpoint, write_checkpoint};
use crate::nn::loss::{approximation_loss, cross_entropy, one_hot};
use crate::nn::{Adam, AdamConfig, LayerSpec, Mode, NnError, Param, Sequential, Tensor};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("checkpoint does not match model: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which part of the archive the classifier reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Coarsest sub-bands only (level L).
    Minimal,
    /// Sub-bands decoded to level L-1.
    Partial,
    /// Fully reconstructed image; no approximation layers.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproxTarget {
    Image,
    Subbands,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    /// Every emitted level contributes to the approximation loss.
    All,
    Final,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub conv_channels: Vec<usize>,
    /// 1-based indices of conv layers followed by 2x2 max-pooling.
    pub pool_after: Vec<usize>,
    pub kernel: usize,
    pub fc_hidden: usize,
    pub dropout: f64,
    pub batchnorm: bool,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl HeadConfig {
    /// Narrow head for small images and single-core training runs.
    pub fn compact() -> Self {
        Self {
            conv_channels: vec![16, 32, 48, 48, 32],
            fc_hidden: 128,
            dropout: 0.1,
            ..Self::default()
        }
    }
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            conv_channels: vec![64, 192, 384, 256, 256],
            pool_after: vec![1, 2, 5],
            kernel: 3,
            fc_hidden: 1024,
            dropout: 0.5,
            batchnorm: true,
            bn_eps: crate::nn::layers::BatchNorm2d::DEFAULT_EPS,
            bn_momentum: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub scenario: Scenario,
    /// Decomposition levels of the archived codestreams.
    pub levels: usize,
    /// Number of transposed-convolution approximation layers.
    pub approx_layers: usize,
    pub target: ApproxTarget,
    /// Colour bands of the source images.
    pub bands: usize,
    /// Image size; sub-band sizes follow from it.
    pub image_width: usize,
    pub image_height: usize,
    pub classes: usize,
    pub upsample_kernel: usize,
    pub upsample_stride: usize,
    pub upsample_padding: usize,
    pub approx_relu: bool,
    pub supervision: Supervision,
    /// Divide each level's squared-error sum by its spatial size.
    pub normalize_approx_loss: bool,
    /// Multiplier applied to wavelet coefficients before they enter the network.
    pub coefficient_scale: f64,
    pub head: HeadConfig,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Minimal,
            levels: 3,
            approx_layers: 2,
            target: ApproxTarget::Subbands,
            bands: 3,
            image_width: 256,
            image_height: 256,
            classes: 45,
            upsample_kernel: 2,
            upsample_stride: 2,
            upsample_padding: 0,
            approx_relu: true,
            supervision: Supervision::All,
            normalize_approx_loss: false,
            coefficient_scale: 1.0 / 256.0,
            head: HeadConfig::default(),
            lr: 1e-3,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        toml::from_str(text).map_err(|e| ModelError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Decomposition level of the network input; 0 means the image.
    pub fn input_level(&self) -> usize {
        match self.scenario {
            Scenario::Minimal => self.levels,
            Scenario::Partial => self.levels.saturating_sub(1),
            Scenario::Full => 0,
        }
    }

    /// Level reached by the last approximation layer.
    pub fn target_level(&self) -> usize {
        self.input_level().saturating_sub(self.approx_layers)
    }

    /// Levels emitted by the approximation layers, coarsest first.
    pub fn approx_levels(&self) -> Vec<usize> {
        let top = self.input_level();
        (1..=self.approx_layers).map(|i| top - i).collect()
    }

    /// Channels of the network input.
    pub fn input_channels(&self) -> usize {
        if self.input_level() == 0 {
            self.bands
        } else {
            4 * self.bands
        }
    }

    /// Channels produced at an approximated level.
    pub fn channels_at(&self, level: usize) -> usize {
        if level == 0 {
            self.bands
        } else {
            4 * self.bands
        }
    }

    /// Spatial size `(height, width)` of the sub-bands at `level`.
    pub fn dims_at(&self, level: usize) -> (usize, usize) {
        (self.image_height >> level, self.image_width >> level)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.bands == 0 || self.classes < 2 {
            return bad(format!("need bands >= 1 and classes >= 2, got {} and {}", self.bands, self.classes));
        }
        if self.scenario == Scenario::Partial && self.levels < 2 {
            return bad("partial decoding needs at least 2 levels".into());
        }
        if self.scenario == Scenario::Full && self.approx_layers != 0 {
            return bad("full-decode input admits no approximation layers".into());
        }
        if self.approx_layers > self.input_level() {
            return bad(format!(
                "{} approximation layers exceed input level {}",
                self.approx_layers,
                self.input_level()
            ));
        }
        if self.approx_layers > 0 && self.target_level() == 0 && self.target != ApproxTarget::Image {
            return bad("sub-band targets need a target level of at least 1".into());
        }
        if self.target == ApproxTarget::Image && self.approx_layers > 0 && self.target_level() != 0 {
            return bad(format!(
                "an image target needs {} approximation layers, got {}",
                self.input_level(),
                self.approx_layers
            ));
        }
        let step = 1usize << self.input_level();
        if self.image_width == 0
            || self.image_height == 0
            || !self.image_width.is_multiple_of(step)
            || !self.image_height.is_multiple_of(step)
        {
            return bad(format!(
                "image size {}x{} must be a positive multiple of {step}",
                self.image_width, self.image_height
            ));
        }
        if !self.coefficient_scale.is_finite() || self.coefficient_scale <= 0.0 {
            return bad("coefficient_scale must be positive".into());
        }
        Ok(())
    }
}

/// Approximation stages plus classification head.
pub struct Model {
    pub config: ModelConfig,
    stages: Vec<Sequential>,
    head: Sequential,
    optimizer: Adam,
}

/// Result of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// One tensor per approximation layer, coarsest first.
    pub approximations: Vec<Tensor>,
    pub logits: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLoss {
    pub total: f64,
    pub classification: f64,
    pub approximation: f64,
}

/// Shapes along the approximation chain, input first, as `(c, h, w)`.
pub fn shape_chain(cfg: &ModelConfig) -> Result<Vec<[usize; 3]>, ModelError> {
    let (h, w) = cfg.dims_at(cfg.input_level());
    let mut shape = vec![cfg.input_channels(), h, w];
    let mut chain = vec![[shape[0], shape[1], shape[2]]];
    for level in cfg.approx_levels() {
        let spec = LayerSpec::Tconv {
            out_channels: cfg.channels_at(level),
            kernel: cfg.upsample_kernel,
            stride: cfg.upsample_stride,
            padding: cfg.upsample_padding,
        };
        shape = spec.output_shape(&shape)?;
        let (eh, ew) = cfg.dims_at(level);
        if shape[1..] != [eh, ew] {
            return Err(ModelError::Config(format!(
                "approximation layer yields {}x{} but level {level} is {eh}x{ew}",
                shape[1], shape[2]
            )));
        }
        chain.push([shape[0], shape[1], shape[2]]);
    }
    Ok(chain)
}

fn head_specs(cfg: &ModelConfig) -> Vec<(String, LayerSpec)> {
    let h = &cfg.head;
    let mut specs = Vec::new();
    for (i, &c) in h.conv_channels.iter().enumerate() {
        let n = i + 1;
        specs.push((
            format!("head.conv{n}"),
            LayerSpec::Conv {
                out_channels: c,
                kernel: h.kernel,
                stride: 1,
                padding: h.kernel / 2,
            },
        ));
        if h.batchnorm {
            specs.push((
                format!("head.bn{n}"),
                LayerSpec::BatchNorm {
                    eps: h.bn_eps,
                    momentum: h.bn_momentum,
                },
            ));
        }
        specs.push((format!("head.relu{n}"), LayerSpec::Relu));
        if h.dropout > 0.0 {
            specs.push((format!("head.drop{n}"), LayerSpec::Dropout { rate: h.dropout }));
        }
        if h.pool_after.contains(&n) {
            specs.push((format!("head.pool{n}"), LayerSpec::MaxPool { window: 2, stride: 2 }));
        }
    }
    specs.push(("head.flatten".into(), LayerSpec::Flatten));
    if h.fc_hidden > 0 {
        specs.push((
            "head.fc1".into(),
            LayerSpec::Fc {
                out_features: h.fc_hidden,
            },
        ));
        specs.push(("head.fc1_relu".into(), LayerSpec::Relu));
    }
    specs.push((
        "head.fc_out".into(),
        LayerSpec::Fc {
            out_features: cfg.classes,
        },
    ));
    specs
}

pub fn build_model(cfg: &ModelConfig) -> Result<Model, ModelError> {
    cfg.validate()?;
    let chain = shape_chain(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stages = Vec::new();
    for (i, pair) in chain.windows(2).enumerate() {
        let spec = LayerSpec::Tconv {
            out_channels: pair[1][0],
            kernel: cfg.upsample_kernel,
            stride: cfg.upsample_stride,
            padding: cfg.upsample_padding,
        };
        let mut stage = Sequential::default();
        stage.layers.push(spec.build(&format!("approx{}.tconv", i + 1), &pair[0], &mut rng)?);
        if cfg.approx_relu {
            stage.layers.push(LayerSpec::Relu.build(&format!("approx{}.relu", i + 1), &pair[1], &mut rng)?);
        }
        stages.push(stage);
    }
    let mut shape = chain.last().expect("chain has an input").to_vec();
    let mut head = Sequential::default();
    for (name, spec) in head_specs(cfg) {
        let next = spec
            .output_shape(&shape)
            .map_err(|e| ModelError::Config(format!("{name}: {e}")))?;
        head.layers.push(spec.build(&name, &shape, &mut rng)?);
        shape = next;
    }
    Ok(Model {
        config: cfg.clone(),
        stages,
        head,
        optimizer: Adam::new(AdamConfig::with_lr(cfg.lr)),
    })
}

/// Index of the largest logit; the lowest index wins ties.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Joint loss: cross-entropy plus approximation loss over the supervised
/// levels. Returns the loss and the gradients with respect to each
/// approximation and to the logits.
pub fn joint_loss(
    approximations: &[Tensor],
    targets: &[Tensor],
    logits: &Tensor,
    labels: &[usize],
    normalize: bool,
) -> Result<(JointLoss, Vec<Tensor>, Tensor), NnError> {
    let (_, q) = logits.dims2()?;
    let (classification, dlogits) = cross_entropy(logits, &one_hot(labels, q)?)?;
    let (approximation, dapprox) = approximation_loss(approximations, targets, normalize)?;
    Ok((
        JointLoss {
            total: classification + approximation,
            classification,
            approximation,
        },
        dapprox,
        dlogits,
    ))
}

impl Model {
    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<ForwardOutput, ModelError> {
        let (_, c, h, w) = input.dims4()?;
        let cfg = &self.config;
        let (eh, ew) = cfg.dims_at(cfg.input_level());
        if (c, h, w) != (cfg.input_channels(), eh, ew) {
            return Err(NnError::shape(format!(
                "model expects input ({}, {eh}, {ew}), got ({c}, {h}, {w})",
                cfg.input_channels()
            ))
            .into());
        }
        let mut approximations = Vec::with_capacity(self.stages.len());
        let mut cur = input.clone();
        for stage in &mut self.stages {
            cur = stage.forward(&cur, mode)?;
            approximations.push(cur.clone());
        }
        let logits = self.head.forward(&cur, mode)?;
        Ok(ForwardOutput { approximations, logits })
    }

    /// Levels whose approximation is supervised, as indices into the
    /// approximation list.
    pub fn supervised(&self) -> Vec<usize> {
        let n = self.stages.len();
        match self.config.supervision {
            Supervision::All => (0..n).collect(),
            Supervision::Final => (n.saturating_sub(1)..n).collect(),
        }
    }

    /// Loss of a forward output against decoded targets (one per
    /// approximation, coarsest first) and labels.
    pub fn loss(
        &self,
        out: &ForwardOutput,
        targets: &[Tensor],
        labels: &[usize],
    ) -> Result<(JointLoss, Vec<Option<Tensor>>, Tensor), ModelError> {
        if targets.len() != out.approximations.len() {
            return Err(NnError::shape(format!(
                "{} targets for {} approximated levels",
                targets.len(),
                out.approximations.len()
            ))
            .into());
        }
        let idx = self.supervised();
        let approx: Vec<Tensor> = idx.iter().map(|&i| out.approximations[i].clone()).collect();
        let tgt: Vec<Tensor> = idx.iter().map(|&i| targets[i].clone()).collect();
        let (loss, dapprox, dlogits) =
            joint_loss(&approx, &tgt, &out.logits, labels, self.config.normalize_approx_loss)?;
        let mut grads = vec![None; out.approximations.len()];
        for (i, g) in idx.into_iter().zip(dapprox) {
            grads[i] = Some(g);
        }
        Ok((loss, grads, dlogits))
    }

    /// Backpropagate; parameter gradients accumulate.
    pub fn backward(&mut self, approx_grads: &[Option<Tensor>], dlogits: &Tensor) -> Result<Tensor, ModelError> {
        let mut g = self.head.backward(dlogits)?;
        for (i, stage) in self.stages.iter_mut().enumerate().rev() {
            if let Some(extra) = &approx_grads[i] {
                g.add_assign(extra);
            }
            g = stage.backward(&g)?;
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// One Adam step on a batch.
    pub fn train_step(&mut self, input: &Tensor, targets: &[Tensor], labels: &[usize]) -> Result<JointLoss, ModelError> {
        Ok(self.train_step_with_logits(input, targets, labels)?.0)
    }

    /// [`Model::train_step`], also returning the training-mode logits.
    pub fn train_step_with_logits(
        &mut self,
        input: &Tensor,
        targets: &[Tensor],
        labels: &[usize],
    ) -> Result<(JointLoss, Tensor), ModelError> {
        self.zero_grad();
        let out = self.forward(input, Mode::Train)?;
        let (loss, dapprox, dlogits) = self.loss(&out, targets, labels)?;
        self.backward(&dapprox, &dlogits)?;
        let Model {
            stages, head, optimizer, ..
        } = self;
        let mut params: Vec<&mut Param> = stages
            .iter_mut()
            .flat_map(|s| s.params_mut())
            .chain(head.params_mut())
            .collect();
        optimizer.step(&mut params);
        Ok((loss, out.logits))
    }

    /// Class of every sample in the batch, from eval-mode logits.
    pub fn predict(&mut self, input: &Tensor) -> Result<Vec<usize>, ModelError> {
        let out = self.forward(input, Mode::Eval)?;
        let (n, q) = out.logits.dims2()?;
        Ok((0..n).map(|i| argmax(&out.logits.data()[i * q..(i + 1) * q])).collect())
    }

    pub fn params(&self) -> Vec<&Param> {
        self.stages
            .iter()
            .flat_map(|s| s.params())
            .chain(self.head.params())
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let Model { stages, head, .. } = self;
        stages
            .iter_mut()
            .flat_map(|s| s.params_mut())
            .chain(head.params_mut())
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Parameters and normalization statistics, by name.
    pub fn state(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self
            .params()
            .into_iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        for (name, t) in self.head.buffers() {
            out.push((name, t.clone()));
        }
        out
    }

    pub fn load_state(&mut self, state: &[(String, Tensor)]) -> Result<(), ModelError> {
        let lookup = |name: &str, shape: &[usize]| -> Result<Tensor, ModelError> {
            let (_, t) = state
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != shape {
                return Err(ModelError::Checkpoint(format!(
                    "{name}: shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            Ok(t.clone())
        };
        for p in self.params_mut() {
            p.value = lookup(&p.name, p.value.shape())?;
        }
        for (name, buf) in self.head.buffers_mut() {
            *buf = lookup(&name, buf.shape())?;
        }
        Ok(())
    }

    pub fn save_checkpoint<W: Write>(&self, out: W) -> Result<(), ModelError> {
        let state = self.state();
        write_checkpoint(out, state.iter().map(|(n, t)| (n.as_str(), t)))?;
        Ok(())
    }

    pub fn load_checkpoint<R: Read>(&mut self, input: R) -> Result<(), ModelError> {
        let state = read_checkpoint(input)?;
        self.load_state(&state)
    }
}
