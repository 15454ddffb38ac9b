//! Layers with cached forward state and explicit backward passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conv::{
    conv2d, conv2d_backward, conv_output_len, conv_transpose2d, conv_transpose2d_backward,
    conv_transpose_output_len, gemm,
};
use super::init::xavier_uniform;
use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// A trainable tensor and its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

pub trait Layer {
    fn name(&self) -> &str;

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError>;

    /// Propagate `grad_out` to the input of the last forward call,
    /// accumulating parameter gradients on the way.
    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError>;

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }

    /// Non-trainable state saved in checkpoints (e.g. running statistics).
    fn buffers(&self) -> Vec<(String, &Tensor)> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        Vec::new()
    }
}

fn missing_cache(layer: &str) -> NnError {
    NnError::shape(format!("{layer}: backward called before forward"))
}

pub struct Conv2d {
    name: String,
    pub weight: Param,
    pub bias: Param,
    stride: usize,
    padding: usize,
    input: Option<Tensor>,
}

impl Conv2d {
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let shape = [out_channels, in_channels, kernel, kernel];
        let rf = kernel * kernel;
        Self {
            name: name.to_string(),
            weight: Param::new(
                format!("{name}.weight"),
                xavier_uniform(&shape, in_channels * rf, out_channels * rf, rng),
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[out_channels])),
            stride,
            padding,
            input: None,
        }
    }
}

impl Layer for Conv2d {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let y = conv2d(x, &self.weight.value, Some(&self.bias.value), self.stride, self.padding)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache(&self.name))?;
        let (dx, dw, db) = conv2d_backward(x, &self.weight.value, grad_out, self.stride, self.padding)?;
        self.weight.grad.add_assign(&dw);
        self.bias.grad.add_assign(&db);
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Transposed convolution. Weight layout is `(in_c, out_c, k, k)`.
pub struct ConvTranspose2d {
    name: String,
    pub weight: Param,
    pub bias: Param,
    stride: usize,
    padding: usize,
    input: Option<Tensor>,
}

impl ConvTranspose2d {
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let shape = [in_channels, out_channels, kernel, kernel];
        let rf = kernel * kernel;
        Self {
            name: name.to_string(),
            weight: Param::new(
                format!("{name}.weight"),
                xavier_uniform(&shape, in_channels * rf, out_channels * rf, rng),
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[out_channels])),
            stride,
            padding,
            input: None,
        }
    }
}

impl Layer for ConvTranspose2d {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let y = conv_transpose2d(x, &self.weight.value, Some(&self.bias.value), self.stride, self.padding)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache(&self.name))?;
        let (dx, dw, db) =
            conv_transpose2d_backward(x, &self.weight.value, grad_out, self.stride, self.padding)?;
        self.weight.grad.add_assign(&dw);
        self.bias.grad.add_assign(&db);
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub struct Relu {
    name: String,
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            mask: None,
        }
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

impl Layer for Relu {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        self.mask = Some(x.data().iter().map(|&v| v > 0.0).collect());
        Ok(relu(x))
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let mask = self.mask.as_ref().ok_or_else(|| missing_cache(&self.name))?;
        if mask.len() != grad_out.len() {
            return Err(NnError::shape("relu backward: gradient size mismatch"));
        }
        let data = grad_out
            .data()
            .iter()
            .zip(mask)
            .map(|(&g, &m)| if m { g } else { 0.0 })
            .collect();
        Tensor::from_vec(grad_out.shape(), data)
    }
}

pub struct MaxPool2d {
    name: String,
    window: usize,
    stride: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(name: &str, window: usize, stride: usize) -> Self {
        Self {
            name: name.to_string(),
            window,
            stride,
            cache: None,
        }
    }
}

impl Layer for MaxPool2d {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let (n, c, h, w) = x.dims4()?;
        let oh = conv_output_len(h, self.window, self.stride, 0)
            .ok_or_else(|| NnError::shape(format!("{}: {h}x{w} input smaller than window", self.name)))?;
        let ow = conv_output_len(w, self.window, self.stride, 0)
            .ok_or_else(|| NnError::shape(format!("{}: {h}x{w} input smaller than window", self.name)))?;
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        let mut argmax = vec![0usize; out.len()];
        let xd = x.data();
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = 0;
                    for ky in 0..self.window {
                        for kx in 0..self.window {
                            let i = base + (oy * self.stride + ky) * w + ox * self.stride + kx;
                            if xd[i] > best {
                                best = xd[i];
                                best_i = i;
                            }
                        }
                    }
                    let o = (plane * oh + oy) * ow + ox;
                    out.data_mut()[o] = best;
                    argmax[o] = best_i;
                }
            }
        }
        self.cache = Some((argmax, x.shape().to_vec()));
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let (argmax, shape) = self.cache.as_ref().ok_or_else(|| missing_cache(&self.name))?;
        if argmax.len() != grad_out.len() {
            return Err(NnError::shape("maxpool backward: gradient size mismatch"));
        }
        let mut dx = Tensor::zeros(shape);
        for (&i, &g) in argmax.iter().zip(grad_out.data()) {
            dx.data_mut()[i] += g;
        }
        Ok(dx)
    }
}

/// Fully connected layer on `(n, in)` inputs. Weight is `(out, in)`.
pub struct Linear {
    name: String,
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Linear {
    pub fn new(name: &str, in_features: usize, out_features: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            name: name.to_string(),
            weight: Param::new(
                format!("{name}.weight"),
                xavier_uniform(&[out_features, in_features], in_features, out_features, rng),
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[out_features])),
            input: None,
        }
    }
}

/// `x W^T + b` for `x: (n, in)`, `w: (out, in)`.
pub fn fully_connected(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    let (n, fin) = x.dims2()?;
    let (fout, win) = w.dims2()?;
    if fin != win || b.len() != fout {
        return Err(NnError::shape(format!(
            "linear layer ({fout}x{win}) applied to {fin} features"
        )));
    }
    let mut y = Tensor::zeros(&[n, fout]);
    for i in 0..n {
        y.item_mut(i).copy_from_slice(b.data());
    }
    gemm(n, fin, fout, x.data(), false, w.data(), true, y.data_mut(), 1.0);
    Ok(y)
}

impl Layer for Linear {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let y = fully_connected(x, &self.weight.value, &self.bias.value)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache(&self.name))?;
        let (n, fin) = x.dims2()?;
        let (gn, fout) = grad_out.dims2()?;
        if gn != n || fout != self.bias.value.len() {
            return Err(NnError::shape("linear backward: gradient shape mismatch"));
        }
        // dW += dY^T X ; db += sum dY ; dX = dY W
        gemm(fout, n, fin, grad_out.data(), true, x.data(), false, self.weight.grad.data_mut(), 1.0);
        for i in 0..n {
            for (b, g) in self.bias.grad.data_mut().iter_mut().zip(grad_out.item(i)) {
                *b += g;
            }
        }
        let mut dx = Tensor::zeros(&[n, fin]);
        gemm(n, fout, fin, grad_out.data(), false, self.weight.value.data(), false, dx.data_mut(), 0.0);
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub struct Flatten {
    name: String,
    shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            shape: None,
        }
    }
}

impl Layer for Flatten {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let n = x.shape()[0];
        self.shape = Some(x.shape().to_vec());
        x.clone().reshape(&[n, x.len() / n.max(1)])
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let shape = self.shape.as_ref().ok_or_else(|| missing_cache(&self.name))?;
        grad_out.clone().reshape(shape)
    }
}

/// Per-channel batch normalization over batch and spatial axes.
pub struct BatchNorm2d {
    name: String,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    eps: f64,
    momentum: f64,
    cache: Option<BnCache>,
}

struct BnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
    mode: Mode,
}

impl BatchNorm2d {
    pub const DEFAULT_EPS: f64 = 1e-5;
    pub const DEFAULT_MOMENTUM: f64 = 0.9;

    pub fn new(name: &str, channels: usize, eps: f64, momentum: f64) -> Self {
        Self {
            name: name.to_string(),
            gamma: Param::new(format!("{name}.gamma"), Tensor::full(&[channels], 1.0)),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            eps,
            momentum,
            cache: None,
        }
    }
}

impl Layer for BatchNorm2d {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.gamma.value.len() {
            return Err(NnError::shape(format!(
                "{}: {} channels, input has {c}",
                self.name,
                self.gamma.value.len()
            )));
        }
        let hw = h * w;
        let m = (n * hw) as f64;
        let xd = x.data();
        let mut xhat = Tensor::zeros(x.shape());
        let mut out = Tensor::zeros(x.shape());
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut sum = 0.0;
                    for i in 0..n {
                        let base = (i * c + ch) * hw;
                        sum += xd[base..base + hw].iter().sum::<f64>();
                    }
                    let mean = sum / m;
                    let mut sq = 0.0;
                    for i in 0..n {
                        let base = (i * c + ch) * hw;
                        sq += xd[base..base + hw].iter().map(|v| (v - mean).powi(2)).sum::<f64>();
                    }
                    let var = sq / m;
                    let rm = &mut self.running_mean.data_mut()[ch];
                    *rm = self.momentum * *rm + (1.0 - self.momentum) * mean;
                    let rv = &mut self.running_var.data_mut()[ch];
                    *rv = self.momentum * *rv + (1.0 - self.momentum) * var;
                    (mean, var)
                }
                Mode::Eval => (self.running_mean.data()[ch], self.running_var.data()[ch]),
            };
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std[ch] = is;
            let (g, b) = (self.gamma.value.data()[ch], self.beta.value.data()[ch]);
            for i in 0..n {
                let base = (i * c + ch) * hw;
                for k in base..base + hw {
                    let xh = (xd[k] - mean) * is;
                    xhat.data_mut()[k] = xh;
                    out.data_mut()[k] = g * xh + b;
                }
            }
        }
        self.cache = Some(BnCache { xhat, inv_std, mode });
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let cache = self.cache.as_ref().ok_or_else(|| missing_cache(&self.name))?;
        let (n, c, h, w) = grad_out.dims4()?;
        if grad_out.shape() != cache.xhat.shape() {
            return Err(NnError::shape("batchnorm backward: gradient shape mismatch"));
        }
        let hw = h * w;
        let m = (n * hw) as f64;
        let dy = grad_out.data();
        let xh = cache.xhat.data();
        let mut dx = Tensor::zeros(grad_out.shape());
        for ch in 0..c {
            let mut sum_dy = 0.0;
            let mut sum_dy_xh = 0.0;
            for i in 0..n {
                let base = (i * c + ch) * hw;
                for k in base..base + hw {
                    sum_dy += dy[k];
                    sum_dy_xh += dy[k] * xh[k];
                }
            }
            self.beta.grad.data_mut()[ch] += sum_dy;
            self.gamma.grad.data_mut()[ch] += sum_dy_xh;
            let g = self.gamma.value.data()[ch];
            let is = cache.inv_std[ch];
            for i in 0..n {
                let base = (i * c + ch) * hw;
                for k in base..base + hw {
                    dx.data_mut()[k] = match cache.mode {
                        Mode::Train => g * is / m * (m * dy[k] - sum_dy - xh[k] * sum_dy_xh),
                        Mode::Eval => g * is * dy[k],
                    };
                }
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<(String, &Tensor)> {
        vec![
            (format!("{}.running_mean", self.name), &self.running_mean),
            (format!("{}.running_var", self.name), &self.running_var),
        ]
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            (format!("{}.running_mean", self.name), &mut self.running_mean),
            (format!("{}.running_var", self.name), &mut self.running_var),
        ]
    }
}

/// Inverted dropout: kept activations are scaled by `1 / (1 - rate)` in
/// training; evaluation is the identity.
pub struct Dropout {
    name: String,
    rate: f64,
    rng: ChaCha8Rng,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(name: &str, rate: f64, seed: u64) -> Result<Self, NnError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::InvalidRate(rate));
        }
        Ok(Self {
            name: name.to_string(),
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
        })
    }
}

impl Layer for Dropout {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask = Some(vec![1.0; x.len()]);
            return Ok(x.clone());
        }
        let scale = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if self.rng.random::<f64>() < self.rate { 0.0 } else { scale })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.mask = Some(mask);
        Tensor::from_vec(x.shape(), data)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let mask = self.mask.as_ref().ok_or_else(|| missing_cache(&self.name))?;
        if mask.len() != grad_out.len() {
            return Err(NnError::shape("dropout backward: gradient size mismatch"));
        }
        let data = grad_out.data().iter().zip(mask).map(|(g, m)| g * m).collect();
        Tensor::from_vec(grad_out.shape(), data)
    }
}

/// Declarative description of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Tconv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    MaxPool {
        window: usize,
        stride: usize,
    },
    Fc {
        out_features: usize,
    },
    Relu,
    BatchNorm {
        eps: f64,
        momentum: f64,
    },
    Dropout {
        rate: f64,
    },
    Flatten,
}

impl LayerSpec {
    /// Per-sample output shape (batch axis excluded).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let spatial = |what: &str| -> Result<(usize, usize, usize), NnError> {
            match *input {
                [c, h, w] => Ok((c, h, w)),
                _ => Err(NnError::shape(format!("{what} needs a (c, h, w) input, got {input:?}"))),
            }
        };
        let too_small = || NnError::shape(format!("{self:?} does not fit input {input:?}"));
        match *self {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let (_, h, w) = spatial("conv")?;
                let oh = conv_output_len(h, kernel, stride, padding).ok_or_else(too_small)?;
                let ow = conv_output_len(w, kernel, stride, padding).ok_or_else(too_small)?;
                Ok(vec![out_channels, oh, ow])
            }
            LayerSpec::Tconv {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let (_, h, w) = spatial("tconv")?;
                let oh = conv_transpose_output_len(h, kernel, stride, padding).ok_or_else(too_small)?;
                let ow = conv_transpose_output_len(w, kernel, stride, padding).ok_or_else(too_small)?;
                Ok(vec![out_channels, oh, ow])
            }
            LayerSpec::MaxPool { window, stride } => {
                let (c, h, w) = spatial("maxpool")?;
                let oh = conv_output_len(h, window, stride, 0).ok_or_else(too_small)?;
                let ow = conv_output_len(w, window, stride, 0).ok_or_else(too_small)?;
                Ok(vec![c, oh, ow])
            }
            LayerSpec::Fc { out_features } => match *input {
                [_] => Ok(vec![out_features]),
                _ => Err(NnError::shape(format!("fc needs a flat input, got {input:?}"))),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::BatchNorm { .. } => {
                spatial("batchnorm")?;
                Ok(input.to_vec())
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(NnError::InvalidRate(rate));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Relu => Ok(input.to_vec()),
        }
    }

    /// Instantiate the layer for a per-sample `input` shape. Weights are
    /// drawn from `rng`; dropout layers derive their own stream from it.
    pub fn build(&self, name: &str, input: &[usize], rng: &mut ChaCha8Rng) -> Result<Box<dyn Layer>, NnError> {
        self.output_shape(input)?;
        let layer: Box<dyn Layer> = match *self {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                padding,
            } => Box::new(Conv2d::new(name, input[0], out_channels, kernel, stride, padding, rng)),
            LayerSpec::Tconv {
                out_channels,
                kernel,
                stride,
                padding,
            } => Box::new(ConvTranspose2d::new(name, input[0], out_channels, kernel, stride, padding, rng)),
            LayerSpec::MaxPool { window, stride } => Box::new(MaxPool2d::new(name, window, stride)),
            LayerSpec::Fc { out_features } => Box::new(Linear::new(name, input[0], out_features, rng)),
            LayerSpec::Relu => Box::new(Relu::new(name)),
            LayerSpec::BatchNorm { eps, momentum } => Box::new(BatchNorm2d::new(name, input[0], eps, momentum)),
            LayerSpec::Dropout { rate } => Box::new(Dropout::new(name, rate, rng.random())?),
            LayerSpec::Flatten => Box::new(Flatten::new(name)),
        };
        Ok(layer)
    }
}

/// Layers applied in order.
#[derive(Default)]
pub struct Sequential {
    pub layers: Vec<Box<dyn Layer>>,
}

impl Sequential {
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur, mode)?;
        }
        Ok(cur)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let mut g = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn buffers(&self) -> Vec<(String, &Tensor)> {
        self.layers.iter().flat_map(|l| l.buffers()).collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.layers.iter_mut().flat_map(|l| l.buffers_mut()).collect()
    }
}
