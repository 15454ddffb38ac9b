//! Convolution and transposed convolution over `(n, c, h, w)` tensors.
//!
//! Both operators are expressed through the same unfolding (`im2col`) and
//! folding (`col2im`) of input patches. Convolution multiplies unfolded
//! patches by the kernel matrix; transposed convolution multiplies by the
//! kernel transpose and folds the result, which makes it the exact adjoint
//! of convolution with the same kernel.

use super::{NnError, Tensor};

/// Output length of a convolution: `floor((n + 2p - k) / s) + 1`.
pub fn conv_output_len(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Output length of a transposed convolution: `s * (n - 1) + k - 2p`.
pub fn conv_transpose_output_len(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    if input == 0 || stride == 0 || kernel == 0 {
        return None;
    }
    let full = stride * (input - 1) + kernel;
    (full > 2 * padding).then(|| full - 2 * padding)
}

/// Geometry of one convolution, in the direction image -> feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self, NnError> {
        let out_h = conv_output_len(height, kernel_h, stride, padding);
        let out_w = conv_output_len(width, kernel_w, stride, padding);
        match (out_h, out_w) {
            (Some(out_h), Some(out_w)) => Ok(Self {
                channels,
                height,
                width,
                kernel_h,
                kernel_w,
                stride,
                padding,
                out_h,
                out_w,
            }),
            _ => Err(NnError::shape(format!(
                "{kernel_h}x{kernel_w} kernel with stride {stride} and padding {padding} does not fit a {height}x{width} input"
            ))),
        }
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Input index touched by output `(oy, ox)` and kernel tap `(ky, kx)`,
    /// or `None` when it falls in the zero padding.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.padding)?;
        let x = (ox * self.stride + kx).checked_sub(self.padding)?;
        (y < self.height && x < self.width).then_some((y, x))
    }
}

/// Unfold one `(c, h, w)` sample into a `(c*kh*kw, oh*ow)` patch matrix.
pub fn im2col(x: &[f64], g: &ConvGeometry, cols: &mut [f64]) {
    debug_assert_eq!(cols.len(), g.patch_len() * g.positions());
    let npos = g.positions();
    for c in 0..g.channels {
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let row = (c * g.kernel_h + ky) * g.kernel_w + kx;
                let dst = &mut cols[row * npos..(row + 1) * npos];
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        dst[oy * g.out_w + ox] = match g.source(oy, ox, ky, kx) {
                            Some((y, x0)) => x[(c * g.height + y) * g.width + x0],
                            None => 0.0,
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add a patch matrix back onto a sample.
pub fn col2im(cols: &[f64], g: &ConvGeometry, x: &mut [f64]) {
    let npos = g.positions();
    for c in 0..g.channels {
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let row = (c * g.kernel_h + ky) * g.kernel_w + kx;
                let src = &cols[row * npos..(row + 1) * npos];
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        if let Some((y, x0)) = g.source(oy, ox, ky, kx) {
                            x[(c * g.height + y) * g.width + x0] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` for row-major matrices, where
/// `op(a)` is `m x k` and `op(b)` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every index the strides reach is
    // inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn check_channels(what: &str, expected: usize, got: usize) -> Result<(), NnError> {
    if expected != got {
        return Err(NnError::shape(format!(
            "{what}: kernel expects {expected} input channels, tensor has {got}"
        )));
    }
    Ok(())
}

/// Convolution. `weight` is `(out_c, in_c, kh, kw)`, `bias` is `(out_c)`.
pub fn conv2d(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor, NnError> {
    let (n, c, h, w) = x.dims4()?;
    let (oc, ic, kh, kw) = weight.dims4()?;
    check_channels("conv2d", ic, c)?;
    let g = ConvGeometry::new(c, h, w, kh, kw, stride, padding)?;
    let npos = g.positions();
    let mut out = Tensor::zeros(&[n, oc, g.out_h, g.out_w]);
    let mut cols = vec![0.0; g.patch_len() * npos];
    for i in 0..n {
        im2col(x.item(i), &g, &mut cols);
        let y = out.item_mut(i);
        if let Some(b) = bias {
            for (o, &bv) in b.data().iter().enumerate() {
                y[o * npos..(o + 1) * npos].fill(bv);
            }
        }
        gemm(oc, g.patch_len(), npos, weight.data(), false, &cols, false, y, if bias.is_some() { 1.0 } else { 0.0 });
    }
    Ok(out)
}

/// Gradients of [`conv2d`]: `(d_input, d_weight, d_bias)`.
pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let (n, c, h, w) = x.dims4()?;
    let (oc, ic, kh, kw) = weight.dims4()?;
    check_channels("conv2d backward", ic, c)?;
    let g = ConvGeometry::new(c, h, w, kh, kw, stride, padding)?;
    if grad_out.shape() != [n, oc, g.out_h, g.out_w] {
        return Err(NnError::shape(format!(
            "conv2d backward: gradient shape {:?}, expected {:?}",
            grad_out.shape(),
            [n, oc, g.out_h, g.out_w]
        )));
    }
    let npos = g.positions();
    let plen = g.patch_len();
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(weight.shape());
    let mut db = Tensor::zeros(&[oc]);
    let mut cols = vec![0.0; plen * npos];
    let mut dcols = vec![0.0; plen * npos];
    for i in 0..n {
        let dy = grad_out.item(i);
        for o in 0..oc {
            db.data_mut()[o] += dy[o * npos..(o + 1) * npos].iter().sum::<f64>();
        }
        im2col(x.item(i), &g, &mut cols);
        // dW += dY * cols^T
        gemm(oc, npos, plen, dy, false, &cols, true, dw.data_mut(), 1.0);
        // dcols = W^T * dY
        gemm(plen, oc, npos, weight.data(), true, dy, false, &mut dcols, 0.0);
        col2im(&dcols, &g, dx.item_mut(i));
    }
    Ok((dx, dw, db))
}

/// Transposed convolution, the adjoint of [`conv2d`] with the same kernel.
///
/// `weight` is `(in_c, out_c, kh, kw)`: the layout of the convolution that
/// maps the `out_c`-channel output back to the `in_c`-channel input.
/// Output size per axis is `stride * (n - 1) + k - 2 * padding`.
pub fn conv_transpose2d(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor, NnError> {
    let (n, c, h, w) = x.dims4()?;
    let g = transpose_geometry(x, weight, stride, padding)?;
    let oc = g.channels;
    let npos = h * w;
    let mut out = Tensor::zeros(&[n, oc, g.height, g.width]);
    let mut cols = vec![0.0; g.patch_len() * npos];
    let plane = g.height * g.width;
    for i in 0..n {
        // cols = W^T * x  (W viewed as in_c x (out_c*kh*kw))
        gemm(g.patch_len(), c, npos, weight.data(), true, x.item(i), false, &mut cols, 0.0);
        let y = out.item_mut(i);
        col2im(&cols, &g, y);
        if let Some(b) = bias {
            for (o, &bv) in b.data().iter().enumerate() {
                y[o * plane..(o + 1) * plane].iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv_transpose2d`]: `(d_input, d_weight, d_bias)`.
pub fn conv_transpose2d_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let (n, c, h, w) = x.dims4()?;
    let g = transpose_geometry(x, weight, stride, padding)?;
    let oc = g.channels;
    if grad_out.shape() != [n, oc, g.height, g.width] {
        return Err(NnError::shape(format!(
            "transposed conv backward: gradient shape {:?}, expected {:?}",
            grad_out.shape(),
            [n, oc, g.height, g.width]
        )));
    }
    let npos = h * w;
    let plen = g.patch_len();
    let plane = g.height * g.width;
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(weight.shape());
    let mut db = Tensor::zeros(&[oc]);
    let mut dcols = vec![0.0; plen * npos];
    for i in 0..n {
        let dy = grad_out.item(i);
        for o in 0..oc {
            db.data_mut()[o] += dy[o * plane..(o + 1) * plane].iter().sum::<f64>();
        }
        im2col(dy, &g, &mut dcols);
        // dx = W * dcols
        gemm(c, plen, npos, weight.data(), false, &dcols, false, dx.item_mut(i), 0.0);
        // dW += x * dcols^T
        gemm(c, npos, plen, x.item(i), false, &dcols, true, dw.data_mut(), 1.0);
    }
    Ok((dx, dw, db))
}

/// Geometry of the convolution whose adjoint the transposed convolution is.
fn transpose_geometry(
    x: &Tensor,
    weight: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<ConvGeometry, NnError> {
    let (_, c, h, w) = x.dims4()?;
    let (ic, oc, kh, kw) = weight.dims4()?;
    check_channels("transposed conv", ic, c)?;
    let oh = conv_transpose_output_len(h, kh, stride, padding);
    let ow = conv_transpose_output_len(w, kw, stride, padding);
    let (Some(oh), Some(ow)) = (oh, ow) else {
        return Err(NnError::NonPositiveOutput {
            input: (h, w),
            kernel: kh,
            stride,
            padding,
        });
    };
    let g = ConvGeometry::new(oc, oh, ow, kh, kw, stride, padding)?;
    if (g.out_h, g.out_w) != (h, w) {
        // Output sizes that do not round-trip through the forward formula
        // would need output padding, which is not supported.
        return Err(NnError::shape(format!(
            "transposed conv of {h}x{w} to {oh}x{ow} is not the adjoint of a convolution"
        )));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Nested-loop convolution straight from the definition.
    fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, s: usize, p: usize) -> Tensor {
        let (n, c, h, wd) = x.dims4().unwrap();
        let (oc, _, kh, kw) = w.dims4().unwrap();
        let oh = (h + 2 * p - kh) / s + 1;
        let ow = (wd + 2 * p - kw) / s + 1;
        let mut out = Tensor::zeros(&[n, oc, oh, ow]);
        for i in 0..n {
            for o in 0..oc {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b.data()[o];
                        for ci in 0..c {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let y = (oy * s + ky) as isize - p as isize;
                                    let xx = (ox * s + kx) as isize - p as isize;
                                    if y < 0 || xx < 0 || y >= h as isize || xx >= wd as isize {
                                        continue;
                                    }
                                    acc += x.data()[((i * c + ci) * h + y as usize) * wd + xx as usize]
                                        * w.data()[((o * c + ci) * kh + ky) * kw + kx];
                                }
                            }
                        }
                        out.data_mut()[((i * oc + o) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn output_size_formulas() {
        assert_eq!(conv_transpose_output_len(32, 2, 2, 0), Some(64));
        assert_eq!(conv_transpose_output_len(75, 2, 2, 0), Some(150));
        assert_eq!(conv_transpose_output_len(17, 1, 1, 0), Some(17));
        assert_eq!(conv_transpose_output_len(1, 1, 1, 1), None);
        assert_eq!(conv_output_len(64, 2, 2, 0), Some(32));
        assert_eq!(conv_output_len(3, 5, 1, 0), None);
    }

    #[test]
    fn identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[2, 1, 5, 4], &mut rng);
        let w = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(conv2d(&x, &w, None, 1, 0).unwrap(), x);
    }

    #[test]
    fn matches_naive_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(c, oc, h, w, k, s, p) in &[
            (1, 1, 3, 3, 2, 1, 0),
            (3, 4, 7, 6, 3, 1, 1),
            (2, 3, 9, 8, 3, 2, 1),
            (2, 2, 5, 5, 1, 2, 0),
        ] {
            let x = random(&[2, c, h, w], &mut rng);
            let wt = random(&[oc, c, k, k], &mut rng);
            let b = random(&[oc], &mut rng);
            let got = conv2d(&x, &wt, Some(&b), s, p).unwrap();
            let want = naive_conv(&x, &wt, &b, s, p);
            assert!(got.max_abs_diff(&want) < 1e-12);
        }
    }

    #[test]
    fn transpose_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(c, oc, h, w, k, s, p) in &[(3, 2, 8, 8, 2, 2, 0), (2, 3, 7, 5, 3, 2, 1), (1, 1, 4, 4, 3, 1, 1)] {
            let x = random(&[1, c, h, w], &mut rng);
            let wt = random(&[oc, c, k, k], &mut rng);
            let cx = conv2d(&x, &wt, None, s, p).unwrap();
            let y = random(cx.shape(), &mut rng);
            let cty = conv_transpose2d(&y, &wt, None, s, p).unwrap();
            assert_eq!(cty.shape(), x.shape());
            assert!((cx.dot(&y) - x.dot(&cty)).abs() < 1e-10);
        }
    }

    #[test]
    fn transpose_rejects_bad_shapes() {
        let x = Tensor::zeros(&[1, 2, 1, 1]);
        let w = Tensor::zeros(&[3, 1, 1, 1]);
        assert!(matches!(conv_transpose2d(&x, &w, None, 1, 0), Err(NnError::Shape(_))));
        let w = Tensor::zeros(&[2, 1, 1, 1]);
        assert!(matches!(
            conv_transpose2d(&x, &w, None, 1, 1),
            Err(NnError::NonPositiveOutput { .. })
        ));
    }

    #[test]
    fn upsampling_doubles() {
        let x = Tensor::zeros(&[1, 12, 32, 32]);
        let w = Tensor::zeros(&[12, 12, 2, 2]);
        let y = conv_transpose2d(&x, &w, None, 2, 0).unwrap();
        assert_eq!(y.shape(), &[1, 12, 64, 64]);
    }
}
