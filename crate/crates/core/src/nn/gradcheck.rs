//! Central finite-difference verification of analytic gradients.

use super::{Layer, Mode, NnError, Tensor};

/// Relative error `|a - n| / max(|a|, |n|, 1)`; gradients smaller than
/// one are compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Worst relative error between `analytic` and central differences of `f`
/// around `point`.
pub fn gradient_check(
    mut f: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    eps: f64,
) -> f64 {
    assert_eq!(point.len(), analytic.len());
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let plus = f(&x);
        x[i] = orig - eps;
        let minus = f(&x);
        x[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

/// Fixed pseudo-random projection weights so that the checked objective
/// `sum(w * layer(x))` exercises every output.
pub fn projection(shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|i| ((i as f64 * 0.754_877_666).fract() - 0.5) * 2.0)
        .collect();
    Tensor::from_vec(shape, data).expect("shape")
}

/// Check input and parameter gradients of a layer. `make` must build the
/// same layer (same weights, same dropout stream) on every call.
pub fn check_layer(
    make: &dyn Fn() -> Box<dyn Layer>,
    x: &Tensor,
    mode: Mode,
    eps: f64,
) -> Result<f64, NnError> {
    let mut layer = make();
    let y = layer.forward(x, mode)?;
    let w = projection(y.shape());
    let dx = layer.backward(&w)?;
    let base: Vec<Tensor> = layer.params().iter().map(|p| p.value.clone()).collect();
    let grads: Vec<Tensor> = layer.params().iter().map(|p| p.grad.clone()).collect();

    let eval = |x: &Tensor, params: &[Tensor]| -> f64 {
        let mut l = make();
        for (p, v) in l.params_mut().into_iter().zip(params) {
            p.value = v.clone();
        }
        l.forward(x, mode).expect("forward").dot(&w)
    };

    let mut worst = gradient_check(
        |v| eval(&Tensor::from_vec(x.shape(), v.to_vec()).expect("shape"), &base),
        x.data(),
        dx.data(),
        eps,
    );
    for (k, g) in grads.iter().enumerate() {
        let err = gradient_check(
            |v| {
                let mut params = base.clone();
                params[k] = Tensor::from_vec(base[k].shape(), v.to_vec()).expect("shape");
                eval(x, &params)
            },
            base[k].data(),
            g.data(),
            eps,
        );
        worst = worst.max(err);
    }
    Ok(worst)
}
