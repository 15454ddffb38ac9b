//! Fixtures shared by the criterion benches.

use subband_core::{Image, Tensor};

/// A smooth test pattern with some high-frequency texture.
pub fn test_image(size: usize, bands: usize) -> Image {
    let mut samples = Vec::with_capacity(size * size * bands);
    for y in 0..size {
        for x in 0..size {
            for b in 0..bands {
                let smooth = (x * 255 / size + y * 128 / size) as u64;
                let texture = ((x * 31 + y * 17 + b * 7) as u64).wrapping_mul(2654435761) >> 28 & 15;
                samples.push(((smooth + texture) % 256) as u16);
            }
        }
    }
    Image::new(size, size, bands, 8, samples).expect("valid image")
}

/// Deterministic tensor with values in [-1, 1).
pub fn test_tensor(shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n as u64)
        .map(|i| ((i.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407) >> 33) % 2000) as f64 / 1000.0 - 1.0)
        .collect();
    Tensor::from_vec(shape, data).expect("shape matches")
}
