//! Synthetic texture classes and natural-looking test images.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::image::Image;
use crate::io::write_image;

pub const CLASS_NAMES: [&str; 8] = [
    "hstripes",
    "vstripes",
    "checker",
    "blobs",
    "diagonal",
    "rings",
    "gradient",
    "speckle",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub classes: usize,
    /// Total number of images, spread evenly over the classes.
    pub count: usize,
    pub size: usize,
    pub bands: usize,
    /// Amplitude of the uniform per-pixel noise.
    pub noise: f64,
    pub seed: u64,
    /// Output extension: `ppm`, `pgm` or `png`.
    pub format: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            count: 400,
            size: 64,
            bands: 3,
            noise: 12.0,
            seed: 0,
            format: "ppm".into(),
        }
    }
}

fn pattern(class: usize, x: f64, y: f64, p: &Params) -> f64 {
    let xr = x * p.cos - y * p.sin;
    match class {
        0 => (2.0 * PI * y / p.period + p.phase).sin(),
        1 => (2.0 * PI * x / p.period + p.phase).sin(),
        2 => {
            let s = (PI * (x + p.phase) / (p.period / 2.0)).sin() * (PI * (y + p.phase) / (p.period / 2.0)).sin();
            s.signum()
        }
        3 => {
            let v: f64 = p
                .blobs
                .iter()
                .map(|&(bx, by, r)| (-((x - bx).powi(2) + (y - by).powi(2)) / (2.0 * r * r)).exp())
                .sum();
            2.0 * v.min(1.0) - 1.0
        }
        4 => (2.0 * PI * (x + y) / (p.period * std::f64::consts::SQRT_2) + p.phase).sin(),
        5 => {
            let r = ((x - p.cx).powi(2) + (y - p.cy).powi(2)).sqrt();
            (2.0 * PI * r / p.period + p.phase).sin()
        }
        6 => (xr / p.size) * 2.0 - 1.0,
        _ => 0.0,
    }
}

struct Params {
    period: f64,
    phase: f64,
    cos: f64,
    sin: f64,
    cx: f64,
    cy: f64,
    size: f64,
    blobs: Vec<(f64, f64, f64)>,
}

/// One image of texture class `class` (see [`CLASS_NAMES`]).
pub fn synth_image(class: usize, size: usize, bands: usize, noise: f64, rng: &mut ChaCha8Rng) -> Image {
    let s = size as f64;
    let angle = rng.random_range(0.0..2.0 * PI);
    let params = Params {
        period: rng.random_range(8.0..16.0),
        phase: rng.random_range(0.0..2.0 * PI),
        cos: angle.cos(),
        sin: angle.sin(),
        cx: rng.random_range(0.0..s),
        cy: rng.random_range(0.0..s),
        size: s,
        blobs: (0..rng.random_range(3..7))
            .map(|_| {
                (
                    rng.random_range(0.0..s),
                    rng.random_range(0.0..s),
                    rng.random_range(s / 12.0..s / 6.0),
                )
            })
            .collect(),
    };
    let base: Vec<f64> = (0..bands).map(|_| rng.random_range(70.0..180.0)).collect();
    let amp: Vec<f64> = (0..bands).map(|_| rng.random_range(35.0..65.0)).collect();
    let mut samples = Vec::with_capacity(size * size * bands);
    for b in 0..bands {
        for y in 0..size {
            for x in 0..size {
                let v = if class == 7 {
                    rng.random_range(-1.0..1.0)
                } else {
                    pattern(class, x as f64, y as f64, &params)
                };
                let n = if noise > 0.0 { rng.random_range(-noise..noise) } else { 0.0 };
                samples.push((base[b] + amp[b] * v + n).round().clamp(0.0, 255.0) as u16);
            }
        }
    }
    Image::new(size, size, bands, 8, samples).expect("valid synthetic image")
}

fn value_noise(w: usize, h: usize, cell: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gw = w / cell + 2;
    let gh = h / cell + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64 / cell as f64, y as f64 / cell as f64);
            let (ix, iy) = (fx as usize, fy as usize);
            let (tx, ty) = (fx - ix as f64, fy - iy as f64);
            // smoothstep weights avoid visible grid creases
            let (sx, sy) = (tx * tx * (3.0 - 2.0 * tx), ty * ty * (3.0 - 2.0 * ty));
            let g = |i: usize, j: usize| grid[j * gw + i];
            let top = g(ix, iy) * (1.0 - sx) + g(ix + 1, iy) * sx;
            let bottom = g(ix, iy + 1) * (1.0 - sx) + g(ix + 1, iy + 1) * sx;
            out.push(top * (1.0 - sy) + bottom * sy);
        }
    }
    out
}

/// Smooth multi-scale image whose spectrum falls off like that of
/// photographs: octaves of value noise with amplitude proportional to
/// scale, shared across bands with a small per-band tint.
pub fn natural_image(width: usize, height: usize, bands: usize, rng: &mut ChaCha8Rng) -> Image {
    let mut luma = vec![128.0; width * height];
    let mut cell = (width.max(height) / 2).max(2);
    while cell >= 2 {
        let amp = 90.0 * cell as f64 / width.max(height) as f64;
        for (l, v) in luma.iter_mut().zip(value_noise(width, height, cell, rng)) {
            *l += amp * v;
        }
        cell /= 2;
    }
    let mut samples = Vec::with_capacity(width * height * bands);
    for _ in 0..bands {
        let tint = value_noise(width, height, (width.max(height) / 4).max(2), rng);
        let gain = rng.random_range(0.8..1.2);
        for (l, t) in luma.iter().zip(tint) {
            let v = (l - 128.0) * gain + 128.0 + 15.0 * t + rng.random_range(-1.5..1.5);
            samples.push(v.round().clamp(0.0, 255.0) as u16);
        }
    }
    Image::new(width, height, bands, 8, samples).expect("valid natural image")
}

/// Labelled images, class `i % classes` for image `i`.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<(usize, Image)>, PipelineError> {
    if !(1..=CLASS_NAMES.len()).contains(&cfg.classes) {
        return Err(PipelineError::Config(format!(
            "classes must be between 1 and {}",
            CLASS_NAMES.len()
        )));
    }
    if cfg.size == 0 || cfg.bands == 0 {
        return Err(PipelineError::Config("size and bands must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok((0..cfg.count)
        .map(|i| {
            let class = i % cfg.classes;
            (class, synth_image(class, cfg.size, cfg.bands, cfg.noise, &mut rng))
        })
        .collect())
}

/// Write `out_dir/<class>/<index>.<format>`; returns the number written.
pub fn write_fixture(out_dir: &Path, cfg: &SynthConfig) -> Result<usize, PipelineError> {
    let images = generate(cfg)?;
    for name in &CLASS_NAMES[..cfg.classes] {
        fs::create_dir_all(out_dir.join(name))
            .map_err(|e| PipelineError::Dataset(format!("{}: {e}", out_dir.display())))?;
    }
    for (i, (class, image)) in images.iter().enumerate() {
        let path = out_dir
            .join(CLASS_NAMES[*class])
            .join(format!("{i:05}.{}", cfg.format));
        write_image(&path, image)?;
    }
    Ok(images.len())
}

/// Write `count` natural-looking images to `out_dir/natural/`.
pub fn write_natural_fixture(
    out_dir: &Path,
    count: usize,
    size: usize,
    bands: usize,
    seed: u64,
    format: &str,
) -> Result<usize, PipelineError> {
    let dir = out_dir.join("natural");
    fs::create_dir_all(&dir).map_err(|e| PipelineError::Dataset(format!("{}: {e}", dir.display())))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        let img = natural_image(size, size, bands, &mut rng);
        write_image(&dir.join(format!("{i:05}.{format}")), &img)?;
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_deterministic() {
        let cfg = SynthConfig {
            count: 12,
            size: 16,
            ..SynthConfig::default()
        };
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        for c in 0..4 {
            assert_eq!(a.iter().filter(|(l, _)| *l == c).count(), 3);
        }
        assert!(generate(&SynthConfig { classes: 9, ..cfg }).is_err());
    }

    #[test]
    fn stripes_point_the_right_way() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = synth_image(0, 32, 1, 0.0, &mut rng);
        let band = img.band(0);
        // horizontal stripes are constant along rows
        assert!(band[..32].iter().all(|&v| v == band[0]));
        let img = synth_image(1, 32, 1, 0.0, &mut rng);
        assert!((0..32).all(|y| img.get(0, 0, y) == img.get(0, 0, 0)));
    }

    #[test]
    fn fixture_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            classes: 2,
            count: 4,
            size: 8,
            format: "png".into(),
            ..SynthConfig::default()
        };
        assert_eq!(write_fixture(dir.path(), &cfg).unwrap(), 4);
        assert!(dir.path().join("vstripes").join("00003.png").exists());
    }

    #[test]
    fn natural_image_is_smooth() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = natural_image(64, 64, 3, &mut rng);
        let b = img.band(0);
        let mean_step: f64 = (0..64 * 63)
            .map(|i| (b[i + 64] as f64 - b[i] as f64).abs())
            .sum::<f64>()
            / (64.0 * 63.0);
        assert!(mean_step < 8.0, "{mean_step}");
    }
}
