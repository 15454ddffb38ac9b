//! Planar multi-band rasters of unsigned integer samples.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1 with at least one band (got {width}x{height}x{bands})")]
    EmptyImage {
        width: usize,
        height: usize,
        bands: usize,
    },
    #[error("unsupported bit depth {0} (expected 8 or 16)")]
    BitDepth(u8),
    #[error("sample buffer has {got} samples, expected {expected}")]
    SampleCount { expected: usize, got: usize },
    #[error("sample value {value} exceeds the {bit_depth}-bit range")]
    SampleRange { value: u32, bit_depth: u8 },
}

/// An uncompressed image: `bands` planes of `width * height` samples each,
/// stored band after band, rows top to bottom.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Image {
    width: usize,
    height: usize,
    bands: usize,
    bit_depth: u8,
    samples: Vec<u16>,
}

impl Image {
    pub fn new(
        width: usize,
        height: usize,
        bands: usize,
        bit_depth: u8,
        samples: Vec<u16>,
    ) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || bands == 0 {
            return Err(ImageError::EmptyImage {
                width,
                height,
                bands,
            });
        }
        if bit_depth != 8 && bit_depth != 16 {
            return Err(ImageError::BitDepth(bit_depth));
        }
        let expected = width * height * bands;
        if samples.len() != expected {
            return Err(ImageError::SampleCount {
                expected,
                got: samples.len(),
            });
        }
        if bit_depth == 8 {
            if let Some(&v) = samples.iter().find(|&&v| v > 255) {
                return Err(ImageError::SampleRange {
                    value: v as u32,
                    bit_depth,
                });
            }
        }
        Ok(Self {
            width,
            height,
            bands,
            bit_depth,
            samples,
        })
    }

    /// Image with every sample set to `value`.
    pub fn filled(
        width: usize,
        height: usize,
        bands: usize,
        bit_depth: u8,
        value: u16,
    ) -> Result<Self, ImageError> {
        Self::new(
            width,
            height,
            bands,
            bit_depth,
            vec![value; width * height * bands],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn max_value(&self) -> u16 {
        if self.bit_depth == 8 {
            u8::MAX as u16
        } else {
            u16::MAX
        }
    }

    pub fn samples(&self) -> &[u16] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<u16> {
        self.samples
    }

    /// Samples of a single band.
    pub fn band(&self, band: usize) -> &[u16] {
        let n = self.width * self.height;
        &self.samples[band * n..(band + 1) * n]
    }

    pub fn get(&self, band: usize, x: usize, y: usize) -> u16 {
        self.samples[(band * self.height + y) * self.width + x]
    }

    /// Total size of the samples when stored raw at the image bit depth.
    pub fn raw_byte_len(&self) -> usize {
        self.samples.len() * (self.bit_depth as usize / 8)
    }
}
