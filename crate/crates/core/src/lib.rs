//! Compressed-domain scene classification on a lossless, resolution-progressive
//! wavelet codestream.
//!
//! Images are decomposed with the reversible 5/3 wavelet ([`wavelet`]) and
//! stored as coarsest-first codeblock packets ([`codestream`]). A small
//! differentiable engine ([`nn`]) provides convolutions, transposed
//! convolutions and the training machinery used by [`model`] to approximate
//! finer sub-bands from coarse ones and classify scenes from the result.
//! [`pipeline`] holds dataset handling, training loops and reporting.

pub mod codestream;
pub mod image;
pub mod io;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod wavelet;

pub use codestream::{
    decode_stream, encode, CodeblockGrid, Codestream, CodestreamError, DecodeOutput,
    HeaderFeatures,
};
pub use image::{Image, ImageError};
pub use model::{build_model, Model, ModelConfig, Scenario};
pub use nn::Tensor;
pub use pipeline::{MetricsReport, PipelineError};
pub use wavelet::{decompose, subband_dims, SubbandKind, SubbandPyramid, WaveletError};
