//! Reversible integer 5/3 (LeGall) wavelet transform.
//!
//! The 1-D transform is computed with two lifting steps over a
//! whole-sample symmetric extension of the signal:
//!
//! ```text
//! d[i] = x[2i+1] - floor((x[2i] + x[2i+2]) / 2)
//! s[i] = x[2i]   + floor((d[i-1] + d[i] + 2) / 4)
//! ```
//!
//! Even-indexed samples land in the low band, so a signal of length `n`
//! yields `ceil(n/2)` low and `floor(n/2)` high coefficients. The 2-D
//! transform applies the 1-D transform to every row, then every column,
//! and recurses on the LL quadrant.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{Image, ImageError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WaveletError {
    #[error("{levels} decomposition levels is too deep for a {width}x{height} image")]
    LevelTooDeep {
        width: usize,
        height: usize,
        levels: usize,
    },
    #[error("stop level {stop} is outside 0..={levels}")]
    InvalidStopLevel { stop: usize, levels: usize },
    #[error("detail sub-bands of level {0} are not present in the pyramid")]
    MissingLevel(usize),
    #[error("pyramid is inconsistent: {0}")]
    Malformed(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Sub-band orientation. The first letter is the horizontal (row) filter,
/// the second the vertical (column) filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubbandKind {
    LL,
    LH,
    HL,
    HH,
}

impl SubbandKind {
    pub const ALL: [SubbandKind; 4] = [Self::LL, Self::LH, Self::HL, Self::HH];
    pub const DETAILS: [SubbandKind; 3] = [Self::LH, Self::HL, Self::HH];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::LL => "LL",
            Self::LH => "LH",
            Self::HL => "HL",
            Self::HH => "HH",
        }
    }

    /// Dimensions of this sub-band when splitting a `width x height` region.
    pub fn dims_from_parent(self, width: usize, height: usize) -> (usize, usize) {
        let lo = |n: usize| n.div_ceil(2);
        let hi = |n: usize| n / 2;
        match self {
            Self::LL => (lo(width), lo(height)),
            Self::LH => (lo(width), hi(height)),
            Self::HL => (hi(width), lo(height)),
            Self::HH => (hi(width), hi(height)),
        }
    }
}

/// A rectangular array of signed wavelet coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<i32>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<i32>) -> Self {
        assert_eq!(data.len(), width * height, "plane buffer size mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> i32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: i32) {
        self.data[y * self.width + x] = v;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// The three detail sub-bands produced by one decomposition level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetailBands {
    pub lh: Plane,
    pub hl: Plane,
    pub hh: Plane,
}

impl DetailBands {
    pub fn get(&self, kind: SubbandKind) -> Option<&Plane> {
        match kind {
            SubbandKind::LL => None,
            SubbandKind::LH => Some(&self.lh),
            SubbandKind::HL => Some(&self.hl),
            SubbandKind::HH => Some(&self.hh),
        }
    }

    fn get_mut(&mut self, kind: SubbandKind) -> Option<&mut Plane> {
        match kind {
            SubbandKind::LL => None,
            SubbandKind::LH => Some(&mut self.lh),
            SubbandKind::HL => Some(&mut self.hl),
            SubbandKind::HH => Some(&mut self.hh),
        }
    }
}

/// Decomposition of a single image band.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandPyramid {
    /// Approximation sub-band at the coarsest level of the pyramid.
    pub ll: Plane,
    /// `details[l - 1]` holds the detail sub-bands of level `l`. Levels that
    /// were not decoded are `None`.
    pub details: Vec<Option<DetailBands>>,
}

/// Per-band multilevel decomposition of an image.
///
/// `levels` is the level of the stored LL band. A pyramid with zero levels
/// holds the image samples themselves in `ll`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubbandPyramid {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub levels: usize,
    pub bands: Vec<BandPyramid>,
}

/// Dimensions of the LL band after `level` ceil-halvings of `(height, width)`.
pub fn subband_dims(height: usize, width: usize, level: usize) -> (usize, usize) {
    let mut h = height;
    let mut w = width;
    for _ in 0..level {
        h = h.div_ceil(2);
        w = w.div_ceil(2);
    }
    (h, w)
}

/// Largest level count for which every split region is at least 2 samples
/// in each dimension, so that no detail sub-band is empty.
pub fn max_levels(width: usize, height: usize) -> usize {
    let mut levels = 0;
    let (mut w, mut h) = (width, height);
    while w >= 2 && h >= 2 {
        levels += 1;
        w = w.div_ceil(2);
        h = h.div_ceil(2);
    }
    levels
}

/// Forward 5/3 transform of one signal.
pub fn dwt53_forward_1d(signal: &[i32]) -> (Vec<i32>, Vec<i32>) {
    let n = signal.len();
    let mut low = vec![0; n.div_ceil(2)];
    let mut high = vec![0; n / 2];
    forward_into(signal, &mut low, &mut high);
    (low, high)
}

/// Inverse of [`dwt53_forward_1d`].
pub fn dwt53_inverse_1d(low: &[i32], high: &[i32]) -> Vec<i32> {
    let mut out = vec![0; low.len() + high.len()];
    inverse_into(low, high, &mut out);
    out
}

fn forward_into(x: &[i32], low: &mut [i32], high: &mut [i32]) {
    let n = x.len();
    debug_assert_eq!(low.len(), n.div_ceil(2));
    debug_assert_eq!(high.len(), n / 2);
    if n == 1 {
        low[0] = x[0];
        return;
    }
    let nh = high.len();
    for i in 0..nh {
        let left = x[2 * i];
        // x[n] mirrors to x[n - 2]
        let right = if 2 * i + 2 < n { x[2 * i + 2] } else { x[2 * i] };
        high[i] = x[2 * i + 1] - ((left + right) >> 1);
    }
    for (i, s) in low.iter_mut().enumerate() {
        let dl = if i > 0 { high[i - 1] } else { high[0] };
        let dr = if i < nh { high[i] } else { high[nh - 1] };
        *s = x[2 * i] + ((dl + dr + 2) >> 2);
    }
}

fn inverse_into(low: &[i32], high: &[i32], out: &mut [i32]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    if n == 1 {
        out[0] = low[0];
        return;
    }
    let nh = high.len();
    for (i, &s) in low.iter().enumerate() {
        let dl = if i > 0 { high[i - 1] } else { high[0] };
        let dr = if i < nh { high[i] } else { high[nh - 1] };
        out[2 * i] = s - ((dl + dr + 2) >> 2);
    }
    for (i, &d) in high.iter().enumerate() {
        let left = out[2 * i];
        let right = if 2 * i + 2 < n { out[2 * i + 2] } else { out[2 * i] };
        out[2 * i + 1] = d + ((left + right) >> 1);
    }
}

/// One 2-D analysis step: rows first, then columns.
fn analyze_2d(region: &Plane) -> (Plane, DetailBands) {
    let (w, h) = (region.width, region.height);
    let (wl, wh) = (w.div_ceil(2), w / 2);
    let (hl, hh) = (h.div_ceil(2), h / 2);

    // Row pass: left half low, right half high.
    let mut rows = vec![0i32; w * h];
    let mut lo = vec![0; wl];
    let mut hi = vec![0; wh];
    for y in 0..h {
        forward_into(&region.data[y * w..(y + 1) * w], &mut lo, &mut hi);
        rows[y * w..y * w + wl].copy_from_slice(&lo);
        rows[y * w + wl..(y + 1) * w].copy_from_slice(&hi);
    }

    // Column pass.
    let mut col = vec![0; h];
    let mut clo = vec![0; hl];
    let mut chi = vec![0; hh];
    let mut ll = Plane::zeros(wl, hl);
    let mut details = DetailBands {
        lh: Plane::zeros(wl, hh),
        hl: Plane::zeros(wh, hl),
        hh: Plane::zeros(wh, hh),
    };
    for x in 0..w {
        for y in 0..h {
            col[y] = rows[y * w + x];
        }
        forward_into(&col, &mut clo, &mut chi);
        if x < wl {
            for (y, &v) in clo.iter().enumerate() {
                ll.set(x, y, v);
            }
            for (y, &v) in chi.iter().enumerate() {
                details.lh.set(x, y, v);
            }
        } else {
            for (y, &v) in clo.iter().enumerate() {
                details.hl.set(x - wl, y, v);
            }
            for (y, &v) in chi.iter().enumerate() {
                details.hh.set(x - wl, y, v);
            }
        }
    }
    (ll, details)
}

/// Inverse of [`analyze_2d`].
fn synthesize_2d(ll: &Plane, details: &DetailBands, width: usize, height: usize) -> Plane {
    let (w, h) = (width, height);
    let wl = w.div_ceil(2);

    let mut rows = vec![0i32; w * h];
    let mut col = vec![0; h];
    for x in 0..w {
        let (lo, hi) = if x < wl {
            (ll, &details.lh)
        } else {
            (&details.hl, &details.hh)
        };
        let cx = if x < wl { x } else { x - wl };
        let clo: Vec<i32> = (0..lo.height).map(|y| lo.get(cx, y)).collect();
        let chi: Vec<i32> = (0..hi.height).map(|y| hi.get(cx, y)).collect();
        inverse_into(&clo, &chi, &mut col);
        for y in 0..h {
            rows[y * w + x] = col[y];
        }
    }

    let mut out = Plane::zeros(w, h);
    for y in 0..h {
        let row = &rows[y * w..(y + 1) * w];
        inverse_into(&row[..wl], &row[wl..], &mut out.data[y * w..(y + 1) * w]);
    }
    out
}

fn check_depth(width: usize, height: usize, levels: usize) -> Result<(), WaveletError> {
    if levels > max_levels(width, height) {
        return Err(WaveletError::LevelTooDeep {
            width,
            height,
            levels,
        });
    }
    Ok(())
}

/// Decompose every band of `image` into `levels` 5/3 levels.
///
/// `levels == 0` yields the trivial pyramid whose LL is the image.
pub fn decompose(image: &Image, levels: usize) -> Result<SubbandPyramid, WaveletError> {
    let (w, h) = (image.width(), image.height());
    check_depth(w, h, levels)?;
    let bands = (0..image.bands())
        .map(|b| {
            let mut ll = Plane::from_vec(w, h, image.band(b).iter().map(|&v| v as i32).collect());
            let mut details = Vec::with_capacity(levels);
            for _ in 0..levels {
                let (next, d) = analyze_2d(&ll);
                details.push(Some(d));
                ll = next;
            }
            BandPyramid { ll, details }
        })
        .collect();
    Ok(SubbandPyramid {
        width: w,
        height: h,
        bit_depth: image.bit_depth(),
        levels,
        bands,
    })
}

impl SubbandPyramid {
    /// `(width, height)` of the LL band at `level`.
    pub fn dims_at(&self, level: usize) -> (usize, usize) {
        let (h, w) = subband_dims(self.height, self.width, level);
        (w, h)
    }

    /// `(width, height)` of a sub-band at `level` (level >= 1 for details).
    pub fn subband_dims_at(&self, level: usize, kind: SubbandKind) -> (usize, usize) {
        let (w, h) = self.dims_at(level.saturating_sub(1));
        kind.dims_from_parent(w, h)
    }

    pub fn num_bands(&self) -> usize {
        self.bands.len()
    }

    /// Finest level whose detail sub-bands are all present, or `levels + 1`
    /// if none are.
    pub fn finest_present_level(&self) -> usize {
        let mut finest = self.levels + 1;
        for level in (1..=self.levels).rev() {
            if self
                .bands
                .iter()
                .all(|b| b.details.get(level - 1).is_some_and(|d| d.is_some()))
            {
                finest = level;
            } else {
                break;
            }
        }
        finest
    }

    pub fn detail(&self, band: usize, level: usize, kind: SubbandKind) -> Option<&Plane> {
        self.bands
            .get(band)?
            .details
            .get(level.checked_sub(1)?)?
            .as_ref()?
            .get(kind)
    }

    /// Mutable access to a sub-band plane. For `kind == LL` only the
    /// coarsest level is addressable.
    pub fn plane_mut(&mut self, band: usize, level: usize, kind: SubbandKind) -> Option<&mut Plane> {
        let bp = self.bands.get_mut(band)?;
        if kind == SubbandKind::LL {
            return (level == self.levels).then_some(&mut bp.ll);
        }
        bp.details.get_mut(level.checked_sub(1)?)?.as_mut()?.get_mut(kind)
    }

    /// Pyramid of the right shape with every coefficient zero and every
    /// level present.
    pub fn zeros(width: usize, height: usize, bands: usize, bit_depth: u8, levels: usize) -> Self {
        let mut dims = Vec::with_capacity(levels + 1);
        let (mut w, mut h) = (width, height);
        dims.push((w, h));
        for _ in 0..levels {
            w = w.div_ceil(2);
            h = h.div_ceil(2);
            dims.push((w, h));
        }
        let band = BandPyramid {
            ll: Plane::zeros(dims[levels].0, dims[levels].1),
            details: (1..=levels)
                .map(|l| {
                    let (pw, ph) = dims[l - 1];
                    let mk = |k: SubbandKind| {
                        let (sw, sh) = k.dims_from_parent(pw, ph);
                        Plane::zeros(sw, sh)
                    };
                    Some(DetailBands {
                        lh: mk(SubbandKind::LH),
                        hl: mk(SubbandKind::HL),
                        hh: mk(SubbandKind::HH),
                    })
                })
                .collect(),
        };
        Self {
            width,
            height,
            bit_depth,
            levels,
            bands: vec![band; bands],
        }
    }

    /// Check every plane against the dimension law.
    pub fn validate(&self) -> Result<(), WaveletError> {
        if self.bands.is_empty() {
            return Err(WaveletError::Malformed("no bands".into()));
        }
        for (b, bp) in self.bands.iter().enumerate() {
            let (w, h) = self.dims_at(self.levels);
            if (bp.ll.width, bp.ll.height) != (w, h) || bp.ll.data.len() != w * h {
                return Err(WaveletError::Malformed(format!("band {b}: LL is not {w}x{h}")));
            }
            if bp.details.len() != self.levels {
                return Err(WaveletError::Malformed(format!(
                    "band {b}: {} detail levels, expected {}",
                    bp.details.len(),
                    self.levels
                )));
            }
            for level in 1..=self.levels {
                let Some(d) = &bp.details[level - 1] else { continue };
                for kind in SubbandKind::DETAILS {
                    let p = d.get(kind).expect("detail kind");
                    let (sw, sh) = self.subband_dims_at(level, kind);
                    if (p.width, p.height) != (sw, sh) || p.data.len() != sw * sh {
                        return Err(WaveletError::Malformed(format!(
                            "band {b}: {} at level {level} is {}x{}, expected {sw}x{sh}",
                            kind.name(),
                            p.width,
                            p.height
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Undo decomposition levels until the LL band sits at `stop_level`.
    ///
    /// The result keeps the detail sub-bands of levels `1..=stop_level`.
    /// `stop_level == 0` gives a zero-level pyramid holding the image; see
    /// [`SubbandPyramid::into_image`].
    pub fn reconstruct(&self, stop_level: usize) -> Result<SubbandPyramid, WaveletError> {
        if stop_level > self.levels {
            return Err(WaveletError::InvalidStopLevel {
                stop: stop_level,
                levels: self.levels,
            });
        }
        let mut bands = Vec::with_capacity(self.bands.len());
        for bp in &self.bands {
            let mut ll = bp.ll.clone();
            for level in (stop_level + 1..=self.levels).rev() {
                let details = bp.details[level - 1]
                    .as_ref()
                    .ok_or(WaveletError::MissingLevel(level))?;
                let (w, h) = self.dims_at(level - 1);
                ll = synthesize_2d(&ll, details, w, h);
            }
            bands.push(BandPyramid {
                ll,
                details: bp.details[..stop_level].to_vec(),
            });
        }
        Ok(SubbandPyramid {
            width: self.width,
            height: self.height,
            bit_depth: self.bit_depth,
            levels: stop_level,
            bands,
        })
    }

    /// The four sub-bands `(LL, LH, HL, HH)` of every band at `level`,
    /// synthesizing the LL band from coarser levels where needed.
    pub fn level_subbands(&self, level: usize) -> Result<Vec<[Plane; 4]>, WaveletError> {
        if level == 0 || level > self.levels {
            return Err(WaveletError::InvalidStopLevel {
                stop: level,
                levels: self.levels,
            });
        }
        let partial = self.reconstruct(level)?;
        partial
            .bands
            .into_iter()
            .map(|bp| {
                let d = bp.details[level - 1]
                    .clone()
                    .ok_or(WaveletError::MissingLevel(level))?;
                Ok([bp.ll, d.lh, d.hl, d.hh])
            })
            .collect()
    }

    /// Convert a zero-level pyramid back into an image.
    pub fn into_image(self) -> Result<Image, WaveletError> {
        let pyr = if self.levels == 0 {
            self
        } else {
            self.reconstruct(0)?
        };
        let max = if pyr.bit_depth == 8 { 255 } else { 65535 };
        let mut samples = Vec::with_capacity(pyr.width * pyr.height * pyr.bands.len());
        for bp in &pyr.bands {
            for &v in &bp.ll.data {
                if !(0..=max).contains(&v) {
                    return Err(WaveletError::Malformed(format!(
                        "reconstructed sample {v} outside the {}-bit range",
                        pyr.bit_depth
                    )));
                }
                samples.push(v as u16);
            }
        }
        Ok(Image::new(
            pyr.width,
            pyr.height,
            pyr.bands.len(),
            pyr.bit_depth,
            samples,
        )?)
    }

    /// Number of coefficients in all present sub-bands.
    pub fn coefficient_count(&self) -> usize {
        self.bands
            .iter()
            .map(|bp| {
                bp.ll.len()
                    + bp
                        .details
                        .iter()
                        .flatten()
                        .map(|d| d.lh.len() + d.hl.len() + d.hh.len())
                        .sum::<usize>()
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Whole-sample symmetric extension of `x` evaluated at any index.
    fn ext(x: &[i32], i: isize) -> i32 {
        let n = x.len() as isize;
        if n == 1 {
            return x[0];
        }
        let period = 2 * (n - 1);
        let mut j = i.rem_euclid(period);
        if j >= n {
            j = period - j;
        }
        x[j as usize]
    }

    /// Direct 5/3 analysis on the extended signal, without the in-place
    /// lifting shortcuts.
    fn oracle_forward(x: &[i32]) -> (Vec<i32>, Vec<i32>) {
        let n = x.len() as isize;
        let detail = |j: isize| {
            ext(x, j) - (ext(x, j - 1) + ext(x, j + 1)).div_euclid(2)
        };
        let low = (0..(n + 1) / 2)
            .map(|i| {
                if n == 1 {
                    return x[0];
                }
                ext(x, 2 * i) + (detail(2 * i - 1) + detail(2 * i + 1) + 2).div_euclid(4)
            })
            .collect();
        let high = (0..n / 2).map(|i| detail(2 * i + 1)).collect();
        (low, high)
    }

    #[test]
    fn constant_signal_has_zero_detail() {
        assert_eq!(dwt53_forward_1d(&[5, 5, 5, 5]), (vec![5, 5], vec![0, 0]));
    }

    #[test]
    fn single_sample_passes_through() {
        assert_eq!(dwt53_forward_1d(&[7]), (vec![7], vec![]));
        assert_eq!(dwt53_inverse_1d(&[7], &[]), vec![7]);
    }

    #[test]
    fn ramp_matches_direct_filtering() {
        let x = [0, 1, 2, 3, 4];
        let expected = oracle_forward(&x);
        assert_eq!(expected, (vec![0, 2, 4], vec![0, 0]));
        assert_eq!(dwt53_forward_1d(&x), expected);
        assert_eq!(dwt53_inverse_1d(&expected.0, &expected.1), x.to_vec());
    }

    proptest! {
        #[test]
        fn lifting_matches_oracle_and_inverts(x in prop::collection::vec(-70000i32..70000, 1..40)) {
            let (lo, hi) = dwt53_forward_1d(&x);
            prop_assert_eq!((lo.clone(), hi.clone()), oracle_forward(&x));
            prop_assert_eq!(dwt53_inverse_1d(&lo, &hi), x);
        }
    }

    #[test]
    fn subband_dims_examples() {
        assert_eq!(subband_dims(256, 256, 3), (32, 32));
        assert_eq!(subband_dims(600, 600, 2), (150, 150));
        assert_eq!(subband_dims(7, 7, 1), (4, 4));
    }

    #[test]
    fn coarsest_dims_for_protocol_sizes() {
        let img = Image::filled(256, 256, 1, 8, 3).unwrap();
        let p = decompose(&img, 3).unwrap();
        assert_eq!((p.bands[0].ll.width, p.bands[0].ll.height), (32, 32));
        let img = Image::filled(600, 600, 1, 8, 3).unwrap();
        let p = decompose(&img, 3).unwrap();
        assert_eq!((p.bands[0].ll.width, p.bands[0].ll.height), (75, 75));
    }

    #[test]
    fn odd_dims_follow_ceil_floor_split() {
        let img = Image::filled(101, 17, 1, 8, 0).unwrap();
        let p = decompose(&img, 1).unwrap();
        let ll = &p.bands[0].ll;
        let hh = &p.bands[0].details[0].as_ref().unwrap().hh;
        assert_eq!((ll.width, ll.height), (51, 9));
        assert_eq!((hh.width, hh.height), (50, 8));
    }

    #[test]
    fn too_deep_is_rejected() {
        let img = Image::filled(4, 4, 1, 8, 0).unwrap();
        assert_eq!(max_levels(4, 4), 2);
        assert!(decompose(&img, 2).is_ok());
        assert_eq!(
            decompose(&img, 3),
            Err(WaveletError::LevelTooDeep {
                width: 4,
                height: 4,
                levels: 3
            })
        );
    }

    #[test]
    fn constant_image_has_zero_details() {
        let img = Image::filled(37, 29, 2, 8, 200).unwrap();
        let p = decompose(&img, 4).unwrap();
        for bp in &p.bands {
            assert!(bp.ll.data.iter().all(|&v| v == 200));
            for d in bp.details.iter().flatten() {
                assert!(d.lh.data.iter().chain(&d.hl.data).chain(&d.hh.data).all(|&v| v == 0));
            }
        }
    }

    #[test]
    fn reconstruct_levels() {
        let samples: Vec<u16> = (0..33 * 21 * 3).map(|i| ((i * 7919) % 256) as u16).collect();
        let img = Image::new(33, 21, 3, 8, samples).unwrap();
        let p = decompose(&img, 3).unwrap();
        assert_eq!(p.reconstruct(3).unwrap(), p);
        assert_eq!(p.reconstruct(0).unwrap().into_image().unwrap(), img);
        assert_eq!(
            p.reconstruct(4),
            Err(WaveletError::InvalidStopLevel { stop: 4, levels: 3 })
        );
        // Stopping part way equals decomposing fewer levels.
        assert_eq!(p.reconstruct(1).unwrap(), decompose(&img, 1).unwrap());
    }

    #[test]
    fn partial_synthesis_populates_finer_level() {
        let samples: Vec<u16> = (0..256 * 256).map(|i| ((i / 3) % 251) as u16).collect();
        let img = Image::new(256, 256, 1, 8, samples).unwrap();
        let p = decompose(&img, 3).unwrap();
        let s2 = p.reconstruct(2).unwrap();
        assert_eq!((s2.bands[0].ll.width, s2.bands[0].ll.height), (64, 64));
        let sub = p.level_subbands(2).unwrap();
        assert!(sub[0].iter().all(|pl| (pl.width, pl.height) == (64, 64)));
    }

    #[test]
    fn missing_details_block_reconstruction() {
        let img = Image::filled(16, 16, 1, 8, 9).unwrap();
        let mut p = decompose(&img, 2).unwrap();
        p.bands[0].details[0] = None;
        assert_eq!(p.finest_present_level(), 2);
        assert!(p.reconstruct(1).is_ok());
        assert_eq!(p.reconstruct(0), Err(WaveletError::MissingLevel(1)));
    }

    #[test]
    fn row_pass_matches_1d_transform() {
        // A single-row image has no column split: LL/HL are the 1-D bands.
        let row = Plane::from_vec(7, 1, vec![3, 9, 4, 4, 250, 0, 17]);
        let (ll, d) = analyze_2d(&row);
        let (lo, hi) = dwt53_forward_1d(&row.data);
        assert_eq!(ll.data, lo);
        assert_eq!(d.hl.data, hi);
        assert!(d.lh.is_empty() && d.hh.is_empty());
        assert_eq!(synthesize_2d(&ll, &d, 7, 1), row);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn perfect_reconstruction(
            w in 1usize..80, h in 1usize..80, bands in 1usize..4,
            sixteen in any::<bool>(), seed in any::<u64>(),
        ) {
            let depth = if sixteen { 16 } else { 8 };
            let max = if sixteen { 65535u64 } else { 255 };
            let mut s = seed | 1;
            let samples: Vec<u16> = (0..w * h * bands).map(|_| {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                (s % (max + 1)) as u16
            }).collect();
            let img = Image::new(w, h, bands, depth, samples).unwrap();
            for levels in 0..=max_levels(w, h) {
                let p = decompose(&img, levels).unwrap();
                prop_assert!(p.validate().is_ok());
                let per_band = p.coefficient_count() / bands;
                prop_assert_eq!(per_band, w * h);
                for l in 0..=levels {
                    let (lw, lh) = p.dims_at(l);
                    let (eh, ew) = subband_dims(h, w, l);
                    prop_assert_eq!((lw, lh), (ew, eh));
                }
                prop_assert_eq!(p.reconstruct(0).unwrap().into_image().unwrap(), img.clone());
            }
        }
    }
}
