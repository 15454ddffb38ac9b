//! Resolution-progressive container for 5/3 sub-band pyramids.
//!
//! Each sub-band is partitioned into codeblocks that are bitplane coded
//! independently. Coded blocks are grouped into one packet per resolution
//! level, coarsest first, so that a prefix of the stream is enough to
//! decode any coarser resolution. Every codeblock segment header carries the
//! block's significant-bitplane count (MB) and payload length (B), which
//! can be read without touching the entropy coder.
//!
//! The byte layout is documented in `docs/format.md`.

mod block;
mod features;
mod format;
pub mod rangecoder;

use thiserror::Error;

use crate::image::Image;
use crate::wavelet::{DetailBands, Plane, SubbandKind, SubbandPyramid, WaveletError};

pub use block::{decode_block, encode_block, significant_bitplanes};
pub use features::{BlockFeature, HeaderFeatures, LevelSummary, SubbandSummary};
pub use format::{
    read_header_features, CodestreamReader, FILE_HEADER_LEN, FORMAT_VERSION, MAGIC,
    PACKET_HEADER_LEN, SEGMENT_HEADER_LEN,
};

#[derive(Debug, Error)]
pub enum CodestreamError {
    #[error("codeblock size {width}x{height} is below the 32x32 minimum")]
    BlockSizeTooSmall { width: usize, height: usize },
    #[error("pyramid cannot be encoded: {0}")]
    InvalidPyramid(String),
    #[error("target level {target} is outside 0..={levels}")]
    InvalidLevel { target: usize, levels: usize },
    #[error("corrupt codestream at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error("truncated codestream at byte {offset}")]
    Truncated { offset: u64 },
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Rectangle of a sub-band covered by one codeblock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockRect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

/// Partition of sub-bands into codeblocks of a nominal size; blocks on the
/// right and bottom edges are clipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeblockGrid {
    pub block_width: usize,
    pub block_height: usize,
}

impl Default for CodeblockGrid {
    fn default() -> Self {
        Self {
            block_width: Self::DEFAULT_SIZE,
            block_height: Self::DEFAULT_SIZE,
        }
    }
}

impl CodeblockGrid {
    pub const DEFAULT_SIZE: usize = 64;
    pub const MIN_SIZE: usize = 32;

    pub fn new(block_width: usize, block_height: usize) -> Result<Self, CodestreamError> {
        if block_width < Self::MIN_SIZE
            || block_height < Self::MIN_SIZE
            || block_width > u16::MAX as usize
            || block_height > u16::MAX as usize
        {
            return Err(CodestreamError::BlockSizeTooSmall {
                width: block_width,
                height: block_height,
            });
        }
        Ok(Self {
            block_width,
            block_height,
        })
    }

    pub fn square(size: usize) -> Result<Self, CodestreamError> {
        Self::new(size, size)
    }

    /// Blocks covering a `width x height` sub-band in raster order.
    pub fn blocks(&self, width: usize, height: usize) -> Vec<BlockRect> {
        let mut out = Vec::new();
        for y0 in (0..height).step_by(self.block_height) {
            for x0 in (0..width).step_by(self.block_width) {
                out.push(BlockRect {
                    x0,
                    y0,
                    width: self.block_width.min(width - x0),
                    height: self.block_height.min(height - y0),
                });
            }
        }
        out
    }
}

/// Image and coding parameters stored at the front of every codestream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodestreamHeader {
    pub width: u32,
    pub height: u32,
    pub bands: u16,
    pub bit_depth: u8,
    pub levels: u8,
    pub block_width: u16,
    pub block_height: u16,
}

impl CodestreamHeader {
    pub fn grid(&self) -> CodeblockGrid {
        CodeblockGrid {
            block_width: self.block_width as usize,
            block_height: self.block_height as usize,
        }
    }

    /// Resolution levels in stream order. A zero-level stream has a single
    /// packet for level 0.
    pub fn packet_levels(&self) -> Vec<u8> {
        if self.levels == 0 {
            vec![0]
        } else {
            (1..=self.levels).rev().collect()
        }
    }

    fn empty_pyramid(&self) -> SubbandPyramid {
        let mut p = SubbandPyramid::zeros(
            self.width as usize,
            self.height as usize,
            self.bands as usize,
            self.bit_depth,
            self.levels as usize,
        );
        for bp in &mut p.bands {
            for d in &mut bp.details {
                *d = None;
            }
        }
        p
    }

    /// Expected `(band, kind, level, rect)` of every segment in a packet.
    fn packet_layout(&self, level: u8) -> Vec<(u16, SubbandKind, BlockRect)> {
        let grid = self.grid();
        let levels = self.levels as usize;
        let (w, h) = (self.width as usize, self.height as usize);
        let dims = |lvl: usize, kind: SubbandKind| {
            let (ph, pw) = crate::wavelet::subband_dims(h, w, lvl.saturating_sub(1));
            if lvl == 0 {
                (w, h)
            } else {
                kind.dims_from_parent(pw, ph)
            }
        };
        let kinds: &[SubbandKind] = if level as usize == levels {
            &SubbandKind::ALL
        } else {
            &SubbandKind::DETAILS
        };
        let mut out = Vec::new();
        for band in 0..self.bands {
            for &kind in kinds {
                if level == 0 && kind != SubbandKind::LL {
                    continue;
                }
                let (sw, sh) = dims(level as usize, kind);
                for rect in grid.blocks(sw, sh) {
                    out.push((band, kind, rect));
                }
            }
        }
        out
    }
}

/// One entropy-coded codeblock.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub band: u16,
    pub kind: SubbandKind,
    pub rect: BlockRect,
    /// Significant bitplanes (MB).
    pub bitplanes: u8,
    /// Coded bytes; their count is the B feature.
    pub payload: Vec<u8>,
}

/// All codeblocks of one resolution level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub level: u8,
    pub segments: Vec<Segment>,
}

impl Packet {
    /// Bytes of segment headers and payloads following the packet header.
    pub fn body_len(&self) -> usize {
        self.segments
            .iter()
            .map(|s| SEGMENT_HEADER_LEN + s.payload.len())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codestream {
    pub header: CodestreamHeader,
    /// Packets ordered from the coarsest level down to level 1.
    pub packets: Vec<Packet>,
}

/// Result of a (possibly partial) decode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeOutput {
    /// Pyramid with detail sub-bands present for levels `max(t, 1)..=L`.
    pub pyramid: SubbandPyramid,
    /// Fully reconstructed image, only when decoding to level 0.
    pub image: Option<Image>,
    /// Bytes consumed from the source.
    pub bytes_read: u64,
}

fn extract_block(plane: &Plane, r: BlockRect) -> Vec<i32> {
    let mut out = Vec::with_capacity(r.width * r.height);
    for y in r.y0..r.y0 + r.height {
        let row = y * plane.width;
        out.extend_from_slice(&plane.data[row + r.x0..row + r.x0 + r.width]);
    }
    out
}

fn insert_block(plane: &mut Plane, r: BlockRect, coeffs: &[i32]) {
    for (dy, y) in (r.y0..r.y0 + r.height).enumerate() {
        let row = y * plane.width;
        plane.data[row + r.x0..row + r.x0 + r.width]
            .copy_from_slice(&coeffs[dy * r.width..(dy + 1) * r.width]);
    }
}

/// Encode a complete pyramid.
pub fn encode(pyramid: &SubbandPyramid, grid: CodeblockGrid) -> Result<Codestream, CodestreamError> {
    CodeblockGrid::new(grid.block_width, grid.block_height)?;
    pyramid.validate()?;
    if pyramid.finest_present_level() > 1 && pyramid.levels > 0 {
        return Err(CodestreamError::InvalidPyramid(
            "every detail level must be present".into(),
        ));
    }
    let header = CodestreamHeader {
        width: u32::try_from(pyramid.width)
            .map_err(|_| CodestreamError::InvalidPyramid("width too large".into()))?,
        height: u32::try_from(pyramid.height)
            .map_err(|_| CodestreamError::InvalidPyramid("height too large".into()))?,
        bands: u16::try_from(pyramid.num_bands())
            .map_err(|_| CodestreamError::InvalidPyramid("too many bands".into()))?,
        bit_depth: pyramid.bit_depth,
        levels: u8::try_from(pyramid.levels)
            .map_err(|_| CodestreamError::InvalidPyramid("too many levels".into()))?,
        block_width: grid.block_width as u16,
        block_height: grid.block_height as u16,
    };
    let packets = header
        .packet_levels()
        .into_iter()
        .map(|level| {
            let segments = header
                .packet_layout(level)
                .into_iter()
                .map(|(band, kind, rect)| {
                    let bp = &pyramid.bands[band as usize];
                    let plane = if kind == SubbandKind::LL {
                        &bp.ll
                    } else {
                        bp.details[level as usize - 1]
                            .as_ref()
                            .and_then(|d| d.get(kind))
                            .expect("validated pyramid")
                    };
                    let coeffs = extract_block(plane, rect);
                    let (bitplanes, payload) = encode_block(&coeffs, rect.width, rect.height);
                    Segment {
                        band,
                        kind,
                        rect,
                        bitplanes,
                        payload,
                    }
                })
                .collect();
            Packet { level, segments }
        })
        .collect();
    Ok(Codestream { header, packets })
}

/// Decode one packet's segments into `pyramid`, checking that they tile the
/// expected layout. `offset` is the stream position of the packet body and
/// is only used for error reporting.
fn apply_packet(
    header: &CodestreamHeader,
    packet: &Packet,
    pyramid: &mut SubbandPyramid,
    offset: u64,
) -> Result<(), CodestreamError> {
    let layout = header.packet_layout(packet.level);
    if layout.len() != packet.segments.len() {
        return Err(CodestreamError::Corrupt {
            offset,
            reason: format!(
                "level {} packet has {} segments, expected {}",
                packet.level,
                packet.segments.len(),
                layout.len()
            ),
        });
    }
    let level = packet.level as usize;
    if level > 0 {
        let (pw, ph) = pyramid.dims_at(level - 1);
        let mk = |k: SubbandKind| {
            let (w, h) = k.dims_from_parent(pw, ph);
            Plane::zeros(w, h)
        };
        for bp in &mut pyramid.bands {
            bp.details[level - 1] = Some(DetailBands {
                lh: mk(SubbandKind::LH),
                hl: mk(SubbandKind::HL),
                hh: mk(SubbandKind::HH),
            });
        }
    }
    let mut pos = offset;
    for (seg, (band, kind, rect)) in packet.segments.iter().zip(layout) {
        if seg.band != band || seg.kind != kind || seg.rect != rect {
            return Err(CodestreamError::Corrupt {
                offset: pos,
                reason: format!(
                    "segment for band {} {} at ({}, {}) is out of order",
                    seg.band,
                    seg.kind.name(),
                    seg.rect.x0,
                    seg.rect.y0
                ),
            });
        }
        let coeffs = decode_block(&seg.payload, rect.width, rect.height, seg.bitplanes)
            .ok_or_else(|| CodestreamError::Corrupt {
                offset: pos,
                reason: "codeblock payload does not decode".into(),
            })?;
        let plane = pyramid
            .plane_mut(band as usize, level, kind)
            .expect("layout matches pyramid");
        insert_block(plane, rect, &coeffs);
        pos += (SEGMENT_HEADER_LEN + seg.payload.len()) as u64;
    }
    Ok(())
}

impl Codestream {
    pub fn levels(&self) -> usize {
        self.header.levels as usize
    }

    /// Total serialized length in bytes.
    pub fn byte_len(&self) -> usize {
        FILE_HEADER_LEN
            + self
                .packets
                .iter()
                .map(|p| PACKET_HEADER_LEN + p.body_len())
                .sum::<usize>()
    }

    /// Bytes needed to decode down to `target_level`: the file header plus
    /// every packet at level `>= max(target_level, 1)`.
    pub fn prefix_len(&self, target_level: usize) -> usize {
        let floor = target_level.max(1);
        FILE_HEADER_LEN
            + self
                .packets
                .iter()
                .filter(|p| p.level as usize >= floor || p.level == 0)
                .map(|p| PACKET_HEADER_LEN + p.body_len())
                .sum::<usize>()
    }

    /// Decode the packets needed for `target_level` from an in-memory
    /// stream. Packets finer than the target are not touched.
    pub fn decode_partial(&self, target_level: usize) -> Result<DecodeOutput, CodestreamError> {
        let levels = self.levels();
        if target_level > levels {
            return Err(CodestreamError::InvalidLevel {
                target: target_level,
                levels,
            });
        }
        let floor = target_level.max(1);
        let mut pyramid = self.header.empty_pyramid();
        let mut offset = FILE_HEADER_LEN as u64;
        for packet in &self.packets {
            if (packet.level as usize) < floor && packet.level != 0 {
                break;
            }
            offset += PACKET_HEADER_LEN as u64;
            apply_packet(&self.header, packet, &mut pyramid, offset)?;
            offset += packet.body_len() as u64;
        }
        let image = if target_level == 0 {
            Some(pyramid.clone().into_image()?)
        } else {
            None
        };
        Ok(DecodeOutput {
            pyramid,
            image,
            bytes_read: self.prefix_len(target_level) as u64,
        })
    }

    /// B and MB of every codeblock, read from segment headers only.
    pub fn header_features(&self) -> HeaderFeatures {
        let blocks = self
            .packets
            .iter()
            .flat_map(|p| {
                p.segments.iter().map(move |s| BlockFeature {
                    level: p.level,
                    band: s.band,
                    kind: s.kind,
                    x0: s.rect.x0 as u32,
                    y0: s.rect.y0 as u32,
                    width: s.rect.width as u32,
                    height: s.rect.height as u32,
                    bitplanes: s.bitplanes,
                    bytes: s.payload.len() as u32,
                })
            })
            .collect();
        HeaderFeatures { blocks }
    }
}

/// Decode from a byte source, reading only the prefix needed for
/// `target_level`.
pub fn decode_stream<R: std::io::Read>(
    source: R,
    target_level: usize,
) -> Result<DecodeOutput, CodestreamError> {
    let mut reader = CodestreamReader::new(source)?;
    let header = *reader.header();
    let levels = header.levels as usize;
    if target_level > levels {
        return Err(CodestreamError::InvalidLevel {
            target: target_level,
            levels,
        });
    }
    let floor = target_level.max(1);
    let mut pyramid = header.empty_pyramid();
    for expected in header.packet_levels() {
        if (expected as usize) < floor && expected != 0 {
            break;
        }
        let body_offset = reader.position() + PACKET_HEADER_LEN as u64;
        let packet = reader.next_packet()?.ok_or(CodestreamError::Truncated {
            offset: reader.position(),
        })?;
        if packet.level != expected {
            return Err(CodestreamError::Corrupt {
                offset: body_offset - PACKET_HEADER_LEN as u64,
                reason: format!("expected level {expected} packet, found level {}", packet.level),
            });
        }
        apply_packet(&header, &packet, &mut pyramid, body_offset)?;
    }
    let image = if target_level == 0 {
        Some(pyramid.clone().into_image()?)
    } else {
        None
    };
    Ok(DecodeOutput {
        pyramid,
        image,
        bytes_read: reader.position(),
    })
}

/// Convenience: full decode straight to an image.
pub fn decode_image(cs: &Codestream) -> Result<Image, CodestreamError> {
    Ok(cs.decode_partial(0)?.image.expect("level 0 decode yields an image"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::decompose;

    fn noise_image(w: usize, h: usize, bands: usize, seed: u64) -> Image {
        let mut s = seed | 1;
        let samples = (0..w * h * bands)
            .map(|i| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                let x = (i % w) as u64;
                ((x * 3 + (s % 16)) % 256) as u16
            })
            .collect();
        Image::new(w, h, bands, 8, samples).unwrap()
    }

    #[test]
    fn grid_tiles_subbands() {
        let g = CodeblockGrid::default();
        let blocks = g.blocks(150, 70);
        assert_eq!(blocks.len(), 3 * 2);
        assert_eq!(blocks[2], BlockRect { x0: 128, y0: 0, width: 22, height: 64 });
        let area: usize = blocks.iter().map(|b| b.width * b.height).sum();
        assert_eq!(area, 150 * 70);
        assert_eq!(g.blocks(20, 10).len(), 1);
        assert!(matches!(
            CodeblockGrid::new(16, 64),
            Err(CodestreamError::BlockSizeTooSmall { .. })
        ));
    }

    #[test]
    fn zero_pyramid_has_empty_segments() {
        let p = SubbandPyramid::zeros(64, 64, 3, 8, 2);
        let cs = encode(&p, CodeblockGrid::default()).unwrap();
        for seg in cs.packets.iter().flat_map(|p| &p.segments) {
            assert_eq!(seg.bitplanes, 0);
            assert!(seg.payload.is_empty());
        }
        let segs: usize = cs.packets.iter().map(|p| p.segments.len()).sum();
        assert_eq!(
            cs.byte_len(),
            FILE_HEADER_LEN + 2 * PACKET_HEADER_LEN + segs * SEGMENT_HEADER_LEN
        );
        assert_eq!(cs.decode_partial(0).unwrap().pyramid, p);
    }

    #[test]
    fn packets_are_coarsest_first() {
        let img = noise_image(256, 256, 3, 7);
        let p = decompose(&img, 3).unwrap();
        let cs = encode(&p, CodeblockGrid::default()).unwrap();
        let levels: Vec<u8> = cs.packets.iter().map(|p| p.level).collect();
        assert_eq!(levels, vec![3, 2, 1]);
        // 4 sub-bands per colour band in the coarsest packet, 3 in the rest.
        let kinds = |pk: &Packet| {
            let mut k: Vec<_> = pk.segments.iter().map(|s| (s.band, s.kind)).collect();
            k.dedup();
            k.len()
        };
        assert_eq!(kinds(&cs.packets[0]), 12);
        assert_eq!(kinds(&cs.packets[1]), 9);
    }

    #[test]
    fn coarsest_decode_matches_decomposition() {
        let img = noise_image(256, 256, 3, 11);
        let p = decompose(&img, 3).unwrap();
        let cs = encode(&p, CodeblockGrid::default()).unwrap();
        let out = cs.decode_partial(3).unwrap();
        assert!(out.image.is_none());
        for (a, b) in out.pyramid.bands.iter().zip(&p.bands) {
            assert_eq!((a.ll.width, a.ll.height), (32, 32));
            assert_eq!(a.ll, b.ll);
            assert_eq!(a.details[2], b.details[2]);
            assert!(a.details[0].is_none() && a.details[1].is_none());
        }
        let full = cs.decode_partial(0).unwrap();
        assert_eq!(full.pyramid, p);
        assert_eq!(full.image.unwrap(), img);
    }

    #[test]
    fn level_out_of_range() {
        let p = SubbandPyramid::zeros(32, 32, 1, 8, 2);
        let cs = encode(&p, CodeblockGrid::default()).unwrap();
        assert!(matches!(
            cs.decode_partial(3),
            Err(CodestreamError::InvalidLevel { target: 3, levels: 2 })
        ));
    }

    #[test]
    fn incomplete_pyramid_is_rejected() {
        let mut p = SubbandPyramid::zeros(32, 32, 1, 8, 2);
        p.bands[0].details[0] = None;
        assert!(matches!(
            encode(&p, CodeblockGrid::default()),
            Err(CodestreamError::InvalidPyramid(_))
        ));
    }

    #[test]
    fn prefix_lengths_grow_with_resolution() {
        let img = noise_image(128, 96, 3, 5);
        let cs = encode(&decompose(&img, 3).unwrap(), CodeblockGrid::default()).unwrap();
        let lens: Vec<usize> = (0..=3).rev().map(|t| cs.prefix_len(t)).collect();
        assert!(lens[0] < lens[1] && lens[1] < lens[2]);
        assert_eq!(lens[3], cs.byte_len());
        assert_eq!(cs.prefix_len(0), cs.prefix_len(1));
    }
}
