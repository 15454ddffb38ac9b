//! Byte layout of `.wcs` files. All integers are little-endian.
//!
//! ```text
//! file header (24 bytes)
//!   0  magic "WCSF"        4  version u16       6  width u32
//!   10 height u32          14 bands u16         16 bit depth u8
//!   17 levels u8           18 block width u16   20 block height u16
//!   22 packet count u16
//! packet header (9 bytes)
//!   0  level u8            1  segment count u32 5  body length u32
//! segment header (20 bytes) followed by B payload bytes
//!   0  band u16            2  sub-band u8 (0=LL 1=LH 2=HL 3=HH)
//!   3  x0 u32              7  y0 u32            11 width u16
//!   13 height u16          15 MB u8             16 B u32
//! ```

use std::io::{self, Read, Seek, SeekFrom, Write};

use super::{
    BlockFeature, BlockRect, Codestream, CodestreamError, CodestreamHeader, HeaderFeatures, Packet,
    Segment,
};
use crate::wavelet::SubbandKind;

pub const MAGIC: [u8; 4] = *b"WCSF";
pub const FORMAT_VERSION: u16 = 1;
pub const FILE_HEADER_LEN: usize = 24;
pub const PACKET_HEADER_LEN: usize = 9;
pub const SEGMENT_HEADER_LEN: usize = 20;

impl Codestream {
    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        let h = &self.header;
        let mut buf = Vec::with_capacity(FILE_HEADER_LEN);
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&h.width.to_le_bytes());
        buf.extend_from_slice(&h.height.to_le_bytes());
        buf.extend_from_slice(&h.bands.to_le_bytes());
        buf.push(h.bit_depth);
        buf.push(h.levels);
        buf.extend_from_slice(&h.block_width.to_le_bytes());
        buf.extend_from_slice(&h.block_height.to_le_bytes());
        buf.extend_from_slice(&(self.packets.len() as u16).to_le_bytes());
        out.write_all(&buf)?;
        for p in &self.packets {
            let mut ph = Vec::with_capacity(PACKET_HEADER_LEN);
            ph.push(p.level);
            ph.extend_from_slice(&(p.segments.len() as u32).to_le_bytes());
            ph.extend_from_slice(&(p.body_len() as u32).to_le_bytes());
            out.write_all(&ph)?;
            for s in &p.segments {
                out.write_all(&segment_header(s))?;
                out.write_all(&s.payload)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(self.byte_len());
        self.write_to(&mut v).expect("writing to a Vec cannot fail");
        v
    }

    /// Parse a complete stream.
    pub fn read_from<R: Read>(source: R) -> Result<Self, CodestreamError> {
        let mut reader = CodestreamReader::new(source)?;
        let mut packets = Vec::new();
        while let Some(p) = reader.next_packet()? {
            packets.push(p);
        }
        Ok(Self {
            header: *reader.header(),
            packets,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodestreamError> {
        Self::read_from(bytes)
    }
}

fn segment_header(s: &Segment) -> [u8; SEGMENT_HEADER_LEN] {
    let mut b = [0u8; SEGMENT_HEADER_LEN];
    b[0..2].copy_from_slice(&s.band.to_le_bytes());
    b[2] = s.kind.index() as u8;
    b[3..7].copy_from_slice(&(s.rect.x0 as u32).to_le_bytes());
    b[7..11].copy_from_slice(&(s.rect.y0 as u32).to_le_bytes());
    b[11..13].copy_from_slice(&(s.rect.width as u16).to_le_bytes());
    b[13..15].copy_from_slice(&(s.rect.height as u16).to_le_bytes());
    b[15] = s.bitplanes;
    b[16..20].copy_from_slice(&(s.payload.len() as u32).to_le_bytes());
    b
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

struct SegmentHeader {
    band: u16,
    kind: SubbandKind,
    rect: BlockRect,
    bitplanes: u8,
    bytes: u32,
}

fn parse_segment_header(b: &[u8], offset: u64) -> Result<SegmentHeader, CodestreamError> {
    let kind = SubbandKind::from_index(b[2] as usize).ok_or_else(|| CodestreamError::Corrupt {
        offset: offset + 2,
        reason: format!("unknown sub-band id {}", b[2]),
    })?;
    let bitplanes = b[15];
    if bitplanes > 31 {
        return Err(CodestreamError::Corrupt {
            offset: offset + 15,
            reason: format!("MB {bitplanes} exceeds 31"),
        });
    }
    Ok(SegmentHeader {
        band: u16_at(b, 0),
        kind,
        rect: BlockRect {
            x0: u32_at(b, 3) as usize,
            y0: u32_at(b, 7) as usize,
            width: u16_at(b, 11) as usize,
            height: u16_at(b, 13) as usize,
        },
        bitplanes,
        bytes: u32_at(b, 16),
    })
}

/// Sequential reader over a `.wcs` byte source.
///
/// Packets are pulled one at a time, so a caller that stops early never
/// reads past the last packet it asked for. [`CodestreamReader::position`]
/// counts the bytes consumed so far.
pub struct CodestreamReader<R> {
    source: R,
    header: CodestreamHeader,
    packet_count: u16,
    packets_read: u16,
    pos: u64,
}

impl<R: Read> CodestreamReader<R> {
    pub fn new(mut source: R) -> Result<Self, CodestreamError> {
        let mut b = [0u8; FILE_HEADER_LEN];
        read_exact_at(&mut source, &mut b, 0)?;
        if b[0..4] != MAGIC {
            return Err(CodestreamError::Corrupt {
                offset: 0,
                reason: "bad magic".into(),
            });
        }
        let version = u16_at(&b, 4);
        if version != FORMAT_VERSION {
            return Err(CodestreamError::Corrupt {
                offset: 4,
                reason: format!("unsupported version {version}"),
            });
        }
        let header = CodestreamHeader {
            width: u32_at(&b, 6),
            height: u32_at(&b, 10),
            bands: u16_at(&b, 14),
            bit_depth: b[16],
            levels: b[17],
            block_width: u16_at(&b, 18),
            block_height: u16_at(&b, 20),
        };
        let packet_count = u16_at(&b, 22);
        let corrupt = |offset: u64, reason: &str| {
            Err(CodestreamError::Corrupt {
                offset,
                reason: reason.into(),
            })
        };
        if header.width == 0 || header.height == 0 {
            return corrupt(6, "zero image dimension");
        }
        if header.bands == 0 {
            return corrupt(14, "zero bands");
        }
        if header.bit_depth != 8 && header.bit_depth != 16 {
            return corrupt(16, "bit depth must be 8 or 16");
        }
        if header.levels as usize
            > crate::wavelet::max_levels(header.width as usize, header.height as usize)
        {
            return corrupt(17, "too many levels for the image size");
        }
        if (header.block_width as usize) < super::CodeblockGrid::MIN_SIZE
            || (header.block_height as usize) < super::CodeblockGrid::MIN_SIZE
        {
            return corrupt(18, "codeblock size below 32");
        }
        if packet_count as usize != header.packet_levels().len() {
            return corrupt(22, "packet count does not match level count");
        }
        Ok(Self {
            source,
            header,
            packet_count,
            packets_read: 0,
            pos: FILE_HEADER_LEN as u64,
        })
    }

    pub fn header(&self) -> &CodestreamHeader {
        &self.header
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn into_inner(self) -> R {
        self.source
    }

    fn read_packet_header(&mut self) -> Result<Option<(u8, u32, u32)>, CodestreamError> {
        if self.packets_read == self.packet_count {
            return Ok(None);
        }
        let mut ph = [0u8; PACKET_HEADER_LEN];
        read_exact_at(&mut self.source, &mut ph, self.pos)?;
        let expected = self.header.packet_levels()[self.packets_read as usize];
        if ph[0] != expected {
            return Err(CodestreamError::Corrupt {
                offset: self.pos,
                reason: format!("expected level {expected} packet, found level {}", ph[0]),
            });
        }
        self.pos += PACKET_HEADER_LEN as u64;
        self.packets_read += 1;
        Ok(Some((ph[0], u32_at(&ph, 1), u32_at(&ph, 5))))
    }

    /// Read the next packet, or `None` after the last one.
    pub fn next_packet(&mut self) -> Result<Option<Packet>, CodestreamError> {
        let Some((level, count, body_len)) = self.read_packet_header()? else {
            return Ok(None);
        };
        let body_start = self.pos;
        let mut body = vec![0u8; body_len as usize];
        read_exact_at(&mut self.source, &mut body, self.pos)?;
        self.pos += body_len as u64;

        let mut segments = Vec::with_capacity(count as usize);
        let mut i = 0usize;
        for _ in 0..count {
            let off = body_start + i as u64;
            let hdr = body
                .get(i..i + SEGMENT_HEADER_LEN)
                .ok_or_else(|| CodestreamError::Corrupt {
                    offset: off,
                    reason: "segment header overruns packet body".into(),
                })?;
            let sh = parse_segment_header(hdr, off)?;
            i += SEGMENT_HEADER_LEN;
            let payload = body
                .get(i..i + sh.bytes as usize)
                .ok_or_else(|| CodestreamError::Corrupt {
                    offset: off + 16,
                    reason: "segment payload overruns packet body".into(),
                })?
                .to_vec();
            i += sh.bytes as usize;
            segments.push(Segment {
                band: sh.band,
                kind: sh.kind,
                rect: sh.rect,
                bitplanes: sh.bitplanes,
                payload,
            });
        }
        if i != body.len() {
            return Err(CodestreamError::Corrupt {
                offset: body_start + i as u64,
                reason: "packet body has trailing bytes".into(),
            });
        }
        Ok(Some(Packet { level, segments }))
    }
}

impl<R: Read + Seek> CodestreamReader<R> {
    /// Read the segment headers of the next packet, seeking over payloads.
    fn next_packet_features(&mut self, out: &mut Vec<BlockFeature>) -> Result<bool, CodestreamError> {
        let Some((level, count, body_len)) = self.read_packet_header()? else {
            return Ok(false);
        };
        let body_end = self.pos + body_len as u64;
        let mut hdr = [0u8; SEGMENT_HEADER_LEN];
        for _ in 0..count {
            if self.pos + SEGMENT_HEADER_LEN as u64 > body_end {
                return Err(CodestreamError::Corrupt {
                    offset: self.pos,
                    reason: "segment header overruns packet body".into(),
                });
            }
            read_exact_at(&mut self.source, &mut hdr, self.pos)?;
            let sh = parse_segment_header(&hdr, self.pos)?;
            self.pos += SEGMENT_HEADER_LEN as u64;
            if self.pos + sh.bytes as u64 > body_end {
                return Err(CodestreamError::Corrupt {
                    offset: self.pos - 4,
                    reason: "segment payload overruns packet body".into(),
                });
            }
            self.source.seek(SeekFrom::Current(sh.bytes as i64))?;
            self.pos += sh.bytes as u64;
            out.push(BlockFeature {
                level,
                band: sh.band,
                kind: sh.kind,
                x0: sh.rect.x0 as u32,
                y0: sh.rect.y0 as u32,
                width: sh.rect.width as u32,
                height: sh.rect.height as u32,
                bitplanes: sh.bitplanes,
                bytes: sh.bytes,
            });
        }
        if self.pos != body_end {
            return Err(CodestreamError::Corrupt {
                offset: self.pos,
                reason: "packet body has trailing bytes".into(),
            });
        }
        Ok(true)
    }
}

/// Header features of a stream, without decoding any payload.
pub fn read_header_features<R: Read + Seek>(source: R) -> Result<HeaderFeatures, CodestreamError> {
    let mut reader = CodestreamReader::new(source)?;
    let mut blocks = Vec::new();
    while reader.next_packet_features(&mut blocks)? {}
    Ok(HeaderFeatures { blocks })
}

fn read_exact_at<R: Read>(source: &mut R, buf: &mut [u8], offset: u64) -> Result<(), CodestreamError> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(CodestreamError::Truncated {
                    offset: offset + filled as u64,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codestream::{decode_stream, encode, CodeblockGrid};
    use crate::image::Image;
    use crate::wavelet::decompose;
    use std::io::Cursor;

    fn sample_stream() -> (Image, Codestream) {
        let samples = (0..96 * 80 * 3)
            .map(|i| ((i % 96) * 2 + (i / 96) % 7 + (i * 31 % 5)) as u16 % 256)
            .collect();
        let img = Image::new(96, 80, 3, 8, samples).unwrap();
        let cs = encode(&decompose(&img, 3).unwrap(), CodeblockGrid::square(32).unwrap()).unwrap();
        (img, cs)
    }

    #[test]
    fn serialization_roundtrip() {
        let (_, cs) = sample_stream();
        let bytes = cs.to_bytes();
        assert_eq!(bytes.len(), cs.byte_len());
        assert_eq!(&bytes[..4], b"WCSF");
        assert_eq!(Codestream::from_bytes(&bytes).unwrap(), cs);
    }

    #[test]
    fn streaming_decode_stops_at_boundary() {
        let (img, cs) = sample_stream();
        let bytes = cs.to_bytes();
        for t in 0..=3 {
            let out = decode_stream(Cursor::new(&bytes), t).unwrap();
            assert_eq!(out.bytes_read as usize, cs.prefix_len(t));
            assert_eq!(out, cs.decode_partial(t).unwrap());
        }
        // A coarse decode only needs the prefix; the rest may be missing.
        let prefix = &bytes[..cs.prefix_len(3)];
        assert!(decode_stream(prefix, 3).is_ok());
        assert_eq!(decode_stream(&bytes[..], 0).unwrap().image.unwrap(), img);
    }

    #[test]
    fn truncation_and_corruption_are_reported() {
        let (_, cs) = sample_stream();
        let bytes = cs.to_bytes();
        let cut = cs.prefix_len(3) + 5;
        match decode_stream(&bytes[..cut], 2) {
            Err(CodestreamError::Truncated { offset }) => assert_eq!(offset as usize, cut),
            other => panic!("unexpected {other:?}"),
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            Codestream::from_bytes(&bad),
            Err(CodestreamError::Corrupt { offset: 0, .. })
        ));
        // Flip the sub-band id of the first segment.
        let mut bad = bytes.clone();
        bad[FILE_HEADER_LEN + PACKET_HEADER_LEN + 2] = 9;
        assert!(matches!(
            Codestream::from_bytes(&bad),
            Err(CodestreamError::Corrupt { offset, .. }) if offset as usize == FILE_HEADER_LEN + PACKET_HEADER_LEN + 2
        ));
        // Swap in a wrong block origin; parsing succeeds but decoding fails.
        let mut bad = bytes;
        bad[FILE_HEADER_LEN + PACKET_HEADER_LEN + 3] = 1;
        assert!(matches!(
            decode_stream(&bad[..], 3),
            Err(CodestreamError::Corrupt { .. })
        ));
    }

    #[test]
    fn features_from_seekable_source_match_memory() {
        let (_, cs) = sample_stream();
        let bytes = cs.to_bytes();
        let from_file = read_header_features(Cursor::new(&bytes)).unwrap();
        assert_eq!(from_file, cs.header_features());
    }
}
