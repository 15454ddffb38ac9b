//! Image files (PNG, binary PGM/PPM), codestream files and pyramid dumps.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, Write};
use std::path::Path;

use thiserror::Error;

use crate::codestream::{Codestream, CodestreamError};
use crate::image::{Image, ImageError};
use crate::wavelet::{BandPyramid, DetailBands, Plane, SubbandPyramid, WaveletError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: io::Error },
    #[error("unsupported image format: {0}")]
    Unsupported(String),
    #[error("malformed {format} data: {reason}")]
    Malformed { format: &'static str, reason: String },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Codestream(#[from] CodestreamError),
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn open(path: &Path) -> Result<BufReader<File>, IoError> {
    File::open(path).map(BufReader::new).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Read a PNG, PGM or PPM file, chosen by extension.
pub fn read_image(path: &Path) -> Result<Image, IoError> {
    match extension(path).as_str() {
        "png" => read_png(open(path)?),
        "pgm" | "ppm" | "pnm" => read_pnm(open(path)?),
        other => Err(IoError::Unsupported(other.to_string())),
    }
}

/// Write an image; the extension picks the format.
pub fn write_image(path: &Path, image: &Image) -> Result<(), IoError> {
    let mut out = create(path)?;
    match extension(path).as_str() {
        "png" => write_png(&mut out, image)?,
        "pgm" | "ppm" | "pnm" => write_pnm(&mut out, image)?,
        other => return Err(IoError::Unsupported(other.to_string())),
    }
    out.flush()?;
    Ok(())
}

fn interleave(image: &Image) -> impl Iterator<Item = u16> + '_ {
    let plane = image.width() * image.height();
    let bands = image.bands();
    (0..plane * bands).map(move |i| image.samples()[(i % bands) * plane + i / bands])
}

fn deinterleave(width: usize, height: usize, bands: usize, bit_depth: u8, pixels: Vec<u16>) -> Result<Image, IoError> {
    let plane = width * height;
    let mut samples = vec![0u16; plane * bands];
    for (i, v) in pixels.into_iter().enumerate() {
        samples[(i % bands) * plane + i / bands] = v;
    }
    Ok(Image::new(width, height, bands, bit_depth, samples)?)
}

pub fn read_png<R: BufRead + Seek>(source: R) -> Result<Image, IoError> {
    let malformed = |e: png::DecodingError| IoError::Malformed {
        format: "PNG",
        reason: e.to_string(),
    };
    let mut decoder = png::Decoder::new(source);
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(malformed)?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| IoError::Malformed {
        format: "PNG",
        reason: "image too large".into(),
    })?];
    let info = reader.next_frame(&mut buf).map_err(malformed)?;
    let bands = info.color_type.samples();
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    let (depth, pixels): (u8, Vec<u16>) = match info.bit_depth {
        png::BitDepth::Sixteen => (
            16,
            data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect(),
        ),
        _ => (8, data.iter().map(|&b| b as u16).collect()),
    };
    deinterleave(w, h, bands, depth, pixels)
}

pub fn write_png<W: Write>(out: W, image: &Image) -> Result<(), IoError> {
    let color = match image.bands() {
        1 => png::ColorType::Grayscale,
        2 => png::ColorType::GrayscaleAlpha,
        3 => png::ColorType::Rgb,
        4 => png::ColorType::Rgba,
        n => return Err(IoError::Unsupported(format!("PNG with {n} bands"))),
    };
    let mut enc = png::Encoder::new(out, image.width() as u32, image.height() as u32);
    enc.set_color(color);
    let data: Vec<u8> = if image.bit_depth() == 16 {
        enc.set_depth(png::BitDepth::Sixteen);
        interleave(image).flat_map(u16::to_be_bytes).collect()
    } else {
        enc.set_depth(png::BitDepth::Eight);
        interleave(image).map(|v| v as u8).collect()
    };
    let encoding = |e: png::EncodingError| IoError::Malformed {
        format: "PNG",
        reason: e.to_string(),
    };
    let mut writer = enc.write_header().map_err(encoding)?;
    writer.write_image_data(&data).map_err(encoding)?;
    writer.finish().map_err(encoding)?;
    Ok(())
}

fn pnm_token<R: BufRead>(r: &mut R) -> Result<String, IoError> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0];
        if c == b'#' && tok.is_empty() {
            let mut skip = Vec::new();
            r.read_until(b'\n', &mut skip)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c as char);
    }
    if tok.is_empty() {
        return Err(IoError::Malformed {
            format: "PNM",
            reason: "truncated header".into(),
        });
    }
    Ok(tok)
}

/// Binary PGM (`P5`) or PPM (`P6`). Maximum values up to 255 load as
/// 8-bit, larger ones as 16-bit.
pub fn read_pnm<R: BufRead>(mut source: R) -> Result<Image, IoError> {
    let bad = |reason: String| IoError::Malformed { format: "PNM", reason };
    let bands = match pnm_token(&mut source)?.as_str() {
        "P5" => 1,
        "P6" => 3,
        m => return Err(bad(format!("unsupported magic {m}"))),
    };
    let mut num = |what: &str| -> Result<usize, IoError> {
        let t = pnm_token(&mut source)?;
        t.parse().map_err(|_| bad(format!("bad {what} {t:?}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(bad(format!("maxval {maxval} out of range")));
    }
    let wide = maxval > 255;
    let n = width * height * bands;
    let mut raw = vec![0u8; if wide { 2 * n } else { n }];
    source
        .read_exact(&mut raw)
        .map_err(|_| bad("truncated raster".into()))?;
    let pixels: Vec<u16> = if wide {
        raw.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        raw.iter().map(|&b| b as u16).collect()
    };
    if let Some(v) = pixels.iter().find(|&&v| v as usize > maxval) {
        return Err(bad(format!("sample {v} exceeds maxval {maxval}")));
    }
    deinterleave(width, height, bands, if wide { 16 } else { 8 }, pixels)
}

/// Canonical header: `P5`/`P6`, single newlines, maxval 255 or 65535.
pub fn write_pnm<W: Write>(mut out: W, image: &Image) -> Result<(), IoError> {
    let magic = match image.bands() {
        1 => "P5",
        3 => "P6",
        n => return Err(IoError::Unsupported(format!("PNM with {n} bands"))),
    };
    write!(out, "{magic}\n{} {}\n{}\n", image.width(), image.height(), image.max_value())?;
    let data: Vec<u8> = if image.bit_depth() == 16 {
        interleave(image).flat_map(u16::to_be_bytes).collect()
    } else {
        interleave(image).map(|v| v as u8).collect()
    };
    out.write_all(&data)?;
    Ok(())
}

pub fn read_codestream(path: &Path) -> Result<Codestream, IoError> {
    Ok(Codestream::read_from(open(path)?)?)
}

pub fn write_codestream(path: &Path, cs: &Codestream) -> Result<(), IoError> {
    let mut out = create(path)?;
    cs.write_to(&mut out)?;
    out.flush()?;
    Ok(())
}

pub const PYRAMID_MAGIC: [u8; 4] = *b"WPYR";
pub const PYRAMID_VERSION: u16 = 1;

fn write_plane<W: Write>(out: &mut W, p: &Plane) -> io::Result<()> {
    let mut buf = Vec::with_capacity(p.data.len() * 4);
    for v in &p.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

/// Dump a (possibly partial) pyramid. Layout, little-endian:
/// magic `WPYR`, version u16, width u32, height u32, bands u16,
/// bit depth u8, levels u8; then per band the LL plane followed, for
/// levels `L` down to 1, by a presence byte and, when present, the LH, HL
/// and HH planes. Planes are row-major i32 with sizes implied by the
/// header.
pub fn write_pyramid<W: Write>(mut out: W, p: &SubbandPyramid) -> Result<(), IoError> {
    out.write_all(&PYRAMID_MAGIC)?;
    out.write_all(&PYRAMID_VERSION.to_le_bytes())?;
    out.write_all(&(p.width as u32).to_le_bytes())?;
    out.write_all(&(p.height as u32).to_le_bytes())?;
    out.write_all(&(p.bands.len() as u16).to_le_bytes())?;
    out.write_all(&[p.bit_depth, p.levels as u8])?;
    for band in &p.bands {
        write_plane(&mut out, &band.ll)?;
        for level in (1..=p.levels).rev() {
            match &band.details[level - 1] {
                Some(d) => {
                    out.write_all(&[1])?;
                    write_plane(&mut out, &d.lh)?;
                    write_plane(&mut out, &d.hl)?;
                    write_plane(&mut out, &d.hh)?;
                }
                None => out.write_all(&[0])?,
            }
        }
    }
    Ok(())
}

pub fn read_pyramid<R: Read>(mut input: R) -> Result<SubbandPyramid, IoError> {
    let bad = |reason: &str| IoError::Malformed {
        format: "pyramid",
        reason: reason.to_string(),
    };
    let mut head = [0u8; 18];
    input.read_exact(&mut head).map_err(|_| bad("truncated header"))?;
    if head[..4] != PYRAMID_MAGIC {
        return Err(bad("bad magic"));
    }
    if u16::from_le_bytes([head[4], head[5]]) != PYRAMID_VERSION {
        return Err(bad("unsupported version"));
    }
    let width = u32::from_le_bytes(head[6..10].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(head[10..14].try_into().unwrap()) as usize;
    let bands = u16::from_le_bytes([head[14], head[15]]) as usize;
    let (bit_depth, levels) = (head[16], head[17] as usize);
    let mut pyr = SubbandPyramid::zeros(width, height, bands, bit_depth, levels);
    let read_plane = |input: &mut R, w: usize, h: usize| -> Result<Plane, IoError> {
        let mut raw = vec![0u8; w * h * 4];
        input.read_exact(&mut raw).map_err(|_| bad("truncated plane"))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Plane::from_vec(w, h, data))
    };
    let mut out_bands = Vec::with_capacity(bands);
    for _ in 0..bands {
        let (w, h) = pyr.dims_at(levels);
        let ll = read_plane(&mut input, w, h)?;
        let mut details = vec![None; levels];
        for level in (1..=levels).rev() {
            let mut flag = [0u8];
            input.read_exact(&mut flag).map_err(|_| bad("truncated level"))?;
            if flag[0] == 1 {
                let (pw, ph) = pyr.dims_at(level - 1);
                let mut planes = [crate::wavelet::SubbandKind::LH, crate::wavelet::SubbandKind::HL, crate::wavelet::SubbandKind::HH]
                    .into_iter()
                    .map(|k| {
                        let (w, h) = k.dims_from_parent(pw, ph);
                        read_plane(&mut input, w, h)
                    })
                    .collect::<Result<Vec<_>, _>>()?
                    .into_iter();
                details[level - 1] = Some(DetailBands {
                    lh: planes.next().unwrap(),
                    hl: planes.next().unwrap(),
                    hh: planes.next().unwrap(),
                });
            } else if flag[0] != 0 {
                return Err(bad("bad presence flag"));
            }
        }
        out_bands.push(BandPyramid { ll, details });
    }
    pyr.bands = out_bands;
    pyr.validate()?;
    Ok(pyr)
}
