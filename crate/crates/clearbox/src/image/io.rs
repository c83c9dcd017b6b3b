//! 8-bit image file I/O: PNG plus binary PPM/PGM.
//!
//! Files quantize the float pipeline to 8 bits, so a write/read round trip
//! reproduces pixel values to within 1/255.

use std::fs::File;
use std::io::{BufReader, Cursor, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::util::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    /// Binary PPM (3-channel) or PGM (1-channel), maxval 255.
    Pnm,
}

impl ImageFormat {
    /// Guess from a file extension; defaults to PNG.
    pub fn from_path(path: &Path) -> ImageFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ppm") | Some("pgm") | Some("pnm") => ImageFormat::Pnm,
            _ => ImageFormat::Png,
        }
    }

    pub fn extension(&self, channels: usize) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Pnm => {
                if channels == 1 {
                    "pgm"
                } else {
                    "ppm"
                }
            }
        }
    }
}

#[inline]
fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Interleave the planar buffer into 8-bit rows.
fn to_bytes(img: &ImageBuffer) -> Vec<u8> {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut out = Vec::with_capacity(w * h * c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out.push(quantize(img.get(x, y, ch)));
            }
        }
    }
    out
}

fn from_bytes(width: usize, height: usize, channels: usize, data: &[u8]) -> Result<ImageBuffer> {
    let mut img = ImageBuffer::zeros(width, height, channels)?;
    let mut i = 0;
    for y in 0..height {
        for x in 0..width {
            for c in 0..channels {
                img.set(x, y, c, data[i] as f64 / 255.0);
                i += 1;
            }
        }
    }
    Ok(img)
}

/// PNG-encode into memory.
pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    let mut enc = png::Encoder::new(&mut buf, img.width() as u32, img.height() as u32);
    enc.set_color(if img.channels() == 1 {
        png::ColorType::Grayscale
    } else {
        png::ColorType::Rgb
    });
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::data(format!("png encode: {e}")))?;
    writer
        .write_image_data(&to_bytes(img))
        .map_err(|e| Error::data(format!("png encode: {e}")))?;
    writer
        .finish()
        .map_err(|e| Error::data(format!("png encode: {e}")))?;
    Ok(buf.into_inner())
}

pub fn write_png(img: &ImageBuffer, path: &Path) -> Result<()> {
    write_atomic(path, &encode_png(img)?)
}

pub fn read_png(path: &Path) -> Result<ImageBuffer> {
    let file = File::open(path)?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::data(format!("png decode {}: {e}", path.display())))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::data(format!("png decode {}: {e}", path.display())))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::data(format!(
            "{}: only 8-bit PNGs are supported",
            path.display()
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    // Alpha, when present, is dropped.
    let (channels, stride) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (1, 2),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (3, 4),
        other => {
            return Err(Error::data(format!(
                "{}: unsupported png color type {other:?}",
                path.display()
            )))
        }
    };
    let mut img = ImageBuffer::zeros(w, h, channels)?;
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * stride;
            for c in 0..channels {
                img.set(x, y, c, data[base + c] as f64 / 255.0);
            }
        }
    }
    Ok(img)
}

pub fn write_pnm(img: &ImageBuffer, path: &Path) -> Result<()> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = Vec::new();
    write!(out, "{magic}\n{} {}\n255\n", img.width(), img.height())?;
    out.write_all(&to_bytes(img))?;
    write_atomic(path, &out)
}

pub fn read_pnm(path: &Path) -> Result<ImageBuffer> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    let bad = |msg: &str| Error::data(format!("{}: {msg}", path.display()));

    // Header: magic, width, height, maxval, separated by whitespace with
    // optional '#' comments, then a single whitespace byte before the data.
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < raw.len() && (raw[pos].is_ascii_whitespace() || raw[pos] == b'#') {
            if raw[pos] == b'#' {
                while pos < raw.len() && raw[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(
            std::str::from_utf8(&raw[start..pos])
                .map_err(|_| bad("non-ascii header"))?
                .to_string(),
        );
    }
    pos += 1; // the single whitespace after maxval

    let channels = match fields[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(bad(&format!("unsupported magic {other}"))),
    };
    let width: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let maxval: u32 = fields[3].parse().map_err(|_| bad("bad maxval"))?;
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    let need = width * height * channels;
    let data = raw.get(pos..pos + need).ok_or_else(|| bad("truncated pixel data"))?;
    from_bytes(width, height, channels, data)
}

pub fn write_image(img: &ImageBuffer, path: &Path) -> Result<()> {
    match ImageFormat::from_path(path) {
        ImageFormat::Png => write_png(img, path),
        ImageFormat::Pnm => write_pnm(img, path),
    }
}

pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    match ImageFormat::from_path(path) {
        ImageFormat::Png => read_png(path),
        ImageFormat::Pnm => read_pnm(path),
    }
}
