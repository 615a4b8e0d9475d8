//! Binary PPM (P6, maxval 255) frame files.

use std::fs;
use std::path::Path;

use super::frame::{quantize_u8, Frame, CHANNELS};
use crate::error::{Error, Result};

pub fn encode_ppm(frame: &Frame) -> Vec<u8> {
    let (w, h) = (frame.width(), frame.height());
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(CHANNELS * w * h);
    for y in 0..h {
        for x in 0..w {
            for c in 0..CHANNELS {
                out.push(quantize_u8(frame.get(c, y, x)));
            }
        }
    }
    out
}

pub fn decode_ppm(bytes: &[u8], path: &Path) -> Result<Frame> {
    let mut pos = 0usize;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(path, pos as u64, "truncated PPM header"));
        }
        tokens.push((start, &bytes[start..pos]));
    }
    if tokens[0].1 != b"P6" {
        return Err(Error::parse(path, 0, "not a binary PPM (expected P6)"));
    }
    let number = |i: usize, what: &str| -> Result<usize> {
        std::str::from_utf8(tokens[i].1)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(path, tokens[i].0 as u64, format!("invalid {what}")))
    };
    let (w, h, maxval) = (
        number(1, "width")?,
        number(2, "height")?,
        number(3, "maxval")?,
    );
    if maxval != 255 {
        return Err(Error::parse(
            path,
            tokens[3].0 as u64,
            format!("unsupported maxval {maxval}"),
        ));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let expected = CHANNELS * w * h;
    if bytes.len() < pos || bytes.len() - pos != expected {
        return Err(Error::parse(
            path,
            pos.min(bytes.len()) as u64,
            format!(
                "expected {expected} raster bytes, found {}",
                bytes.len().saturating_sub(pos)
            ),
        ));
    }
    let raster = &bytes[pos..];
    let mut data = vec![0.0f32; expected];
    for (i, px) in raster.chunks_exact(CHANNELS).enumerate() {
        for c in 0..CHANNELS {
            data[c * w * h + i] = px[c] as f32 / 255.0;
        }
    }
    Frame::new(w, h, data).map_err(|e| Error::parse(path, 0, e.to_string()))
}

pub fn write_ppm(path: &Path, frame: &Frame) -> Result<()> {
    fs::write(path, encode_ppm(frame)).map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: &Path) -> Result<Frame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes, path)
}
