//! Netpbm greymap (PGM) reading and writing, ASCII (`P2`) and binary (`P5`).
//!
//! Binary files with `maxval > 255` store two bytes per sample, big-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Raster;

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Raster> {
    let bytes = fs::read(path)?;
    decode_pgm(&bytes)
}

/// Writes `r` as a binary PGM. Samples are rounded to the nearest integer
/// and must lie in `[0, maxval]`.
pub fn save_pgm(r: &Raster, path: impl AsRef<Path>, maxval: u16) -> Result<()> {
    let bytes = encode_pgm(r, maxval)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn encode_pgm(r: &Raster, maxval: u16) -> Result<Vec<u8>> {
    if maxval == 0 {
        return Err(Error::Range("maxval must be at least 1".into()));
    }
    let header = format!("P5\n{} {}\n{}\n", r.width(), r.height(), maxval);
    let wide = maxval > 255;
    let mut out = Vec::with_capacity(header.len() + r.len() * if wide { 2 } else { 1 });
    out.extend_from_slice(header.as_bytes());
    for (i, &v) in r.as_slice().iter().enumerate() {
        let q = v.round();
        if !(0.0..=f64::from(maxval)).contains(&q) {
            return Err(Error::Range(format!("sample {i} = {v} outside [0, {maxval}]")));
        }
        let q = q as u16;
        if wide {
            out.extend_from_slice(&q.to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    Ok(out)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Raster> {
    let mut p = Parser { bytes, pos: 0 };
    let magic = p.take(2)?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        _ => return Err(p.error_at(0, "unsupported magic, expected P2 or P5")),
    };
    let width = p.header_int("width")?;
    let height = p.header_int("height")?;
    let maxval = p.header_int("maxval")?;
    if width == 0 || height == 0 {
        return Err(p.error("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(p.error(format!("maxval {maxval} outside [1, 65535]")));
    }
    let n = width * height;
    let mut data = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates the header from the payload
        match p.bytes.get(p.pos) {
            Some(b) if b.is_ascii_whitespace() => p.pos += 1,
            _ => return Err(p.error("expected whitespace before binary payload")),
        }
        let wide = maxval > 255;
        let need = n * if wide { 2 } else { 1 };
        let payload = p.take(need).map_err(|_| p.error(format!("truncated payload, need {need} bytes")))?;
        if wide {
            data.extend(payload.chunks_exact(2).map(|c| f64::from(u16::from_be_bytes([c[0], c[1]]))));
        } else {
            data.extend(payload.iter().map(|&b| f64::from(b)));
        }
    } else {
        for _ in 0..n {
            let v = p.header_int("sample")?;
            data.push(v as f64);
        }
    }
    if let Some(i) = data.iter().position(|&v| v > maxval as f64) {
        return Err(Error::Parse { offset: p.pos, message: format!("sample {i} exceeds maxval {maxval}") });
    }
    Raster::new(width, height, data)
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: impl Into<String>) -> Error {
        self.error_at(self.pos, message)
    }

    fn error_at(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Parse { offset, message: message.into() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.error("unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn header_int(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error_at(start, format!("expected {what}")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        text.parse().map_err(|_| self.error_at(start, format!("{what} too large")))
    }
}
