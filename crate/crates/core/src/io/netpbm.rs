//! Binary netpbm: P5 graymaps (8 or 16 bit, big-endian) and P6 pixmaps (8 bit).

use crate::error::{parse_error, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pixels {
    Gray8(Vec<u8>),
    Gray16(Vec<u16>),
    Rgb8(Vec<[u8; 3]>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Declared maximum sample value.
    pub maxval: u16,
    pub pixels: Pixels,
}

impl Image {
    pub fn gray8(width: usize, height: usize, data: Vec<u8>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, maxval: 255, pixels: Pixels::Gray8(data) }
    }

    pub fn gray16(width: usize, height: usize, data: Vec<u16>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, maxval: 65535, pixels: Pixels::Gray16(data) }
    }

    pub fn rgb8(width: usize, height: usize, data: Vec<[u8; 3]>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, maxval: 255, pixels: Pixels::Rgb8(data) }
    }

    pub fn encode(&self) -> Vec<u8> {
        let magic = match self.pixels {
            Pixels::Rgb8(_) => "P6",
            _ => "P5",
        };
        let mut out = format!("{magic}\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        match &self.pixels {
            Pixels::Gray8(d) => out.extend_from_slice(d),
            Pixels::Gray16(d) => d.iter().for_each(|v| out.extend_from_slice(&v.to_be_bytes())),
            Pixels::Rgb8(d) => d.iter().for_each(|p| out.extend_from_slice(p)),
        }
        out
    }

    /// Parses one image. `file` only labels errors.
    pub fn decode(bytes: &[u8], file: &str) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0, file };
        let rgb = match bytes.get(..2) {
            Some(b"P5") => false,
            Some(b"P6") => true,
            _ => return Err(cur.err("expected magic P5 or P6")),
        };
        cur.pos = 2;
        let width = cur.header_number()?;
        let height = cur.header_number()?;
        let maxval_at = cur.pos;
        let maxval = cur.header_number()?;
        if width == 0 || height == 0 {
            return Err(parse_error(file, maxval_at, "zero image dimension"));
        }
        if maxval == 0 || maxval > 65535 {
            return Err(parse_error(file, maxval_at, format!("maxval {maxval} out of range")));
        }
        if rgb && maxval > 255 {
            return Err(parse_error(file, maxval_at, "16-bit pixmaps are not supported"));
        }
        // Exactly one whitespace byte separates the header from the raster.
        match cur.next() {
            Some(b) if b.is_ascii_whitespace() => {}
            _ => return Err(cur.err("expected whitespace before raster")),
        }

        let n = width.checked_mul(height).ok_or_else(|| cur.err("image too large"))?;
        let sample = if maxval > 255 { 2 } else { 1 };
        let channels = if rgb { 3 } else { 1 };
        let need = n * sample * channels;
        let raster = &bytes[cur.pos..];
        if raster.len() < need {
            return Err(parse_error(file, bytes.len(), format!("truncated raster: {} of {need} bytes", raster.len())));
        }
        if raster.len() > need {
            return Err(parse_error(file, cur.pos + need, "trailing bytes after raster"));
        }
        let check = |i: usize, v: u16| -> Result<()> {
            if v > maxval as u16 {
                Err(parse_error(file, cur.pos + i * sample, format!("sample {v} exceeds maxval {maxval}")))
            } else {
                Ok(())
            }
        };
        let pixels = if rgb {
            for (i, &b) in raster.iter().enumerate() {
                check(i, b as u16)?;
            }
            Pixels::Rgb8(raster.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
        } else if sample == 2 {
            let data: Vec<u16> = raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
            for (i, &v) in data.iter().enumerate() {
                check(i, v)?;
            }
            Pixels::Gray16(data)
        } else {
            for (i, &b) in raster.iter().enumerate() {
                check(i, b as u16)?;
            }
            Pixels::Gray8(raster.to_vec())
        };
        Ok(Self { width, height, maxval: maxval as u16, pixels })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: &'a str,
}

impl Cursor<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        parse_error(self.file, self.pos, message)
    }

    fn next(&mut self) -> Option<u8> {
        let b = *self.bytes.get(self.pos)?;
        self.pos += 1;
        Some(b)
    }

    /// Skips whitespace and `#` comments, then reads a decimal field.
    fn header_number(&mut self) -> Result<usize> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(b) = self.next() {
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(self.err("truncated header")),
            }
        }
        let start = self.pos;
        let mut value: usize = 0;
        while let Some(b) = self.bytes.get(self.pos).copied().filter(u8::is_ascii_digit) {
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as usize))
                .ok_or_else(|| parse_error(self.file, start, "header number overflows"))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected a decimal header field"));
        }
        Ok(value)
    }
}
