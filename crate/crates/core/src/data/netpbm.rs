//! Binary PPM (P6) and PGM (P5) with 8-bit samples (maxval 255).

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PnmError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for PnmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "byte {}: {}", self.offset, self.message)
    }
}

impl std::error::Error for PnmError {}

fn err<T>(offset: usize, message: impl Into<String>) -> Result<T, PnmError> {
    Err(PnmError {
        offset,
        message: message.into(),
    })
}

/// Interleaved 8-bit raster; `channels` is 3 for P6, 1 for P5.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PnmImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn header_number(&mut self, what: &str) -> Result<usize, PnmError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        let mut value: usize = 0;
        while let Some(&b) = self.bytes.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = match value.checked_mul(10).and_then(|v| v.checked_add((b - b'0') as usize)) {
                Some(v) => v,
                None => return err(start, format!("{what} overflows")),
            };
            self.pos += 1;
        }
        if self.pos == start {
            return if self.pos >= self.bytes.len() {
                err(self.pos, format!("truncated header: missing {what}"))
            } else {
                err(self.pos, format!("expected decimal {what}"))
            };
        }
        Ok(value)
    }
}

/// Parses a P6 or P5 file. Every malformed or truncated input yields an
/// error with the byte offset where parsing stopped.
pub fn parse(bytes: &[u8]) -> Result<PnmImage, PnmError> {
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        Some(_) => return err(0, "bad magic, expected P6 or P5"),
        None => return err(0, "truncated: missing magic"),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    match bytes.get(2) {
        Some(b) if b.is_ascii_whitespace() || *b == b'#' => {}
        Some(_) => return err(2, "expected whitespace after magic"),
        None => return err(2, "truncated header"),
    }
    let width = cur.header_number("width")?;
    let height = cur.header_number("height")?;
    let maxval_at = {
        cur.skip_whitespace_and_comments();
        cur.pos
    };
    let maxval = cur.header_number("maxval")?;
    if width == 0 || height == 0 {
        return err(maxval_at, format!("zero image extent {width}×{height}"));
    }
    if maxval != 255 {
        return err(maxval_at, format!("unsupported maxval {maxval}, expected 255"));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        Some(_) => return err(cur.pos, "expected single whitespace before raster"),
        None => return err(cur.pos, "truncated: missing raster"),
    }
    let len = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or(PnmError { offset: cur.pos, message: "image extent overflows".into() })?;
    let raster = &bytes[cur.pos..];
    if raster.len() < len {
        return err(bytes.len(), format!("truncated raster: {} of {len} bytes", raster.len()));
    }
    Ok(PnmImage {
        width,
        height,
        channels,
        data: raster[..len].to_vec(),
    })
}

pub fn encode(img: &PnmImage) -> Vec<u8> {
    let magic = if img.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}
