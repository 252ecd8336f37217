//! Monochrome image files in the portable bitmap format.
//!
//! Two encodings are supported: `P4` (packed bits, eight pixels per byte,
//! rows padded to a byte boundary, most significant bit first) and `P1`
//! (ASCII digits). A `1` bit is a lit pixel, the origin is the top-left
//! corner, rows are stored top to bottom. Reading back a written file
//! reproduces the image bit for bit in either encoding.

use certl_core::image::BinaryImage;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageFileError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed image file {path} at byte {offset}: {reason}")]
    MalformedFile {
        path: String,
        offset: usize,
        reason: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PixmapFormat {
    /// Packed binary rows (`P4`).
    Packed,
    /// ASCII `0`/`1` rows (`P1`).
    Ascii,
}

/// Packs the image into `P4` row-padded bytes, most significant bit first.
/// Also used verbatim for mask payloads in the bank container.
pub fn pack_bits(img: &BinaryImage) -> Vec<u8> {
    let row_bytes = (img.width() as usize).div_ceil(8);
    let mut out = vec![0u8; row_bytes * img.height() as usize];
    for l in 1..=img.height() {
        for k in 1..=img.width() {
            if img.get(k, l) {
                let bit = (k - 1) as usize;
                out[(l - 1) as usize * row_bytes + bit / 8] |= 0x80 >> (bit % 8);
            }
        }
    }
    out
}

/// Inverse of [`pack_bits`]; `data` must hold exactly the padded row bytes.
pub fn unpack_bits(data: &[u8], width: u32, height: u32) -> Option<BinaryImage> {
    let row_bytes = (width as usize).div_ceil(8);
    if data.len() != row_bytes * height as usize {
        return None;
    }
    let mut img = BinaryImage::new(width, height);
    for l in 1..=height {
        for k in 1..=width {
            let bit = (k - 1) as usize;
            let byte = data[(l - 1) as usize * row_bytes + bit / 8];
            if byte & (0x80 >> (bit % 8)) != 0 {
                img.set(k, l, true);
            }
        }
    }
    Some(img)
}

pub fn encode_image(img: &BinaryImage, format: PixmapFormat) -> Vec<u8> {
    let mut out = Vec::new();
    match format {
        PixmapFormat::Packed => {
            write!(out, "P4\n{} {}\n", img.width(), img.height()).unwrap();
            out.extend_from_slice(&pack_bits(img));
        }
        PixmapFormat::Ascii => {
            write!(out, "P1\n{} {}\n", img.width(), img.height()).unwrap();
            for l in 1..=img.height() {
                let row: String = (1..=img.width())
                    .map(|k| if img.get(k, l) { '1' } else { '0' })
                    .collect();
                out.extend_from_slice(row.as_bytes());
                out.push(b'\n');
            }
        }
    }
    out
}

pub fn write_image(
    path: &Path,
    img: &BinaryImage,
    format: PixmapFormat,
) -> Result<(), ImageFileError> {
    crate::report::write_atomic(path, &encode_image(img, format)).map_err(|source| {
        ImageFileError::Io {
            path: path.display().to_string(),
            source,
        }
    })
}

struct Scanner<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Scanner<'a> {
    fn fail<T>(&self, reason: &str) -> Result<T, ImageFileError> {
        Err(ImageFileError::MalformedFile {
            path: self.path.display().to_string(),
            offset: self.pos,
            reason: reason.to_string(),
        })
    }

    /// Advances past whitespace and `#` comments between header tokens.
    fn skip_separators(&mut self) {
        while let Some(&b) = self.data.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn read_dimension(&mut self) -> Result<u32, ImageFileError> {
        self.skip_separators();
        let start = self.pos;
        while self
            .data
            .get(self.pos)
            .is_some_and(u8::is_ascii_digit)
        {
            self.pos += 1;
        }
        if start == self.pos {
            return self.fail("expected a decimal dimension");
        }
        let text = std::str::from_utf8(&self.data[start..self.pos]).unwrap();
        match text.parse::<u32>() {
            Ok(n) if n > 0 => Ok(n),
            _ => {
                self.pos = start;
                self.fail("dimension out of range")
            }
        }
    }
}

pub fn decode_image(data: &[u8], path: &Path) -> Result<BinaryImage, ImageFileError> {
    let mut sc = Scanner { data, pos: 0, path };
    let packed = match data.get(..2) {
        Some(b"P4") => true,
        Some(b"P1") => false,
        _ => return sc.fail("missing P1/P4 magic"),
    };
    sc.pos = 2;
    let width = sc.read_dimension()?;
    let height = sc.read_dimension()?;
    if packed {
        match data.get(sc.pos) {
            Some(b) if b.is_ascii_whitespace() => sc.pos += 1,
            _ => return sc.fail("expected single whitespace before packed rows"),
        }
        let row_bytes = (width as usize).div_ceil(8);
        let need = row_bytes * height as usize;
        let Some(body) = data.get(sc.pos..sc.pos + need) else {
            sc.pos = data.len();
            return sc.fail("truncated packed pixel rows");
        };
        if sc.pos + need != data.len() {
            sc.pos += need;
            return sc.fail("trailing bytes after pixel rows");
        }
        Ok(unpack_bits(body, width, height).unwrap())
    } else {
        let mut img = BinaryImage::new(width, height);
        for l in 1..=height {
            for k in 1..=width {
                sc.skip_separators();
                match data.get(sc.pos) {
                    Some(b'1') => img.set(k, l, true),
                    Some(b'0') => {}
                    Some(_) => return sc.fail("expected ascii 0 or 1"),
                    None => return sc.fail("truncated ascii pixel data"),
                }
                sc.pos += 1;
            }
        }
        sc.skip_separators();
        if sc.pos != data.len() {
            return sc.fail("trailing bytes after pixel data");
        }
        Ok(img)
    }
}

pub fn read_image(path: &Path) -> Result<BinaryImage, ImageFileError> {
    let data = fs::read(path).map_err(|source| ImageFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_image(&data, path)
}
