//! File formats: P5 graymaps, raw `.attr` grids and result tables.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::tensor::Tensor;

/// Largest accepted graymap side; keeps decoders from allocating unbounded memory.
pub const MAX_IMAGE_SIDE: usize = 1 << 14;

/// An 8- or 16-bit grayscale image, samples scaled to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Graymap {
    pub height: usize,
    pub width: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl Graymap {
    pub fn to_tensor(&self) -> Tensor {
        let m = self.maxval as f32;
        Tensor::new(
            vec![1, self.height, self.width],
            self.samples.iter().map(|&s| s as f32 / m).collect(),
        )
        .expect("positive dimensions")
    }

    /// Quantizes values in `[0, 1]` to 8 bits; out-of-range values are clamped.
    pub fn from_unit(height: usize, width: usize, values: &[f32]) -> Self {
        Self {
            height,
            width,
            maxval: 255,
            samples: values
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u16)
                .collect(),
        }
    }

    pub fn from_mask(mask: &BinaryMask) -> Self {
        Self {
            height: mask.height(),
            width: mask.width(),
            maxval: 255,
            samples: mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    /// Nonzero samples are foreground.
    pub fn to_mask(&self) -> BinaryMask {
        BinaryMask::from_vec(self.height, self.width, self.samples.iter().map(|&s| s > 0).collect())
            .expect("consistent sizes")
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
            if self.pos - start > 9 {
                return Err(Error::Format(format!("PGM {what} too large")));
            }
        }
        if start == self.pos {
            return Err(Error::Format(format!("PGM {what} missing")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        Ok(text.parse().expect("at most nine digits"))
    }
}

/// Decodes a binary (P5) graymap.
pub fn decode_pgm(bytes: &[u8]) -> Result<Graymap> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::Format("not a P5 graymap".into()));
    }
    let mut c = Cursor { bytes, pos: 2 };
    let width = c.number("width")?;
    let height = c.number("height")?;
    let maxval = c.number("maxval")?;
    if width == 0 || height == 0 || width > MAX_IMAGE_SIDE || height > MAX_IMAGE_SIDE {
        return Err(Error::Format(format!("unsupported PGM size {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("invalid PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(c.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("missing whitespace after PGM header".into()));
    }
    c.pos += 1;
    let bps = if maxval < 256 { 1 } else { 2 };
    let needed = width * height * bps;
    let raster = &bytes[c.pos..];
    if raster.len() < needed {
        return Err(Error::Truncated {
            needed,
            found: raster.len(),
        });
    }
    let samples: Vec<u16> = if bps == 1 {
        raster[..needed].iter().map(|&b| b as u16).collect()
    } else {
        raster[..needed]
            .chunks_exact(2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]))
            .collect()
    };
    if let Some(&s) = samples.iter().find(|&&s| s as usize > maxval) {
        return Err(Error::Format(format!("sample {s} exceeds maxval {maxval}")));
    }
    Ok(Graymap {
        height,
        width,
        maxval: maxval as u16,
        samples,
    })
}

pub fn encode_pgm(img: &Graymap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if img.maxval < 256 {
        out.extend(img.samples.iter().map(|&s| s as u8));
    } else {
        out.extend(img.samples.iter().flat_map(|s| s.to_be_bytes()));
    }
    out
}

pub fn read_pgm(path: &Path) -> Result<Graymap> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_pgm(path: &Path, img: &Graymap) -> Result<()> {
    Ok(fs::write(path, encode_pgm(img))?)
}

/// Reads a single-channel image as a `[1, H, W]` tensor in `[0, 1]`.
pub fn read_image(path: &Path) -> Result<Tensor> {
    Ok(read_pgm(path)?.to_tensor())
}

pub fn write_image(path: &Path, image: &Tensor) -> Result<()> {
    let (c, h, w) = image.chw()?;
    if c != 1 {
        return Err(Error::InvalidArgument("graymaps hold one channel".into()));
    }
    write_pgm(path, &Graymap::from_unit(h, w, image.data()))
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    Ok(read_pgm(path)?.to_mask())
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    write_pgm(path, &Graymap::from_mask(mask))
}

/// Min-max normalized 8-bit preview of a map; a constant map renders black.
pub fn preview(map: &Tensor) -> Result<Graymap> {
    let (_, h, w) = map.chw()?;
    let (lo, hi) = (map.min(), map.max());
    let span = hi - lo;
    let vals: Vec<f32> = map
        .data()
        .iter()
        .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect();
    Ok(Graymap::from_unit(h, w, &vals))
}

const ATTR_HEADER: usize = 8;

/// Raw map: `u32` height and width (little-endian), then `H·W` little-endian `f32`.
pub fn encode_attr(map: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = map.chw()?;
    if c != 1 {
        return Err(Error::InvalidArgument("attribution grids hold one channel".into()));
    }
    let (hh, ww) = (u32::try_from(h), u32::try_from(w));
    let (Ok(hh), Ok(ww)) = (hh, ww) else {
        return Err(Error::InvalidArgument("grid too large".into()));
    };
    let mut out = Vec::with_capacity(ATTR_HEADER + 4 * h * w);
    out.extend(hh.to_le_bytes());
    out.extend(ww.to_le_bytes());
    out.extend(map.data().iter().flat_map(|v| v.to_le_bytes()));
    Ok(out)
}

/// Decodes an `.attr` grid into an `[H, W]` tensor. Trailing bytes are an error.
pub fn decode_attr(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < ATTR_HEADER {
        return Err(Error::Truncated {
            needed: ATTR_HEADER,
            found: bytes.len(),
        });
    }
    let h = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    let w = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    if h == 0 || w == 0 || h > MAX_IMAGE_SIDE || w > MAX_IMAGE_SIDE {
        return Err(Error::Format(format!("unsupported grid size {h}x{w}")));
    }
    let needed = ATTR_HEADER + 4 * h * w;
    if bytes.len() < needed {
        return Err(Error::Truncated {
            needed,
            found: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(Error::Integrity(format!("{} trailing bytes", bytes.len() - needed)));
    }
    let data: Vec<f32> = bytes[ATTR_HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite value in grid".into()));
    }
    Ok(Tensor::new(vec![h, w], data).expect("checked dimensions"))
}

pub fn read_attr(path: &Path) -> Result<Tensor> {
    decode_attr(&fs::read(path)?)
}

pub fn write_attr(path: &Path, map: &Tensor) -> Result<()> {
    Ok(fs::write(path, encode_attr(map)?)?)
}

/// Writes serializable rows as CSV with a header.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a CSV from a header and stringly rows.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Formats a float with a fixed number of decimals for byte-stable tables.
pub fn fixed(v: f64) -> String {
    format!("{v:.6}")
}
