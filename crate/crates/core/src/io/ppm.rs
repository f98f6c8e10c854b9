//! Binary PPM (P6) and PGM (P5) images, maxval 255.
//!
//! Reading maps a byte `b` to `b / 255`; writing maps `v` to `round(v * 255)`.
//! Files are written with the header `P6\n<w> <h>\n255\n`; for files already
//! in that form, read followed by write reproduces them byte for byte.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

pub fn decode(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let magic = bytes.get(..2).ok_or(Error::Truncated {
        needed: 2,
        found: bytes.len(),
    })?;
    let channels = match magic {
        b"P6" => 3,
        b"P5" => 1,
        b"P3" | b"P2" => {
            return Err(Error::UnsupportedFormat(
                "ASCII PNM (P2/P3) is not supported".into(),
            ))
        }
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "not a binary PPM/PGM (magic {:?})",
                String::from_utf8_lossy(other)
            )))
        }
    };
    pos += 2;

    let width = header_number(bytes, &mut pos, "width")?;
    let height = header_number(bytes, &mut pos, "height")?;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "maxval {maxval} (only 255 is supported)"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::UnsupportedFormat(format!("{width}x{height} image")));
    }
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        Some(_) => {
            return Err(Error::UnsupportedFormat(
                "missing whitespace after maxval".into(),
            ))
        }
        None => {
            return Err(Error::Truncated {
                needed: pos + 1,
                found: bytes.len(),
            })
        }
    }

    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::UnsupportedFormat(format!("{width}x{height} overflows")))?;
    let raster = &bytes[pos..];
    if raster.len() < len {
        return Err(Error::Truncated {
            needed: len,
            found: raster.len(),
        });
    }
    if raster.len() > len {
        return Err(Error::UnsupportedFormat(format!(
            "{} bytes after the raster",
            raster.len() - len
        )));
    }
    let pixels = raster.iter().map(|&b| f64::from(b) / 255.0).collect();
    Image::new(height, width, channels, pixels)
}

pub fn encode(image: &Image) -> Vec<u8> {
    let magic = if image.channels() == 3 { "P6" } else { "P5" };
    let mut buf = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    buf.extend(image.pixels().iter().map(|&v| to_byte(v)));
    buf
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Reads one decimal header field, skipping whitespace and `#` comments.
fn header_number(bytes: &[u8], pos: &mut usize, field: &str) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(_) => break,
            None => {
                return Err(Error::Truncated {
                    needed: *pos + 1,
                    found: bytes.len(),
                })
            }
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::UnsupportedFormat(format!("expected {field} in header")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::UnsupportedFormat(format!("{field} out of range")))
}

pub fn read(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(image)).map_err(|e| Error::io(path, e))
}
