//! Binary PPM (P6, maxval 255) encoding and decoding.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::RgbImage;

#[derive(Debug, Error)]
pub enum PpmError {
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("truncated image file: {0}")]
    TruncatedFile(String),
    #[error("malformed PPM header: {0}")]
    BadHeader(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode(image: &RgbImage) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", image.width(), image.height());
    let mut out = Vec::with_capacity(header.len() + image.pixels().len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(image.pixels());
    out
}

pub fn decode(bytes: &[u8]) -> Result<RgbImage, PpmError> {
    if bytes.len() < 2 {
        return Err(PpmError::TruncatedFile("missing magic".into()));
    }
    if &bytes[..2] != b"P6" {
        return Err(PpmError::UnsupportedFormat(format!(
            "magic {:?}, only binary P6 is supported",
            String::from_utf8_lossy(&bytes[..2])
        )));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        *field = next_header_number(bytes, &mut pos)?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(PpmError::UnsupportedFormat(format!("maxval {maxval}, only 255 is supported")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        Some(_) => return Err(PpmError::BadHeader("missing whitespace after maxval".into())),
        None => return Err(PpmError::TruncatedFile("no raster data".into())),
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| PpmError::BadHeader("image dimensions overflow".into()))?;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(PpmError::TruncatedFile(format!("expected {need} raster bytes, found {}", raster.len())));
    }
    RgbImage::from_raw(width, height, raster[..need].to_vec())
        .ok_or_else(|| PpmError::BadHeader(format!("invalid dimensions {width}x{height}")))
}

fn next_header_number(bytes: &[u8], pos: &mut usize) -> Result<usize, PpmError> {
    loop {
        match bytes.get(*pos) {
            None => return Err(PpmError::TruncatedFile("header ended early".into())),
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(PpmError::BadHeader(format!("expected a number at byte {start}")));
    }
    if *pos >= bytes.len() {
        return Err(PpmError::TruncatedFile("header ended early".into()));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| PpmError::BadHeader("header number out of range".into()))
}

pub fn read_image(path: &Path) -> Result<RgbImage, PpmError> {
    decode(&fs::read(path)?)
}

pub fn write_image(image: &RgbImage, path: &Path) -> Result<(), PpmError> {
    fs::write(path, encode(image))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RgbImage {
        RgbImage::from_raw(2, 3, (0..18).map(|x| x as u8 * 14).collect()).unwrap()
    }

    #[test]
    fn exact_layout() {
        let bytes = encode(&tiny());
        assert!(bytes.starts_with(b"P6\n2 3\n255\n"));
        assert_eq!(bytes.len(), 11 + 18);
        assert_eq!(decode(&bytes).unwrap(), tiny());
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P6 # made by hand\n2 3 255\n".to_vec();
        bytes.extend_from_slice(tiny().pixels());
        assert_eq!(decode(&bytes).unwrap(), tiny());
    }

    #[test]
    fn rejects_ascii_and_deep() {
        assert!(matches!(decode(b"P3\n1 1\n255\n0 0 0\n"), Err(PpmError::UnsupportedFormat(_))));
        assert!(matches!(decode(b"P6\n1 1\n65535\n\0\0\0\0\0\0"), Err(PpmError::UnsupportedFormat(_))));
    }

    #[test]
    fn truncated() {
        let bytes = encode(&tiny());
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(PpmError::TruncatedFile(_))));
        assert!(matches!(decode(b"P6\n2 "), Err(PpmError::TruncatedFile(_))));
    }
}
