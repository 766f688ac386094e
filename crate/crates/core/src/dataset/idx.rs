use std::path::Path;

use crate::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const SIDE: usize = 28;

/// A 28×28 digit with intensities in `[0, 1]`, row-major from the top.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitImage {
    pub pixels: Vec<f64>,
    pub label: u8,
}

impl DigitImage {
    pub fn new(pixels: Vec<f64>, label: u8) -> Result<Self> {
        if pixels.len() != SIDE * SIDE {
            return Err(Error::shape(format!("digit image needs {} pixels, got {}", SIDE * SIDE, pixels.len())));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::domain("pixel intensities must lie in [0, 1]"));
        }
        if !pixels.iter().any(|&p| p > 0.0) {
            return Err(Error::domain("digit image has no positive pixel"));
        }
        Ok(Self { pixels, label })
    }

    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * SIDE + col]
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("slice of length 4")))
        .ok_or_else(|| Error::format(bytes.len(), format!("file ends before the u32 at byte {offset}")))
}

fn expect_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::format(0, format!("expected magic {expected:#010x}, found {found:#010x}")));
    }
    Ok(())
}

/// Parses an IDX image file and its matching label file.
pub fn read_idx(images: &[u8], labels: &[u8]) -> Result<Vec<DigitImage>> {
    expect_magic(images, IMAGE_MAGIC)?;
    expect_magic(labels, LABEL_MAGIC)?;
    let count = be_u32(images, 4)? as usize;
    let rows = be_u32(images, 8)? as usize;
    let cols = be_u32(images, 12)? as usize;
    if rows != SIDE || cols != SIDE {
        return Err(Error::format(8, format!("expected {SIDE}x{SIDE} images, found {rows}x{cols}")));
    }
    let label_count = be_u32(labels, 4)? as usize;
    if label_count != count {
        return Err(Error::format(4, format!("label file holds {label_count} labels for {count} images")));
    }
    let pixel_end = 16 + count * SIDE * SIDE;
    if images.len() < pixel_end {
        return Err(Error::format(images.len(), format!("image data truncated; expected {pixel_end} bytes")));
    }
    if labels.len() < 8 + count {
        return Err(Error::format(labels.len(), format!("label data truncated; expected {} bytes", 8 + count)));
    }
    (0..count)
        .map(|k| {
            let start = 16 + k * SIDE * SIDE;
            let label = labels[8 + k];
            if label > 9 {
                return Err(Error::format(8 + k, format!("label {label} is not a digit")));
            }
            let pixels = images[start..start + SIDE * SIDE]
                .iter()
                .map(|&b| f64::from(b) / 255.0)
                .collect();
            DigitImage::new(pixels, label).map_err(|_| Error::format(start, format!("image {k} is blank")))
        })
        .collect()
}

pub fn read_idx_files(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Vec<DigitImage>> {
    read_idx(&std::fs::read(images)?, &std::fs::read(labels)?)
}

/// Encodes images as IDX image and label files; intensities are rounded to
/// the nearest byte.
pub fn write_idx(images: &[DigitImage]) -> (Vec<u8>, Vec<u8>) {
    let mut img = Vec::with_capacity(16 + images.len() * SIDE * SIDE);
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&(images.len() as u32).to_be_bytes());
    img.extend_from_slice(&(SIDE as u32).to_be_bytes());
    img.extend_from_slice(&(SIDE as u32).to_be_bytes());
    let mut lab = Vec::with_capacity(8 + images.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(images.len() as u32).to_be_bytes());
    for im in images {
        img.extend(im.pixels.iter().map(|p| (p * 255.0).round() as u8));
        lab.push(im.label);
    }
    (img, lab)
}
