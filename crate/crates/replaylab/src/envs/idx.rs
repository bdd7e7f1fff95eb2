//! IDX image and label files.
//!
//! The classic big-endian format: images carry magic 0x00000803 followed by
//! count, rows, and cols; labels carry magic 0x00000801 followed by count.
//! Pixels are bytes and are scaled to [0, 1] on load.

use std::io::{self, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

/// Magic number of an IDX3 image file.
pub const IMAGE_MAGIC: u32 = 0x0000_0803;
/// Magic number of an IDX1 label file.
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// A labelled image with pixels already scaled to [0, 1].
pub type LabelledImage = (Vec<f64>, u8);

fn eof_guard(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::UnexpectedEof
    } else {
        Error::Io(e)
    }
}

/// Reads paired image and label files into scaled examples.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Vec<LabelledImage>> {
    let (pixels, rows, cols) = read_images(&std::fs::read(images)?)?;
    let tags = read_labels(&std::fs::read(labels)?)?;
    let n = pixels.len() / (rows * cols);
    if n != tags.len() {
        return Err(Error::IdxCountMismatch {
            images: n,
            labels: tags.len(),
        });
    }
    let dim = rows * cols;
    Ok(pixels
        .chunks(dim)
        .zip(tags)
        .map(|(px, label)| (px.iter().map(|b| *b as f64 / 255.0).collect(), label))
        .collect())
}

/// Parses an IDX3 blob into raw pixel bytes plus image dimensions.
pub fn read_images(data: &[u8]) -> Result<(Vec<u8>, usize, usize)> {
    let mut cur = io::Cursor::new(data);
    let magic = cur.read_u32::<BigEndian>().map_err(eof_guard)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::BadIdxMagic(magic));
    }
    let count = cur.read_u32::<BigEndian>().map_err(eof_guard)? as usize;
    let rows = cur.read_u32::<BigEndian>().map_err(eof_guard)? as usize;
    let cols = cur.read_u32::<BigEndian>().map_err(eof_guard)? as usize;
    let mut pixels = vec![0u8; count * rows * cols];
    cur.read_exact(&mut pixels).map_err(eof_guard)?;
    Ok((pixels, rows, cols))
}

/// Parses an IDX1 blob into labels.
pub fn read_labels(data: &[u8]) -> Result<Vec<u8>> {
    let mut cur = io::Cursor::new(data);
    let magic = cur.read_u32::<BigEndian>().map_err(eof_guard)?;
    if magic != LABEL_MAGIC {
        return Err(Error::BadIdxMagic(magic));
    }
    let count = cur.read_u32::<BigEndian>().map_err(eof_guard)? as usize;
    let mut labels = vec![0u8; count];
    cur.read_exact(&mut labels).map_err(eof_guard)?;
    Ok(labels)
}

/// Quantizes [0, 1] pixels back to bytes, clamping out-of-range values.
pub fn quantize_pixels(pixels: &[f64]) -> Vec<u8> {
    pixels
        .iter()
        .map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

/// Writes paired IDX3/IDX1 files from byte images of uniform size.
pub fn write_idx(
    images_path: &Path,
    labels_path: &Path,
    images: &[Vec<u8>],
    labels: &[u8],
    rows: usize,
    cols: usize,
) -> Result<()> {
    if images.len() != labels.len() {
        return Err(Error::IdxCountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    let mut img = Vec::with_capacity(16 + images.len() * rows * cols);
    img.write_u32::<BigEndian>(IMAGE_MAGIC)?;
    img.write_u32::<BigEndian>(images.len() as u32)?;
    img.write_u32::<BigEndian>(rows as u32)?;
    img.write_u32::<BigEndian>(cols as u32)?;
    for image in images {
        debug_assert_eq!(image.len(), rows * cols);
        img.write_all(image)?;
    }
    let mut lab = Vec::with_capacity(8 + labels.len());
    lab.write_u32::<BigEndian>(LABEL_MAGIC)?;
    lab.write_u32::<BigEndian>(labels.len() as u32)?;
    lab.write_all(labels)?;
    std::fs::write(images_path, img)?;
    std::fs::write(labels_path, lab)?;
    Ok(())
}
