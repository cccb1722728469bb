//! Reader for the big-endian IDX files MNIST ships in.

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::stream::Dataset;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("{path}: bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { path: PathBuf, found: u32, expected: u32 },
    #[error("{path}: file truncated (need {needed} bytes, have {have})")]
    TruncatedFile { path: PathBuf, needed: usize, have: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn check_len(path: &Path, bytes: &[u8], needed: usize) -> Result<(), IdxError> {
    if bytes.len() < needed {
        return Err(IdxError::TruncatedFile {
            path: path.to_path_buf(),
            needed,
            have: bytes.len(),
        });
    }
    Ok(())
}

fn check_magic(path: &Path, bytes: &[u8], expected: u32) -> Result<(), IdxError> {
    check_len(path, bytes, 4)?;
    let found = be_u32(bytes, 0);
    if found != expected {
        return Err(IdxError::BadMagic {
            path: path.to_path_buf(),
            found,
            expected,
        });
    }
    Ok(())
}

/// Parses an image file: returns `(count, rows·cols, pixels in [0, 1])`.
pub fn parse_images(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<f64>), IdxError> {
    check_magic(path, bytes, IMAGE_MAGIC)?;
    check_len(path, bytes, 16)?;
    let n = be_u32(bytes, 4) as usize;
    let dim = be_u32(bytes, 8) as usize * be_u32(bytes, 12) as usize;
    check_len(path, bytes, 16 + n * dim)?;
    let pixels = bytes[16..16 + n * dim].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok((n, dim, pixels))
}

pub fn parse_labels(path: &Path, bytes: &[u8]) -> Result<Vec<usize>, IdxError> {
    check_magic(path, bytes, LABEL_MAGIC)?;
    check_len(path, bytes, 8)?;
    let n = be_u32(bytes, 4) as usize;
    check_len(path, bytes, 8 + n)?;
    Ok(bytes[8..8 + n].iter().map(|&b| usize::from(b)).collect())
}

fn read(path: &Path) -> Result<Vec<u8>, IdxError> {
    std::fs::read(path).map_err(|source| IdxError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset, IdxError> {
    let (n, dim, pixels) = parse_images(images, &read(images)?)?;
    let y = parse_labels(labels, &read(labels)?)?;
    if y.len() != n {
        return Err(IdxError::CountMismatch {
            images: n,
            labels: y.len(),
        });
    }
    Ok(Dataset::new(pixels, y, dim).expect("pixels are finite and sized"))
}

/// Standard MNIST file names inside `dir`: `(train, test)`.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset), IdxError> {
    let train = load_idx(&dir.join("train-images-idx3-ubyte"), &dir.join("train-labels-idx1-ubyte"))?;
    let test = load_idx(&dir.join("t10k-images-idx3-ubyte"), &dir.join("t10k-labels-idx1-ubyte"))?;
    Ok((train, test))
}

/// Encodes images in IDX form (handy for fixtures).
pub fn encode_images(rows: u32, cols: u32, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&rows.to_be_bytes());
    out.extend_from_slice(&cols.to_be_bytes());
    images.iter().for_each(|im| out.extend_from_slice(im));
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_empty_dataset() {
        let (n, dim, px) = parse_images(Path::new("x"), &encode_images(28, 28, &[])).unwrap();
        assert_eq!((n, dim, px.len()), (0, 784, 0));
    }

    #[test]
    fn wrong_magic_and_truncation() {
        let mut bytes = encode_images(2, 2, &[vec![1, 2, 3, 4]]);
        bytes[3] = 0x04;
        assert!(matches!(
            parse_images(Path::new("x"), &bytes),
            Err(IdxError::BadMagic { found: 2052, .. })
        ));
        let bytes = encode_images(2, 2, &[vec![1, 2, 3, 4]]);
        assert!(matches!(
            parse_images(Path::new("x"), &bytes[..18]),
            Err(IdxError::TruncatedFile { needed: 20, .. })
        ));
        assert!(matches!(
            parse_labels(Path::new("y"), &encode_labels(&[1])[..8]),
            Err(IdxError::TruncatedFile { .. })
        ));
    }
}
