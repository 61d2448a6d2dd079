//! MNIST IDX ingestion and two-digit filtering.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::features::{normalize_bytes, ImageVector};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const SIDE: usize = 28;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Raw image bytes, `count × 784`, row-major per image.
#[derive(Clone, Debug, PartialEq)]
pub struct RawImages {
    pub count: usize,
    pub pixels: Vec<u8>,
}

impl RawImages {
    pub fn image(&self, i: usize) -> &[u8] {
        &self.pixels[i * SIDE * SIDE..(i + 1) * SIDE * SIDE]
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(offset as u64, "truncated header"))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<RawImages> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(0, format!("bad image magic {magic:#010x}")));
    }
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    if rows != SIDE {
        return Err(Error::format(8, format!("row count {rows} ≠ {SIDE}")));
    }
    if cols != SIDE {
        return Err(Error::format(12, format!("column count {cols} ≠ {SIDE}")));
    }
    let need = count * SIDE * SIDE;
    let payload = &bytes[16..];
    if payload.len() < need {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated payload: {count} images need {need} bytes, found {}", payload.len()),
        ));
    }
    Ok(RawImages {
        count,
        pixels: payload[..need].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(0, format!("bad label magic {magic:#010x}")));
    }
    let count = read_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated payload: {count} labels, found {} bytes", payload.len()),
        ));
    }
    Ok(payload[..count].to_vec())
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<RawImages> {
    parse_idx_images(&fs::read(path)?)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    parse_idx_labels(&fs::read(path)?)
}

pub fn encode_idx_images(images: &RawImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count as u32, SIDE as u32, SIDE as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn write_idx_images(path: impl AsRef<Path>, images: &RawImages) -> Result<()> {
    fs::File::create(path)?.write_all(&encode_idx_images(images))?;
    Ok(())
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    fs::File::create(path)?.write_all(&encode_idx_labels(labels))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Two-class subset of MNIST with labels remapped to `{0, 1}`.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    pub images: Vec<ImageVector>,
    pub labels: Vec<u8>,
    pub split: Split,
    pub source_digits: (u8, u8),
    /// Position of each sample in the source file.
    pub source_indices: Vec<usize>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Fraction of samples labelled 0.
    pub fn class0_prevalence(&self) -> f64 {
        self.labels.iter().filter(|&&l| l == 0).count() as f64 / self.len().max(1) as f64
    }
}

/// Keep `digit_a` (→ 0) and `digit_b` (→ 1), preserving file order.
pub fn filter_binary(images: &RawImages, labels: &[u8], digit_a: u8, digit_b: u8, split: Split) -> Result<LabeledDataset> {
    if digit_a == digit_b {
        return Err(Error::input(format!("cannot separate digit {digit_a} from itself")));
    }
    if images.count != labels.len() {
        return Err(Error::input(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    let mut out = LabeledDataset {
        images: vec![],
        labels: vec![],
        split,
        source_digits: (digit_a, digit_b),
        source_indices: vec![],
    };
    for (i, &l) in labels.iter().enumerate() {
        let class = if l == digit_a {
            0
        } else if l == digit_b {
            1
        } else {
            continue;
        };
        out.images.push(normalize_bytes(images.image(i))?);
        out.labels.push(class);
        out.source_indices.push(i);
    }
    if out.is_empty() {
        return Err(Error::input(format!("no samples with digits {digit_a} or {digit_b}")));
    }
    Ok(out)
}

/// Standard MNIST train/test files for one binary task.
#[derive(Clone, Debug)]
pub struct BinaryMnist {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

pub fn split_paths(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    match split {
        Split::Train => (dir.join(TRAIN_IMAGES), dir.join(TRAIN_LABELS)),
        Split::Test => (dir.join(TEST_IMAGES), dir.join(TEST_LABELS)),
    }
}

pub fn load_split(dir: impl AsRef<Path>, split: Split, digits: (u8, u8)) -> Result<LabeledDataset> {
    let (img_path, lbl_path) = split_paths(dir.as_ref(), split);
    let images = load_idx_images(&img_path)?;
    let labels = load_idx_labels(&lbl_path)?;
    filter_binary(&images, &labels, digits.0, digits.1, split)
}

pub fn load_binary_mnist(dir: impl AsRef<Path>, digits: (u8, u8)) -> Result<BinaryMnist> {
    Ok(BinaryMnist {
        train: load_split(&dir, Split::Train, digits)?,
        test: load_split(&dir, Split::Test, digits)?,
    })
}
