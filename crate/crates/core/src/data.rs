//! IDX loading for MNIST and Fashion-MNIST, plus subsets, one-hot targets
//! and shuffled mini-batches.
//!
//! IDX layout: a 4-byte big-endian magic (`0x00000803` for images,
//! `0x00000801` for labels), one big-endian `u32` per dimension, then the
//! payload as row-major unsigned bytes. Gzip-compressed files are detected by
//! their magic bytes and decompressed transparently.

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::GzDecoder;
use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;
/// Environment variable consulted when no data directory is configured.
pub const DATA_DIR_ENV: &str = "PRUNE_INIT_DATA_DIR";

/// Unnormalized images as stored in an IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count × rows × cols` bytes, one image after another.
    pub pixels: Vec<u8>,
}

impl RawImages {
    pub fn pixels_per_image(&self) -> usize {
        self.rows * self.cols
    }

    /// Serializes to uncompressed IDX bytes.
    pub fn to_idx_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        for v in [IMAGE_MAGIC, self.count as u32, self.rows as u32, self.cols as u32] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Serializes labels to uncompressed IDX bytes.
pub fn labels_to_idx_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&bytes[..])
            .read_to_end(&mut out)
            .map_err(|source| Error::Io {
                path: path.to_owned(),
                source,
            })?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

struct Header<'a> {
    dims: Vec<usize>,
    payload: &'a [u8],
}

fn parse_header<'a>(bytes: &'a [u8], magic: u32, ndims: usize, path: &Path) -> Result<Header<'a>> {
    let fmt_err = |msg: String| Error::Format {
        path: path.to_owned(),
        msg,
    };
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(fmt_err(format!(
            "file is {} bytes, shorter than the {header_len}-byte header",
            bytes.len()
        )));
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    let found = word(0);
    if found != magic {
        return Err(fmt_err(format!(
            "bad magic 0x{found:08x}, expected 0x{magic:08x}"
        )));
    }
    let dims: Vec<usize> = (1..=ndims).map(|i| word(i) as usize).collect();
    let expected: usize = dims.iter().product();
    let payload = &bytes[header_len..];
    if payload.len() != expected {
        return Err(fmt_err(format!(
            "payload is {} bytes, dimensions {dims:?} require {expected}",
            payload.len()
        )));
    }
    Ok(Header { dims, payload })
}

/// Decodes IDX image bytes. `path` is only used in error messages.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<RawImages> {
    let h = parse_header(bytes, IMAGE_MAGIC, 3, path)?;
    Ok(RawImages {
        count: h.dims[0],
        rows: h.dims[1],
        cols: h.dims[2],
        pixels: h.payload.to_vec(),
    })
}

/// Decodes IDX label bytes; every label must be a digit class 0..=9.
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let h = parse_header(bytes, LABEL_MAGIC, 1, path)?;
    if let Some(pos) = h.payload.iter().position(|&l| l as usize >= NUM_CLASSES) {
        return Err(Error::Format {
            path: path.to_owned(),
            msg: format!("label {} at index {pos} is outside 0..=9", h.payload[pos]),
        });
    }
    Ok(h.payload.to_vec())
}

pub fn load_idx_images(path: &Path) -> Result<RawImages> {
    parse_idx_images(&read_file(path)?, path)
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    parse_idx_labels(&read_file(path)?, path)
}

/// Pixel bytes mapped to `[0,1]` by dividing by 255, one image per column.
pub fn normalize(raw: &RawImages) -> Matrix {
    let dim = raw.pixels_per_image();
    let mut data = vec![0.0; dim * raw.count];
    for (s, image) in raw.pixels.chunks_exact(dim.max(1)).enumerate() {
        for (f, &p) in image.iter().enumerate() {
            data[f * raw.count + s] = p as f64 / 255.0;
        }
    }
    Matrix::from_vec(dim, raw.count, data).expect("sized buffer")
}

/// Labeled images normalized to `[0,1]`.
///
/// Pixels are kept as bytes and scaled on access; [`Dataset::images`] and
/// [`Dataset::batch`] return `features × samples` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    dim: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, raw: RawImages, labels: Vec<u8>) -> Result<Self> {
        if raw.count != labels.len() {
            return Err(Error::InvalidValue(format!(
                "{} images but {} labels",
                raw.count,
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::InvalidValue(format!("label {l} outside 0..=9")));
        }
        Ok(Self {
            name: name.into(),
            dim: raw.pixels_per_image(),
            pixels: raw.pixels,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Features per sample (784 for 28×28 images).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// All images as a `dim × len` matrix.
    pub fn images(&self) -> Matrix {
        let all: Vec<usize> = (0..self.len()).collect();
        self.batch(&all)
    }

    /// The listed samples as a `dim × indices.len()` matrix.
    pub fn batch(&self, indices: &[usize]) -> Matrix {
        let n = indices.len();
        let mut data = vec![0.0; self.dim * n];
        for (j, &s) in indices.iter().enumerate() {
            let image = &self.pixels[s * self.dim..(s + 1) * self.dim];
            for (f, &p) in image.iter().enumerate() {
                data[f * n + j] = p as f64 / 255.0;
            }
        }
        Matrix::from_vec(self.dim, n, data).expect("sized buffer")
    }

    pub fn batch_labels(&self, indices: &[usize]) -> Vec<u8> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Copy holding only the listed samples, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut pixels = Vec::with_capacity(indices.len() * self.dim);
        for &s in indices {
            pixels.extend_from_slice(&self.pixels[s * self.dim..(s + 1) * self.dim]);
        }
        Dataset {
            name: self.name.clone(),
            dim: self.dim,
            pixels,
            labels: self.batch_labels(indices),
        }
    }

    /// `n` samples drawn without replacement.
    pub fn subset<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Dataset> {
        if n > self.len() {
            return Err(Error::InvalidValue(format!(
                "subset of {n} requested from {} samples",
                self.len()
            )));
        }
        let picked = index::sample(rng, self.len(), n).into_vec();
        Ok(self.select(&picked))
    }

    /// Count of samples per class.
    pub fn class_histogram(&self) -> [usize; NUM_CLASSES] {
        let mut h = [0; NUM_CLASSES];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }
}

/// `num_classes × labels.len()` matrix with a single 1 per column.
pub fn one_hot(labels: &[u8], num_classes: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(num_classes, labels.len());
    for (c, &l) in labels.iter().enumerate() {
        if l as usize >= num_classes {
            return Err(Error::InvalidValue(format!(
                "class {l} out of range for {num_classes} classes"
            )));
        }
        m.set(l as usize, c, 1.0);
    }
    Ok(m)
}

/// Reshuffled mini-batch order, one permutation per epoch.
#[derive(Debug, Clone)]
pub struct BatchPlan {
    batch_size: usize,
    len: usize,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
}

impl BatchPlan {
    pub fn new(len: usize, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if len == 0 {
            return Err(Error::InvalidValue("cannot batch an empty dataset".into()));
        }
        Ok(Self {
            batch_size,
            len,
            order: (0..len).collect(),
            cursor: len,
            epoch: 0,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Batches per epoch, counting a final short batch.
    pub fn batches_per_epoch(&self) -> usize {
        self.len.div_ceil(self.batch_size)
    }

    /// Epochs started so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Sample indices of the next batch, reshuffling at each epoch start.
    /// The last batch of an epoch is short when `batch_size` does not divide
    /// the dataset size.
    pub fn next_batch<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[usize] {
        if self.cursor >= self.len {
            self.order.shuffle(rng);
            self.cursor = 0;
            self.epoch += 1;
        }
        let start = self.cursor;
        self.cursor = (start + self.batch_size).min(self.len);
        &self.order[start..self.cursor]
    }

    /// True when the batch just returned closed its epoch.
    pub fn at_epoch_end(&self) -> bool {
        self.cursor >= self.len
    }
}

/// Which dataset to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetName {
    Mnist,
    FashionMnist,
}

impl DatasetName {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::FashionMnist => "fashion-mnist",
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetName::Mnist),
            "fashion-mnist" | "fashion_mnist" | "fmnist" => Ok(DatasetName::FashionMnist),
            _ => Err(Error::Config(format!(
                "unknown dataset {s:?} (expected mnist or fashion-mnist)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

fn find_file(dir: &Path, stem: &str) -> Option<PathBuf> {
    [stem.to_owned(), format!("{stem}.gz")]
        .into_iter()
        .map(|f| dir.join(f))
        .find(|p| p.is_file())
}

/// Loads one split from `<data_dir>/<dataset>/` or, failing that, `<data_dir>/`,
/// using the standard file names (`train-images-idx3-ubyte[.gz]`, ...).
pub fn load_split(data_dir: &Path, dataset: DatasetName, split: Split) -> Result<Dataset> {
    let images_stem = format!("{}-images-idx3-ubyte", split.prefix());
    let labels_stem = format!("{}-labels-idx1-ubyte", split.prefix());
    let candidates = [data_dir.join(dataset.as_str()), data_dir.to_owned()];
    for dir in &candidates {
        if let (Some(images), Some(labels)) =
            (find_file(dir, &images_stem), find_file(dir, &labels_stem))
        {
            let raw = load_idx_images(&images)?;
            let labels_vec = load_idx_labels(&labels)?;
            return Dataset::new(dataset.as_str(), raw, labels_vec).map_err(|e| Error::Format {
                path: images.clone(),
                msg: e.to_string(),
            });
        }
    }
    Err(Error::Io {
        path: candidates[0].join(&images_stem),
        source: std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!(
                "{images_stem} / {labels_stem} not found under {} (set --data-dir or {DATA_DIR_ENV})",
                data_dir.display()
            ),
        ),
    })
}
