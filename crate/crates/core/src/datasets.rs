//! Datasets: IDX (MNIST-format) ingestion, synthetic Gaussian blobs and IID
//! partitioning across simulated clients.

use std::borrow::Borrow;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, domain};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
/// Two-dimensional IDX tensor of big-endian f64 (type code 0x0E).
pub const IDX_F64_MATRIX_MAGIC: u32 = 0x0000_0E02;

/// Distance of each synthetic class mean from the origin, along its axis.
pub const SYNTH_MEAN_DISTANCE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }
}

/// Samples held by one simulated client.
#[derive(Debug, Clone, PartialEq)]
pub struct DataShard {
    pub client_id: usize,
    pub samples: Vec<Sample>,
}

impl DataShard {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// A train/test split before federation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub num_classes: usize,
    pub feature_dim: usize,
}

/// Training data split across `K` clients plus the shared test set.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub train_shards: Vec<DataShard>,
    pub test_set: Vec<Sample>,
    pub num_classes: usize,
    pub feature_dim: usize,
}

impl DatasetBundle {
    pub fn num_clients(&self) -> usize {
        self.train_shards.len()
    }

    /// All training samples in shard order.
    pub fn train_union(&self) -> Vec<Sample> {
        self.train_shards
            .iter()
            .flat_map(|s| s.samples.iter().cloned())
            .collect()
    }
}

impl Dataset {
    /// Checks the shape invariants shared by every dataset.
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.test.is_empty() {
            return Err(Error::Config("test set is empty".into()));
        }
        for s in self.train.iter().chain(&self.test) {
            if s.features.len() != self.feature_dim {
                return Err(Error::Shape(format!(
                    "sample has {} features, dataset has {}",
                    s.features.len(),
                    self.feature_dim
                )));
            }
            if s.label >= self.num_classes {
                return Err(Error::Shape(format!(
                    "label {} outside {} classes",
                    s.label, self.num_classes
                )));
            }
        }
        Ok(())
    }

    /// Keeps a seeded random `fraction` of the training set; the test set is untouched.
    pub fn subsample_train(&self, fraction: f64, seed: u64) -> Result<Dataset> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Config(format!(
                "subset fraction must be in (0, 1], got {fraction}"
            )));
        }
        let keep = ((self.train.len() as f64) * fraction).round() as usize;
        let keep = keep.max(1).min(self.train.len());
        let mut rng = rng::stream(seed, &[domain::SUBSET]);
        let mut idx: Vec<usize> = (0..self.train.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(keep);
        idx.sort_unstable();
        Ok(Dataset {
            train: idx.into_iter().map(|i| self.train[i].clone()).collect(),
            test: self.test.clone(),
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
        })
    }

    /// Splits the training set across `clients` shards.
    pub fn federate(&self, clients: usize, seed: u64) -> Result<DatasetBundle> {
        self.validate()?;
        Ok(DatasetBundle {
            train_shards: partition_iid(&self.train, clients, seed)?,
            test_set: self.test.clone(),
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
        })
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("IDX header truncated at byte {at}")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = be_u32(bytes, 0)?;
    if magic != expected {
        return Err(Error::Format(format!(
            "bad IDX magic {magic:#010x}, expected {expected:#010x}"
        )));
    }
    Ok(())
}

fn payload(bytes: &[u8], header: usize, expected: usize) -> Result<&[u8]> {
    let found = bytes.len() - header;
    if found < expected {
        return Err(Error::Length { expected, found });
    }
    Ok(&bytes[header..header + expected])
}

/// Parses an IDX image file; pixel byte `b` becomes `b / 255`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let dim = rows * cols;
    let data = payload(bytes, 16, count * dim)?;
    if dim == 0 {
        return Ok(vec![Vec::new(); count]);
    }
    Ok(data
        .chunks_exact(dim)
        .map(|px| px.iter().map(|&b| f64::from(b) / 255.0).collect())
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    Ok(payload(bytes, 8, count)?.to_vec())
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    parse_idx_images(&read_file(path.as_ref())?)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    parse_idx_labels(&read_file(path.as_ref())?)
}

/// Encodes pixel rows (values in `[0, 1]`) as an IDX image file.
///
/// Values are mapped back to bytes with `round(v * 255)`, so rows produced by
/// [`parse_idx_images`] round-trip exactly.
pub fn encode_idx_images(images: &[Vec<f64>], rows: usize, cols: usize) -> Result<Vec<u8>> {
    let dim = rows * cols;
    let mut out = Vec::with_capacity(16 + images.len() * dim);
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for img in images {
        if img.len() != dim {
            return Err(Error::Shape(format!(
                "image has {} pixels, header says {rows}x{cols}",
                img.len()
            )));
        }
        out.extend(
            img.iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Encodes a real-valued feature matrix as a big-endian f64 IDX tensor.
pub fn encode_idx_f64_matrix(rows: &[Vec<f64>], cols: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + rows.len() * cols * 8);
    out.extend_from_slice(&IDX_F64_MATRIX_MAGIC.to_be_bytes());
    out.extend_from_slice(&(rows.len() as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for row in rows {
        if row.len() != cols {
            return Err(Error::Shape(format!(
                "row has {} values, expected {cols}",
                row.len()
            )));
        }
        for v in row {
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn parse_idx_f64_matrix(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    check_magic(bytes, IDX_F64_MATRIX_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let cols = be_u32(bytes, 8)? as usize;
    let data = payload(bytes, 12, count * cols * 8)?;
    let values: Vec<f64> = data
        .chunks_exact(8)
        .map(|b| f64::from_be_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    if cols == 0 {
        return Ok(vec![Vec::new(); count]);
    }
    Ok(values.chunks_exact(cols).map(<[f64]>::to_vec).collect())
}

/// Pairs image rows with labels.
pub fn zip_samples(images: Vec<Vec<f64>>, labels: &[u8]) -> Result<Vec<Sample>> {
    if images.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    Ok(images
        .into_iter()
        .zip(labels)
        .map(|(f, &l)| Sample::new(f, usize::from(l)))
        .collect())
}

/// Loads an MNIST-style train/test pair of IDX files.
pub fn load_mnist(
    train_images: impl AsRef<Path>,
    train_labels: impl AsRef<Path>,
    test_images: impl AsRef<Path>,
    test_labels: impl AsRef<Path>,
) -> Result<Dataset> {
    let train = zip_samples(
        load_idx_images(train_images)?,
        &load_idx_labels(train_labels)?,
    )?;
    let test = zip_samples(
        load_idx_images(test_images)?,
        &load_idx_labels(test_labels)?,
    )?;
    let feature_dim = train
        .first()
        .or(test.first())
        .map_or(0, |s| s.features.len());
    let num_classes = train
        .iter()
        .chain(&test)
        .map(|s| s.label + 1)
        .max()
        .unwrap_or(0)
        .max(2);
    let ds = Dataset {
        train,
        test,
        num_classes,
        feature_dim,
    };
    ds.validate()?;
    Ok(ds)
}

fn class_mean_axis(class: usize, feature_dim: usize) -> (usize, f64) {
    let axis = class % feature_dim;
    let sign = if (class / feature_dim) % 2 == 0 {
        1.0
    } else {
        -1.0
    };
    (axis, sign * SYNTH_MEAN_DISTANCE)
}

fn synth_split<R: Rng>(
    rng: &mut R,
    n: usize,
    num_classes: usize,
    feature_dim: usize,
) -> Vec<Sample> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % num_classes).collect();
    labels.shuffle(rng);
    labels
        .into_iter()
        .map(|label| {
            let (axis, offset) = class_mean_axis(label, feature_dim);
            let mut features: Vec<f64> = (0..feature_dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            features[axis] += offset;
            Sample::new(features, label)
        })
        .collect()
}

/// Isotropic unit-variance Gaussian blobs, one per class.
///
/// Class `c` is centred at `±3·e_(c mod d)`, the sign flipping for every
/// wrap-around of the axis index, so up to `2·d` classes get distinct means.
/// Labels are assigned round-robin and shuffled, which balances class counts
/// to within one sample.
pub fn synth_dataset(
    num_classes: usize,
    feature_dim: usize,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<Dataset> {
    if num_classes < 2 {
        return Err(Error::Config(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    if feature_dim == 0 || n_train == 0 || n_test == 0 {
        return Err(Error::Config(
            "feature_dim, n_train and n_test must be positive".into(),
        ));
    }
    if num_classes > 2 * feature_dim {
        return Err(Error::Config(format!(
            "{num_classes} classes need feature_dim >= {}",
            num_classes.div_ceil(2)
        )));
    }
    let mut train_rng = rng::stream(seed, &[domain::SYNTHETIC, 0]);
    let mut test_rng = rng::stream(seed, &[domain::SYNTHETIC, 1]);
    Ok(Dataset {
        train: synth_split(&mut train_rng, n_train, num_classes, feature_dim),
        test: synth_split(&mut test_rng, n_test, num_classes, feature_dim),
        num_classes,
        feature_dim,
    })
}

/// Shuffles with `seed` and cuts into `clients` contiguous shards whose sizes
/// differ by at most one (the first `n mod K` shards take the extra sample).
pub fn partition_iid<S>(samples: &[S], clients: usize, seed: u64) -> Result<Vec<DataShard>>
where
    S: Borrow<Sample>,
{
    if clients == 0 {
        return Err(Error::Config("client count must be at least 1".into()));
    }
    if samples.is_empty() {
        return Err(Error::Config(
            "cannot partition an empty sample list".into(),
        ));
    }
    if clients > samples.len() {
        return Err(Error::Config(format!(
            "{clients} clients but only {} samples",
            samples.len()
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng::stream(seed, &[domain::PARTITION]));

    let base = samples.len() / clients;
    let extra = samples.len() % clients;
    let mut cursor = 0;
    Ok((0..clients)
        .map(|client_id| {
            let size = base + usize::from(client_id < extra);
            let shard = order[cursor..cursor + size]
                .iter()
                .map(|&i| samples[i].borrow().clone())
                .collect();
            cursor += size;
            DataShard {
                client_id,
                samples: shard,
            }
        })
        .collect())
}
