//! Datasets: IDX (MNIST container) parsing, synthetic generators, and CSV
//! loading.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Classification dataset: one example per row.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let ctx = "Dataset::new";
        if inputs.nrows() != labels.len() {
            return Err(Error::invalid(ctx, "row count does not match label count"));
        }
        if labels.iter().any(|&l| l >= num_classes) {
            return Err(Error::invalid(ctx, "label out of range"));
        }
        Ok(Self { inputs, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// Split into (train, test) by a deterministic shuffled index.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::invalid("Dataset::split", "test_fraction must be in [0,1)"));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Fisher-Yates
        for i in (1..idx.len()).rev() {
            let j = rng.random_range(0..=i);
            idx.swap(i, j);
        }
        let n_test = (self.len() as f64 * test_fraction).round() as usize;
        let take = |ids: &[usize]| -> Dataset {
            let inputs = DMatrix::from_fn(ids.len(), self.feature_dim(), |r, c| {
                self.inputs[(ids[r], c)]
            });
            let labels = ids.iter().map(|&i| self.labels[i]).collect();
            Dataset { inputs, labels, num_classes: self.num_classes }
        };
        Ok((take(&idx[n_test..]), take(&idx[..n_test])))
    }
}

fn read_be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::FormatError {
            offset: bytes.len(),
            message: format!("truncated while reading {what} (need {end} bytes)"),
        });
    }
    Ok(u32::from_be_bytes([bytes[offset], bytes[offset + 1], bytes[offset + 2], bytes[offset + 3]]))
}

/// Parse a big-endian IDX image/label pair into a dataset with pixels
/// scaled to [0, 1].
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    parse_idx(&images, &labels)
}

/// Parse IDX bytes directly (file-free core of [`load_idx`]).
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let magic = read_be_u32(images, 0, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::FormatError {
            offset: 0,
            message: format!("bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let count = read_be_u32(images, 4, "image count")? as usize;
    let rows = read_be_u32(images, 8, "image rows")? as usize;
    let cols = read_be_u32(images, 12, "image cols")? as usize;
    let pixel_bytes = count
        .checked_mul(rows)
        .and_then(|x| x.checked_mul(cols))
        .ok_or(Error::FormatError { offset: 4, message: "image dimensions overflow".into() })?;
    let header = 16;
    if images.len() != header + pixel_bytes {
        return Err(Error::FormatError {
            offset: images.len().min(header + pixel_bytes),
            message: format!(
                "image payload has {} bytes, expected {}",
                images.len() - header.min(images.len()),
                pixel_bytes
            ),
        });
    }

    let lmagic = read_be_u32(labels, 0, "label magic")?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(Error::FormatError {
            offset: 0,
            message: format!("bad label magic {lmagic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let lcount = read_be_u32(labels, 4, "label count")? as usize;
    if labels.len() != 8 + lcount {
        return Err(Error::FormatError {
            offset: labels.len().min(8 + lcount),
            message: format!("label payload has {} bytes, expected {lcount}", labels.len().saturating_sub(8)),
        });
    }
    if lcount != count {
        return Err(Error::FormatError {
            offset: 4,
            message: format!("{count} images but {lcount} labels"),
        });
    }

    let dim = rows * cols;
    // IDX stores pixels row-major per image.
    let inputs = DMatrix::from_fn(count, dim, |r, c| images[header + r * dim + c] as f64 / 255.0);
    let labels: Vec<usize> = labels[8..].iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(1, |&m| m + 1);
    Dataset::new(inputs, labels, num_classes)
}

/// Serialize images (u8 pixels, row-major) into IDX bytes.
pub fn write_idx_images(count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != count * rows * cols {
        return Err(Error::invalid("write_idx_images", "pixel count mismatch"));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(count as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(pixels);
    Ok(out)
}

/// Serialize labels into IDX bytes.
pub fn write_idx_labels(labels: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    Ok(out)
}

/// Synthetic dataset families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Two well-separated Gaussian blobs; linearly separable.
    Blobs,
    /// Zero-mean Gaussian cloud with anisotropic axis variances (1, 4, ...);
    /// label = sign of the first coordinate.
    AnisotropicQuadratic,
    /// Two interleaved half circles with noise.
    TwoMoons,
}

/// Deterministic synthetic dataset of `n` examples.
pub fn make_synthetic(kind: SyntheticKind, n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::invalid("make_synthetic", "need n >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = move |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    match kind {
        SyntheticKind::Blobs => {
            // Centers 10σ apart: any reasonable linear classifier separates.
            let centers = [[-5.0, 0.0], [5.0, 0.0]];
            let mut inputs = DMatrix::zeros(n, 2);
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let class = i % 2; // balanced within ±1 example
                inputs[(i, 0)] = centers[class][0] + normal(&mut rng);
                inputs[(i, 1)] = centers[class][1] + normal(&mut rng);
                labels.push(class);
            }
            Dataset::new(inputs, labels, 2)
        }
        SyntheticKind::AnisotropicQuadratic => {
            let scales = [1.0f64, 4.0];
            let mut inputs = DMatrix::zeros(n, 2);
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let x0 = scales[0].sqrt() * normal(&mut rng);
                let x1 = scales[1].sqrt() * normal(&mut rng);
                inputs[(i, 0)] = x0;
                inputs[(i, 1)] = x1;
                labels.push(usize::from(x0 > 0.0));
            }
            Dataset::new(inputs, labels, 2)
        }
        SyntheticKind::TwoMoons => {
            let noise = 0.1;
            let mut inputs = DMatrix::zeros(n, 2);
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let class = i % 2;
                let t = std::f64::consts::PI * rng.random_range(0.0..1.0);
                let (x, y) = if class == 0 {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                inputs[(i, 0)] = x + noise * normal(&mut rng);
                inputs[(i, 1)] = y + noise * normal(&mut rng);
                labels.push(class);
            }
            Dataset::new(inputs, labels, 2)
        }
    }
}

/// Load a dataset from CSV with a header row; the label column is named
/// `label`, every other column is a numeric feature.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_col = headers
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| Error::FormatError { offset: 0, message: "no `label` column".into() })?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let mut features = Vec::with_capacity(headers.len() - 1);
        for (col, field) in record.iter().enumerate() {
            if col == label_col {
                labels.push(field.trim().parse::<usize>().map_err(|_| Error::FormatError {
                    offset: line + 1,
                    message: format!("bad label {field:?} on data row {}", line + 1),
                })?);
            } else {
                features.push(field.trim().parse::<f64>().map_err(|_| Error::FormatError {
                    offset: line + 1,
                    message: format!("bad number {field:?} on data row {}", line + 1),
                })?);
            }
        }
        rows.push(features);
    }
    if rows.is_empty() {
        return Err(Error::FormatError { offset: 0, message: "empty dataset".into() });
    }
    let dim = rows[0].len();
    let inputs = DMatrix::from_fn(rows.len(), dim, |r, c| rows[r][c]);
    let num_classes = labels.iter().max().map_or(1, |&m| m + 1);
    Dataset::new(inputs, labels, num_classes)
}
