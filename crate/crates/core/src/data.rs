//! Datasets, CSV ingestion and i.i.d. client partitioning.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::{keyed_rng, Stream};
use crate::{Error, Result};

/// Standard deviation of every synthetic class blob, per feature.
pub const BLOB_STD: f64 = 0.5;

/// Row-major feature matrix with one label per row.
///
/// Classification labels are stored as exact small non-negative integers
/// (`0.0, 1.0, ...`); `num_classes` is `None` for regression targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<f64>,
    feature_dim: usize,
    num_classes: Option<usize>,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<f64>,
        feature_dim: usize,
        num_classes: Option<usize>,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if features.len() != labels.len() * feature_dim {
            return Err(Error::Shape(format!(
                "{} feature values do not form {} rows of width {}",
                features.len(),
                labels.len(),
                feature_dim
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        if let Some(c) = num_classes {
            if let Some(bad) = labels
                .iter()
                .find(|&&y| y < 0.0 || y.fract() != 0.0 || y as usize >= c)
            {
                return Err(Error::Config(format!("label {bad} is not a class index below {c}")));
            }
        }
        Ok(Self {
            features,
            labels,
            feature_dim,
            num_classes,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn n_examples(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.feature_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            labels,
            feature_dim: self.feature_dim,
            num_classes: self.num_classes,
        }
    }

    /// Deterministic shuffled split into `(train, test)`; the test part holds
    /// `round(n * test_fraction)` rows.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::Config(format!(
                "test_fraction must be in [0, 1), got {test_fraction}"
            )));
        }
        let n = self.n_examples();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut keyed_rng(seed, Stream::Split, &[]));
        let n_test = (n as f64 * test_fraction).round() as usize;
        let (test, train) = idx.split_at(n_test);
        Ok((self.subset(train), self.subset(test)))
    }
}

/// Gaussian class blobs whose means sit `separation` apart along the unit
/// diagonal direction. Example `i` belongs to class `i % classes`.
pub fn make_synthetic_dataset(
    n: usize,
    d: usize,
    classes: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 || n < classes || d == 0 {
        return Err(Error::Config(format!(
            "synthetic dataset needs n >= classes >= 2 and d >= 1 (n={n}, d={d}, classes={classes})"
        )));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::Config(format!("separation must be finite and >= 0, got {separation}")));
    }
    let mut rng = keyed_rng(seed, Stream::Data, &[]);
    let axis = 1.0 / (d as f64).sqrt();
    let centre = (classes as f64 - 1.0) / 2.0;
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        let offset = (class as f64 - centre) * separation * axis;
        for _ in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            features.push(offset + BLOB_STD * z);
        }
        labels.push(class as f64);
    }
    Dataset::new(features, labels, d, Some(classes))
}

/// Reads a headered CSV file. Every non-label column becomes a feature, in
/// header order. Labels that are all non-negative integers are treated as
/// class indices; anything else is a regression target.
///
/// Rows are numbered from 1 for the first data row (the header is row 0).
pub fn load_csv_dataset(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| ingest(path, 0, "<header>", e.to_string()))?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| ingest(path, 0, label_column, "label column not found in header".into()))?;
    let feature_dim = headers.len() - 1;
    if feature_dim == 0 {
        return Err(ingest(path, 0, "<header>", "no feature columns".into()));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| ingest(path, row, "<record>", e.to_string()))?;
        if record.len() != headers.len() {
            return Err(ingest(
                path,
                row,
                "<record>",
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for (c, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| {
                ingest(path, row, &headers[c], format!("non-numeric cell `{cell}`"))
            })?;
            if !value.is_finite() {
                return Err(ingest(path, row, &headers[c], "non-finite value".into()));
            }
            if c == label_idx {
                labels.push(value);
            } else {
                features.push(value);
            }
        }
    }
    if labels.is_empty() {
        return Err(ingest(path, 1, "<record>", "file has no data rows".into()));
    }

    let is_class = labels.iter().all(|&y| y >= 0.0 && y.fract() == 0.0 && y < 1e6);
    let num_classes = is_class.then(|| {
        let max = labels.iter().fold(0.0f64, |a, &b| a.max(b)) as usize;
        (max + 1).max(2)
    });
    Dataset::new(features, labels, feature_dim, num_classes)
}

fn ingest(path: &Path, row: usize, column: &str, reason: String) -> Error {
    Error::Ingest {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        reason,
    }
}

/// Shuffles the rows with the given seed and deals them into `clients`
/// contiguous shards whose sizes differ by at most one.
pub fn partition_iid(data: &Dataset, clients: usize, seed: u64) -> Result<Vec<Dataset>> {
    let n = data.n_examples();
    if clients == 0 || clients > n {
        return Err(Error::Config(format!(
            "cannot partition {n} examples across {clients} clients"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut keyed_rng(seed, Stream::Partition, &[]));
    let base = n / clients;
    let extra = n % clients;
    let mut shards = Vec::with_capacity(clients);
    let mut start = 0;
    for r in 0..clients {
        let len = base + usize::from(r < extra);
        shards.push(data.subset(&idx[start..start + len]));
        start += len;
    }
    Ok(shards)
}
