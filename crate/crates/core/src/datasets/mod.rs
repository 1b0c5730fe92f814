//! Labeled image datasets: synthetic generation, directory ingestion,
//! size/resolution standardization and dense/sparse matrix views.

mod csv_io;
mod ingest;
mod resize;
mod sparse;
mod synthetic;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{read_dataset_csv, write_dataset_csv};
pub use ingest::ingest_images;
pub use resize::resize_bilinear;
pub use sparse::{sparse_dot, SparseMatrix, SparseRow};
pub use synthetic::{generate_synthetic, SyntheticSpec};

/// A dataset is kept in compressed row form once more than this fraction of
/// its pixels are exactly zero.
pub const SPARSE_THRESHOLD: f64 = 0.5;

/// One image, row-major `height x width x channels`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub pixels: Vec<f64>,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Image {
    pub fn new(pixels: Vec<f64>, height: usize, width: usize, channels: usize) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::config("channels", format!("must be 1 or 3, got {channels}")));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::Dimension {
                expected: height * width * channels,
                actual: pixels.len(),
            });
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidInput(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Self {
            pixels,
            height,
            width,
            channels,
        })
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Labeled image collection. All images share one shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        images: Vec<Image>,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            images,
            labels,
            n_classes,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Checks the structural invariants: one label per image, labels below
    /// `n_classes`, uniform image shape.
    pub fn validate(&self) -> Result<()> {
        if self.images.len() != self.labels.len() {
            return Err(Error::Dimension {
                expected: self.images.len(),
                actual: self.labels.len(),
            });
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.n_classes) {
            return Err(Error::InvalidInput(format!(
                "label {l} out of range for {} classes",
                self.n_classes
            )));
        }
        if let Some(first) = self.images.first() {
            let shape = (first.height, first.width, first.channels);
            for img in &self.images {
                if (img.height, img.width, img.channels) != shape {
                    return Err(Error::InvalidInput(format!(
                        "mixed image shapes: {:?} vs {:?}",
                        shape,
                        (img.height, img.width, img.channels)
                    )));
                }
                if img.pixels.len() != img.height * img.width * img.channels {
                    return Err(Error::Dimension {
                        expected: img.height * img.width * img.channels,
                        actual: img.pixels.len(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `(height, width, channels)` of the images, `None` when empty.
    pub fn shape(&self) -> Option<(usize, usize, usize)> {
        self.images.first().map(|i| (i.height, i.width, i.channels))
    }

    /// Number of features per instance (pixels times channels).
    pub fn n_features(&self) -> usize {
        self.images.first().map_or(0, Image::len)
    }

    pub fn channels(&self) -> usize {
        self.images.first().map_or(1, |i| i.channels)
    }

    pub fn zero_fraction(&self) -> f64 {
        let total: usize = self.images.iter().map(Image::len).sum();
        if total == 0 {
            return 0.0;
        }
        let zeros = self
            .images
            .iter()
            .flat_map(|i| i.pixels.iter())
            .filter(|&&p| p == 0.0)
            .count();
        zeros as f64 / total as f64
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Dense row-major copy of the pixel matrix.
    pub fn to_dense(&self) -> LabeledMatrix {
        let cols = self.n_features();
        let mut data = Vec::with_capacity(cols * self.len());
        for img in &self.images {
            data.extend_from_slice(&img.pixels);
        }
        LabeledMatrix {
            features: FeatureMatrix::Dense(DenseMatrix {
                data,
                rows: self.len(),
                cols,
            }),
            labels: self.labels.clone(),
            n_classes: self.n_classes,
        }
    }

    /// Compressed-row copy of the pixel matrix.
    pub fn to_sparse(&self) -> LabeledMatrix {
        let rows: Vec<&[f64]> = self.images.iter().map(|i| i.pixels.as_slice()).collect();
        LabeledMatrix {
            features: FeatureMatrix::Sparse(SparseMatrix::from_dense_rows(&rows, self.n_features())),
            labels: self.labels.clone(),
            n_classes: self.n_classes,
        }
    }

    /// Sparse when the zero fraction exceeds [`SPARSE_THRESHOLD`], dense otherwise.
    pub fn to_matrix(&self) -> LabeledMatrix {
        if self.zero_fraction() > SPARSE_THRESHOLD {
            self.to_sparse()
        } else {
            self.to_dense()
        }
    }

    fn subset(&self, name: String, indices: &[usize]) -> Dataset {
        Dataset {
            name,
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }
}

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl DenseMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Pixel matrix in either storage layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureMatrix {
    Dense(DenseMatrix),
    Sparse(SparseMatrix),
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        match self {
            FeatureMatrix::Dense(m) => m.rows,
            FeatureMatrix::Sparse(m) => m.n_rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            FeatureMatrix::Dense(m) => m.cols,
            FeatureMatrix::Sparse(m) => m.n_cols(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, FeatureMatrix::Sparse(_))
    }

    /// Stored entries: every cell for dense, nonzeros for sparse.
    pub fn stored_entries(&self) -> usize {
        match self {
            FeatureMatrix::Dense(m) => m.data.len(),
            FeatureMatrix::Sparse(m) => m.nnz(),
        }
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        match self {
            FeatureMatrix::Dense(m) => m.row(i).to_vec(),
            FeatureMatrix::Sparse(m) => m.row(i).to_dense(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            FeatureMatrix::Dense(m) => m.clone(),
            FeatureMatrix::Sparse(m) => DenseMatrix {
                data: m.to_dense(),
                rows: m.n_rows(),
                cols: m.n_cols(),
            },
        }
    }
}

/// Feature matrix plus labels, the form consumed by the classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMatrix {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl LabeledMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Builds nested, class-balanced size subsets of `base` at every requested
/// resolution. Output order is size-major: `sizes[0]` at each resolution,
/// then `sizes[1]`, and so on.
pub fn standardize(
    base: &Dataset,
    sizes: &[usize],
    resolutions: &[usize],
    seed: u64,
) -> Result<Vec<Dataset>> {
    if sizes.is_empty() {
        return Err(Error::config("sizes", "empty"));
    }
    if resolutions.is_empty() {
        return Err(Error::config("resolutions", "empty"));
    }
    if let Some(&r) = resolutions.iter().find(|&&r| r == 0) {
        return Err(Error::config("resolutions", format!("resolution {r} must be >= 1")));
    }
    let max = *sizes.iter().max().expect("nonempty");
    if max > base.len() {
        return Err(Error::config(
            "sizes",
            format!("requested {max} images but base `{}` holds {}", base.name, base.len()),
        ));
    }

    let order = balanced_order(base, seed);
    let mut out = Vec::with_capacity(sizes.len() * resolutions.len());
    for &size in sizes {
        let subset = base.subset(base.name.clone(), &order[..size]);
        for &res in resolutions {
            let images = subset
                .images
                .iter()
                .map(|img| resize_bilinear(img, res, res))
                .collect();
            out.push(Dataset {
                name: format!("{}-{}-{}", base.name, size, res),
                images,
                labels: subset.labels.clone(),
                n_classes: subset.n_classes,
            });
        }
    }
    Ok(out)
}

/// Per-class shuffles interleaved round-robin, so every prefix is as
/// class-balanced as the base allows and prefixes nest.
fn balanced_order(base: &Dataset, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); base.n_classes];
    for (i, &l) in base.labels.iter().enumerate() {
        per_class[l].push(i);
    }
    for members in &mut per_class {
        members.shuffle(&mut rng);
    }
    let mut order = Vec::with_capacity(base.len());
    let longest = per_class.iter().map(Vec::len).max().unwrap_or(0);
    for round in 0..longest {
        for members in &per_class {
            if let Some(&i) = members.get(round) {
                order.push(i);
            }
        }
    }
    order
}

/// Stratified train/test split. Each class contributes
/// `round(train_fraction * class_size)` images to train, clamped so that both
/// sides receive at least one member.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(
            "train_fraction",
            format!("must lie strictly between 0 and 1, got {train_fraction}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.n_classes];
    for (i, &l) in dataset.labels.iter().enumerate() {
        per_class[l].push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, members) in per_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "class {class} has {} member(s); stratified split needs at least 2",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let n_train = ((train_fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((
        dataset.subset(format!("{}-train", dataset.name), &train),
        dataset.subset(format!("{}-test", dataset.name), &test),
    ))
}
