//! Dummy coding of experiment configurations into 14 binary columns.
//!
//! | factor     | levels                 | columns        |
//! |------------|------------------------|----------------|
//! | resolution | 17, 22, 28             | r1, r2         |
//! | #images    | 300 .. 1500            | s1 .. s4       |
//! | #classes   | 2, 7, 10               | nc1, nc2       |
//! | phase      | train, test            | phase          |
//! | color      | no, yes                | color          |
//! | dimension  | 2-D, 3-D               | dimension      |
//! | algorithm  | knn, svm, logreg       | alg1, alg2     |
//! | device     | rpi3, bbb              | device         |
//!
//! The first level of every factor is the all-zero reference.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::harness::{Algorithm, ExperimentConfig, Phase};
use crate::scalar::Scalar;

pub const N_FEATURES: usize = 14;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "r1", "r2", "s1", "s2", "s3", "s4", "nc1", "nc2", "phase", "color", "dimension", "alg1", "alg2", "device",
];

/// Level sets of the numeric and device factors. Each list is sorted
/// ascending (devices keep their given order); the first entry is the
/// reference level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingSchema {
    pub resolutions: [usize; 3],
    pub sizes: [usize; 5],
    pub class_counts: [usize; 3],
    pub devices: [String; 2],
}

impl Default for EncodingSchema {
    fn default() -> Self {
        Self {
            resolutions: [17, 22, 28],
            sizes: [300, 600, 900, 1200, 1500],
            class_counts: [2, 7, 10],
            devices: ["rpi3".to_string(), "bbb".to_string()],
        }
    }
}

/// The configuration fields the encoding looks at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodeRow<'a> {
    pub resolution: usize,
    pub n_images: usize,
    pub n_classes: usize,
    pub phase: Phase,
    pub color: bool,
    pub channels: usize,
    pub algorithm: Algorithm,
    pub device: &'a str,
}

impl<'a> From<&'a ExperimentConfig> for EncodeRow<'a> {
    fn from(c: &'a ExperimentConfig) -> Self {
        Self {
            resolution: c.resolution,
            n_images: c.n_images,
            n_classes: c.n_classes,
            phase: c.phase,
            color: c.color,
            channels: c.channels,
            algorithm: c.algorithm,
            device: &c.device,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureVector(pub [u8; N_FEATURES]);

impl FeatureVector {
    pub fn to_scalars<T: Scalar>(&self) -> Vec<T> {
        self.0.iter().map(|&b| if b == 1 { T::one() } else { T::zero() }).collect()
    }
}

/// Encoding result; `unseen` names the factors whose value fell outside
/// the schema and was coded as the reference level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub features: FeatureVector,
    pub unseen: Vec<&'static str>,
}

/// Writes `n - 1` dummy columns for the level index of `value`.
fn dummy<V: PartialEq>(levels: &[V], value: &V, out: &mut [u8]) -> bool {
    match levels.iter().position(|l| l == value) {
        Some(0) => true,
        Some(i) => {
            out[i - 1] = 1;
            true
        }
        None => false,
    }
}

pub fn encode(schema: &EncodingSchema, row: &EncodeRow<'_>) -> Encoded {
    let mut v = [0u8; N_FEATURES];
    let mut unseen = Vec::new();
    if !dummy(&schema.resolutions, &row.resolution, &mut v[0..2]) {
        unseen.push("resolution");
    }
    if !dummy(&schema.sizes, &row.n_images, &mut v[2..6]) {
        unseen.push("n_images");
    }
    if !dummy(&schema.class_counts, &row.n_classes, &mut v[6..8]) {
        unseen.push("n_classes");
    }
    v[8] = u8::from(row.phase == Phase::Test);
    v[9] = u8::from(row.color);
    v[10] = u8::from(row.channels == 3);
    match row.algorithm {
        Algorithm::Knn => {}
        Algorithm::Svm => v[11] = 1,
        Algorithm::LogReg => v[12] = 1,
    }
    let device = schema.devices.iter().position(|d| d == row.device);
    match device {
        Some(i) => v[13] = u8::from(i == 1),
        None => unseen.push("device"),
    }
    if !unseen.is_empty() {
        warn!("unseen level(s) {unseen:?} coded as reference");
    }
    Encoded {
        features: FeatureVector(v),
        unseen,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(resolution: usize) -> EncodeRow<'static> {
        EncodeRow {
            resolution,
            n_images: 300,
            n_classes: 10,
            phase: Phase::Train,
            color: false,
            channels: 1,
            algorithm: Algorithm::Knn,
            device: "rpi3",
        }
    }

    #[test]
    fn resolution_columns() {
        let s = EncodingSchema::default();
        assert_eq!(&encode(&s, &row(17)).features.0[..2], &[0, 0]);
        assert_eq!(&encode(&s, &row(22)).features.0[..2], &[1, 0]);
        assert_eq!(&encode(&s, &row(28)).features.0[..2], &[0, 1]);
    }

    #[test]
    fn unseen_class_count_falls_back() {
        let s = EncodingSchema::default();
        let e = encode(&s, &EncodeRow { n_classes: 5, ..row(17) });
        assert_eq!(&e.features.0[6..8], &[0, 0]);
        assert_eq!(e.unseen, vec!["n_classes"]);
        assert!(encode(&s, &row(17)).unseen.is_empty());
    }

    #[test]
    fn width_and_names() {
        assert_eq!(FEATURE_NAMES.len(), 14);
        let e = encode(&EncodingSchema::default(), &row(22));
        assert_eq!(e.features.to_scalars::<f32>().len(), 14);
    }
}
