use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Image};
use crate::error::{Error, Result};

/// Parameters of a synthetic image dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_images: usize,
    /// Square side length in pixels.
    pub resolution: usize,
    pub channels: usize,
    pub n_classes: usize,
    /// Target fraction of zero-valued pixels, in `[0, 1)`.
    pub sparsity: f64,
    /// How far class templates sit from the shared background pattern.
    pub class_separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 {
            return Err(Error::config("n_classes", "must be >= 1"));
        }
        if self.n_images == 0 || self.n_images % self.n_classes != 0 {
            return Err(Error::config(
                "n_images",
                format!(
                    "{} is not a positive multiple of n_classes={}",
                    self.n_images, self.n_classes
                ),
            ));
        }
        if self.resolution == 0 {
            return Err(Error::config("resolution", "must be >= 1"));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::config("channels", format!("must be 1 or 3, got {}", self.channels)));
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return Err(Error::config("sparsity", format!("{} outside [0, 1)", self.sparsity)));
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return Err(Error::config(
                "class_separation",
                format!("{} must be finite and >= 0", self.class_separation),
            ));
        }
        Ok(())
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Balanced synthetic dataset. Each pixel of an image of class `c` is
/// `sigmoid(background + class_separation * template_c + noise)` with
/// standard normal background, templates and noise, then zeroed with
/// probability `sparsity`. Labels cycle `0, 1, .., n_classes - 1`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_pixels = spec.resolution * spec.resolution * spec.channels;
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    let background: Vec<f64> = (0..n_pixels).map(|_| normal(&mut rng)).collect();
    let templates: Vec<Vec<f64>> = (0..spec.n_classes)
        .map(|_| (0..n_pixels).map(|_| normal(&mut rng)).collect())
        .collect();

    let mut images = Vec::with_capacity(spec.n_images);
    let mut labels = Vec::with_capacity(spec.n_images);
    for i in 0..spec.n_images {
        let class = i % spec.n_classes;
        let template = &templates[class];
        let pixels = (0..n_pixels)
            .map(|p| {
                let z = background[p] + spec.class_separation * template[p] + normal(&mut rng);
                let keep = rng.gen::<f64>() >= spec.sparsity;
                if keep {
                    sigmoid(z)
                } else {
                    0.0
                }
            })
            .collect();
        images.push(Image {
            pixels,
            height: spec.resolution,
            width: spec.resolution,
            channels: spec.channels,
        });
        labels.push(class);
    }
    Ok(Dataset {
        name: format!("synthetic-{}", spec.seed),
        images,
        labels,
        n_classes: spec.n_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> SyntheticSpec {
        SyntheticSpec {
            n_images: 300,
            resolution: 10,
            channels: 1,
            n_classes: 10,
            sparsity: 0.0,
            class_separation: 1.0,
            seed: 42,
        }
    }

    #[test]
    fn balanced_classes() {
        let ds = generate_synthetic(&base()).unwrap();
        assert_eq!(ds.len(), 300);
        assert!(ds.class_counts().iter().all(|&c| c == 30));
        ds.validate().unwrap();
    }

    #[test]
    fn dense_when_sparsity_zero() {
        let ds = generate_synthetic(&base()).unwrap();
        assert!(ds.zero_fraction() < 0.01);
        assert!(ds.images.iter().flat_map(|i| &i.pixels).all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic(&base()).unwrap();
        let b = generate_synthetic(&base()).unwrap();
        let bits = |d: &Dataset| -> Vec<u64> {
            d.images.iter().flat_map(|i| i.pixels.iter().map(|p| p.to_bits())).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.labels, b.labels);
        let c = generate_synthetic(&SyntheticSpec { seed: 43, ..base() }).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn zero_fraction_tracks_sparsity() {
        for &s in &[0.2, 0.5, 0.8] {
            let ds = generate_synthetic(&SyntheticSpec {
                sparsity: s,
                channels: 3,
                ..base()
            })
            .unwrap();
            // 300 * 300 pixels, well above 1e4
            assert!((ds.zero_fraction() - s).abs() <= 0.05, "sparsity {s}");
        }
    }

    #[test]
    fn invalid_fields_are_named() {
        let cases: Vec<(SyntheticSpec, &str)> = vec![
            (SyntheticSpec { n_images: 301, ..base() }, "n_images"),
            (SyntheticSpec { resolution: 0, ..base() }, "resolution"),
            (SyntheticSpec { channels: 2, ..base() }, "channels"),
            (SyntheticSpec { sparsity: 1.0, ..base() }, "sparsity"),
            (SyntheticSpec { class_separation: -1.0, ..base() }, "class_separation"),
            (SyntheticSpec { n_classes: 0, ..base() }, "n_classes"),
        ];
        for (spec, field) in cases {
            match generate_synthetic(&spec) {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected config error for {field}, got {other:?}"),
            }
        }
    }
}
