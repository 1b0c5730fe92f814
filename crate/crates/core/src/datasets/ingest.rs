use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use super::{resize_bilinear, Dataset, Image};
use crate::error::{Error, Result};

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

fn decode(path: &Path, grayscale: bool) -> std::result::Result<Image, String> {
    let img = image::open(path).map_err(|e| e.to_string())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (pixels, channels): (Vec<f64>, usize) = if grayscale {
        (img.to_luma32f().into_raw().into_iter().map(f64::from).collect(), 1)
    } else {
        (img.to_rgb32f().into_raw().into_iter().map(f64::from).collect(), 3)
    };
    let pixels = pixels.into_iter().map(|p| p.clamp(0.0, 1.0)).collect();
    Ok(Image {
        pixels,
        height: h,
        width: w,
        channels,
    })
}

/// Reads a class-per-subdirectory image tree. Labels follow the
/// lexicographic order of subdirectory names; every image is stretched to
/// `resolution x resolution` and scaled into `[0, 1]`. Files that fail to
/// decode are skipped with a warning.
pub fn ingest_images(dir: impl AsRef<Path>, resolution: usize, grayscale: bool) -> Result<Dataset> {
    let dir = dir.as_ref();
    if resolution == 0 {
        return Err(Error::config("resolution", "must be >= 1"));
    }
    let class_dirs: Vec<PathBuf> = sorted_entries(dir)?.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} contains no class subdirectories",
            dir.display()
        )));
    }

    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (label, class_dir) in class_dirs.iter().enumerate() {
        let mut found = 0;
        for file in sorted_entries(class_dir)?.into_iter().filter(|p| p.is_file()) {
            match decode(&file, grayscale) {
                Ok(img) => {
                    images.push(resize_bilinear(&img, resolution, resolution));
                    labels.push(label);
                    found += 1;
                }
                Err(e) => warn!("skipping {}: {e}", file.display()),
            }
        }
        if found == 0 {
            return Err(Error::InvalidInput(format!(
                "class directory {} holds no decodable images",
                class_dir.display()
            )));
        }
    }
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "ingested".to_string());
    Dataset::new(name, images, labels, class_dirs.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    fn write_tree(root: &Path, classes: &[&str], per_class: usize, side: u32) {
        for (c, name) in classes.iter().enumerate() {
            let d = root.join(name);
            fs::create_dir_all(&d).unwrap();
            for i in 0..per_class {
                let img = RgbImage::from_fn(side, side, |x, y| {
                    Rgb([(x * 5) as u8, (y * 5) as u8, (40 * c + i) as u8])
                });
                img.save(d.join(format!("img{i}.png"))).unwrap();
            }
        }
    }

    #[test]
    fn ingests_and_resizes() {
        let tmp = tempfile::tempdir().unwrap();
        write_tree(tmp.path(), &["b_cats", "a_dogs"], 5, 40);
        fs::write(tmp.path().join("a_dogs").join("broken.png"), b"not an image").unwrap();

        let ds = ingest_images(tmp.path(), 28, false).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.n_classes, 2);
        assert_eq!(ds.shape(), Some((28, 28, 3)));
        // lexicographic: a_dogs = 0
        assert_eq!(&ds.labels[..5], &[0; 5]);
        assert!(ds.images.iter().flat_map(|i| &i.pixels).all(|p| (0.0..=1.0).contains(p)));

        let gray = ingest_images(tmp.path(), 17, true).unwrap();
        assert_eq!(gray.shape(), Some((17, 17, 1)));
    }

    #[test]
    fn empty_class_dir_is_error() {
        let tmp = tempfile::tempdir().unwrap();
        write_tree(tmp.path(), &["one"], 2, 8);
        fs::create_dir_all(tmp.path().join("two")).unwrap();
        assert!(ingest_images(tmp.path(), 8, true).is_err());
    }
}
