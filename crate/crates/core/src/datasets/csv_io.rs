//! Dataset CSV: header `id,label,h,w,c,p0..pN`, one image per row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Dataset, Image};
use crate::error::{Error, Result};

pub fn write_dataset_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let n = ds.n_features();
    let mut header = String::from("id,label,h,w,c");
    for p in 0..n {
        header.push_str(&format!(",p{p}"));
    }
    writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
    for (id, (img, label)) in ds.images.iter().zip(&ds.labels).enumerate() {
        let mut line = format!("{id},{label},{},{},{}", img.height, img.width, img.channels);
        for p in &img.pixels {
            // `{}` prints the shortest representation that parses back exactly
            line.push_str(&format!(",{p}"));
        }
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a dataset CSV. `n_classes` is one past the largest label; the name
/// is the file stem.
pub fn read_dataset_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let field = |k: usize| -> Result<usize> {
            rec.get(k)
                .ok_or_else(|| parse_err(line, format!("missing column {k}")))?
                .trim()
                .parse::<usize>()
                .map_err(|e| parse_err(line, e.to_string()))
        };
        let (label, h, w, c) = (field(1)?, field(2)?, field(3)?, field(4)?);
        let pixels = rec
            .iter()
            .skip(5)
            .map(|s| s.trim().parse::<f64>().map_err(|e| parse_err(line, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let img = Image::new(pixels, h, w, c).map_err(|e| parse_err(line, e.to_string()))?;
        images.push(img);
        labels.push(label);
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, images, labels, n_classes)
}
