//! Records CSV: one row per (configuration, repetition).

use std::fs::{File, OpenOptions};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{ExperimentConfig, MeasurementRecord, RunStatus};
use crate::error::{Error, Result};

pub const RECORD_HEADER: [&str; 16] = [
    "algorithm",
    "phase",
    "dataset",
    "n_images",
    "resolution",
    "channels",
    "n_classes",
    "color",
    "device",
    "workers",
    "rep",
    "seed",
    "duration_s",
    "energy_j",
    "accuracy",
    "status",
];

fn fields(r: &MeasurementRecord) -> [String; 16] {
    let c = &r.config;
    // `{}` on f64 prints the shortest string that parses back to the same bits
    [
        c.algorithm.to_string(),
        c.phase.to_string(),
        c.dataset.clone(),
        c.n_images.to_string(),
        c.resolution.to_string(),
        c.channels.to_string(),
        c.n_classes.to_string(),
        c.color.to_string(),
        c.device.clone(),
        c.workers.to_string(),
        r.rep.to_string(),
        c.seed.to_string(),
        r.duration_s.to_string(),
        r.energy_j.to_string(),
        r.accuracy.map(|a| a.to_string()).unwrap_or_default(),
        r.status.as_str().to_string(),
    ]
}

/// Appends records to a CSV file, flushing after every row so that an
/// interrupted run leaves a valid prefix.
pub struct RecordWriter {
    inner: csv::Writer<BufWriter<File>>,
    path: PathBuf,
}

impl RecordWriter {
    /// Truncates `path` and writes the header.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Self {
            inner: csv::Writer::from_writer(BufWriter::new(file)),
            path: path.to_path_buf(),
        };
        w.inner.write_record(RECORD_HEADER)?;
        w.flush()?;
        Ok(w)
    }

    /// Opens `path` for appending, creating it (with header) if missing or
    /// empty.
    pub fn append(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let empty = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        if empty {
            return Self::create(path);
        }
        // an interrupted writer may have left a partial last line; drop it
        let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if text.last() != Some(&b'\n') {
            let keep = text.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            let file = OpenOptions::new().write(true).open(path).map_err(|e| Error::io(path, e))?;
            file.set_len(keep as u64).map_err(|e| Error::io(path, e))?;
            if keep == 0 {
                return Self::create(path);
            }
        }
        let file = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            inner: csv::Writer::from_writer(BufWriter::new(file)),
            path: path.to_path_buf(),
        })
    }

    pub fn write(&mut self, record: &MeasurementRecord) -> Result<()> {
        self.inner.write_record(fields(record))?;
        self.flush()
    }

    fn flush(&mut self) -> Result<()> {
        let path = &self.path;
        self.inner.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn export_records(records: &[MeasurementRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = RecordWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    Ok(())
}

fn parse<T: FromStr>(path: &Path, line: u64, name: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        reason: format!("bad {name} `{value}`"),
    })
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<MeasurementRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader.headers()?.clone();
    if header.iter().ne(RECORD_HEADER.iter().copied()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: format!("expected header `{}`", RECORD_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: e.to_string(),
            }
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let f = |i: usize| row.get(i).unwrap_or("");
        let status = match f(15) {
            "ok" => RunStatus::Ok,
            "failed" => RunStatus::Failed,
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line as usize,
                    reason: format!("bad status `{other}`"),
                })
            }
        };
        let accuracy = match f(14) {
            "" => None,
            a => Some(parse::<f64>(path, line, "accuracy", a)?),
        };
        out.push(MeasurementRecord {
            config: ExperimentConfig {
                algorithm: parse(path, line, "algorithm", f(0))?,
                phase: parse(path, line, "phase", f(1))?,
                dataset: f(2).to_string(),
                n_images: parse(path, line, "n_images", f(3))?,
                resolution: parse(path, line, "resolution", f(4))?,
                channels: parse(path, line, "channels", f(5))?,
                n_classes: parse(path, line, "n_classes", f(6))?,
                color: parse(path, line, "color", f(7))?,
                device: f(8).to_string(),
                workers: parse(path, line, "workers", f(9))?,
                seed: parse(path, line, "seed", f(11))?,
            },
            rep: parse(path, line, "rep", f(10))?,
            duration_s: parse(path, line, "duration_s", f(12))?,
            energy_j: parse(path, line, "energy_j", f(13))?,
            accuracy,
            status,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{Algorithm, Phase};

    const FIXTURE: &str = "\
algorithm,phase,dataset,n_images,resolution,channels,n_classes,color,device,workers,rep,seed,duration_s,energy_j,accuracy,status
knn,test,digits,300,17,1,10,false,rpi3,4,0,7,1.25,8.125,0.9,ok
svm,train,cifar,1500,28,3,10,true,bbb,1,2,9,0,0,,failed
";

    #[test]
    fn fixture_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, FIXTURE).unwrap();
        let r = load_records(&p).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].config.algorithm, Algorithm::Knn);
        assert_eq!(r[0].config.phase, Phase::Test);
        assert_eq!(r[0].config.workers, 4);
        assert_eq!(r[0].config.seed, 7);
        assert_eq!(r[0].energy_j, 8.125);
        assert_eq!(r[0].accuracy, Some(0.9));
        assert_eq!(r[1].config.channels, 3);
        assert!(r[1].config.color);
        assert_eq!(r[1].rep, 2);
        assert_eq!(r[1].status, RunStatus::Failed);
        assert_eq!(r[1].accuracy, None);
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, FIXTURE).unwrap();
        let mut r = load_records(&p).unwrap();
        r[0].energy_j = 0.1 + 0.2;
        r[0].duration_s = 1.0 / 3.0;
        let q = dir.path().join("q.csv");
        export_records(&r, &q).unwrap();
        assert_eq!(load_records(&q).unwrap(), r);
    }

    #[test]
    fn header_only_and_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, format!("{}\n", RECORD_HEADER.join(","))).unwrap();
        assert!(load_records(&p).unwrap().is_empty());

        let bad = FIXTURE.replace("1500", "many");
        std::fs::write(&p, bad).unwrap();
        match load_records(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(load_records(&p).is_err());
    }

    #[test]
    fn append_drops_partial_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, &FIXTURE[..FIXTURE.len() - 10]).unwrap();
        let mut w = RecordWriter::append(&p).unwrap();
        let first = load_records(&p).unwrap()[0].clone();
        w.write(&first).unwrap();
        let back = load_records(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1], first);
    }
}
