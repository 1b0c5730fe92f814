//! Energy predictors over the 14-column configuration encoding: multiple
//! linear regression, Gaussian-process regression and random forests.

mod cv;
mod encoding;
mod forest;
mod gp;
mod linear;
mod matrix;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use cv::{fold_assignment, kfold_cv, random_search, CvReport, FoldScore, ParamGrid, SearchResult, SearchTrial};
pub use encoding::{encode, EncodeRow, Encoded, EncodingSchema, FeatureVector, FEATURE_NAMES, N_FEATURES};
pub use forest::{feature_importance, rf_fit, rf_predict, FeatureImportance, Forest, ForestParams, Node, Tree};
pub use gp::{gp_fit, gp_predict, GpModel, GpParams};
pub use linear::{ols_fit, ols_fit_with, LinearModel};
pub use matrix::Matrix;

use crate::error::{Error, Result};
use crate::harness::{MeasurementRecord, RunStatus};
use crate::scalar::Scalar;

/// Which model to fit, with its hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec<T> {
    Ols,
    /// `None` derives parameters from the training targets.
    Gp { params: Option<GpParams<T>> },
    Forest { params: ForestParams },
}

impl<T> ModelSpec<T> {
    pub fn forest(params: ForestParams) -> Self {
        Self::Forest { params }
    }

    pub fn gp() -> Self {
        Self::Gp { params: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FittedModel<T> {
    Ols(LinearModel<T>),
    Gp(GpModel<T>),
    Forest(Forest<T>),
}

impl<T: Scalar> FittedModel<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Ols(_) => "ols",
            Self::Gp(_) => "gp",
            Self::Forest(_) => "rf",
        }
    }

    /// Point prediction (the posterior mean for a GP).
    pub fn predict_row(&self, x: &[T]) -> Result<T> {
        match self {
            Self::Ols(m) => m.predict(x),
            Self::Gp(m) => m.predict(x).map(|(mean, _)| mean),
            Self::Forest(m) => m.predict(x),
        }
    }

    /// Posterior variance; only GPs carry one.
    pub fn variance(&self, x: &[T]) -> Result<Option<T>> {
        match self {
            Self::Gp(m) => m.predict(x).map(|(_, v)| Some(v)),
            _ => Ok(None),
        }
    }

    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }
}

pub fn fit_model<T: Scalar>(x: &Matrix<T>, y: &[T], spec: &ModelSpec<T>) -> Result<FittedModel<T>> {
    Ok(match spec {
        ModelSpec::Ols => FittedModel::Ols(ols_fit(x, y)?),
        ModelSpec::Gp { params } => {
            let params = params.clone().unwrap_or_else(|| GpParams::from_targets(y));
            FittedModel::Gp(gp_fit(x, y, params)?)
        }
        ModelSpec::Forest { params } => FittedModel::Forest(rf_fit(x, y, params)?),
    })
}

/// Encodes the successful records into a design matrix and energy targets.
/// Returns the number of rows that contained an unseen level.
pub fn design_matrix<T: Scalar>(
    schema: &EncodingSchema,
    records: &[MeasurementRecord],
) -> Result<(Matrix<T>, Vec<T>, usize)> {
    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut unseen = 0;
    for r in records.iter().filter(|r| r.status == RunStatus::Ok) {
        let e = encode(schema, &EncodeRow::from(&r.config));
        unseen += usize::from(!e.unseen.is_empty());
        data.extend(e.features.to_scalars::<T>());
        y.push(T::of(r.energy_j));
    }
    if y.is_empty() {
        return Err(Error::InvalidInput("no successful records to encode".into()));
    }
    let rows = y.len();
    Ok((Matrix::new(data, rows, N_FEATURES)?, y, unseen))
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A fitted predictor together with the encoding it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorFile {
    pub format_version: u32,
    pub schema: EncodingSchema,
    pub feature_names: Vec<String>,
    pub model: FittedModel<f64>,
}

impl PredictorFile {
    pub fn new(schema: EncodingSchema, model: FittedModel<f64>) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            schema,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            model,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Loads a model file, rejecting other format versions and feature
    /// layouts.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let f: Self = serde_json::from_str(&text)?;
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "model file version {} (expected {MODEL_FORMAT_VERSION})",
                f.format_version
            )));
        }
        if f.feature_names != FEATURE_NAMES {
            return Err(Error::Schema(format!(
                "model features {:?} do not match {:?}",
                f.feature_names, FEATURE_NAMES
            )));
        }
        Ok(f)
    }

    /// Fails unless `schema` is the one the model was trained with.
    pub fn check_schema(&self, schema: &EncodingSchema) -> Result<()> {
        if &self.schema != schema {
            return Err(Error::Schema(format!(
                "model trained on {:?}, given {:?}",
                self.schema, schema
            )));
        }
        Ok(())
    }

    pub fn predict_row(&self, row: &EncodeRow<'_>) -> Result<(f64, Encoded)> {
        let e = encode(&self.schema, row);
        let y = self.model.predict_row(&e.features.to_scalars())?;
        Ok((y, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{Algorithm, Phase};

    fn row(alg: Algorithm) -> EncodeRow<'static> {
        EncodeRow {
            resolution: 22,
            n_images: 600,
            n_classes: 10,
            phase: Phase::Test,
            color: false,
            channels: 1,
            algorithm: alg,
            device: "rpi3",
        }
    }

    #[test]
    fn model_file_round_trip_and_schema_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let rows: Vec<Vec<f64>> = [Algorithm::Knn, Algorithm::Svm, Algorithm::LogReg, Algorithm::Knn]
            .iter()
            .map(|&a| encode(&EncodingSchema::default(), &row(a)).features.to_scalars())
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let m = fit_model(&x, &[1.0, 2.0, 3.0, 1.0], &ModelSpec::forest(ForestParams::memorizing())).unwrap();
        let file = PredictorFile::new(EncodingSchema::default(), m);
        file.save(&path).unwrap();
        let back = PredictorFile::load(&path).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.predict_row(&row(Algorithm::Svm)).unwrap().0, 2.0);

        let mut other = EncodingSchema::default();
        other.sizes[4] = 1800;
        assert!(back.check_schema(&other).is_err());

        let mut text: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        text["feature_names"][0] = "res".into();
        std::fs::write(&path, text.to_string()).unwrap();
        assert!(matches!(PredictorFile::load(&path), Err(Error::Schema(_))));
    }
}
