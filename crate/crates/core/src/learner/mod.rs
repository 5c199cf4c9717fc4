//! Per-action predictive models: a linear margin classifier, its sigmoid
//! calibration, and ranking quality by cross-validated AUC.

mod auc;
mod cv;
mod platt;
mod svm;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use auc::auc;
pub use cv::{cross_validated_auc, effective_folds, stratified_folds, CvOutcome};
pub use platt::{fit_platt, fit_platt_with, PlattCalibration, PlattOptions};
pub use svm::{
    box_bounds, dual_objective, kkt_residual, solve, train_linear_svm, ClassWeighting, LinearModel, SolverReport,
    SvmSolution, TrainConfig,
};

use crate::features::ActionDescriptor;

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("degenerate labels: both classes are required")]
    DegenerateLabels,
    #[error("non-finite input value")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("minority class has {minority} examples, need at least {needed}")]
    InsufficientClass { minority: usize, needed: usize },
    #[error("sigmoid fit did not converge (gradient norm {gradient_norm:.3e}, last A={}, B={})", last.a, last.b)]
    PlattNotConverged { last: PlattCalibration, gradient_norm: f64 },
    #[error("feature catalog mismatch: model expects {expected}, got {got}")]
    CatalogMismatch { expected: String, got: String },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("model store: {0}")]
    Store(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetadata {
    pub n_train: usize,
    pub n_positive: usize,
    pub c: f64,
    pub config_hash: String,
    pub train_fingerprint: String,
    pub catalog_fingerprint: String,
}

/// P(action | patient state) for one action.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedModel {
    pub action: ActionDescriptor,
    /// Columns of the standardized catalog the linear model reads, ascending.
    pub feature_indices: Vec<usize>,
    pub linear: LinearModel,
    pub platt: PlattCalibration,
    pub selected_groups: Vec<usize>,
    pub cv_auc: f64,
    pub meta: TrainMetadata,
}

/// A standardized feature row tagged with the catalog it was produced under.
#[derive(Debug, Clone, Copy)]
pub struct FeatureRow<'a> {
    pub values: &'a [f64],
    pub catalog: &'a str,
}

impl CalibratedModel {
    pub fn decision_value(&self, x: FeatureRow<'_>) -> Result<f64, LearnError> {
        if x.catalog != self.meta.catalog_fingerprint {
            return Err(LearnError::CatalogMismatch {
                expected: self.meta.catalog_fingerprint.clone(),
                got: x.catalog.to_string(),
            });
        }
        if let Some(&max) = self.feature_indices.last() {
            if max >= x.values.len() {
                return Err(LearnError::DimensionMismatch { expected: max + 1, got: x.values.len() });
            }
        }
        let f: f64 = self.feature_indices.iter().zip(&self.linear.weights).map(|(&j, w)| w * x.values[j]).sum();
        Ok(f + self.linear.bias)
    }

    /// P(y = 1 | x) = 1 / (1 + exp(A f(x) + B)).
    pub fn predict_probability(&self, x: FeatureRow<'_>) -> Result<f64, LearnError> {
        Ok(self.platt.probability(self.decision_value(x)?))
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            action: self.action.clone(),
            weights: self.feature_indices.iter().copied().zip(self.linear.weights.iter().copied()).collect(),
            bias: self.linear.bias,
            platt_a: self.platt.a,
            platt_b: self.platt.b,
            selected_groups: self.selected_groups.clone(),
            cv_auc: self.cv_auc,
            meta: self.meta.clone(),
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self, LearnError> {
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(LearnError::Store(format!("unsupported model format version {}", doc.format_version)));
        }
        if !doc.weights.windows(2).all(|w| w[0].0 < w[1].0) {
            return Err(LearnError::Store("weight indices must be strictly increasing".into()));
        }
        if !(0.0..=1.0).contains(&doc.cv_auc) || doc.selected_groups.is_empty() {
            return Err(LearnError::Store("cv_auc outside [0,1] or no selected groups".into()));
        }
        let (feature_indices, weights) = doc.weights.into_iter().unzip();
        Ok(CalibratedModel {
            action: doc.action,
            feature_indices,
            linear: LinearModel { weights, bias: doc.bias },
            platt: PlattCalibration { a: doc.platt_a, b: doc.platt_b },
            selected_groups: doc.selected_groups,
            cv_auc: doc.cv_auc,
            meta: doc.meta,
        })
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// On-disk JSON form of a [`CalibratedModel`]; weights are `[index, value]` pairs
/// over the standardized catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub action: ActionDescriptor,
    pub weights: Vec<(usize, f64)>,
    pub bias: f64,
    pub platt_a: f64,
    pub platt_b: f64,
    pub selected_groups: Vec<usize>,
    pub cv_auc: f64,
    pub meta: TrainMetadata,
}

pub fn save_model(model: &CalibratedModel, path: &Path) -> Result<(), LearnError> {
    let json = serde_json::to_string_pretty(&model.to_document()).map_err(|e| LearnError::Store(e.to_string()))?;
    std::fs::write(path, json + "\n").map_err(|e| LearnError::Store(format!("{}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<CalibratedModel, LearnError> {
    let text = std::fs::read_to_string(path).map_err(|e| LearnError::Store(format!("{}: {e}", path.display())))?;
    let doc: ModelDocument =
        serde_json::from_str(&text).map_err(|e| LearnError::Store(format!("{}: {e}", path.display())))?;
    CalibratedModel::from_document(doc)
}
