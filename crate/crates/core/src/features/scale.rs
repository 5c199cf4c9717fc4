use serde::{Deserialize, Serialize};

use super::{FeatureCatalog, FeatureDescriptor, InstanceSet};
use crate::matrix::Matrix;

/// Z-scoring with training statistics, zero imputation and one missingness
/// indicator per feature group appended after the raw columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    /// Zero marks a constant (or never observed) column.
    pub stds: Vec<f64>,
    pub group_of: Vec<usize>,
    pub n_groups: usize,
}

impl Scaler {
    pub fn fit(rows: &[&[Option<f64>]], catalog: &FeatureCatalog) -> Self {
        let d = catalog.len();
        let mut n = vec![0usize; d];
        let mut mean = vec![0.0; d];
        let mut m2 = vec![0.0; d];
        for row in rows {
            assert_eq!(row.len(), d, "row width does not match catalog");
            for (j, v) in row.iter().enumerate() {
                if let Some(v) = *v {
                    n[j] += 1;
                    let delta = v - mean[j];
                    mean[j] += delta / n[j] as f64;
                    m2[j] += delta * (v - mean[j]);
                }
            }
        }
        let stds = (0..d)
            .map(|j| {
                if n[j] == 0 {
                    return 0.0;
                }
                let sd = (m2[j] / n[j] as f64).sqrt();
                if sd <= 1e-12 * mean[j].abs().max(1.0) {
                    0.0
                } else {
                    sd
                }
            })
            .collect();
        Scaler {
            means: mean,
            stds,
            group_of: catalog.features.iter().map(|f| f.group).collect(),
            n_groups: catalog.n_groups(),
        }
    }

    pub fn width(&self) -> usize {
        self.means.len() + self.n_groups
    }

    pub fn transform_row(&self, raw: &[Option<f64>]) -> Vec<f64> {
        let d = self.means.len();
        let mut out = vec![0.0; d + self.n_groups];
        for (j, v) in raw.iter().enumerate() {
            match *v {
                Some(v) if self.stds[j] > 0.0 => out[j] = (v - self.means[j]) / self.stds[j],
                Some(_) => {}
                None => out[d + self.group_of[j]] = 1.0,
            }
        }
        out
    }

    pub fn transform(&self, set: &InstanceSet) -> Matrix {
        let w = self.width();
        let mut data = Vec::with_capacity(set.len() * w);
        for inst in &set.instances {
            data.extend(self.transform_row(&inst.features));
        }
        Matrix::from_vec(set.len(), w, data)
    }

    /// The raw catalog extended with the per-group missingness indicators.
    pub fn standardized_catalog(&self, raw: &FeatureCatalog) -> FeatureCatalog {
        let mut c = raw.clone();
        for g in 0..self.n_groups {
            c.features.push(FeatureDescriptor { group: g, name: "any_missing".into(), units: "indicator".into() });
        }
        c
    }
}

/// Fits the scaler on `train` only and applies it to `train` and each of `apply_to`.
pub fn standardize(
    train: &InstanceSet,
    apply_to: &[&InstanceSet],
    catalog: &FeatureCatalog,
) -> (Scaler, Matrix, Vec<Matrix>) {
    let rows: Vec<&[Option<f64>]> = train.instances.iter().map(|i| i.features.as_slice()).collect();
    let scaler = Scaler::fit(&rows, catalog);
    let train_m = scaler.transform(train);
    let others = apply_to.iter().map(|s| scaler.transform(s)).collect();
    (scaler, train_m, others)
}
