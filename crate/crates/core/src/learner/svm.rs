//! Soft-margin linear SVM trained by dual coordinate descent.
//!
//! The bias is handled by augmenting every example with a constant 1, so it
//! is regularized together with the weights and the dual has box constraints
//! only:
//!
//! ```text
//! min_a  1/2 a'Qa - sum(a)   s.t. 0 <= a_i <= C_i,   Q_ij = y_i y_j (x_i.x_j + 1)
//! ```

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::matrix::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    None,
    InverseFrequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Regularization weight C.
    pub c: f64,
    pub class_weighting: ClassWeighting,
    pub cv_folds: usize,
    /// Stop once (primal - dual) <= tolerance * max(1, primal).
    pub tolerance: f64,
    /// Cap on full passes over the data.
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 1.0,
            class_weighting: ClassWeighting::InverseFrequency,
            cv_folds: 5,
            tolerance: 1e-3,
            max_iterations: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(LearnError::InvalidConfig(format!("C must be positive, got {}", self.c)));
        }
        if self.cv_folds < 2 {
            return Err(LearnError::InvalidConfig("cv_folds must be at least 2".into()));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(LearnError::InvalidConfig("tolerance and max_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    /// f(x) = <w, x> + b
    pub fn decision_value(&self, x: &[f64]) -> Result<f64, LearnError> {
        if x.len() != self.weights.len() {
            return Err(LearnError::DimensionMismatch { expected: self.weights.len(), got: x.len() });
        }
        Ok(dot(&self.weights, x) + self.bias)
    }

    pub fn decision_values(&self, x: &Matrix) -> Result<Vec<f64>, LearnError> {
        x.iter_rows().map(|r| self.decision_value(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub iterations: usize,
    pub primal: f64,
    pub dual: f64,
    pub converged: bool,
}

impl SolverReport {
    pub fn gap(&self) -> f64 {
        self.primal - self.dual
    }
}

#[derive(Debug, Clone)]
pub struct SvmSolution {
    pub model: LinearModel,
    pub alpha: Vec<f64>,
    /// Per-example box bound C_i.
    pub upper: Vec<f64>,
    pub report: SolverReport,
}

fn sign(y: bool) -> f64 {
    if y {
        1.0
    } else {
        -1.0
    }
}

/// Per-example upper bounds for the chosen class weighting.
pub fn box_bounds(y: &[bool], c: f64, weighting: ClassWeighting) -> Vec<f64> {
    let n = y.len() as f64;
    let pos = y.iter().filter(|&&v| v).count() as f64;
    let neg = n - pos;
    y.iter()
        .map(|&yi| match weighting {
            ClassWeighting::None => c,
            ClassWeighting::InverseFrequency => c * n / (2.0 * if yi { pos } else { neg }),
        })
        .collect()
}

fn check_inputs(x: &Matrix, y: &[bool]) -> Result<(), LearnError> {
    if x.rows() != y.len() {
        return Err(LearnError::DimensionMismatch { expected: x.rows(), got: y.len() });
    }
    let pos = y.iter().filter(|&&v| v).count();
    if pos == 0 || pos == y.len() {
        return Err(LearnError::DegenerateLabels);
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(LearnError::NonFinite);
    }
    Ok(())
}

pub fn train_linear_svm(x: &Matrix, y: &[bool], cfg: &TrainConfig) -> Result<LinearModel, LearnError> {
    Ok(solve(x, y, cfg)?.model)
}

pub fn solve(x: &Matrix, y: &[bool], cfg: &TrainConfig) -> Result<SvmSolution, LearnError> {
    cfg.validate()?;
    check_inputs(x, y)?;
    let n = x.rows();
    let d = x.cols();
    let upper = box_bounds(y, cfg.c, cfg.class_weighting);
    let ys: Vec<f64> = y.iter().map(|&v| sign(v)).collect();
    let qd: Vec<f64> = x.iter_rows().map(|r| dot(r, r) + 1.0).collect();

    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut index: Vec<usize> = (0..n).collect();
    let mut active = n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = SolverReport { iterations: 0, primal: f64::INFINITY, dual: 0.0, converged: false };

    // Shrinking: a variable at a bound whose gradient points further out
    // than every free gradient seen in the last pass is skipped until the
    // projected-gradient spread of the active set falls below `pg_eps`.
    let mut pg_eps = 0.1;
    let (mut pg_max_old, mut pg_min_old) = (f64::INFINITY, f64::NEG_INFINITY);
    while report.iterations < cfg.max_iterations {
        index[..active].shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut s = 0;
        while s < active {
            let i = index[s];
            let xi = x.row(i);
            let g = ys[i] * (dot(&w, xi) + b) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                if g > pg_max_old {
                    active -= 1;
                    index.swap(s, active);
                    continue;
                }
                g.min(0.0)
            } else if alpha[i] >= upper[i] {
                if g < pg_min_old {
                    active -= 1;
                    index.swap(s, active);
                    continue;
                }
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-14 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).clamp(0.0, upper[i]);
                let delta = (alpha[i] - old) * ys[i];
                if delta != 0.0 {
                    for (wj, xj) in w.iter_mut().zip(xi) {
                        *wj += delta * xj;
                    }
                    b += delta;
                }
            }
            s += 1;
        }
        report.iterations += 1;

        let spread_small = pg_max - pg_min <= pg_eps;
        let full = active == n;
        if spread_small || report.iterations % 10 == 0 || report.iterations == cfg.max_iterations {
            let (primal, dual) = objectives(x, &ys, &alpha, &upper, &w, b);
            report.primal = primal;
            report.dual = dual;
            if primal - dual <= cfg.tolerance * primal.max(1.0) {
                report.converged = true;
                break;
            }
        }
        if spread_small {
            if full {
                pg_eps *= 0.1;
            }
            active = n;
            pg_max_old = f64::INFINITY;
            pg_min_old = f64::NEG_INFINITY;
            continue;
        }
        pg_max_old = if pg_max <= 0.0 { f64::INFINITY } else { pg_max };
        pg_min_old = if pg_min >= 0.0 { f64::NEG_INFINITY } else { pg_min };
    }
    if !report.converged {
        tracing::debug!(iterations = report.iterations, gap = report.gap(), "svm stopped at iteration cap");
    }
    Ok(SvmSolution { model: LinearModel { weights: w, bias: b }, alpha, upper, report })
}

fn objectives(x: &Matrix, ys: &[f64], alpha: &[f64], upper: &[f64], w: &[f64], b: f64) -> (f64, f64) {
    let norm = 0.5 * (dot(w, w) + b * b);
    let hinge: f64 = x
        .iter_rows()
        .zip(ys)
        .zip(upper)
        .map(|((r, &yi), &ci)| ci * (1.0 - yi * (dot(w, r) + b)).max(0.0))
        .sum();
    let sum_alpha: f64 = alpha.iter().sum();
    (norm + hinge, sum_alpha - norm)
}

/// Dual objective in minimization form, 1/2 a'Qa - sum(a).
pub fn dual_objective(x: &Matrix, y: &[bool], alpha: &[f64]) -> f64 {
    let d = x.cols();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for ((r, &yi), &a) in x.iter_rows().zip(y).zip(alpha) {
        let s = a * sign(yi);
        for (wj, xj) in w.iter_mut().zip(r) {
            *wj += s * xj;
        }
        b += s;
    }
    0.5 * (dot(&w, &w) + b * b) - alpha.iter().sum::<f64>()
}

/// Largest projected-gradient violation of the box-constrained dual optimality conditions.
pub fn kkt_residual(x: &Matrix, y: &[bool], sol: &SvmSolution) -> f64 {
    x.iter_rows()
        .enumerate()
        .map(|(i, r)| {
            let g = sign(y[i]) * (dot(&sol.model.weights, r) + sol.model.bias) - 1.0;
            let a = sol.alpha[i];
            if a <= 0.0 {
                (-g).max(0.0)
            } else if a >= sol.upper[i] {
                g.max(0.0)
            } else {
                g.abs()
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(c: f64) -> TrainConfig {
        TrainConfig { c, class_weighting: ClassWeighting::None, tolerance: 1e-10, max_iterations: 100_000, ..Default::default() }
    }

    #[test]
    fn symmetric_pair_gives_axis_boundary() {
        let x = Matrix::from_rows(&[vec![-1.0, 0.0], vec![1.0, 0.0]]);
        let m = train_linear_svm(&x, &[false, true], &cfg(1e3)).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-6, "{m:?}");
        assert!(m.weights[1].abs() < 1e-12);
        assert!(m.bias.abs() < 1e-6);
    }

    #[test]
    fn single_class_rejected() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0]]);
        assert!(matches!(train_linear_svm(&x, &[true, true], &cfg(1.0)), Err(LearnError::DegenerateLabels)));
    }

    #[test]
    fn non_finite_rejected() {
        let x = Matrix::from_rows(&[vec![1.0], vec![f64::NAN]]);
        assert!(matches!(train_linear_svm(&x, &[true, false], &cfg(1.0)), Err(LearnError::NonFinite)));
    }

    #[test]
    fn decision_value_contract() {
        let m = LinearModel { weights: vec![0.0, 0.0], bias: 0.3 };
        assert_eq!(m.decision_value(&[5.0, -2.0]).unwrap(), 0.3);
        let m = LinearModel { weights: vec![1.0, 0.0], bias: 0.5 };
        assert_eq!(m.decision_value(&[2.0, 9.0]).unwrap(), 2.5);
        assert!(matches!(m.decision_value(&[1.0]), Err(LearnError::DimensionMismatch { .. })));
    }

    #[test]
    fn inverse_frequency_bounds() {
        let b = box_bounds(&[true, false, false, false], 1.0, ClassWeighting::InverseFrequency);
        assert_eq!(b, vec![2.0, 2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]);
    }
}
