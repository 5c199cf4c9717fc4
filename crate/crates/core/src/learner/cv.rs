use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::svm::{train_linear_svm, TrainConfig};
use super::{auc, LearnError};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub mean_auc: f64,
    pub fold_aucs: Vec<f64>,
    pub folds_used: usize,
    /// Decision value of each example from the model that did not see it.
    pub heldout_decisions: Vec<f64>,
}

/// Stratified fold id per example. Each class is shuffled with the seed and
/// dealt round-robin, continuing the deal across classes so fold sizes
/// differ by at most one.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next % k;
            next += 1;
        }
    }
    fold
}

/// Fold count actually usable: every held-out fold needs both classes.
pub fn effective_folds(labels: &[bool], requested: usize) -> Result<usize, LearnError> {
    let pos = labels.iter().filter(|&&y| y).count();
    let minority = pos.min(labels.len() - pos);
    if minority < 2 {
        return Err(LearnError::InsufficientClass { minority, needed: 2 });
    }
    if minority < requested {
        tracing::warn!(minority, requested, "reducing cross-validation folds to minority class size");
    }
    Ok(requested.min(minority))
}

pub fn cross_validated_auc(x: &Matrix, y: &[bool], cfg: &TrainConfig) -> Result<CvOutcome, LearnError> {
    cfg.validate()?;
    if x.rows() != y.len() {
        return Err(LearnError::DimensionMismatch { expected: x.rows(), got: y.len() });
    }
    let k = effective_folds(y, cfg.cv_folds)?;
    let fold = stratified_folds(y, k, cfg.seed);
    let all_cols: Vec<usize> = (0..x.cols()).collect();
    let mut heldout = vec![0.0; y.len()];
    let mut fold_aucs = Vec::with_capacity(k);
    for f in 0..k {
        let train_idx: Vec<usize> = (0..y.len()).filter(|&i| fold[i] != f).collect();
        let test_idx: Vec<usize> = (0..y.len()).filter(|&i| fold[i] == f).collect();
        let xtr = x.select(&train_idx, &all_cols);
        let ytr: Vec<bool> = train_idx.iter().map(|&i| y[i]).collect();
        let model = train_linear_svm(&xtr, &ytr, cfg)?;
        let mut scores = Vec::with_capacity(test_idx.len());
        for &i in &test_idx {
            let s = model.decision_value(x.row(i))?;
            heldout[i] = s;
            scores.push(s);
        }
        let yte: Vec<bool> = test_idx.iter().map(|&i| y[i]).collect();
        fold_aucs.push(auc(&scores, &yte)?);
    }
    let mean_auc = fold_aucs.iter().sum::<f64>() / k as f64;
    Ok(CvOutcome { mean_auc, fold_aucs, folds_used: k, heldout_decisions: heldout })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_stratified_and_balanced() {
        let y: Vec<bool> = (0..53).map(|i| i % 4 == 0).collect();
        let f = stratified_folds(&y, 5, 3);
        for k in 0..5 {
            let members: Vec<usize> = (0..y.len()).filter(|&i| f[i] == k).collect();
            assert!(members.len() == 10 || members.len() == 11);
            let pos = members.iter().filter(|&&i| y[i]).count();
            assert!((2..=3).contains(&pos));
        }
    }

    #[test]
    fn folds_reduced_to_minority() {
        let y = [true, true, true, false, false, false, false, false];
        assert_eq!(effective_folds(&y, 5).unwrap(), 3);
        assert!(effective_folds(&[true, false, false], 5).is_err());
    }

    #[test]
    fn label_copy_feature_scores_one() {
        let y: Vec<bool> = (0..40).map(|i| (i * 7) % 3 == 0).collect();
        let x = Matrix::from_rows(&y.iter().map(|&b| vec![if b { 1.0 } else { -1.0 }, 0.5]).collect::<Vec<_>>());
        let out = cross_validated_auc(&x, &y, &TrainConfig::default()).unwrap();
        assert!(out.fold_aucs.iter().all(|&a| a == 1.0));
        let again = cross_validated_auc(&x, &y, &TrainConfig::default()).unwrap();
        assert_eq!(out, again);
    }
}
