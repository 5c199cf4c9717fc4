use super::LearnError;

/// Area under the ROC curve as the Mann-Whitney statistic: the probability
/// that a random positive outscores a random negative, ties counting 1/2.
///
/// Mid-ranks are accumulated as doubled integers so the result is the exact
/// rational U / (n+ n-) rounded once.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, LearnError> {
    if scores.len() != labels.len() {
        return Err(LearnError::DimensionMismatch { expected: labels.len(), got: scores.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(LearnError::NonFinite);
    }
    let n_pos = labels.iter().filter(|&&y| y).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(LearnError::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));

    // sum over positives of 2 * rank (1-based, mid-rank for ties)
    let mut rank2_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let doubled_mid = (i + 1 + j) as u128;
        let pos_in_tie = order[i..j].iter().filter(|&&k| labels[k]).count() as u128;
        rank2_sum += doubled_mid * pos_in_tie;
        i = j;
    }
    let u2 = rank2_sum - n_pos * (n_pos + 1);
    Ok(u2 as f64 / (2 * n_pos * n_neg) as f64)
}
