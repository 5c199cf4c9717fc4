//! Analysis of reviewed alerts: majority-vote gold standard, inter-rater
//! agreement, ROC of the alert score with a significance test, true-alert
//! rates per score bin with a regression line, and the score histogram.

pub mod svg;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::learner::{auc, LearnError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("alert {alert} has {count} labels; an odd count is required")]
    EvenLabelCount { alert: String, count: usize },
    #[error("duplicate label for alert {alert} by reviewer {reviewer}")]
    DuplicateLabel { alert: String, reviewer: String },
    #[error("label lists differ in length ({0} vs {1}) or are empty")]
    LengthMismatch(usize, usize),
    #[error("both useful and not-useful alerts are required")]
    SingleOutcome,
    #[error("need at least two nonempty bins for a line fit, found {0}")]
    TooFewBins(usize),
    #[error("labels reference unknown alert ids: {0:?}")]
    OrphanLabels(Vec<String>),
    #[error("labels file line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewLabel {
    pub alert_id: String,
    pub reviewer_id: String,
    pub useful: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldStandardLabel {
    pub alert_id: String,
    pub useful: bool,
    pub useful_votes: usize,
    pub total_votes: usize,
}

/// An alert is useful iff a strict majority of its reviewers said so.
/// Alerts are returned in id order.
pub fn majority_gold_standard(labels: &[ReviewLabel]) -> Result<Vec<GoldStandardLabel>, EvalError> {
    let mut votes: BTreeMap<&str, BTreeMap<&str, bool>> = BTreeMap::new();
    for l in labels {
        if votes.entry(&l.alert_id).or_default().insert(&l.reviewer_id, l.useful).is_some() {
            return Err(EvalError::DuplicateLabel { alert: l.alert_id.clone(), reviewer: l.reviewer_id.clone() });
        }
    }
    votes
        .into_iter()
        .map(|(alert, by_reviewer)| {
            let total = by_reviewer.len();
            if total % 2 == 0 {
                return Err(EvalError::EvenLabelCount { alert: alert.to_string(), count: total });
            }
            let useful_votes = by_reviewer.values().filter(|&&u| u).count();
            Ok(GoldStandardLabel {
                alert_id: alert.to_string(),
                useful: 2 * useful_votes > total,
                useful_votes,
                total_votes: total,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub value: f64,
    /// Chance agreement was 1 (both raters constant on the same label).
    pub degenerate: bool,
}

/// Cohen's kappa for two binary raters, (p_o - p_e) / (1 - p_e).
pub fn cohen_kappa(a: &[bool], b: &[bool]) -> Result<Kappa, EvalError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let pa = a.iter().filter(|&&x| x).count() as f64 / n;
    let pb = b.iter().filter(|&&x| x).count() as f64 / n;
    let po = agree / n;
    let pe = pa * pb + (1.0 - pa) * (1.0 - pb);
    if pe >= 1.0 {
        return Ok(Kappa { value: if po == 1.0 { 1.0 } else { 0.0 }, degenerate: true });
    }
    Ok(Kappa { value: (po - pe) / (1.0 - pe), degenerate: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseKappa {
    pub reviewer_a: String,
    pub reviewer_b: String,
    pub shared_alerts: usize,
    pub kappa: Kappa,
}

/// Kappa for every reviewer pair over the alerts both labelled.
pub fn pairwise_kappa(labels: &[ReviewLabel]) -> Result<Vec<PairwiseKappa>, EvalError> {
    let mut by_reviewer: BTreeMap<&str, BTreeMap<&str, bool>> = BTreeMap::new();
    for l in labels {
        by_reviewer.entry(&l.reviewer_id).or_default().insert(&l.alert_id, l.useful);
    }
    let reviewers: Vec<&str> = by_reviewer.keys().copied().collect();
    let mut out = Vec::new();
    for (i, ra) in reviewers.iter().enumerate() {
        for rb in &reviewers[i + 1..] {
            let (la, lb) = (&by_reviewer[ra], &by_reviewer[rb]);
            let shared: Vec<&str> = la.keys().filter(|k| lb.contains_key(*k)).copied().collect();
            if shared.is_empty() {
                continue;
            }
            let a: Vec<bool> = shared.iter().map(|k| la[k]).collect();
            let b: Vec<bool> = shared.iter().map(|k| lb[k]).collect();
            out.push(PairwiseKappa {
                reviewer_a: ra.to_string(),
                reviewer_b: rb.to_string(),
                shared_alerts: shared.len(),
                kappa: cohen_kappa(&a, &b)?,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub auc: f64,
    pub standard_error: f64,
    pub z: f64,
    pub p_value: f64,
    pub n_useful: usize,
    pub n_not_useful: usize,
}

/// Standard error of an AUC estimate (Hanley & McNeil, 1982).
pub fn hanley_mcneil_se(auc: f64, n_pos: usize, n_neg: usize) -> f64 {
    let q1 = auc / (2.0 - auc);
    let q2 = 2.0 * auc * auc / (1.0 + auc);
    let (np, nn) = (n_pos as f64, n_neg as f64);
    let var = (auc * (1.0 - auc) + (np - 1.0) * (q1 - auc * auc) + (nn - 1.0) * (q2 - auc * auc)) / (np * nn);
    var.max(0.0).sqrt()
}

fn two_sided_normal_p(z: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - n.cdf(z.abs()))).clamp(0.0, 1.0)
}

/// Significance of an AUC against 0.5 with the Hanley-McNeil standard error.
pub fn auc_significance(auc: f64, n_pos: usize, n_neg: usize) -> RocSummary {
    let se = hanley_mcneil_se(auc, n_pos, n_neg);
    let (z, p) = if se > 0.0 {
        let z = (auc - 0.5) / se;
        (z, two_sided_normal_p(z))
    } else if auc == 0.5 {
        (0.0, 1.0)
    } else {
        (f64::INFINITY.copysign(auc - 0.5), 0.0)
    };
    RocSummary { auc, standard_error: se, z, p_value: p, n_useful: n_pos, n_not_useful: n_neg }
}

/// Alert-score ROC against usefulness labels.
pub fn alert_roc(alerts: &[(f64, bool)]) -> Result<RocSummary, EvalError> {
    let scores: Vec<f64> = alerts.iter().map(|a| a.0).collect();
    let labels: Vec<bool> = alerts.iter().map(|a| a.1).collect();
    let n_pos = labels.iter().filter(|&&y| y).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(EvalError::SingleOutcome);
    }
    let a = auc(&scores, &labels)?;
    Ok(auc_significance(a, n_pos, labels.len() - n_pos))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub lower: f64,
    pub width: f64,
    pub n_alerts: usize,
    pub n_useful: usize,
    /// `None` for an empty bin.
    pub true_alert_rate: Option<f64>,
}

impl BinSummary {
    pub fn midpoint(&self) -> f64 {
        self.lower + self.width / 2.0
    }
}

fn n_bins(width: f64) -> usize {
    assert!(width > 0.0 && width <= 1.0, "bin width must lie in (0, 1]");
    ((1.0 / width) - 1e-9).ceil() as usize
}

fn bin_index(score: f64, width: f64, bins: usize) -> usize {
    (((score / width) + 1e-9).floor().max(0.0) as usize).min(bins - 1)
}

/// Half-open bins `[k w, (k+1) w)` over [0, 1], the last one closed.
pub fn binned_true_alert_rate(alerts: &[(f64, bool)], width: f64) -> Vec<BinSummary> {
    let bins = n_bins(width);
    let mut n = vec![0usize; bins];
    let mut u = vec![0usize; bins];
    for &(s, useful) in alerts {
        let k = bin_index(s, width, bins);
        n[k] += 1;
        u[k] += usize::from(useful);
    }
    (0..bins)
        .map(|k| BinSummary {
            lower: k as f64 * width,
            width,
            n_alerts: n[k],
            n_useful: u[k],
            true_alert_rate: (n[k] > 0).then(|| u[k] as f64 / n[k] as f64),
        })
        .collect()
}

pub fn score_histogram(scores: &[f64], width: f64) -> Vec<usize> {
    let bins = n_bins(width);
    let mut counts = vec![0; bins];
    for &s in scores {
        counts[bin_index(s, width, bins)] += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Least squares over bin midpoints and rates, each bin weighted by its alert count.
    BinWeighted,
    /// Least squares over individual alerts, (score, 0/1 usefulness).
    RawAlerts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// Two-sided t-test of slope = 0.
    pub p_value: f64,
    pub dof: f64,
}

/// Weighted least squares of y on x. The residual variance is taken from
/// `extra_ss` plus the weighted residuals, over `n_obs - 2` degrees of freedom.
fn wls(points: &[(f64, f64, f64)], extra_ss: f64, n_obs: f64) -> LinearFit {
    let sw: f64 = points.iter().map(|p| p.2).sum();
    let mx = points.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = points.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rss: f64 = points.iter().map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() + extra_ss;
    let dof = n_obs - 2.0;
    let (slope_se, p_value) = if dof > 0.0 && sxx > 0.0 {
        let se = (rss / dof / sxx).sqrt();
        if se > 0.0 {
            let t = StudentsT::new(0.0, 1.0, dof).expect("positive dof");
            (se, (2.0 * (1.0 - t.cdf((slope / se).abs()))).clamp(0.0, 1.0))
        } else {
            (0.0, if slope == 0.0 { 1.0 } else { 0.0 })
        }
    } else {
        (f64::NAN, f64::NAN)
    };
    LinearFit { slope, intercept, slope_se, p_value, dof }
}

/// Regression line through the binned true-alert rates.
///
/// The bin-weighted slope and intercept equal ordinary least squares over the
/// individual alerts with each score replaced by its bin midpoint, and the
/// significance test is computed at that alert level (n - 2 degrees of freedom).
pub fn linear_fit(bins: &[BinSummary]) -> Result<LinearFit, EvalError> {
    let nonempty: Vec<&BinSummary> = bins.iter().filter(|b| b.n_alerts > 0).collect();
    if nonempty.len() < 2 {
        return Err(EvalError::TooFewBins(nonempty.len()));
    }
    let points: Vec<(f64, f64, f64)> = nonempty
        .iter()
        .map(|b| (b.midpoint(), b.n_useful as f64 / b.n_alerts as f64, b.n_alerts as f64))
        .collect();
    // within-bin Bernoulli scatter around each bin's rate
    let within: f64 = points.iter().map(|p| p.2 * p.1 * (1.0 - p.1)).sum();
    let n: f64 = points.iter().map(|p| p.2).sum();
    Ok(wls(&points, within, n))
}

pub fn linear_fit_raw(alerts: &[(f64, bool)]) -> Result<LinearFit, EvalError> {
    let distinct: BTreeSet<u64> = alerts.iter().map(|a| a.0.to_bits()).collect();
    if distinct.len() < 2 {
        return Err(EvalError::TooFewBins(distinct.len()));
    }
    let points: Vec<(f64, f64, f64)> = alerts.iter().map(|&(s, u)| (s, if u { 1.0 } else { 0.0 }, 1.0)).collect();
    Ok(wls(&points, 0.0, alerts.len() as f64))
}

pub fn fit(mode: FitMode, alerts: &[(f64, bool)], width: f64) -> Result<LinearFit, EvalError> {
    match mode {
        FitMode::BinWeighted => linear_fit(&binned_true_alert_rate(alerts, width)),
        FitMode::RawAlerts => linear_fit_raw(alerts),
    }
}

/// Reads `alert_id,reviewer_id,useful` rows; `useful` accepts true/false or 1/0.
pub fn read_labels_csv<R: Read>(input: R) -> Result<Vec<ReviewLabel>, EvalError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |m: &str| EvalError::Malformed { line, message: m.to_string() };
        let useful = match rec.get(2).map(str::trim) {
            Some("true" | "1" | "TRUE" | "True") => true,
            Some("false" | "0" | "FALSE" | "False") => false,
            _ => return Err(bad("useful must be true/false or 1/0")),
        };
        out.push(ReviewLabel {
            alert_id: rec.get(0).ok_or_else(|| bad("missing alert_id"))?.to_string(),
            reviewer_id: rec.get(1).ok_or_else(|| bad("missing reviewer_id"))?.to_string(),
            useful,
        });
    }
    Ok(out)
}
