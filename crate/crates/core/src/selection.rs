//! Greedy forward selection over feature groups, scored by cross-validated AUC.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::FeatureCatalog;
use crate::learner::{cross_validated_auc, LearnError, TrainConfig};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub group: usize,
    pub standalone_cv_auc: f64,
    /// The group carries no variation on the training rows; scored 0.5 without fitting.
    pub uninformative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    /// One pass over the ranked candidates, keeping each group that improves AUC.
    RankedPass,
    /// Repeatedly add the best remaining candidate while it improves AUC.
    BestRemaining,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub strategy: SelectionStrategy,
    /// Required AUC improvement for a group to be added.
    pub epsilon: f64,
    /// Only the top-ranked `max_candidates` groups are considered.
    pub max_candidates: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig { strategy: SelectionStrategy::RankedPass, epsilon: 0.001, max_candidates: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub group: usize,
    pub auc_with_group: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: Vec<usize>,
    pub final_cv_auc: f64,
    pub audit: Vec<AuditEntry>,
}

fn varies(x: &Matrix, cols: &[usize]) -> bool {
    cols.iter().any(|&c| {
        let first = x.row(0)[c];
        x.iter_rows().any(|r| r[c] != first)
    })
}

/// Standalone CV AUC of every group, sorted descending (ties by group id).
pub fn score_groups(
    x: &Matrix,
    y: &[bool],
    catalog: &FeatureCatalog,
    cfg: &TrainConfig,
) -> Result<Vec<GroupScore>, LearnError> {
    if catalog.n_groups() == 0 {
        return Err(LearnError::InvalidConfig("no feature groups to score".into()));
    }
    let mut scores = (0..catalog.n_groups())
        .into_par_iter()
        .map(|g| {
            let cols = catalog.group_columns(g);
            if x.rows() == 0 || cols.is_empty() || !varies(x, &cols) {
                return Ok(GroupScore { group: g, standalone_cv_auc: 0.5, uninformative: true });
            }
            let out = cross_validated_auc(&x.select_cols(&cols), y, cfg)?;
            Ok(GroupScore { group: g, standalone_cv_auc: out.mean_auc, uninformative: false })
        })
        .collect::<Result<Vec<_>, LearnError>>()?;
    scores.sort_by(|a, b| b.standalone_cv_auc.total_cmp(&a.standalone_cv_auc).then(a.group.cmp(&b.group)));
    Ok(scores)
}

fn cv_auc_of(
    x: &Matrix,
    y: &[bool],
    catalog: &FeatureCatalog,
    groups: &[usize],
    cfg: &TrainConfig,
) -> Result<f64, LearnError> {
    let cols = catalog.columns_of(groups);
    Ok(cross_validated_auc(&x.select_cols(&cols), y, cfg)?.mean_auc)
}

pub fn greedy_select(
    x: &Matrix,
    y: &[bool],
    ranked: &[GroupScore],
    catalog: &FeatureCatalog,
    cfg: &TrainConfig,
    sel: &SelectionConfig,
) -> Result<SelectionResult, LearnError> {
    let Some(top) = ranked.first() else {
        return Err(LearnError::InvalidConfig("no ranked groups to select from".into()));
    };
    let candidates = &ranked[..ranked.len().min(sel.max_candidates.max(1))];
    let mut selected = vec![top.group];
    let mut current = top.standalone_cv_auc;
    let mut audit = vec![AuditEntry { group: top.group, auc_with_group: current, accepted: true }];

    match sel.strategy {
        SelectionStrategy::RankedPass => {
            for cand in &candidates[1..] {
                let mut trial = selected.clone();
                trial.push(cand.group);
                let a = cv_auc_of(x, y, catalog, &trial, cfg)?;
                let accepted = a > current + sel.epsilon;
                audit.push(AuditEntry { group: cand.group, auc_with_group: a, accepted });
                if accepted {
                    selected = trial;
                    current = a;
                }
            }
        }
        SelectionStrategy::BestRemaining => {
            let mut remaining: Vec<usize> = candidates[1..].iter().map(|c| c.group).collect();
            while !remaining.is_empty() {
                let trials = remaining
                    .par_iter()
                    .map(|&g| {
                        let mut trial = selected.clone();
                        trial.push(g);
                        cv_auc_of(x, y, catalog, &trial, cfg)
                    })
                    .collect::<Result<Vec<f64>, _>>()?;
                // first maximum in rank order
                let (best_pos, best_auc) = trials
                    .iter()
                    .copied()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, a)| if a > acc.1 { (i, a) } else { acc });
                let accepted = best_auc > current + sel.epsilon;
                for (i, (&g, &a)) in remaining.iter().zip(&trials).enumerate() {
                    audit.push(AuditEntry { group: g, auc_with_group: a, accepted: accepted && i == best_pos });
                }
                if !accepted {
                    break;
                }
                selected.push(remaining.remove(best_pos));
                current = best_auc;
            }
        }
    }
    Ok(SelectionResult { selected, final_cv_auc: current, audit })
}

/// Audit trail as CSV: step, group, group label, auc, accepted.
pub fn write_audit_csv<W: Write>(out: W, result: &SelectionResult, catalog: &FeatureCatalog) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "group", "label", "auc_with_group", "accepted"])?;
    for (i, e) in result.audit.iter().enumerate() {
        w.write_record([
            i.to_string(),
            e.group.to_string(),
            catalog.groups[e.group].label(),
            format!("{:.6}", e.auc_with_group),
            e.accepted.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
