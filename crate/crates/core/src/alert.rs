//! Anomaly scores, the two-step alert score and candidate selection.
//!
//! The anomaly of an observed action y for a patient state x is
//! `1 - P(y | x)`. An action taken between two consecutive cut times is
//! alerted on only when it is anomalous with respect to both the state that
//! preceded it and the state that followed it, so the alert score is the
//! minimum of the two anomalies.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::{ActionDescriptor, ActionKind, InstanceSet};
use crate::learner::{CalibratedModel, FeatureRow, LearnError};
use crate::matrix::Matrix;
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertType {
    LabOmission,
    MedOmission,
    MedCommission,
}

impl AlertType {
    /// Lab orders that were placed are not alerted on.
    pub fn classify(kind: ActionKind, observed: bool) -> Option<Self> {
        match (kind, observed) {
            (ActionKind::LabOrder, false) => Some(AlertType::LabOmission),
            (ActionKind::LabOrder, true) => None,
            (ActionKind::MedicationGiven, false) => Some(AlertType::MedOmission),
            (ActionKind::MedicationGiven, true) => Some(AlertType::MedCommission),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AlertType::LabOmission => "lab_omission",
            AlertType::MedOmission => "med_omission",
            AlertType::MedCommission => "med_commission",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "lab_omission" => AlertType::LabOmission,
            "med_omission" => AlertType::MedOmission,
            "med_commission" => AlertType::MedCommission,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlertPipelineConfig {
    /// Minimum cross-validated AUC for a model to be used.
    pub model_auc_gate: f64,
    /// A candidate needs P(observed action | x) <= this at both steps.
    pub probability_gate: f64,
    /// Per action, keep only the strongest this-many by max(anom_prev, anom_curr).
    pub anomaly_cap: usize,
    /// Per action, keep only the strongest this-many by alert score.
    pub alert_cap: usize,
    /// Candidates with a lower alert score are dropped.
    pub alert_threshold: f64,
    /// When set, the alert command exits nonzero if any alert score exceeds it.
    pub severity_threshold: Option<f64>,
}

impl Default for AlertPipelineConfig {
    fn default() -> Self {
        AlertPipelineConfig {
            model_auc_gate: 0.68,
            probability_gate: 0.15,
            anomaly_cap: 125,
            alert_cap: 20,
            alert_threshold: 0.0,
            severity_threshold: None,
        }
    }
}

impl AlertPipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} must lie in [0,1], got {v}"))
            }
        };
        unit("model_auc_gate", self.model_auc_gate)?;
        unit("probability_gate", self.probability_gate)?;
        unit("alert_threshold", self.alert_threshold)?;
        if self.anomaly_cap == 0 || self.alert_cap == 0 {
            return Err("caps must be at least 1".into());
        }
        Ok(())
    }
}

/// Models admitted for scoring; every entry passed the AUC gate.
#[derive(Debug, Clone, Default)]
pub struct ModelRegistry {
    models: Vec<CalibratedModel>,
}

impl ModelRegistry {
    /// Admits the models with `cv_auc >= gate`; returns the registry and the rejected models.
    pub fn admit(models: Vec<CalibratedModel>, gate: f64) -> (Self, Vec<CalibratedModel>) {
        let (models, rejected) = models.into_iter().partition(|m| m.cv_auc >= gate);
        (ModelRegistry { models }, rejected)
    }

    pub fn models(&self) -> &[CalibratedModel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnomalyAssessment {
    pub patient_id: String,
    pub time: Timestamp,
    pub action: ActionDescriptor,
    pub observed: bool,
    pub anomaly: f64,
}

/// Anom(x, y) = 1 - P(y | x).
pub fn anomaly_score(cm: &CalibratedModel, x: FeatureRow<'_>, observed: bool) -> Result<f64, LearnError> {
    let p = cm.predict_probability(x)?;
    Ok(if observed { 1.0 - p } else { p })
}

/// min(Anom(x_prev, y), Anom(x_curr, y)); `None` when there is no previous state.
pub fn alert_score(
    cm: &CalibratedModel,
    x_prev: Option<FeatureRow<'_>>,
    x_curr: FeatureRow<'_>,
    observed_prev: bool,
) -> Result<Option<f64>, LearnError> {
    let Some(prev) = x_prev else { return Ok(None) };
    let a = anomaly_score(cm, prev, observed_prev)?;
    let b = anomaly_score(cm, x_curr, observed_prev)?;
    Ok(Some(a.min(b)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertCandidate {
    pub patient_id: String,
    /// Time the alert is raised: the cut that closes the action window.
    pub time: Timestamp,
    pub action: ActionDescriptor,
    pub observed: bool,
    pub anom_prev: f64,
    pub anom_curr: f64,
    pub alert_score: f64,
    pub alert_type: AlertType,
}

impl AlertCandidate {
    pub fn max_anomaly(&self) -> f64 {
        self.anom_prev.max(self.anom_curr)
    }
}

/// Scores every (instance with a predecessor, registered action) pair and
/// keeps those whose observed action has probability at most the gate at
/// both steps.
pub fn scan_test_set(
    registry: &ModelRegistry,
    instances: &InstanceSet,
    matrix: &Matrix,
    catalog_fingerprint: &str,
    actions: &[ActionDescriptor],
    cfg: &AlertPipelineConfig,
) -> Result<Vec<AlertCandidate>, LearnError> {
    let columns: Vec<(usize, &CalibratedModel)> = registry
        .models()
        .iter()
        .map(|m| {
            actions
                .iter()
                .position(|a| a == &m.action)
                .map(|c| (c, m))
                .ok_or_else(|| LearnError::Store(format!("model action {} not in action catalog", m.action.label())))
        })
        .collect::<Result<_, _>>()?;
    let row = |i: usize| FeatureRow { values: matrix.row(i), catalog: catalog_fingerprint };

    let per_instance = (0..instances.len())
        .into_par_iter()
        .map(|i| {
            let inst = &instances.instances[i];
            let Some(p) = inst.prev else { return Ok(Vec::new()) };
            let prev = &instances.instances[p];
            let mut out = Vec::new();
            for &(col, model) in &columns {
                let observed = prev.actions[col];
                let Some(alert_type) = AlertType::classify(model.action.kind, observed) else { continue };
                let p_obs = |r| -> Result<f64, LearnError> {
                    let p = model.predict_probability(r)?;
                    Ok(if observed { p } else { 1.0 - p })
                };
                let (p_prev, p_curr) = (p_obs(row(p))?, p_obs(row(i))?);
                if p_prev > cfg.probability_gate || p_curr > cfg.probability_gate {
                    continue;
                }
                let anom_prev = anomaly_score(model, row(p), observed)?;
                let anom_curr = anomaly_score(model, row(i), observed)?;
                out.push(AlertCandidate {
                    patient_id: inst.patient_id.clone(),
                    time: inst.time,
                    action: model.action.clone(),
                    observed,
                    anom_prev,
                    anom_curr,
                    alert_score: anom_prev.min(anom_curr),
                    alert_type,
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, LearnError>>()?;
    Ok(per_instance.into_iter().flatten().collect())
}

fn rank_by<F: Fn(&AlertCandidate) -> f64>(cands: &[&AlertCandidate], key: F) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..cands.len()).collect();
    idx.sort_by(|&a, &b| {
        key(cands[b])
            .total_cmp(&key(cands[a]))
            .then(cands[a].time.cmp(&cands[b].time))
            .then(cands[a].patient_id.cmp(&cands[b].patient_id))
    });
    idx
}

/// Per action: the intersection of the top `anomaly_cap` by maximum anomaly
/// and the top `alert_cap` by alert score, then the alert threshold. Output
/// is ordered by action, then descending alert score.
pub fn filter_candidates(cands: &[AlertCandidate], cfg: &AlertPipelineConfig) -> Vec<AlertCandidate> {
    let mut by_action: BTreeMap<&ActionDescriptor, Vec<&AlertCandidate>> = BTreeMap::new();
    for c in cands {
        by_action.entry(&c.action).or_default().push(c);
    }
    let mut out = Vec::new();
    for group in by_action.values() {
        let mut in_anomaly_cap = vec![false; group.len()];
        for &i in rank_by(group, AlertCandidate::max_anomaly).iter().take(cfg.anomaly_cap) {
            in_anomaly_cap[i] = true;
        }
        for &i in rank_by(group, |c| c.alert_score).iter().take(cfg.alert_cap) {
            if in_anomaly_cap[i] && group[i].alert_score >= cfg.alert_threshold {
                out.push(group[i].clone());
            }
        }
    }
    out
}

/// Seeded stratified subsample by alert type, proportional allocation with
/// largest remainders. Stand-in for a manual choice of alerts to review.
pub fn sample_for_review(cands: &[AlertCandidate], n: usize, seed: u64) -> Vec<AlertCandidate> {
    if n >= cands.len() {
        return cands.to_vec();
    }
    let mut strata: BTreeMap<AlertType, Vec<usize>> = BTreeMap::new();
    for (i, c) in cands.iter().enumerate() {
        strata.entry(c.alert_type).or_default().push(i);
    }
    let total = cands.len() as f64;
    let mut alloc: Vec<(AlertType, usize, f64)> = strata
        .iter()
        .map(|(&t, idx)| {
            let exact = n as f64 * idx.len() as f64 / total;
            (t, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let mut left = n - alloc.iter().map(|a| a.1).sum::<usize>();
    let mut order: Vec<usize> = (0..alloc.len()).collect();
    order.sort_by(|&a, &b| alloc[b].2.total_cmp(&alloc[a].2).then(a.cmp(&b)));
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if alloc[k].1 < strata[&alloc[k].0].len() {
            alloc[k].1 += 1;
            left -= 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for (t, k, _) in alloc {
        let mut idx = strata[&t].clone();
        idx.shuffle(&mut rng);
        keep.extend(idx.into_iter().take(k));
    }
    keep.sort_unstable();
    keep.into_iter().map(|i| cands[i].clone()).collect()
}

pub const ALERT_COLUMNS: [&str; 11] = [
    "alert_id", "patient_id", "time", "action_kind", "code", "alert_type", "observed", "anom_prev", "anom_curr",
    "alert_score", "action",
];

pub fn alert_id(index: usize) -> String {
    format!("A{index:05}")
}

pub fn write_alerts_csv<W: Write>(out: W, alerts: &[AlertCandidate]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ALERT_COLUMNS)?;
    for (i, a) in alerts.iter().enumerate() {
        w.write_record([
            alert_id(i),
            a.patient_id.clone(),
            a.time.to_string(),
            a.action.kind.as_str().to_string(),
            a.action.code.clone(),
            a.alert_type.as_str().to_string(),
            a.observed.to_string(),
            a.anom_prev.to_string(),
            a.anom_curr.to_string(),
            a.alert_score.to_string(),
            a.action.label(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_alerts_jsonl<W: Write>(mut out: W, alerts: &[AlertCandidate]) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        alert_id: String,
        #[serde(flatten)]
        alert: &'a AlertCandidate,
    }
    for (i, a) in alerts.iter().enumerate() {
        serde_json::to_writer(&mut out, &Line { alert_id: alert_id(i), alert: a })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum AlertFileError {
    #[error("alerts file line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Reads an alerts CSV written by [`write_alerts_csv`], returning (alert id, alert) pairs.
pub fn read_alerts_csv<R: Read>(input: R) -> Result<Vec<(String, AlertCandidate)>, AlertFileError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |m: &str| AlertFileError::Malformed { line, message: m.to_string() };
        let get = |i: usize| rec.get(i).ok_or_else(|| bad("missing column"));
        let num = |i: usize| -> Result<f64, AlertFileError> { get(i)?.parse().map_err(|_| bad("bad number")) };
        let kind = match get(3)? {
            "lab_order" => ActionKind::LabOrder,
            "medication_given" => ActionKind::MedicationGiven,
            _ => return Err(bad("unknown action kind")),
        };
        let alert = AlertCandidate {
            patient_id: get(1)?.to_string(),
            time: Timestamp::parse(get(2)?).map_err(|e| bad(&e.to_string()))?,
            action: ActionDescriptor::new(kind, get(4)?),
            alert_type: AlertType::parse(get(5)?).ok_or_else(|| bad("unknown alert type"))?,
            observed: get(6)?.parse().map_err(|_| bad("bad observed flag"))?,
            anom_prev: num(7)?,
            anom_curr: num(8)?,
            alert_score: num(9)?,
        };
        out.push((get(0)?.to_string(), alert));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(pid: &str, minute: i64, prev: f64, curr: f64) -> AlertCandidate {
        AlertCandidate {
            patient_id: pid.into(),
            time: Timestamp::from_minutes(minute),
            action: ActionDescriptor::new(ActionKind::MedicationGiven, "M"),
            observed: true,
            anom_prev: prev,
            anom_curr: curr,
            alert_score: prev.min(curr),
            alert_type: AlertType::MedCommission,
        }
    }

    #[test]
    fn alert_types() {
        assert_eq!(AlertType::classify(ActionKind::LabOrder, false), Some(AlertType::LabOmission));
        assert_eq!(AlertType::classify(ActionKind::LabOrder, true), None);
        assert_eq!(AlertType::classify(ActionKind::MedicationGiven, false), Some(AlertType::MedOmission));
        assert_eq!(AlertType::classify(ActionKind::MedicationGiven, true), Some(AlertType::MedCommission));
    }

    #[test]
    fn caps_larger_than_input_are_identity() {
        let c = vec![cand("a", 0, 0.9, 0.8), cand("b", 0, 0.95, 0.7)];
        let out = filter_candidates(&c, &AlertPipelineConfig::default());
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].patient_id, "a");
    }

    #[test]
    fn tie_at_cap_boundary_prefers_earlier_time() {
        let c = vec![cand("a", 100, 0.9, 0.9), cand("b", 50, 0.9, 0.9)];
        let cfg = AlertPipelineConfig { alert_cap: 1, ..Default::default() };
        let out = filter_candidates(&c, &cfg);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].patient_id, "b");
    }

    #[test]
    fn threshold_drops_weak_alerts() {
        let c = vec![cand("a", 0, 0.9, 0.8), cand("b", 0, 0.95, 0.3)];
        let cfg = AlertPipelineConfig { alert_threshold: 0.5, ..Default::default() };
        assert_eq!(filter_candidates(&c, &cfg).len(), 1);
    }

    #[test]
    fn stratified_sample_is_proportional_and_seeded() {
        let mut c: Vec<AlertCandidate> = (0..30).map(|i| cand("p", i, 0.9, 0.9)).collect();
        for x in c.iter_mut().take(10) {
            x.alert_type = AlertType::MedOmission;
        }
        let s = sample_for_review(&c, 9, 4);
        assert_eq!(s.len(), 9);
        assert_eq!(s.iter().filter(|a| a.alert_type == AlertType::MedOmission).count(), 3);
        assert_eq!(s, sample_for_review(&c, 9, 4));
    }

    #[test]
    fn csv_round_trip() {
        let c = vec![cand("a", 60, 0.9, 0.8125)];
        let mut buf = Vec::new();
        write_alerts_csv(&mut buf, &c).unwrap();
        let back = read_alerts_csv(buf.as_slice()).unwrap();
        assert_eq!(back, vec![(alert_id(0), c[0].clone())]);
    }
}
