//! Stage wiring shared by the command-line driver and the tests:
//! configuration, per-action training, on-disk artifacts, alerting and the
//! evaluation report.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alert::{
    filter_candidates, sample_for_review, scan_test_set, write_alerts_csv, AlertCandidate, AlertPipelineConfig,
    ModelRegistry,
};
use crate::evaluation::{
    alert_roc, binned_true_alert_rate, fit, majority_gold_standard, pairwise_kappa, score_histogram, svg, BinSummary,
    EvalError, FitMode, GoldStandardLabel, LinearFit, PairwiseKappa, ReviewLabel, RocSummary,
};
use crate::features::{standardize, ActionDescriptor, FeatureCatalog, Featurizer, Scaler, SegmentConfig};
use crate::learner::{
    cross_validated_auc, fit_platt, load_model, save_model, train_linear_svm, CalibratedModel, CvOutcome, LearnError,
    TrainConfig, TrainMetadata,
};
use crate::matrix::Matrix;
use crate::record::{filter_rare_channels, split_by_date, CohortDataset};
use crate::selection::{greedy_select, score_groups, write_audit_csv, SelectionConfig, SelectionResult};
use crate::synth::GroundTruth;
use crate::time::{Minutes, Timestamp};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("nothing trainable: {0}")]
    NothingTrainable(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("alert {alert} has no ground-truth slot")]
    MissingTruth { alert: String },
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io { path: path.to_path_buf(), message: e.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Patients admitted before the cutoff train the models; the rest are scanned for alerts.
    pub cutoff: Option<Timestamp>,
    /// Channels used by fewer training patients are dropped.
    pub min_channel_patients: usize,
    /// Regularization values tried after selection.
    pub c_grid: Vec<f64>,
    /// Solver settings; `svm.c` is the value used during group selection.
    pub svm: TrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            cutoff: None,
            min_channel_patients: 20,
            c_grid: vec![0.01, 0.1, 1.0, 10.0],
            svm: TrainConfig { c: 0.1, tolerance: 1e-2, max_iterations: 200, ..TrainConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub bin_width: f64,
    pub fit_mode: FitMode,
    /// When set, alerts are subsampled (stratified by type) to this many before review.
    pub review_sample: Option<usize>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { bin_width: 0.2, fit_mode: FitMode::BinWeighted, review_sample: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub segment: SegmentConfig,
    pub train: TrainSection,
    pub selection: SelectionConfig,
    pub alert: AlertPipelineConfig,
    pub evaluation: EvaluationConfig,
}

/// Settings used for the synthetic demo run. The probability gate and caps
/// are widened so that alerts span the whole score range; everything else
/// keeps its default.
pub const DEMO_CONFIG: &str = r#"
[train]
cutoff = "2005-01-01T00:00"

[alert]
probability_gate = 0.85
anomaly_cap = 1000
alert_cap = 400
"#;

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn demo() -> Self {
        Self::from_toml(DEMO_CONFIG).expect("bundled demo config parses")
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.segment.period_minutes <= 0 {
            return bad("segment.period_minutes must be positive".into());
        }
        self.train.svm.validate()?;
        if self.train.c_grid.is_empty() || self.train.c_grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return bad("train.c_grid must hold positive values".into());
        }
        if !(self.selection.epsilon >= 0.0) || self.selection.max_candidates == 0 {
            return bad("selection.epsilon must be >= 0 and max_candidates >= 1".into());
        }
        self.alert.validate().map_err(PipelineError::Config)?;
        if !(self.evaluation.bin_width > 0.0 && self.evaluation.bin_width <= 1.0) {
            return bad("evaluation.bin_width must lie in (0, 1]".into());
        }
        Ok(())
    }

    /// Hash of the effective configuration and seed.
    pub fn hash(&self, seed: u64) -> String {
        let json = serde_json::to_string(&(self, seed)).expect("config serializes");
        crate::digest(json.as_bytes())
    }
}

/// Train and test halves of a cohort under the configured cutoff; without a
/// cutoff everything is both.
pub fn split(ds: &CohortDataset, cutoff: Option<Timestamp>) -> (CohortDataset, CohortDataset) {
    match cutoff {
        Some(c) => split_by_date(ds, c),
        None => (ds.clone(), ds.clone()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSummary {
    pub action: ActionDescriptor,
    pub n_train: usize,
    pub n_positive: usize,
    pub cv_auc: Option<f64>,
    pub c: Option<f64>,
    pub selected_groups: Vec<String>,
    pub gate_pass: bool,
    /// Why no model was produced.
    pub skipped: Option<String>,
}

pub struct TrainedAction {
    pub model: CalibratedModel,
    pub selection: SelectionResult,
}

pub struct TrainedPipeline {
    pub featurizer: Featurizer,
    pub scaler: Scaler,
    pub catalog: FeatureCatalog,
    pub actions: Vec<Option<TrainedAction>>,
    pub summaries: Vec<ActionSummary>,
}

impl TrainedPipeline {
    pub fn models(&self) -> Vec<CalibratedModel> {
        self.actions.iter().flatten().map(|a| a.model.clone()).collect()
    }
}

/// Selection, regularization choice, calibration and the final fit for one action.
pub fn train_action(
    x: &Matrix,
    y: &[bool],
    catalog: &FeatureCatalog,
    action: &ActionDescriptor,
    cfg: &PipelineConfig,
    meta: TrainMetadata,
) -> Result<TrainedAction, LearnError> {
    let base = &cfg.train.svm;
    let ranked = score_groups(x, y, catalog, base)?;
    let selection = greedy_select(x, y, &ranked, catalog, base, &cfg.selection)?;
    let cols = catalog.columns_of(&selection.selected);
    let xs = x.select_cols(&cols);

    let mut best: Option<(f64, CvOutcome)> = None;
    for &c in &cfg.train.c_grid {
        let tc = TrainConfig { c, ..base.clone() };
        let out = cross_validated_auc(&xs, y, &tc)?;
        if best.as_ref().is_none_or(|b| out.mean_auc > b.1.mean_auc) {
            best = Some((c, out));
        }
    }
    let (c, cv) = best.expect("nonempty C grid");
    let platt = match fit_platt(&cv.heldout_decisions, y) {
        Ok(p) => p,
        Err(LearnError::PlattNotConverged { last, gradient_norm }) if last.a.is_finite() && last.b.is_finite() => {
            tracing::warn!(action = %action.label(), gradient_norm, "sigmoid fit stopped early; using last iterate");
            last
        }
        Err(e) => return Err(e),
    };
    let linear = train_linear_svm(&xs, y, &TrainConfig { c, ..base.clone() })?;
    let model = CalibratedModel {
        action: action.clone(),
        feature_indices: cols,
        linear,
        platt,
        selected_groups: selection.selected.clone(),
        cv_auc: cv.mean_auc,
        meta: TrainMetadata { c, ..meta },
    };
    Ok(TrainedAction { model, selection })
}

fn matrix_fingerprint(x: &Matrix) -> String {
    let mut bytes = Vec::with_capacity(x.as_slice().len() * 8 + 16);
    bytes.extend((x.rows() as u64).to_le_bytes());
    bytes.extend((x.cols() as u64).to_le_bytes());
    for v in x.as_slice() {
        bytes.extend(v.to_le_bytes());
    }
    crate::digest(&bytes)
}

/// Fits the featurizer and scaler on the training half and one model per
/// action with both classes present.
pub fn train_pipeline(ds: &CohortDataset, cfg: &PipelineConfig, seed: u64) -> Result<TrainedPipeline, PipelineError> {
    cfg.validate()?;
    let (train, _) = split(ds, cfg.train.cutoff);
    if train.is_empty() {
        return Err(PipelineError::NothingTrainable("no patients admitted before the cutoff".into()));
    }
    let train = filter_rare_channels(&train, cfg.train.min_channel_patients);
    let featurizer = Featurizer::fit(&train, cfg.segment);
    let instances = featurizer.featurize(&train);
    if instances.is_empty() {
        return Err(PipelineError::NothingTrainable("training patients yield no instances".into()));
    }
    let (scaler, x, _) = standardize(&instances, &[], &featurizer.catalog);
    let catalog = scaler.standardized_catalog(&featurizer.catalog);
    let catalog_fp = catalog.fingerprint();
    let train_fp = matrix_fingerprint(&x);
    let config_hash = cfg.hash(seed);
    let cfg = PipelineConfig {
        train: TrainSection { svm: TrainConfig { seed, ..cfg.train.svm.clone() }, ..cfg.train.clone() },
        ..cfg.clone()
    };

    let results: Vec<(Option<TrainedAction>, ActionSummary)> = featurizer
        .actions
        .par_iter()
        .enumerate()
        .map(|(a, action)| {
            let y = instances.action_labels(a);
            let n_positive = y.iter().filter(|&&b| b).count();
            let mut summary = ActionSummary {
                action: action.clone(),
                n_train: y.len(),
                n_positive,
                cv_auc: None,
                c: None,
                selected_groups: Vec::new(),
                gate_pass: false,
                skipped: None,
            };
            let minority = n_positive.min(y.len() - n_positive);
            if minority < 2 {
                summary.skipped = Some(format!("minority class has {minority} examples"));
                return (None, summary);
            }
            let meta = TrainMetadata {
                n_train: y.len(),
                n_positive,
                c: cfg.train.svm.c,
                config_hash: config_hash.clone(),
                train_fingerprint: train_fp.clone(),
                catalog_fingerprint: catalog_fp.clone(),
            };
            match train_action(&x, &y, &catalog, action, &cfg, meta) {
                Ok(t) => {
                    summary.cv_auc = Some(t.model.cv_auc);
                    summary.c = Some(t.model.meta.c);
                    summary.selected_groups = t.model.selected_groups.iter().map(|&g| catalog.groups[g].label()).collect();
                    summary.gate_pass = t.model.cv_auc >= cfg.alert.model_auc_gate;
                    (Some(t), summary)
                }
                Err(e) => {
                    tracing::warn!(action = %action.label(), error = %e, "action not trained");
                    summary.skipped = Some(e.to_string());
                    (None, summary)
                }
            }
        })
        .collect();
    let (actions, summaries): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    if actions.iter().all(Option::is_none) {
        return Err(PipelineError::NothingTrainable("no action has both classes in the training data".into()));
    }
    Ok(TrainedPipeline { featurizer, scaler, catalog, actions, summaries })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, json + "\n").map_err(|e| io_err(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

fn file_stem(action: &ActionDescriptor) -> String {
    let code: String =
        action.code.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
    format!("{}_{code}", action.kind.as_str())
}

pub const SUMMARY_COLUMNS: [&str; 8] =
    ["action", "n_train", "n_positive", "cv_auc", "c", "selected_groups", "gate", "note"];

pub fn write_summary_csv<W: std::io::Write>(out: W, summaries: &[ActionSummary]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for s in summaries {
        w.write_record([
            s.action.label(),
            s.n_train.to_string(),
            s.n_positive.to_string(),
            s.cv_auc.map(|a| format!("{a:.6}")).unwrap_or_default(),
            s.c.map(|c| c.to_string()).unwrap_or_default(),
            s.selected_groups.join(";"),
            if s.skipped.is_some() { "skipped" } else if s.gate_pass { "pass" } else { "fail" }.to_string(),
            s.skipped.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `featurizer.json`, `scaler.json`, `summary.csv`, one document per
/// model under `models/` and one selection audit per model under `selection/`.
pub fn save_trained(dir: &Path, trained: &TrainedPipeline) -> Result<(), PipelineError> {
    let models = dir.join("models");
    let audits = dir.join("selection");
    for d in [dir, &models, &audits] {
        fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
    }
    write_json(&dir.join("featurizer.json"), &trained.featurizer)?;
    write_json(&dir.join("scaler.json"), &trained.scaler)?;
    let path = dir.join("summary.csv");
    let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    write_summary_csv(BufWriter::new(f), &trained.summaries).map_err(|e| io_err(&path, e))?;
    for t in trained.actions.iter().flatten() {
        let stem = file_stem(&t.model.action);
        save_model(&t.model, &models.join(format!("{stem}.json")))?;
        let path = audits.join(format!("{stem}.csv"));
        let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        write_audit_csv(BufWriter::new(f), &t.selection, &trained.catalog).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

pub struct LoadedArtifacts {
    pub featurizer: Featurizer,
    pub scaler: Scaler,
    pub catalog_fingerprint: String,
    pub models: Vec<CalibratedModel>,
}

impl LoadedArtifacts {
    pub fn from_trained(t: &TrainedPipeline) -> Self {
        LoadedArtifacts {
            featurizer: t.featurizer.clone(),
            scaler: t.scaler.clone(),
            catalog_fingerprint: t.catalog.fingerprint(),
            models: t.models(),
        }
    }
}

/// Reads what [`save_trained`] wrote. A directory without a featurizer is
/// an error; a `models/` directory without documents loads no models.
pub fn load_trained(dir: &Path) -> Result<LoadedArtifacts, PipelineError> {
    let featurizer: Featurizer = read_json(&dir.join("featurizer.json"))?;
    let scaler: Scaler = read_json(&dir.join("scaler.json"))?;
    let catalog_fingerprint = scaler.standardized_catalog(&featurizer.catalog).fingerprint();
    let mut paths: Vec<PathBuf> = match fs::read_dir(dir.join("models")) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(_) => Vec::new(),
    };
    paths.sort();
    let models = paths.iter().map(|p| load_model(p)).collect::<Result<Vec<_>, _>>()?;
    Ok(LoadedArtifacts { featurizer, scaler, catalog_fingerprint, models })
}

#[derive(Debug, Clone)]
pub struct AlertRun {
    pub alerts: Vec<AlertCandidate>,
    pub n_candidates: usize,
    pub n_models_used: usize,
    pub rejected_models: Vec<ActionDescriptor>,
}

/// Scores the test half (admitted on or after the cutoff) and applies the
/// alert filters.
pub fn run_alerts(
    ds: &CohortDataset,
    artifacts: &LoadedArtifacts,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<AlertRun, PipelineError> {
    cfg.validate()?;
    let (_, test) = split(ds, cfg.train.cutoff);
    let (registry, rejected) = ModelRegistry::admit(artifacts.models.clone(), cfg.alert.model_auc_gate);
    let rejected_models = rejected.into_iter().map(|m| m.action).collect();
    if registry.is_empty() {
        tracing::warn!("no model passes the AUC gate; no alerts produced");
        return Ok(AlertRun { alerts: Vec::new(), n_candidates: 0, n_models_used: 0, rejected_models });
    }
    let instances = artifacts.featurizer.featurize(&test);
    let x = artifacts.scaler.transform(&instances);
    let cands = scan_test_set(
        &registry,
        &instances,
        &x,
        &artifacts.catalog_fingerprint,
        &artifacts.featurizer.actions,
        &cfg.alert,
    )?;
    let mut alerts = filter_candidates(&cands, &cfg.alert);
    if let Some(n) = cfg.evaluation.review_sample {
        alerts = sample_for_review(&alerts, n, seed);
    }
    Ok(AlertRun { alerts, n_candidates: cands.len(), n_models_used: registry.len(), rejected_models })
}

pub fn write_alerts_file(path: &Path, alerts: &[AlertCandidate]) -> Result<(), PipelineError> {
    let f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    write_alerts_csv(BufWriter::new(f), alerts).map_err(|e| io_err(path, e))
}

/// One label per alert, from the ground truth of the action window the
/// alert is about (the window ending at the alert time): useful iff the
/// slot was injected.
pub fn truth_labels(alerts: &[(String, AlertCandidate)], truth: &GroundTruth) -> Result<Vec<ReviewLabel>, PipelineError> {
    let index = truth.index();
    let period = Minutes(truth.period_minutes);
    alerts
        .iter()
        .map(|(id, a)| {
            let slot = index
                .get(&(a.patient_id.as_str(), a.time - period, &a.action))
                .ok_or_else(|| PipelineError::MissingTruth { alert: id.clone() })?;
            Ok(ReviewLabel { alert_id: id.clone(), reviewer_id: "truth".into(), useful: slot.injected })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub n_alerts: usize,
    pub n_labelled: usize,
    pub n_useful: usize,
    pub roc: Option<RocSummary>,
    pub bins: Vec<BinSummary>,
    pub fit: Option<LinearFit>,
    pub histogram: Vec<usize>,
    pub gold_standard: Vec<GoldStandardLabel>,
    pub kappa: Vec<PairwiseKappa>,
    /// Reasons a statistic could not be computed.
    pub notes: Vec<String>,
}

/// Joins alerts with reviewer labels and computes every report statistic.
/// Labels naming unknown alerts are an error; unlabelled alerts count only
/// towards the histogram.
pub fn evaluate(
    alerts: &[(String, AlertCandidate)],
    labels: &[ReviewLabel],
    cfg: &EvaluationConfig,
) -> Result<Report, PipelineError> {
    let scores: BTreeMap<&str, f64> = alerts.iter().map(|(id, a)| (id.as_str(), a.alert_score)).collect();
    let orphans: BTreeSet<String> =
        labels.iter().filter(|l| !scores.contains_key(l.alert_id.as_str())).map(|l| l.alert_id.clone()).collect();
    if !orphans.is_empty() {
        return Err(EvalError::OrphanLabels(orphans.into_iter().collect()).into());
    }
    let gold = majority_gold_standard(labels)?;
    let kappa = pairwise_kappa(labels)?;
    let joined: Vec<(f64, bool)> = gold.iter().map(|g| (scores[g.alert_id.as_str()], g.useful)).collect();
    let mut notes = Vec::new();
    let roc = match alert_roc(&joined) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("roc: {e}"));
            None
        }
    };
    let bins = binned_true_alert_rate(&joined, cfg.bin_width);
    let fit = match fit(cfg.fit_mode, &joined, cfg.bin_width) {
        Ok(f) => Some(f),
        Err(e) => {
            notes.push(format!("fit: {e}"));
            None
        }
    };
    let all_scores: Vec<f64> = alerts.iter().map(|(_, a)| a.alert_score).collect();
    Ok(Report {
        n_alerts: alerts.len(),
        n_labelled: gold.len(),
        n_useful: gold.iter().filter(|g| g.useful).count(),
        roc,
        bins,
        fit,
        histogram: score_histogram(&all_scores, cfg.bin_width),
        gold_standard: gold,
        kappa,
        notes,
    })
}

fn write_csv_file(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

/// Report files: `report.json`, `roc.csv`, `bins.csv`, `fit.csv`,
/// `histogram.csv`, `gold_standard.csv`, `kappa.csv`, `histogram.svg` and
/// `true_alert_rate.svg`.
pub fn write_report(dir: &Path, report: &Report, bin_width: f64) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_json(&dir.join("report.json"), report)?;
    let roc_rows = report
        .roc
        .iter()
        .map(|r| {
            vec![
                num(r.auc),
                num(r.standard_error),
                num(r.z),
                format!("{:.6e}", r.p_value),
                r.n_useful.to_string(),
                r.n_not_useful.to_string(),
            ]
        })
        .collect();
    write_csv_file(&dir.join("roc.csv"), &["auc", "standard_error", "z", "p_value", "n_useful", "n_not_useful"], roc_rows)?;
    let bin_rows = report
        .bins
        .iter()
        .map(|b| {
            vec![
                num(b.lower),
                num((b.lower + b.width).min(1.0)),
                b.n_alerts.to_string(),
                b.n_useful.to_string(),
                b.true_alert_rate.map(num).unwrap_or_default(),
            ]
        })
        .collect();
    write_csv_file(&dir.join("bins.csv"), &["lower", "upper", "n_alerts", "n_useful", "true_alert_rate"], bin_rows)?;
    let fit_rows = report
        .fit
        .iter()
        .map(|f| vec![num(f.slope), num(f.intercept), num(f.slope_se), format!("{:.6e}", f.p_value), f.dof.to_string()])
        .collect();
    write_csv_file(&dir.join("fit.csv"), &["slope", "intercept", "slope_se", "p_value", "dof"], fit_rows)?;
    let hist_rows = report
        .histogram
        .iter()
        .enumerate()
        .map(|(k, c)| vec![num(k as f64 * bin_width), c.to_string()])
        .collect();
    write_csv_file(&dir.join("histogram.csv"), &["lower", "count"], hist_rows)?;
    let gold_rows = report
        .gold_standard
        .iter()
        .map(|g| vec![g.alert_id.clone(), g.useful.to_string(), g.useful_votes.to_string(), g.total_votes.to_string()])
        .collect();
    write_csv_file(&dir.join("gold_standard.csv"), &["alert_id", "useful", "useful_votes", "total_votes"], gold_rows)?;
    let kappa_rows = report
        .kappa
        .iter()
        .map(|k| {
            vec![
                k.reviewer_a.clone(),
                k.reviewer_b.clone(),
                k.shared_alerts.to_string(),
                num(k.kappa.value),
                k.kappa.degenerate.to_string(),
            ]
        })
        .collect();
    write_csv_file(&dir.join("kappa.csv"), &["reviewer_a", "reviewer_b", "shared_alerts", "kappa", "degenerate"], kappa_rows)?;
    let p = dir.join("histogram.svg");
    fs::write(&p, svg::histogram_svg(&report.histogram, bin_width)).map_err(|e| io_err(&p, e))?;
    let p = dir.join("true_alert_rate.svg");
    fs::write(&p, svg::rate_svg(&report.bins, report.fit.as_ref())).map_err(|e| io_err(&p, e))?;
    Ok(())
}
