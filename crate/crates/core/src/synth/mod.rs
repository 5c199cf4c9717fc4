//! Seeded synthetic cohorts with known action policies and injected
//! anomalous actions.
//!
//! Each patient is simulated cut by cut. At every cut the policy rules are
//! evaluated on the history generated so far, which gives the intended
//! action per slot; eligible slots (actions that some rule governs) are then
//! flipped with probability `injection_rate`, and the executed actions are
//! written to the event stream so later decisions react to them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::evaluation::ReviewLabel;
use crate::features::{segment_times, ActionDescriptor, ActionKind, SegmentConfig};
use crate::record::{ChannelKind, CohortDataset, Demographics, EventValue, PatientRecord, RawEvent};
use crate::time::{Minutes, Timestamp, MINUTES_PER_DAY, MINUTES_PER_HOUR};

/// The bundled demo spec (500 patients, 10 labs, 5 medications, 3 rules).
pub const DEMO_SPEC: &str = include_str!("demo.toml");

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid cohort spec: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),
    #[error("cannot parse cohort spec: {0}")]
    Parse(String),
    #[error("injection rate {0} outside [0, 0.5]")]
    InvalidRate(f64),
    #[error("ground truth line {line}: {message}")]
    Truth { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..self.max)
        } else {
            self.min
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSpec {
    pub name: String,
    pub prevalence: f64,
    /// Days after admission.
    pub onset_day: Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LabModel {
    /// Gaussian random walk around an initial draw, plus a per-day drift while
    /// each named condition is active.
    Continuous {
        initial_mean: f64,
        initial_sd: f64,
        /// Walk standard deviation per day.
        walk_sd: f64,
        measurement_sd: f64,
        #[serde(default)]
        min_value: f64,
        #[serde(default)]
        drift: BTreeMap<String, f64>,
    },
    /// Binary assay of a latent condition.
    Categorical { condition: String, positive: String, negative: String, sensitivity: f64, specificity: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabSpec {
    pub code: String,
    /// Chance of an order in a window when no rule asks for it.
    pub daily_probability: f64,
    /// Measured once shortly after admission.
    #[serde(default = "yes")]
    pub baseline: bool,
    #[serde(flatten)]
    pub model: LabModel,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MedicationSpec {
    pub code: String,
    pub daily_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcedureSpec {
    pub code: String,
    /// Chance the procedure happens during a stay.
    pub probability: f64,
    /// Days after admission.
    pub day: Range,
}

/// Condition on the history up to a cut (or on the latent state).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Predicate {
    LabBelow { code: String, threshold: f64 },
    LabAtLeast { code: String, threshold: f64 },
    LabAbove { code: String, threshold: f64 },
    LabPerformed { code: String },
    LabNotPerformed { code: String },
    MedicationEver { code: String },
    /// Administered within the trailing period.
    OnMedication { code: String },
    ProcedurePerformed { code: String },
    Condition { name: String },
}

impl Predicate {
    fn lab(&self) -> Option<&str> {
        match self {
            Predicate::LabBelow { code, .. }
            | Predicate::LabAtLeast { code, .. }
            | Predicate::LabAbove { code, .. }
            | Predicate::LabPerformed { code }
            | Predicate::LabNotPerformed { code } => Some(code),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyRule {
    pub name: String,
    pub action: ActionDescriptor,
    pub firing_probability: f64,
    /// All must hold.
    pub when: Vec<Predicate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    pub seed: u64,
    pub n_patients: usize,
    pub admission_start: Timestamp,
    pub admission_end: Timestamp,
    pub injection_rate: f64,
    #[serde(default)]
    pub segment: SegmentConfig,
    pub sexes: Vec<String>,
    pub races: Vec<String>,
    pub age: Range,
    pub stay_days: Range,
    #[serde(default)]
    pub device_probability: f64,
    #[serde(default)]
    pub conditions: Vec<ConditionSpec>,
    #[serde(default)]
    pub labs: Vec<LabSpec>,
    #[serde(default)]
    pub medications: Vec<MedicationSpec>,
    #[serde(default)]
    pub procedures: Vec<ProcedureSpec>,
    #[serde(default)]
    pub rules: Vec<PolicyRule>,
}

impl CohortSpec {
    pub fn demo() -> Self {
        Self::from_toml(DEMO_SPEC).expect("bundled demo spec parses")
    }

    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        serde_json::from_str(text).map_err(|e| SynthError::Parse(e.to_string()))
    }

    /// JSON when the extension is `.json`, TOML otherwise.
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|e| SynthError::Parse(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    /// Every problem found, each prefixed with the offending field.
    pub fn validate(&self) -> Result<(), SynthError> {
        let mut errs = Vec::new();
        let prob = |field: String, p: f64, errs: &mut Vec<String>| {
            if !(0.0..=1.0).contains(&p) {
                errs.push(format!("{field}: {p} is not a probability"));
            }
        };
        if !(0.0..=0.5).contains(&self.injection_rate) {
            errs.push(format!("injection_rate: {} outside [0, 0.5]", self.injection_rate));
        }
        if self.admission_end <= self.admission_start {
            errs.push("admission_end: must be after admission_start".into());
        }
        if self.segment.period_minutes <= 0 {
            errs.push("segment.period_minutes: must be positive".into());
        }
        if self.sexes.is_empty() {
            errs.push("sexes: at least one value required".into());
        }
        if self.races.is_empty() {
            errs.push("races: at least one value required".into());
        }
        let range = |field: &str, r: &Range, lo: f64, errs: &mut Vec<String>| {
            if !(r.min.is_finite() && r.max.is_finite()) || r.min > r.max || r.min < lo {
                errs.push(format!("{field}: need {lo} <= min <= max, got [{}, {}]", r.min, r.max));
            }
        };
        range("age", &self.age, 0.0, &mut errs);
        range("stay_days", &self.stay_days, 0.0, &mut errs);
        if self.stay_days.max <= 0.0 {
            errs.push("stay_days: max must be positive".into());
        }
        prob("device_probability".into(), self.device_probability, &mut errs);

        let conditions: BTreeSet<&str> = self.conditions.iter().map(|c| c.name.as_str()).collect();
        if conditions.len() != self.conditions.len() {
            errs.push("conditions: duplicate names".into());
        }
        for (i, c) in self.conditions.iter().enumerate() {
            prob(format!("conditions[{i}].prevalence"), c.prevalence, &mut errs);
            range(&format!("conditions[{i}].onset_day"), &c.onset_day, 0.0, &mut errs);
        }
        let mut labs = BTreeSet::new();
        for (i, l) in self.labs.iter().enumerate() {
            if l.code.is_empty() || !labs.insert(l.code.as_str()) {
                errs.push(format!("labs[{i}].code: empty or duplicate"));
            }
            prob(format!("labs[{i}].daily_probability"), l.daily_probability, &mut errs);
            match &l.model {
                LabModel::Continuous { initial_mean, initial_sd, walk_sd, measurement_sd, min_value, drift } => {
                    for (name, v) in [("initial_sd", initial_sd), ("walk_sd", walk_sd), ("measurement_sd", measurement_sd)] {
                        if !(*v >= 0.0 && v.is_finite()) {
                            errs.push(format!("labs[{i}].{name}: must be finite and >= 0"));
                        }
                    }
                    if !initial_mean.is_finite() || !min_value.is_finite() {
                        errs.push(format!("labs[{i}].initial_mean: must be finite"));
                    }
                    for (c, d) in drift {
                        if !conditions.contains(c.as_str()) || !d.is_finite() {
                            errs.push(format!("labs[{i}].drift.{c}: unknown condition or non-finite drift"));
                        }
                    }
                }
                LabModel::Categorical { condition, positive, negative, sensitivity, specificity } => {
                    if !conditions.contains(condition.as_str()) {
                        errs.push(format!("labs[{i}].condition: unknown condition {condition}"));
                    }
                    if positive == negative || positive.is_empty() || negative.is_empty() {
                        errs.push(format!("labs[{i}].positive: tokens must be distinct and nonempty"));
                    }
                    prob(format!("labs[{i}].sensitivity"), *sensitivity, &mut errs);
                    prob(format!("labs[{i}].specificity"), *specificity, &mut errs);
                }
            }
        }
        let mut meds = BTreeSet::new();
        for (i, m) in self.medications.iter().enumerate() {
            if m.code.is_empty() || !meds.insert(m.code.as_str()) {
                errs.push(format!("medications[{i}].code: empty or duplicate"));
            }
            prob(format!("medications[{i}].daily_probability"), m.daily_probability, &mut errs);
        }
        let mut procs = BTreeSet::new();
        for (i, p) in self.procedures.iter().enumerate() {
            if p.code.is_empty() || !procs.insert(p.code.as_str()) {
                errs.push(format!("procedures[{i}].code: empty or duplicate"));
            }
            prob(format!("procedures[{i}].probability"), p.probability, &mut errs);
            range(&format!("procedures[{i}].day"), &p.day, 0.0, &mut errs);
        }
        for (i, r) in self.rules.iter().enumerate() {
            prob(format!("rules[{i}].firing_probability"), r.firing_probability, &mut errs);
            let known = match r.action.kind {
                ActionKind::LabOrder => labs.contains(r.action.code.as_str()),
                ActionKind::MedicationGiven => meds.contains(r.action.code.as_str()),
            };
            if !known {
                errs.push(format!("rules[{i}].action: unknown channel {}", r.action.label()));
            }
            for (j, p) in r.when.iter().enumerate() {
                let ok = match p {
                    Predicate::MedicationEver { code } | Predicate::OnMedication { code } => meds.contains(code.as_str()),
                    Predicate::ProcedurePerformed { code } => procs.contains(code.as_str()),
                    Predicate::Condition { name } => conditions.contains(name.as_str()),
                    _ => p.lab().is_some_and(|c| labs.contains(c)),
                };
                if !ok {
                    errs.push(format!("rules[{i}].when[{j}]: references an unknown channel or condition"));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(SynthError::InvalidSpec(errs))
        }
    }

    /// Every lab order and medication, in catalog order.
    pub fn actions(&self) -> Vec<ActionDescriptor> {
        let mut out: Vec<ActionDescriptor> = self
            .labs
            .iter()
            .map(|l| ActionDescriptor::new(ActionKind::LabOrder, l.code.clone()))
            .chain(self.medications.iter().map(|m| ActionDescriptor::new(ActionKind::MedicationGiven, m.code.clone())))
            .collect();
        out.sort();
        out
    }
}

/// One (patient, cut, action) slot. `time` is the start of the action window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRow {
    pub patient_id: String,
    pub time: Timestamp,
    pub action: ActionDescriptor,
    /// Some rule governs this action, so the slot may be flipped.
    pub eligible: bool,
    pub intended: bool,
    pub executed: bool,
    pub injected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundTruth {
    pub period_minutes: i64,
    pub rows: Vec<TruthRow>,
}

pub const TRUTH_COLUMNS: [&str; 8] =
    ["patient_id", "time", "action", "eligible", "intended", "executed", "injected", "period_minutes"];

impl GroundTruth {
    /// Injected fraction over eligible slots; `None` with no eligible slot.
    pub fn injected_fraction(&self) -> Option<f64> {
        let eligible = self.rows.iter().filter(|r| r.eligible).count();
        let injected = self.rows.iter().filter(|r| r.eligible && r.injected).count();
        (eligible > 0).then(|| injected as f64 / eligible as f64)
    }

    pub fn index(&self) -> HashMap<(&str, Timestamp, &ActionDescriptor), &TruthRow> {
        self.rows.iter().map(|r| ((r.patient_id.as_str(), r.time, &r.action), r)).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRUTH_COLUMNS)?;
        let b = |x: bool| if x { "1" } else { "0" };
        for r in &self.rows {
            w.write_record([
                r.patient_id.as_str(),
                &r.time.to_string(),
                &r.action.label(),
                b(r.eligible),
                b(r.intended),
                b(r.executed),
                b(r.injected),
                &self.period_minutes.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, SynthError> {
        let mut r = csv::Reader::from_reader(input);
        let mut rows = Vec::new();
        let mut period = None;
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let bad = |m: String| SynthError::Truth { line, message: m };
            if rec.len() != TRUTH_COLUMNS.len() {
                return Err(bad(format!("expected {} fields", TRUTH_COLUMNS.len())));
            }
            let flag = |i: usize| match &rec[i] {
                "1" | "true" => Ok(true),
                "0" | "false" => Ok(false),
                other => Err(bad(format!("{}: bad flag {other:?}", TRUTH_COLUMNS[i]))),
            };
            let p: i64 = rec[7].parse().map_err(|_| bad("period_minutes: not an integer".into()))?;
            if *period.get_or_insert(p) != p {
                return Err(bad("period_minutes differs between rows".into()));
            }
            rows.push(TruthRow {
                patient_id: rec[0].to_string(),
                time: Timestamp::parse(&rec[1]).map_err(|e| bad(e.to_string()))?,
                action: ActionDescriptor::parse_label(&rec[2]).ok_or_else(|| bad(format!("bad action {:?}", &rec[2])))?,
                eligible: flag(3)?,
                intended: flag(4)?,
                executed: flag(5)?,
                injected: flag(6)?,
            });
        }
        Ok(GroundTruth { period_minutes: period.unwrap_or(SegmentConfig::default().period_minutes), rows })
    }
}

/// Uniform draw and an auxiliary word tied to one slot, independent of
/// generation order.
fn slot_draw(seed: u64, domain: &str, patient: &str, t: Timestamp, action: &ActionDescriptor) -> (f64, u64) {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(domain.as_bytes());
    h.update([0]);
    h.update(patient.as_bytes());
    h.update([0]);
    h.update(t.minutes().to_le_bytes());
    h.update(action.label().as_bytes());
    let d = h.finalize();
    let a = u64::from_le_bytes(d[0..8].try_into().expect("8 bytes"));
    let b = u64::from_le_bytes(d[8..16].try_into().expect("8 bytes"));
    ((a >> 11) as f64 / (1u64 << 53) as f64, b)
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn days(m: Minutes) -> f64 {
    m.0 as f64 / MINUTES_PER_DAY as f64
}

struct Walk {
    v0: f64,
    offset: f64,
    last: Timestamp,
}

struct PatientSim<'a> {
    spec: &'a CohortSpec,
    id: String,
    rng: ChaCha8Rng,
    onsets: BTreeMap<&'a str, Timestamp>,
    procedures: BTreeMap<&'a str, Timestamp>,
    walks: Vec<Option<Walk>>,
    /// Lab and medication events in generation (chronological) order.
    events: Vec<RawEvent>,
}

impl<'a> PatientSim<'a> {
    fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        if sd > 0.0 {
            Normal::new(mean, sd).expect("validated sd").sample(&mut self.rng)
        } else {
            mean
        }
    }

    fn lab_event(&mut self, lab: usize, at: Timestamp) -> RawEvent {
        let spec = &self.spec.labs[lab];
        let value = match &spec.model {
            LabModel::Continuous { initial_mean, initial_sd, walk_sd, measurement_sd, min_value, drift } => {
                if self.walks[lab].is_none() {
                    let v0 = self.normal(*initial_mean, *initial_sd);
                    self.walks[lab] = Some(Walk { v0, offset: 0.0, last: at });
                }
                let (last, offset) = {
                    let w = self.walks[lab].as_ref().expect("initialized");
                    (w.last, w.offset)
                };
                let step = self.normal(0.0, walk_sd * days(at - last).max(0.0).sqrt());
                let w = self.walks[lab].as_mut().expect("initialized");
                w.offset = offset + step;
                w.last = at;
                let mut latent = w.v0 + w.offset;
                for (c, d) in drift {
                    if let Some(&on) = self.onsets.get(c.as_str()) {
                        if on <= at {
                            latent += d * days(at - on);
                        }
                    }
                }
                let v = self.normal(latent, *measurement_sd).max(*min_value);
                EventValue::Numeric(round2(v))
            }
            LabModel::Categorical { condition, positive, negative, sensitivity, specificity } => {
                let active = self.onsets.get(condition.as_str()).is_some_and(|&on| on <= at);
                let p_pos = if active { *sensitivity } else { 1.0 - specificity };
                let tok = if self.rng.random_bool(p_pos) { positive } else { negative };
                EventValue::Token(tok.clone())
            }
        };
        RawEvent {
            patient_id: self.id.clone(),
            timestamp: at,
            kind: ChannelKind::Lab,
            code: spec.code.clone(),
            value: Some(value),
            status: None,
        }
    }

    fn last_lab_value(&self, code: &str, t: Timestamp) -> Option<f64> {
        self.events.iter().rev().filter(|e| e.timestamp <= t && e.kind == ChannelKind::Lab && e.code == code).find_map(
            |e| match e.value {
                Some(EventValue::Numeric(v)) => Some(v),
                _ => None,
            },
        )
    }

    fn any_event(&self, kind: ChannelKind, code: &str, from: Option<Timestamp>, t: Timestamp) -> bool {
        self.events
            .iter()
            .any(|e| e.kind == kind && e.code == code && e.timestamp <= t && from.is_none_or(|f| e.timestamp > f))
    }

    fn holds(&self, p: &Predicate, t: Timestamp) -> bool {
        let period = self.spec.segment.period();
        match p {
            Predicate::LabBelow { code, threshold } => self.last_lab_value(code, t).is_some_and(|v| v < *threshold),
            Predicate::LabAtLeast { code, threshold } => self.last_lab_value(code, t).is_some_and(|v| v >= *threshold),
            Predicate::LabAbove { code, threshold } => self.last_lab_value(code, t).is_some_and(|v| v > *threshold),
            Predicate::LabPerformed { code } => self.any_event(ChannelKind::Lab, code, None, t),
            Predicate::LabNotPerformed { code } => !self.any_event(ChannelKind::Lab, code, None, t),
            Predicate::MedicationEver { code } => self.any_event(ChannelKind::Medication, code, None, t),
            Predicate::OnMedication { code } => self.any_event(ChannelKind::Medication, code, Some(t - period), t),
            Predicate::ProcedurePerformed { code } => self.procedures.get(code.as_str()).is_some_and(|&p| p <= t),
            Predicate::Condition { name } => self.onsets.get(name.as_str()).is_some_and(|&on| on <= t),
        }
    }
}

fn simulate_patient(
    spec: &CohortSpec,
    index: usize,
    actions: &[ActionDescriptor],
    eligible: &BTreeSet<&ActionDescriptor>,
) -> (PatientRecord, Vec<TruthRow>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let id = format!("P{:05}", index + 1);

    let span_hours = ((spec.admission_end - spec.admission_start).0 / MINUTES_PER_HOUR).max(1);
    let admission = spec.admission_start + Minutes(rng.random_range(0..span_hours) * MINUTES_PER_HOUR);
    let stay_hours = (spec.stay_days.sample(&mut rng) * 24.0).round().max(1.0) as i64;
    let discharge = admission + Minutes(stay_hours * MINUTES_PER_HOUR);
    let at_day = |d: f64| admission + Minutes((d * MINUTES_PER_DAY as f64).round() as i64);

    let demographics = Demographics {
        sex: spec.sexes[rng.random_range(0..spec.sexes.len())].clone(),
        age: spec.age.sample(&mut rng).round(),
        race: spec.races[rng.random_range(0..spec.races.len())].clone(),
    };
    let device_flags = std::array::from_fn(|_| rng.random_bool(spec.device_probability));

    let mut onsets = BTreeMap::new();
    for c in &spec.conditions {
        let active = rng.random_bool(c.prevalence);
        let onset = at_day(c.onset_day.sample(&mut rng));
        if active {
            onsets.insert(c.name.as_str(), onset);
        }
    }
    let mut procedures = BTreeMap::new();
    for p in &spec.procedures {
        let done = rng.random_bool(p.probability);
        let when = at_day(p.day.sample(&mut rng));
        if done && when < discharge {
            procedures.insert(p.code.as_str(), when);
        }
    }

    let mut sim = PatientSim {
        spec,
        id: id.clone(),
        rng,
        onsets,
        procedures,
        walks: spec.labs.iter().map(|_| None).collect(),
        events: Vec::new(),
    };

    let cuts = segment_times(admission, discharge, &spec.segment);
    let first_cut = cuts.first().copied().unwrap_or(discharge);
    let baseline_room = ((first_cut - admission).0 - 1).min(120);
    for lab in 0..spec.labs.len() {
        if spec.labs[lab].baseline && baseline_room >= 1 {
            let at = admission + Minutes(sim.rng.random_range(1..=baseline_room));
            let e = sim.lab_event(lab, at);
            sim.events.push(e);
        }
    }
    sim.events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.code.cmp(&b.code)));

    let period = spec.segment.period();
    let mut truth = Vec::with_capacity(cuts.len() * actions.len());
    for &t in &cuts {
        let end = if t + period < discharge { t + period } else { discharge };
        let len = (end - t).0;
        let mut window = Vec::new();
        for action in actions {
            let triggered: Vec<f64> = spec
                .rules
                .iter()
                .filter(|r| &r.action == action && r.when.iter().all(|p| sim.holds(p, t)))
                .map(|r| r.firing_probability)
                .collect();
            let fired = triggered.into_iter().fold(false, |acc, p| sim.rng.random_bool(p) || acc);
            let background = match action.kind {
                ActionKind::LabOrder => spec.labs.iter().find(|l| l.code == action.code).map(|l| l.daily_probability),
                ActionKind::MedicationGiven => {
                    spec.medications.iter().find(|m| m.code == action.code).map(|m| m.daily_probability)
                }
            }
            .unwrap_or(0.0);
            let intended = sim.rng.random_bool(background) || fired;
            let is_eligible = eligible.contains(action);
            let flip = is_eligible && slot_draw(spec.seed, "generate", &id, t, action).0 < spec.injection_rate;
            let mut executed = intended ^ flip;
            if executed && len < 2 {
                executed = false;
            }
            if executed {
                window.push((t + Minutes(sim.rng.random_range(1..len)), action));
            }
            truth.push(TruthRow {
                patient_id: id.clone(),
                time: t,
                action: action.clone(),
                eligible: is_eligible,
                intended,
                executed,
                injected: intended != executed,
            });
        }
        window.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(b.1)));
        for (at, action) in window {
            let e = match action.kind {
                ActionKind::LabOrder => {
                    let lab = spec.labs.iter().position(|l| l.code == action.code).expect("action from spec");
                    sim.lab_event(lab, at)
                }
                ActionKind::MedicationGiven => RawEvent {
                    patient_id: id.clone(),
                    timestamp: at,
                    kind: ChannelKind::Medication,
                    code: action.code.clone(),
                    value: None,
                    status: None,
                },
            };
            sim.events.push(e);
        }
    }

    let mut events = sim.events;
    events.extend(sim.procedures.iter().map(|(&code, &at)| RawEvent {
        patient_id: id.clone(),
        timestamp: at,
        kind: ChannelKind::Procedure,
        code: code.to_string(),
        value: None,
        status: None,
    }));
    events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.kind.cmp(&b.kind)).then(a.code.cmp(&b.code)));
    let record = PatientRecord { patient_id: id, admission, discharge, demographics, events, device_flags };
    (record, truth)
}

/// Simulates the cohort described by `spec`. Patients are independent and
/// each draws from its own stream, so the output does not depend on thread
/// scheduling.
pub fn generate_cohort(spec: &CohortSpec) -> Result<(CohortDataset, GroundTruth), SynthError> {
    spec.validate()?;
    let actions = spec.actions();
    let eligible: BTreeSet<&ActionDescriptor> = spec.rules.iter().map(|r| &r.action).collect();
    let per_patient: Vec<(PatientRecord, Vec<TruthRow>)> =
        (0..spec.n_patients).into_par_iter().map(|i| simulate_patient(spec, i, &actions, &eligible)).collect();
    let mut records = Vec::with_capacity(per_patient.len());
    let mut rows = Vec::new();
    for (r, t) in per_patient {
        records.push(r);
        rows.extend(t);
    }
    Ok((CohortDataset::new(records), GroundTruth { period_minutes: spec.segment.period_minutes, rows }))
}

/// Value for a commission flip: the patient's last value of the channel,
/// else the most common cohort value.
fn fill_value(
    rec: &PatientRecord,
    code: &str,
    at: Timestamp,
    fallback: &HashMap<&str, EventValue>,
) -> Option<EventValue> {
    rec.events
        .iter()
        .rev()
        .filter(|e| e.kind == ChannelKind::Lab && e.code == code && e.timestamp <= at)
        .find_map(|e| e.value.clone())
        .or_else(|| fallback.get(code).cloned())
}

/// Flips each eligible executed action independently with probability `rho`
/// and edits the event stream to match: omission flips remove the action's
/// events from its window, commission flips add one event inside it.
/// The draw for a slot depends only on `(seed, slot)`, so applying the same
/// call twice restores the executed actions.
pub fn inject_anomalies(
    ds: &CohortDataset,
    truth: &GroundTruth,
    rho: f64,
    seed: u64,
) -> Result<(CohortDataset, GroundTruth), SynthError> {
    if !(0.0..=0.5).contains(&rho) {
        return Err(SynthError::InvalidRate(rho));
    }
    let mut fallback: HashMap<&str, BTreeMap<String, (usize, EventValue)>> = HashMap::new();
    for r in &ds.records {
        for e in r.events.iter().filter(|e| e.kind == ChannelKind::Lab) {
            if let Some(v) = &e.value {
                let key = match v {
                    EventValue::Numeric(x) => format!("{x}"),
                    EventValue::Token(t) => t.clone(),
                };
                fallback.entry(&e.code).or_default().entry(key).or_insert((0, v.clone())).0 += 1;
            }
        }
    }
    let fallback: HashMap<&str, EventValue> = fallback
        .into_iter()
        .filter_map(|(code, counts)| {
            let best = counts.into_values().fold(None::<(usize, EventValue)>, |acc, c| match acc {
                Some(a) if a.0 >= c.0 => Some(a),
                _ => Some(c),
            });
            best.map(|b| (code, b.1))
        })
        .collect();

    let period = Minutes(truth.period_minutes);
    let mut records = ds.records.clone();
    let pos: HashMap<String, usize> = records.iter().enumerate().map(|(i, r)| (r.patient_id.clone(), i)).collect();
    let mut rows = truth.rows.clone();
    for row in rows.iter_mut().filter(|r| r.eligible) {
        let (u, aux) = slot_draw(seed, "inject", &row.patient_id, row.time, &row.action);
        if u >= rho {
            continue;
        }
        let Some(&i) = pos.get(&row.patient_id) else { continue };
        let rec = &mut records[i];
        let channel = row.action.kind.channel();
        let end = if row.time + period < rec.discharge { row.time + period } else { rec.discharge };
        let in_window = |e: &RawEvent| e.kind == channel && e.code == row.action.code && e.timestamp >= row.time && e.timestamp < end;
        if row.executed {
            rec.events.retain(|e| !in_window(e));
            row.executed = false;
        } else {
            let len = (end - row.time).0;
            if len < 2 {
                continue;
            }
            let at = row.time + Minutes(1 + (aux % (len as u64 - 1)) as i64);
            let value = match row.action.kind {
                ActionKind::LabOrder => Some(fill_value(rec, &row.action.code, at, &fallback).unwrap_or(EventValue::Numeric(0.0))),
                ActionKind::MedicationGiven => None,
            };
            let e = RawEvent {
                patient_id: rec.patient_id.clone(),
                timestamp: at,
                kind: channel,
                code: row.action.code.clone(),
                value,
                status: None,
            };
            let k = rec.events.partition_point(|x| x.timestamp <= at);
            rec.events.insert(k, e);
            row.executed = true;
        }
        row.injected = row.intended != row.executed;
    }
    Ok((CohortDataset::new(records), GroundTruth { period_minutes: truth.period_minutes, rows }))
}

/// Labels from `reviewers` simulated raters, each agreeing with the truth
/// independently with probability `accuracy`.
pub fn simulated_reviews(alerts: &[(String, bool)], reviewers: usize, accuracy: f64, seed: u64) -> Vec<ReviewLabel> {
    let mut out = Vec::with_capacity(alerts.len() * reviewers);
    for r in 0..reviewers {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64 + 1);
        for (id, truth) in alerts {
            let agree = rng.random_bool(accuracy.clamp(0.0, 1.0));
            out.push(ReviewLabel { alert_id: id.clone(), reviewer_id: format!("R{}", r + 1), useful: agree == *truth });
        }
    }
    out
}
