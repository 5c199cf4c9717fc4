//! Segmentation of patient records into state/action instances and their
//! fixed-length vector representation.
//!
//! A record is cut at a daily anchor (08:00 by default). At each cut time `t`
//! the patient state is summarized from events at or before `t`, and the
//! follow-up actions are the lab orders and medication administrations that
//! occur in `[t, t + period)`.

pub mod extract;
mod scale;

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::record::{ChannelKind, CohortDataset, EventValue, OrderStatus, PatientRecord, RawEvent};
use crate::time::{Minutes, Timestamp};
use extract::{
    extract_categorical_lab_features, extract_continuous_lab_features, extract_medication_features,
    extract_procedure_features, medication_order_changes, CATEGORICAL_LAB_SCALARS, CONTINUOUS_LAB_FEATURES,
    MEDICATION_FEATURES, PROCEDURE_FEATURES,
};

pub use scale::{standardize, Scaler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    /// Minutes after midnight of the daily cut.
    pub anchor_minute: i64,
    pub period_minutes: i64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig { anchor_minute: 8 * 60, period_minutes: 24 * 60 }
    }
}

impl SegmentConfig {
    pub fn period(&self) -> Minutes {
        Minutes(self.period_minutes)
    }
}

/// Cut times strictly inside the stay: `admission < t < discharge`.
pub fn segment_times(admission: Timestamp, discharge: Timestamp, cfg: &SegmentConfig) -> Vec<Timestamp> {
    assert!(cfg.period_minutes > 0, "segmentation period must be positive");
    let period = cfg.period();
    let mut t = admission.floor_day() + Minutes(cfg.anchor_minute);
    while t <= admission {
        t = t + period;
    }
    let mut out = Vec::new();
    while t < discharge {
        out.push(t);
        t = t + period;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "code", rename_all = "snake_case")]
pub enum GroupSource {
    Lab(String),
    Medication(String),
    Procedure(String),
    DemographicsDevices,
}

impl GroupSource {
    pub fn label(&self) -> String {
        match self {
            GroupSource::Lab(c) => format!("lab:{c}"),
            GroupSource::Medication(c) => format!("medication:{c}"),
            GroupSource::Procedure(c) => format!("procedure:{c}"),
            GroupSource::DemographicsDevices => "demographics".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub group: usize,
    pub name: String,
    pub units: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCatalog {
    pub groups: Vec<GroupSource>,
    pub features: Vec<FeatureDescriptor>,
}

impl FeatureCatalog {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group_columns(&self, group: usize) -> Vec<usize> {
        self.features.iter().enumerate().filter(|(_, f)| f.group == group).map(|(i, _)| i).collect()
    }

    /// Columns of several groups, in catalog order.
    pub fn columns_of(&self, groups: &[usize]) -> Vec<usize> {
        let set: BTreeSet<usize> = groups.iter().copied().collect();
        self.features.iter().enumerate().filter(|(_, f)| set.contains(&f.group)).map(|(i, _)| i).collect()
    }

    /// Stable hex digest of the feature names and grouping.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.features {
            h.update(self.groups[f.group].label().as_bytes());
            h.update(b"/");
            h.update(f.name.as_bytes());
            h.update(b"\n");
        }
        crate::hex16(&h.finalize())
    }

    fn push(&mut self, group: usize, name: impl Into<String>, units: &str) {
        self.features.push(FeatureDescriptor { group, name: name.into(), units: units.to_string() });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    LabOrder,
    MedicationGiven,
}

impl ActionKind {
    pub fn channel(self) -> ChannelKind {
        match self {
            ActionKind::LabOrder => ChannelKind::Lab,
            ActionKind::MedicationGiven => ChannelKind::Medication,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::LabOrder => "lab_order",
            ActionKind::MedicationGiven => "medication_given",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionDescriptor {
    pub kind: ActionKind,
    pub code: String,
}

impl ActionDescriptor {
    pub fn new(kind: ActionKind, code: impl Into<String>) -> Self {
        ActionDescriptor { kind, code: code.into() }
    }

    pub fn label(&self) -> String {
        format!("{}:{}", self.kind.as_str(), self.code)
    }

    /// Inverse of [`label`](Self::label).
    pub fn parse_label(label: &str) -> Option<Self> {
        let (kind, code) = label.split_once(':')?;
        let kind = match kind {
            "lab_order" => ActionKind::LabOrder,
            "medication_given" => ActionKind::MedicationGiven,
            _ => return None,
        };
        (!code.is_empty()).then(|| ActionDescriptor::new(kind, code))
    }
}

/// True for each action with a matching event in `[t, t + period)`.
pub fn build_action_vector(
    rec: &PatientRecord,
    t: Timestamp,
    period: Minutes,
    actions: &[ActionDescriptor],
) -> Vec<bool> {
    let end = t + period;
    let lo = rec.events.partition_point(|e| e.timestamp < t);
    let hi = rec.events.partition_point(|e| e.timestamp < end);
    let window = &rec.events[lo..hi];
    actions
        .iter()
        .map(|a| window.iter().any(|e| e.kind == a.kind.channel() && e.code == a.code))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LabEncoding {
    Continuous,
    /// Token vocabulary seen in training; unseen tokens fall in a trailing "other" slot.
    Categorical { vocab: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabChannel {
    pub code: String,
    pub encoding: LabEncoding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientInstance {
    pub patient_id: String,
    pub time: Timestamp,
    /// Raw features; `None` is missing.
    pub features: Vec<Option<f64>>,
    pub actions: Vec<bool>,
    /// Index of the instance one period earlier for the same patient.
    pub prev: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstanceSet {
    pub instances: Vec<PatientInstance>,
}

impl InstanceSet {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn action_labels(&self, action: usize) -> Vec<bool> {
        self.instances.iter().map(|i| i.actions[action]).collect()
    }
}

fn one_hot<'a>(token: Option<&'a str>, vocab: &'a [String]) -> impl Iterator<Item = Option<f64>> + 'a {
    let slot = token.map(|t| vocab.iter().position(|v| v == t).unwrap_or(vocab.len()));
    (0..=vocab.len()).map(move |i| slot.map(|s| if s == i { 1.0 } else { 0.0 }))
}

fn token_of(v: &EventValue) -> String {
    match v {
        EventValue::Token(t) => t.clone(),
        EventValue::Numeric(x) => x.to_string(),
    }
}

/// Feature layout and vocabularies learned from a training cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub segment: SegmentConfig,
    pub labs: Vec<LabChannel>,
    pub medications: Vec<String>,
    pub procedures: Vec<String>,
    pub sex_vocab: Vec<String>,
    pub race_vocab: Vec<String>,
    pub catalog: FeatureCatalog,
    pub actions: Vec<ActionDescriptor>,
}

impl Featurizer {
    pub fn fit(train: &CohortDataset, segment: SegmentConfig) -> Self {
        let labs: Vec<LabChannel> = train
            .catalog
            .codes(ChannelKind::Lab)
            .map(|code| {
                let tokens: BTreeSet<String> = train
                    .records
                    .iter()
                    .flat_map(|r| r.events_on(ChannelKind::Lab, code))
                    .filter_map(|e| match &e.value {
                        Some(EventValue::Token(t)) => Some(t.clone()),
                        _ => None,
                    })
                    .collect();
                let encoding = if tokens.is_empty() {
                    LabEncoding::Continuous
                } else {
                    let vocab: BTreeSet<String> = train
                        .records
                        .iter()
                        .flat_map(|r| r.events_on(ChannelKind::Lab, code))
                        .filter_map(|e| e.value.as_ref().map(token_of))
                        .collect();
                    LabEncoding::Categorical { vocab: vocab.into_iter().collect() }
                };
                LabChannel { code: code.to_string(), encoding }
            })
            .collect();
        let medications: Vec<String> = train.catalog.codes(ChannelKind::Medication).map(String::from).collect();
        let procedures: Vec<String> = train.catalog.codes(ChannelKind::Procedure).map(String::from).collect();
        let sex_vocab: BTreeSet<String> = train.records.iter().map(|r| r.demographics.sex.clone()).collect();
        let race_vocab: BTreeSet<String> = train.records.iter().map(|r| r.demographics.race.clone()).collect();

        let mut f = Featurizer {
            segment,
            catalog: FeatureCatalog { groups: Vec::new(), features: Vec::new() },
            actions: labs
                .iter()
                .map(|l| ActionDescriptor::new(ActionKind::LabOrder, l.code.clone()))
                .chain(medications.iter().map(|m| ActionDescriptor::new(ActionKind::MedicationGiven, m.clone())))
                .collect(),
            labs,
            medications,
            procedures,
            sex_vocab: sex_vocab.into_iter().collect(),
            race_vocab: race_vocab.into_iter().collect(),
        };
        f.catalog = f.build_catalog();
        f
    }

    fn build_catalog(&self) -> FeatureCatalog {
        let mut c = FeatureCatalog { groups: Vec::new(), features: Vec::new() };
        for lab in &self.labs {
            let g = c.groups.len();
            c.groups.push(GroupSource::Lab(lab.code.clone()));
            match &lab.encoding {
                LabEncoding::Continuous => {
                    for name in CONTINUOUS_LAB_FEATURES {
                        c.push(g, name, continuous_units(name));
                    }
                }
                LabEncoding::Categorical { vocab } => {
                    for slot in ["last", "second_last", "first"] {
                        for tok in vocab.iter().map(String::as_str).chain(["<other>"]) {
                            c.push(g, format!("{slot}={tok}"), "indicator");
                        }
                    }
                    for name in CATEGORICAL_LAB_SCALARS {
                        c.push(g, name, if name.starts_with("hours") { "hours" } else { "indicator" });
                    }
                }
            }
        }
        for m in &self.medications {
            let g = c.groups.len();
            c.groups.push(GroupSource::Medication(m.clone()));
            for name in MEDICATION_FEATURES {
                c.push(g, name, if name.starts_with("hours") { "hours" } else { "indicator" });
            }
        }
        for p in &self.procedures {
            let g = c.groups.len();
            c.groups.push(GroupSource::Procedure(p.clone()));
            for name in PROCEDURE_FEATURES {
                c.push(g, name, if name.starts_with("hours") { "hours" } else { "indicator" });
            }
        }
        let g = c.groups.len();
        c.groups.push(GroupSource::DemographicsDevices);
        for tok in self.sex_vocab.iter().map(String::as_str).chain(["<other>"]) {
            c.push(g, format!("sex={tok}"), "indicator");
        }
        c.push(g, "age", "years");
        for tok in self.race_vocab.iter().map(String::as_str).chain(["<other>"]) {
            c.push(g, format!("race={tok}"), "indicator");
        }
        for d in 1..=4 {
            c.push(g, format!("device_{d}"), "indicator");
        }
        c
    }

    /// Raw feature vector from events at or before `t`.
    pub fn features_at(&self, rec: &PatientRecord, t: Timestamp) -> Vec<Option<f64>> {
        let upto = rec.events.partition_point(|e| e.timestamp <= t);
        let past = &rec.events[..upto];
        let period = self.segment.period();
        let mut out = Vec::with_capacity(self.catalog.len());

        for lab in &self.labs {
            let events: Vec<&RawEvent> =
                past.iter().filter(|e| e.kind == ChannelKind::Lab && e.code == lab.code).collect();
            let mut pending = false;
            for e in &events {
                match e.status {
                    Some(OrderStatus::Pending) => pending = true,
                    _ => pending = false,
                }
            }
            let resulted = events.iter().filter(|e| e.status != Some(OrderStatus::Pending));
            match &lab.encoding {
                LabEncoding::Continuous => {
                    let series: Vec<(Timestamp, f64)> = resulted
                        .filter_map(|e| match e.value {
                            Some(EventValue::Numeric(v)) => Some((e.timestamp, v)),
                            _ => None,
                        })
                        .collect();
                    out.extend(extract_continuous_lab_features(&series, pending, t, period));
                }
                LabEncoding::Categorical { vocab } => {
                    let tokens: Vec<(Timestamp, String)> =
                        resulted.filter_map(|e| e.value.as_ref().map(|v| (e.timestamp, token_of(v)))).collect();
                    let series: Vec<(Timestamp, &str)> = tokens.iter().map(|(ts, s)| (*ts, s.as_str())).collect();
                    let f = extract_categorical_lab_features(&series, pending, t);
                    out.extend(one_hot(f.last.as_deref(), vocab));
                    out.extend(one_hot(f.second_last.as_deref(), vocab));
                    out.extend(one_hot(f.first.as_deref(), vocab));
                    out.extend(f.scalars());
                }
            }
        }
        for m in &self.medications {
            let admins: Vec<Timestamp> = past
                .iter()
                .filter(|e| e.kind == ChannelKind::Medication && &e.code == m)
                .map(|e| e.timestamp)
                .collect();
            let changes = medication_order_changes(&admins, t, period);
            out.extend(extract_medication_features(&admins, &changes, t, period));
        }
        for p in &self.procedures {
            let times: Vec<Timestamp> = past
                .iter()
                .filter(|e| e.kind == ChannelKind::Procedure && &e.code == p)
                .map(|e| e.timestamp)
                .collect();
            out.extend(extract_procedure_features(&times, t));
        }
        let d = &rec.demographics;
        out.extend(one_hot(Some(&d.sex), &self.sex_vocab));
        out.push(Some(d.age));
        out.extend(one_hot(Some(&d.race), &self.race_vocab));
        out.extend(rec.device_flags.iter().map(|&b| Some(if b { 1.0 } else { 0.0 })));
        debug_assert_eq!(out.len(), self.catalog.len());
        out
    }

    /// One instance per cut time, linked to the previous cut of the same record.
    pub fn segment_record(&self, rec: &PatientRecord) -> Vec<PatientInstance> {
        let period = self.segment.period();
        segment_times(rec.admission, rec.discharge, &self.segment)
            .into_iter()
            .enumerate()
            .map(|(i, t)| PatientInstance {
                patient_id: rec.patient_id.clone(),
                time: t,
                features: self.features_at(rec, t),
                actions: build_action_vector(rec, t, period, &self.actions),
                prev: i.checked_sub(1),
            })
            .collect()
    }

    /// Featurizes every record; `prev` links become indices into the flat set.
    pub fn featurize(&self, ds: &CohortDataset) -> InstanceSet {
        let per_record: Vec<Vec<PatientInstance>> =
            ds.records.par_iter().map(|r| self.segment_record(r)).collect();
        let mut instances = Vec::new();
        for mut group in per_record {
            let offset = instances.len();
            for inst in &mut group {
                inst.prev = inst.prev.map(|p| p + offset);
            }
            instances.extend(group);
        }
        InstanceSet { instances }
    }
}

fn continuous_units(name: &str) -> &'static str {
    match name {
        n if n.starts_with("hours") => "hours",
        n if n.ends_with("pct_change") || n.ends_with("pct_diff") => "ratio",
        n if n.ends_with("slope") => "value/hour",
        "count" => "count",
        "ever_measured" | "pending" | "measured_within_period" => "indicator",
        _ => "value",
    }
}

/// Dense CSV export: identifiers, standardized features and action columns.
pub fn write_instances_csv<W: Write>(
    out: W,
    set: &InstanceSet,
    matrix: &crate::matrix::Matrix,
    catalog: &FeatureCatalog,
    actions: &[ActionDescriptor],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["patient_id".to_string(), "time".to_string()];
    header.extend(catalog.features.iter().map(|f| format!("{}/{}", catalog.groups[f.group].label(), f.name)));
    header.extend(actions.iter().map(|a| format!("action/{}", a.label())));
    w.write_record(&header)?;
    for (i, inst) in set.instances.iter().enumerate() {
        let mut row = vec![inst.patient_id.clone(), inst.time.to_string()];
        row.extend(matrix.row(i).iter().map(|v| v.to_string()));
        row.extend(inst.actions.iter().map(|&a| if a { "1".to_string() } else { "0".to_string() }));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
