//! Temporal patient records: event model, cohort loading, rare-channel
//! filtering and the temporal train/test split.
//!
//! The on-disk form is line-oriented. Each line is either a patient header
//! (`"kind":"patient"`) carrying demographics, the stay interval and the four
//! device flags, or a single event on a lab, medication, procedure or device
//! channel. Headers and events may be interleaved in any order; events are
//! grouped per patient and sorted by time on load.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Lab,
    Medication,
    Procedure,
    Device,
}

impl ChannelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelKind::Lab => "lab",
            ChannelKind::Medication => "medication",
            ChannelKind::Procedure => "procedure",
            ChannelKind::Device => "device",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "lab" => ChannelKind::Lab,
            "medication" => ChannelKind::Medication,
            "procedure" => ChannelKind::Procedure,
            "device" => ChannelKind::Device,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EventValue {
    Numeric(f64),
    Token(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderStatus {
    Resulted,
    Pending,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawEvent {
    pub patient_id: String,
    pub timestamp: Timestamp,
    pub kind: ChannelKind,
    pub code: String,
    pub value: Option<EventValue>,
    pub status: Option<OrderStatus>,
}

impl RawEvent {
    fn check(&self) -> Result<(), String> {
        match self.kind {
            ChannelKind::Lab => {
                if self.value.is_none() && self.status.is_none() {
                    return Err("lab event needs a value or an order status".into());
                }
                if let Some(EventValue::Numeric(v)) = self.value {
                    if !v.is_finite() {
                        return Err("non-finite lab value".into());
                    }
                }
            }
            _ => {
                if self.value.is_some() || self.status.is_some() {
                    return Err(format!("{} event must not carry a value", self.kind.as_str()));
                }
            }
        }
        if self.code.is_empty() {
            return Err("empty channel code".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub sex: String,
    pub age: f64,
    pub race: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub patient_id: String,
    pub admission: Timestamp,
    pub discharge: Timestamp,
    pub demographics: Demographics,
    /// Sorted nondecreasing by timestamp.
    pub events: Vec<RawEvent>,
    pub device_flags: [bool; 4],
}

impl PatientRecord {
    pub fn events_on<'a>(
        &'a self,
        kind: ChannelKind,
        code: &'a str,
    ) -> impl Iterator<Item = &'a RawEvent> + 'a {
        self.events.iter().filter(move |e| e.kind == kind && e.code == code)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChannelKey {
    pub kind: ChannelKind,
    pub code: String,
}

impl ChannelKey {
    pub fn new(kind: ChannelKind, code: impl Into<String>) -> Self {
        ChannelKey { kind, code: code.into() }
    }
}

/// Lab, medication and procedure codes with distinct-patient usage counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChannelCatalog {
    counts: BTreeMap<ChannelKey, usize>,
}

impl ChannelCatalog {
    pub fn from_records(records: &[PatientRecord]) -> Self {
        let mut counts = BTreeMap::new();
        for rec in records {
            let used: BTreeSet<ChannelKey> = rec
                .events
                .iter()
                .filter(|e| e.kind != ChannelKind::Device)
                .map(|e| ChannelKey::new(e.kind, e.code.clone()))
                .collect();
            for key in used {
                *counts.entry(key).or_insert(0) += 1;
            }
        }
        ChannelCatalog { counts }
    }

    pub fn patients_using(&self, key: &ChannelKey) -> usize {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ChannelKey, usize)> {
        self.counts.iter().map(|(k, &v)| (k, v))
    }

    pub fn codes(&self, kind: ChannelKind) -> impl Iterator<Item = &str> {
        self.counts.keys().filter(move |k| k.kind == kind).map(|k| k.code.as_str())
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Channels used by at least `min_patients` distinct patients.
    pub fn frequent(&self, min_patients: usize) -> BTreeSet<ChannelKey> {
        self.counts
            .iter()
            .filter(|(_, &n)| n >= min_patients)
            .map(|(k, _)| k.clone())
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CohortDataset {
    /// Ordered by patient id.
    pub records: Vec<PatientRecord>,
    pub catalog: ChannelCatalog,
}

impl CohortDataset {
    pub fn new(mut records: Vec<PatientRecord>) -> Self {
        records.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
        for r in &mut records {
            r.events.sort_by_key(|e| e.timestamp);
        }
        let catalog = ChannelCatalog::from_records(&records);
        CohortDataset { records, catalog }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Drops events on lab/medication/procedure channels outside `keep`.
    /// Device events are always retained.
    pub fn retain_channels(&self, keep: &BTreeSet<ChannelKey>) -> CohortDataset {
        let records = self
            .records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.events.retain(|e| {
                    e.kind == ChannelKind::Device
                        || keep.contains(&ChannelKey::new(e.kind, e.code.clone()))
                });
                r
            })
            .collect();
        CohortDataset::new(records)
    }
}

pub fn filter_rare_channels(ds: &CohortDataset, min_patients: usize) -> CohortDataset {
    let keep = ds.catalog.frequent(min_patients.max(1));
    ds.retain_channels(&keep)
}

/// Patients admitted strictly before `cutoff` go to train, the rest to test.
pub fn split_by_date(ds: &CohortDataset, cutoff: Timestamp) -> (CohortDataset, CohortDataset) {
    let (train, test): (Vec<_>, Vec<_>) =
        ds.records.iter().cloned().partition(|r| r.admission < cutoff);
    (CohortDataset::new(train), CohortDataset::new(test))
}

// ---------------------------------------------------------------------------
// Wire formats

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventFormat {
    Jsonl,
    Csv,
}

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate header for patient {0}")]
    DuplicatePatient(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A line that was well-formed but could not be placed in the cohort.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub line: usize,
    pub patient_id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedCohort {
    pub dataset: CohortDataset,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct WireLine {
    patient_id: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ts: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<EventValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    status: Option<OrderStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    admission: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    discharge: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    age: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    race: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    devices: Option<[bool; 4]>,
}

/// CSV column order (header row required).
pub const CSV_COLUMNS: [&str; 12] = [
    "patient_id", "ts", "kind", "code", "value", "status", "admission", "discharge", "sex", "age",
    "race", "devices",
];

struct Header {
    admission: Timestamp,
    discharge: Timestamp,
    demographics: Demographics,
    device_flags: [bool; 4],
}

enum Line {
    Header(String, Header),
    Event(RawEvent),
    Rejected(Rejection),
}

fn malformed(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Malformed { line, message: message.into() }
}

fn interpret(line_no: usize, w: WireLine) -> Result<Line, ParseError> {
    let ts = |field: &str, v: &Option<String>| -> Result<Timestamp, ParseError> {
        let raw = v.as_deref().ok_or_else(|| malformed(line_no, format!("missing field `{field}`")))?;
        Timestamp::parse(raw).map_err(|e| malformed(line_no, format!("field `{field}`: {e}")))
    };
    if w.patient_id.is_empty() {
        return Err(malformed(line_no, "empty patient_id"));
    }
    if w.kind == "patient" {
        let admission = ts("admission", &w.admission)?;
        let discharge = ts("discharge", &w.discharge)?;
        if discharge < admission {
            return Err(malformed(line_no, "discharge precedes admission"));
        }
        let age = w.age.ok_or_else(|| malformed(line_no, "missing field `age`"))?;
        if !(0.0..150.0).contains(&age) {
            return Err(malformed(line_no, format!("age {age} out of range")));
        }
        let header = Header {
            admission,
            discharge,
            demographics: Demographics {
                sex: w.sex.unwrap_or_default(),
                age,
                race: w.race.unwrap_or_default(),
            },
            device_flags: w.devices.unwrap_or_default(),
        };
        return Ok(Line::Header(w.patient_id, header));
    }
    let timestamp = ts("ts", &w.ts)?;
    let Some(kind) = ChannelKind::parse(&w.kind) else {
        return Ok(Line::Rejected(Rejection {
            line: line_no,
            patient_id: Some(w.patient_id),
            reason: format!("unknown channel kind {:?}", w.kind),
        }));
    };
    let event = RawEvent {
        patient_id: w.patient_id,
        timestamp,
        kind,
        code: w.code.unwrap_or_default(),
        value: w.value,
        status: w.status,
    };
    if let Err(reason) = event.check() {
        return Ok(Line::Rejected(Rejection { line: line_no, patient_id: Some(event.patient_id), reason }));
    }
    Ok(Line::Event(event))
}

fn assemble(lines: Vec<(usize, Line)>) -> Result<ParsedCohort, ParseError> {
    let mut headers: BTreeMap<String, Header> = BTreeMap::new();
    let mut events: Vec<(usize, RawEvent)> = Vec::new();
    let mut rejected = Vec::new();
    for (line_no, l) in lines {
        match l {
            Line::Header(id, h) => {
                if headers.insert(id.clone(), h).is_some() {
                    return Err(ParseError::DuplicatePatient(id));
                }
            }
            Line::Event(e) => events.push((line_no, e)),
            Line::Rejected(r) => rejected.push(r),
        }
    }
    let mut per_patient: BTreeMap<String, Vec<RawEvent>> = BTreeMap::new();
    for (line, e) in events {
        let Some(h) = headers.get(&e.patient_id) else {
            rejected.push(Rejection {
                line,
                patient_id: Some(e.patient_id),
                reason: "event for patient without header".into(),
            });
            continue;
        };
        if e.timestamp < h.admission || e.timestamp > h.discharge {
            rejected.push(Rejection {
                line,
                patient_id: Some(e.patient_id),
                reason: "event outside admission/discharge interval".into(),
            });
            continue;
        }
        per_patient.entry(e.patient_id.clone()).or_default().push(e);
    }
    let records = headers
        .into_iter()
        .map(|(id, h)| PatientRecord {
            events: per_patient.remove(&id).unwrap_or_default(),
            patient_id: id,
            admission: h.admission,
            discharge: h.discharge,
            demographics: h.demographics,
            device_flags: h.device_flags,
        })
        .collect();
    rejected.sort_by_key(|r| r.line);
    Ok(ParsedCohort { dataset: CohortDataset::new(records), rejected })
}

pub fn parse_events<R: Read>(source: R, format: EventFormat) -> Result<ParsedCohort, ParseError> {
    let mut lines = Vec::new();
    match format {
        EventFormat::Jsonl => {
            let reader = std::io::BufReader::new(source);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                let line_no = i + 1;
                if line.trim().is_empty() {
                    continue;
                }
                let wire: WireLine =
                    serde_json::from_str(&line).map_err(|e| malformed(line_no, e.to_string()))?;
                lines.push((line_no, interpret(line_no, wire)?));
            }
        }
        EventFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
            let header = reader.headers()?.clone();
            if header.iter().ne(CSV_COLUMNS.iter().copied()) {
                return Err(malformed(1, format!("expected columns {}", CSV_COLUMNS.join(","))));
            }
            for rec in reader.records() {
                let rec = rec?;
                let line_no = rec.position().map(|p| p.line() as usize).unwrap_or(0);
                let wire = wire_from_csv(line_no, &rec)?;
                lines.push((line_no, interpret(line_no, wire)?));
            }
        }
    }
    assemble(lines)
}

fn wire_from_csv(line_no: usize, rec: &csv::StringRecord) -> Result<WireLine, ParseError> {
    let field = |i: usize| rec.get(i).filter(|s| !s.is_empty()).map(str::to_string);
    let status = match field(5).as_deref() {
        None => None,
        Some("resulted") => Some(OrderStatus::Resulted),
        Some("pending") => Some(OrderStatus::Pending),
        Some(other) => return Err(malformed(line_no, format!("unknown status {other:?}"))),
    };
    let age = match field(9) {
        None => None,
        Some(s) => Some(s.parse::<f64>().map_err(|_| malformed(line_no, format!("bad age {s:?}")))?),
    };
    let devices = match field(11) {
        None => None,
        Some(s) => {
            let bits: Vec<bool> = s.chars().map(|c| c == '1').collect();
            if bits.len() != 4 || s.chars().any(|c| c != '0' && c != '1') {
                return Err(malformed(line_no, format!("devices must be four 0/1 digits, got {s:?}")));
            }
            Some([bits[0], bits[1], bits[2], bits[3]])
        }
    };
    Ok(WireLine {
        patient_id: field(0).unwrap_or_default(),
        ts: field(1),
        kind: field(2).unwrap_or_default(),
        code: field(3),
        value: field(4).map(|s| match s.parse::<f64>() {
            Ok(v) => EventValue::Numeric(v),
            Err(_) => EventValue::Token(s),
        }),
        status,
        admission: field(6),
        discharge: field(7),
        sex: field(8),
        age,
        race: field(10),
        devices,
    })
}

fn header_wire(r: &PatientRecord) -> WireLine {
    WireLine {
        patient_id: r.patient_id.clone(),
        kind: "patient".into(),
        admission: Some(r.admission.to_string()),
        discharge: Some(r.discharge.to_string()),
        sex: Some(r.demographics.sex.clone()),
        age: Some(r.demographics.age),
        race: Some(r.demographics.race.clone()),
        devices: Some(r.device_flags),
        ..Default::default()
    }
}

fn event_wire(e: &RawEvent) -> WireLine {
    WireLine {
        patient_id: e.patient_id.clone(),
        kind: e.kind.as_str().into(),
        ts: Some(e.timestamp.to_string()),
        code: Some(e.code.clone()),
        value: e.value.clone(),
        status: e.status,
        ..Default::default()
    }
}

/// Writes the dataset as JSONL: each patient header followed by its events.
pub fn write_jsonl<W: Write>(ds: &CohortDataset, mut out: W) -> std::io::Result<()> {
    for r in &ds.records {
        serde_json::to_writer(&mut out, &header_wire(r))?;
        out.write_all(b"\n")?;
        for e in &r.events {
            serde_json::to_writer(&mut out, &event_wire(e))?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn write_csv<W: Write>(ds: &CohortDataset, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    let opt = |s: &Option<String>| s.clone().unwrap_or_default();
    for r in &ds.records {
        let lines = std::iter::once(header_wire(r)).chain(r.events.iter().map(event_wire));
        for l in lines {
            let value = match &l.value {
                None => String::new(),
                Some(EventValue::Numeric(v)) => v.to_string(),
                Some(EventValue::Token(t)) => t.clone(),
            };
            let status = match l.status {
                None => "",
                Some(OrderStatus::Pending) => "pending",
                Some(OrderStatus::Resulted) => "resulted",
            };
            let devices = l
                .devices
                .map(|d| d.iter().map(|&b| if b { '1' } else { '0' }).collect())
                .unwrap_or_default();
            w.write_record([
                l.patient_id.clone(),
                opt(&l.ts),
                l.kind.clone(),
                opt(&l.code),
                value,
                status.to_string(),
                opt(&l.admission),
                opt(&l.discharge),
                opt(&l.sex),
                l.age.map(|a| a.to_string()).unwrap_or_default(),
                opt(&l.race),
                devices,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Set of patient ids, used to check split disjointness.
pub fn patient_ids(ds: &CohortDataset) -> HashSet<&str> {
    ds.records.iter().map(|r| r.patient_id.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(id: &str, adm: &str, dis: &str) -> String {
        format!(
            r#"{{"patient_id":"{id}","kind":"patient","admission":"{adm}","discharge":"{dis}","sex":"F","age":61,"race":"W","devices":[false,true,false,false]}}"#
        )
    }

    fn lab(id: &str, ts: &str, code: &str, v: f64) -> String {
        format!(r#"{{"patient_id":"{id}","ts":"{ts}","kind":"lab","code":"{code}","value":{v}}}"#)
    }

    #[test]
    fn empty_input() {
        let p = parse_events("".as_bytes(), EventFormat::Jsonl).unwrap();
        assert!(p.dataset.is_empty());
        assert!(p.rejected.is_empty());
    }

    #[test]
    fn out_of_order_events_are_sorted() {
        let src = [
            header("p1", "2004-01-01T00:00", "2004-01-05T00:00"),
            lab("p1", "2004-01-03T00:00", "GLU", 3.0),
            lab("p1", "2004-01-01T10:00", "GLU", 1.0),
            lab("p1", "2004-01-02T00:00", "GLU", 2.0),
        ]
        .join("\n");
        let p = parse_events(src.as_bytes(), EventFormat::Jsonl).unwrap();
        assert_eq!(p.dataset.len(), 1);
        let values: Vec<_> = p.dataset.records[0]
            .events
            .iter()
            .map(|e| match e.value {
                Some(EventValue::Numeric(v)) => v,
                _ => panic!(),
            })
            .collect();
        assert_eq!(values, vec![1.0, 2.0, 3.0]);
        assert_eq!(p.dataset.catalog.patients_using(&ChannelKey::new(ChannelKind::Lab, "GLU")), 1);
    }

    #[test]
    fn bad_timestamp_names_line() {
        let src = [
            header("p1", "2004-01-01T00:00", "2004-01-05T00:00"),
            r#"{"patient_id":"p1","ts":"not-a-date","kind":"lab","code":"X","value":1}"#.to_string(),
        ]
        .join("\n");
        let err = parse_events(src.as_bytes(), EventFormat::Jsonl).unwrap_err();
        match err {
            ParseError::Malformed { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("not-a-date"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_kind_is_rejected_and_reported() {
        let src = [
            header("p1", "2004-01-01T00:00", "2004-01-05T00:00"),
            r#"{"patient_id":"p1","ts":"2004-01-02T00:00","kind":"vital","code":"HR","value":80}"#.to_string(),
            lab("p1", "2004-01-02T00:00", "GLU", 5.0),
        ]
        .join("\n");
        let p = parse_events(src.as_bytes(), EventFormat::Jsonl).unwrap();
        assert_eq!(p.dataset.records[0].events.len(), 1);
        assert_eq!(p.rejected.len(), 1);
        assert_eq!(p.rejected[0].line, 2);
    }

    #[test]
    fn medication_with_value_rejected() {
        let src = [
            header("p1", "2004-01-01T00:00", "2004-01-05T00:00"),
            r#"{"patient_id":"p1","ts":"2004-01-02T00:00","kind":"medication","code":"HEP","value":5}"#.to_string(),
        ]
        .join("\n");
        let p = parse_events(src.as_bytes(), EventFormat::Jsonl).unwrap();
        assert!(p.dataset.records[0].events.is_empty());
        assert_eq!(p.rejected.len(), 1);
    }

    #[test]
    fn events_outside_stay_rejected() {
        let src = [
            header("p1", "2004-01-01T00:00", "2004-01-05T00:00"),
            lab("p1", "2004-01-06T00:00", "GLU", 5.0),
            lab("p2", "2004-01-02T00:00", "GLU", 5.0),
        ]
        .join("\n");
        let p = parse_events(src.as_bytes(), EventFormat::Jsonl).unwrap();
        assert_eq!(p.rejected.len(), 2);
    }

    fn small_cohort() -> CohortDataset {
        let mut lines = Vec::new();
        for i in 0..25 {
            let id = format!("p{i:02}");
            let month = if i < 10 { "2003-06" } else { "2005-06" };
            lines.push(header(&id, &format!("{month}-01T09:00"), &format!("{month}-05T09:00")));
            lines.push(lab(&id, &format!("{month}-02T09:00"), "COMMON", 1.0));
            if i < 19 {
                lines.push(lab(&id, &format!("{month}-02T10:00"), "RARE19", 1.0));
            }
        }
        parse_events(lines.join("\n").as_bytes(), EventFormat::Jsonl).unwrap().dataset
    }

    #[test]
    fn rare_channels_dropped_at_threshold() {
        let ds = small_cohort();
        let f = filter_rare_channels(&ds, 20);
        assert_eq!(f.catalog.patients_using(&ChannelKey::new(ChannelKind::Lab, "RARE19")), 0);
        assert_eq!(f.catalog.patients_using(&ChannelKey::new(ChannelKind::Lab, "COMMON")), 25);
        assert!(f.records.iter().all(|r| r.events.iter().all(|e| e.code != "RARE19")));
        assert_eq!(filter_rare_channels(&ds, 1), ds);
        assert_eq!(filter_rare_channels(&f, 20), f);
        let none = filter_rare_channels(&ds, 1000);
        assert_eq!(none.len(), 25);
        assert!(none.records.iter().all(|r| r.events.is_empty()));
    }

    #[test]
    fn split_boundaries() {
        let ds = small_cohort();
        let cutoff = Timestamp::parse("2005-06-01T09:00").unwrap();
        let (train, test) = split_by_date(&ds, cutoff);
        assert_eq!(train.len(), 10);
        assert_eq!(test.len(), 15, "admission exactly at cutoff goes to test");
        assert!(patient_ids(&train).is_disjoint(&patient_ids(&test)));
        let (tr, te) = split_by_date(&ds, Timestamp::parse("2000-01-01").unwrap());
        assert!(tr.is_empty());
        assert_eq!(te.len(), 25);
        let (tr, te) = split_by_date(&ds, Timestamp::parse("2010-01-01").unwrap());
        assert_eq!(tr.len(), 25);
        assert!(te.is_empty());
    }

    #[test]
    fn csv_mirror_matches_jsonl() {
        let ds = small_cohort();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = parse_events(buf.as_slice(), EventFormat::Csv).unwrap();
        assert!(back.rejected.is_empty());
        assert_eq!(back.dataset, ds);
    }
}
