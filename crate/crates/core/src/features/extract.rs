//! Pure per-channel temporal feature extractors.
//!
//! Every extractor looks only at observations at or before the segment time
//! `t`. Durations are reported in hours. A `None` marks a feature that is
//! undefined for the given history (imputed later by the scaler).

use crate::time::{Minutes, Timestamp};

pub const CONTINUOUS_LAB_FEATURES: [&str; 26] = [
    "last",
    "second_last",
    "first",
    "last_diff",
    "last_pct_change",
    "last_slope",
    "nadir",
    "nadir_diff",
    "nadir_pct_diff",
    "hours_since_nadir",
    "apex",
    "apex_diff",
    "apex_pct_diff",
    "hours_since_apex",
    "baseline_diff",
    "baseline_pct_diff",
    "overall_slope",
    "hours_since_last",
    "hours_since_first",
    "hours_between_last_two",
    "count",
    "mean",
    "std",
    "ever_measured",
    "pending",
    "measured_within_period",
];

pub const CATEGORICAL_LAB_SCALARS: [&str; 4] = ["hours_since_last", "performed", "pending", "hours_since_first"];

pub const MEDICATION_FEATURES: [&str; 4] =
    ["currently_on", "hours_since_first", "hours_since_last", "hours_since_order_change"];

pub const PROCEDURE_FEATURES: [&str; 3] = ["ever_performed", "hours_since_first", "hours_since_last"];

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// (a - b) / b, undefined when b is zero.
fn pct(a: f64, b: f64) -> Option<f64> {
    (b != 0.0).then(|| (a - b) / b)
}

/// Slope per hour between two observations, undefined for coincident times.
fn slope(a: (Timestamp, f64), b: (Timestamp, f64)) -> Option<f64> {
    let dt = a.0.hours_since(b.0);
    (dt != 0.0).then(|| (a.1 - b.1) / dt)
}

/// The 26 continuous-lab features, in [`CONTINUOUS_LAB_FEATURES`] order.
///
/// `series` must be sorted by time with every entry at or before `t`.
/// Nadir/apex timing refers to the most recent occurrence of the extreme.
pub fn extract_continuous_lab_features(
    series: &[(Timestamp, f64)],
    pending: bool,
    t: Timestamp,
    period: Minutes,
) -> [Option<f64>; 26] {
    let mut f = [None; 26];
    f[20] = Some(series.len() as f64);
    f[23] = Some(indicator(!series.is_empty()));
    f[24] = Some(indicator(pending));
    let Some(&last) = series.last() else {
        f[25] = Some(0.0);
        return f;
    };
    let first = series[0];
    let second = (series.len() >= 2).then(|| series[series.len() - 2]);

    let (mut nadir, mut apex) = (last, last);
    for &p in series {
        if p.1 <= nadir.1 {
            nadir = p;
        }
        if p.1 >= apex.1 {
            apex = p;
        }
    }
    let n = series.len() as f64;
    let mean = series.iter().map(|p| p.1).sum::<f64>() / n;
    let var = series.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / n;

    f[0] = Some(last.1);
    f[2] = Some(first.1);
    if let Some(b) = second {
        f[1] = Some(b.1);
        f[3] = Some(last.1 - b.1);
        f[4] = pct(last.1, b.1);
        f[5] = slope(last, b);
        f[19] = Some(last.0.hours_since(b.0));
    }
    f[6] = Some(nadir.1);
    f[7] = Some(last.1 - nadir.1);
    f[8] = pct(last.1, nadir.1);
    f[9] = Some(t.hours_since(nadir.0));
    f[10] = Some(apex.1);
    f[11] = Some(last.1 - apex.1);
    f[12] = pct(last.1, apex.1);
    f[13] = Some(t.hours_since(apex.0));
    if second.is_some() {
        f[14] = Some(last.1 - first.1);
        f[15] = pct(last.1, first.1);
        f[16] = slope(last, first);
    }
    f[17] = Some(t.hours_since(last.0));
    f[18] = Some(t.hours_since(first.0));
    f[21] = Some(mean);
    f[22] = Some(var.sqrt());
    f[25] = Some(indicator(t - last.0 < period));
    f
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalLabFeatures {
    pub last: Option<String>,
    pub second_last: Option<String>,
    pub first: Option<String>,
    pub hours_since_last: Option<f64>,
    pub performed: bool,
    pub pending: bool,
    pub hours_since_first: Option<f64>,
}

impl CategoricalLabFeatures {
    pub fn scalars(&self) -> [Option<f64>; 4] {
        [
            self.hours_since_last,
            Some(indicator(self.performed)),
            Some(indicator(self.pending)),
            self.hours_since_first,
        ]
    }
}

pub fn extract_categorical_lab_features(
    series: &[(Timestamp, &str)],
    pending: bool,
    t: Timestamp,
) -> CategoricalLabFeatures {
    let n = series.len();
    CategoricalLabFeatures {
        last: series.last().map(|p| p.1.to_string()),
        second_last: (n >= 2).then(|| series[n - 2].1.to_string()),
        first: series.first().map(|p| p.1.to_string()),
        hours_since_last: series.last().map(|p| t.hours_since(p.0)),
        performed: n > 0,
        pending,
        hours_since_first: series.first().map(|p| t.hours_since(p.0)),
    }
}

/// Medication features in [`MEDICATION_FEATURES`] order. The patient counts as
/// currently on the medication when an administration falls within the
/// trailing `on_window`.
pub fn extract_medication_features(
    admin_times: &[Timestamp],
    order_changes: &[Timestamp],
    t: Timestamp,
    on_window: Minutes,
) -> [Option<f64>; 4] {
    let last = admin_times.last();
    [
        Some(indicator(last.is_some_and(|&l| t - l < on_window))),
        admin_times.first().map(|&a| t.hours_since(a)),
        last.map(|&a| t.hours_since(a)),
        order_changes.last().map(|&c| t.hours_since(c)),
    ]
}

/// Order-change times implied by an administration history: the start of
/// each run of administrations (gap greater than `period`) and the moment a
/// run lapses (last administration + `period`), keeping only those at or
/// before `t`.
pub fn medication_order_changes(admin_times: &[Timestamp], t: Timestamp, period: Minutes) -> Vec<Timestamp> {
    let mut changes = Vec::new();
    let mut prev: Option<Timestamp> = None;
    for &a in admin_times.iter().filter(|&&a| a <= t) {
        match prev {
            None => changes.push(a),
            Some(p) if a - p > period => {
                changes.push(p + period);
                changes.push(a);
            }
            _ => {}
        }
        prev = Some(a);
    }
    if let Some(p) = prev {
        if p + period <= t {
            changes.push(p + period);
        }
    }
    changes
}

pub fn extract_procedure_features(proc_times: &[Timestamp], t: Timestamp) -> [Option<f64>; 3] {
    [
        Some(indicator(!proc_times.is_empty())),
        proc_times.first().map(|&p| t.hours_since(p)),
        proc_times.last().map(|&p| t.hours_since(p)),
    ]
}
