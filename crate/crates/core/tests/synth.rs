use condalert::features::{ActionDescriptor, ActionKind};
use condalert::pipeline::{train_pipeline, PipelineConfig};
use condalert::record::{ChannelKind, EventValue};
use condalert::synth::{generate_cohort, inject_anomalies, CohortSpec};

fn last_value(events: &[condalert::record::RawEvent], code: &str, t: condalert::time::Timestamp) -> Option<f64> {
    events.iter().rev().filter(|e| e.kind == ChannelKind::Lab && e.code == code && e.timestamp <= t).find_map(|e| {
        match e.value {
            Some(EventValue::Numeric(v)) => Some(v),
            _ => None,
        }
    })
}

#[test]
fn demo_injection_rate_is_within_binomial_bound() {
    let spec = CohortSpec::demo();
    assert_eq!((spec.n_patients, spec.labs.len(), spec.medications.len(), spec.rules.len()), (500, 10, 5, 3));
    let (_, truth) = generate_cohort(&spec).unwrap();
    let eligible = truth.rows.iter().filter(|r| r.eligible).count() as f64;
    let rho = spec.injection_rate;
    let observed = truth.injected_fraction().unwrap();
    // four standard errors of a binomial proportion at the realized slot count
    let band = 4.0 * (rho * (1.0 - rho) / eligible).sqrt();
    assert!(band < 0.01, "slot count {eligible} too small for the fixed band");
    assert!((observed - rho).abs() <= band, "observed {observed} vs {rho} +- {band}");
    assert!((0.04..=0.06).contains(&observed));
}

#[test]
fn deterministic_rules_are_followed_without_injection() {
    let mut spec = CohortSpec::demo();
    spec.n_patients = 120;
    spec.injection_rate = 0.0;
    for r in &mut spec.rules {
        r.firing_probability = 1.0;
    }
    for m in &mut spec.medications {
        if m.code == "INS" {
            m.daily_probability = 0.0;
        }
    }
    let (ds, truth) = generate_cohort(&spec).unwrap();
    let ins = ActionDescriptor::new(ActionKind::MedicationGiven, "INS");
    let mut fired = 0;
    for row in truth.rows.iter().filter(|r| r.action == ins) {
        assert!(!row.injected);
        assert_eq!(row.executed, row.intended);
        let rec = ds.records.iter().find(|p| p.patient_id == row.patient_id).unwrap();
        let high = last_value(&rec.events, "GLU", row.time).is_some_and(|v| v > 180.0);
        assert_eq!(row.executed, high, "{} at {}", row.patient_id, row.time);
        fired += high as usize;
    }
    assert!(fired > 20, "rule fired only {fired} times");
}

#[test]
fn injection_toggles_exactly_the_drawn_slots() {
    let mut spec = CohortSpec::demo();
    spec.n_patients = 60;
    spec.injection_rate = 0.0;
    let (ds, truth) = generate_cohort(&spec).unwrap();
    let (ds2, truth2) = inject_anomalies(&ds, &truth, 0.2, 11).unwrap();
    let flipped = truth.rows.iter().zip(&truth2.rows).filter(|(a, b)| a.executed != b.executed).count();
    let injected = truth2.rows.iter().filter(|r| r.injected).count();
    assert_eq!(flipped, injected);
    assert!(flipped > 0);
    assert_ne!(ds, ds2);
    assert!(inject_anomalies(&ds, &truth, 1.0, 11).is_err());
}

#[test]
fn rule_governed_actions_are_learnable_without_injection() {
    let mut spec = CohortSpec::demo();
    spec.injection_rate = 0.0;
    let (ds, _) = generate_cohort(&spec).unwrap();
    let trained = train_pipeline(&ds, &PipelineConfig::demo(), 1).unwrap();
    let targets: Vec<&ActionDescriptor> = spec.rules.iter().map(|r| &r.action).collect();
    let best = trained
        .summaries
        .iter()
        .filter(|s| targets.contains(&&s.action))
        .filter_map(|s| s.cv_auc)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(best >= 0.9, "best rule-governed CV AUC {best}");
}
