mod common;

use condalert::alert::{filter_candidates, AlertCandidate, AlertPipelineConfig, AlertType};
use condalert::evaluation::{
    binned_true_alert_rate, cohen_kappa, majority_gold_standard, score_histogram, ReviewLabel,
};
use condalert::features::{segment_times, ActionDescriptor, ActionKind, SegmentConfig};
use condalert::learner::{auc, solve, PlattCalibration, TrainConfig};
use condalert::time::{Minutes, Timestamp};
use proptest::prelude::*;

fn labelled_scores() -> impl Strategy<Value = Vec<(f64, bool)>> {
    prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..200)
}

fn candidate(pid: usize, minute: i64, code: &str, prev: f64, curr: f64) -> AlertCandidate {
    AlertCandidate {
        patient_id: format!("P{pid}"),
        time: Timestamp::from_minutes(minute),
        action: ActionDescriptor::new(ActionKind::MedicationGiven, code),
        observed: true,
        anom_prev: prev,
        anom_curr: curr,
        alert_score: prev.min(curr),
        alert_type: AlertType::MedCommission,
    }
}

proptest! {
    #[test]
    fn auc_matches_pair_counting(data in prop::collection::vec((0u8..6, any::<bool>()), 2..80)) {
        let scores: Vec<f64> = data.iter().map(|d| d.0 as f64).collect();
        let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let a = auc(&scores, &labels).unwrap();
        prop_assert!((a - common::brute_auc(&scores, &labels)).abs() < 1e-12);
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((a + auc(&negated, &labels).unwrap() - 1.0).abs() < 1e-12);
        let squashed: Vec<f64> = scores.iter().map(|s| (s * 0.3).tanh()).collect();
        prop_assert_eq!(a, auc(&squashed, &labels).unwrap());
    }

    #[test]
    fn platt_probability_is_a_monotone_probability(a in -5.0f64..-0.01, b in -3.0f64..3.0, f1 in -50.0f64..50.0, f2 in -50.0f64..50.0) {
        let p = PlattCalibration { a, b };
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        prop_assert!((0.0..=1.0).contains(&p.probability(lo)));
        prop_assert!(p.probability(lo) <= p.probability(hi));
    }

    #[test]
    fn bins_partition_the_alerts(alerts in labelled_scores(), width in prop::sample::select(vec![0.1, 0.2, 0.25, 0.3, 0.5])) {
        let bins = binned_true_alert_rate(&alerts, width);
        prop_assert_eq!(bins.iter().map(|b| b.n_alerts).sum::<usize>(), alerts.len());
        prop_assert_eq!(bins.iter().map(|b| b.n_useful).sum::<usize>(), alerts.iter().filter(|a| a.1).count());
        for b in &bins {
            match b.true_alert_rate {
                Some(r) => prop_assert!((r - b.n_useful as f64 / b.n_alerts as f64).abs() < 1e-12),
                None => prop_assert_eq!(b.n_alerts, 0),
            }
        }
        let scores: Vec<f64> = alerts.iter().map(|a| a.0).collect();
        let hist = score_histogram(&scores, width);
        prop_assert_eq!(hist, bins.iter().map(|b| b.n_alerts).collect::<Vec<_>>());
    }

    #[test]
    fn majority_rule(votes in prop::collection::vec(prop::collection::vec(any::<bool>(), 1..4), 1..30)) {
        let mut labels = Vec::new();
        for (i, v) in votes.iter().enumerate() {
            // pad to an odd count
            let mut v = v.clone();
            if v.len() % 2 == 0 {
                v.push(false);
            }
            for (r, &useful) in v.iter().enumerate() {
                labels.push(ReviewLabel { alert_id: format!("A{i:03}"), reviewer_id: format!("R{r}"), useful });
            }
        }
        let gold = majority_gold_standard(&labels).unwrap();
        prop_assert_eq!(gold.len(), votes.len());
        for g in gold {
            prop_assert_eq!(g.useful, 2 * g.useful_votes > g.total_votes);
            prop_assert_eq!(g.total_votes % 2, 1);
        }
    }

    #[test]
    fn kappa_is_symmetric_and_bounded(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
        let a: Vec<bool> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let ab = cohen_kappa(&a, &b).unwrap();
        let ba = cohen_kappa(&b, &a).unwrap();
        prop_assert!((ab.value - ba.value).abs() < 1e-12);
        prop_assert!(ab.value <= 1.0 + 1e-12 && ab.value >= -1.0 - 1e-12);
        prop_assert_eq!(cohen_kappa(&a, &a).unwrap().value, 1.0);
    }

    #[test]
    fn filtered_alerts_respect_caps(
        raw in prop::collection::vec((0usize..20, 0i64..5000, 0usize..3, 0.0f64..1.0, 0.0f64..1.0), 0..150),
        anomaly_cap in 1usize..40,
        alert_cap in 1usize..20,
        threshold in 0.0f64..0.5,
    ) {
        let codes = ["A", "B", "C"];
        let cands: Vec<AlertCandidate> =
            raw.iter().map(|&(p, m, c, a, b)| candidate(p, m, codes[c], a, b)).collect();
        let cfg = AlertPipelineConfig { anomaly_cap, alert_cap, alert_threshold: threshold, ..Default::default() };
        let out = filter_candidates(&cands, &cfg);
        for code in codes {
            let kept: Vec<&AlertCandidate> = out.iter().filter(|c| c.action.code == code).collect();
            prop_assert!(kept.len() <= alert_cap.min(anomaly_cap));
            prop_assert!(kept.windows(2).all(|w| w[0].alert_score >= w[1].alert_score));
        }
        for c in &out {
            prop_assert!(c.alert_score >= threshold);
            prop_assert_eq!(c.alert_score, c.anom_prev.min(c.anom_curr));
            prop_assert!(cands.contains(c));
        }
    }

    #[test]
    fn segment_cuts_are_periodic_and_inside_the_stay(start in 0i64..100_000, len in 0i64..20_000, anchor in 0i64..1440) {
        let cfg = SegmentConfig { anchor_minute: anchor, period_minutes: 1440 };
        let (adm, dis) = (Timestamp::from_minutes(start), Timestamp::from_minutes(start + len));
        let cuts = segment_times(adm, dis, &cfg);
        for c in &cuts {
            prop_assert!(adm < *c && *c < dis);
            prop_assert_eq!(c.minute_of_day(), anchor);
        }
        for w in cuts.windows(2) {
            prop_assert_eq!(w[1] - w[0], Minutes(1440));
        }
        // no cut missed before the first one
        if let Some(&first) = cuts.first() {
            prop_assert!(first - Minutes(1440) <= adm);
        }
    }

    #[test]
    fn timestamps_round_trip(m in 0i64..20_000_000) {
        let t = Timestamp::from_minutes(m);
        prop_assert_eq!(Timestamp::parse(&t.to_string()).unwrap(), t);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solver_meets_optimality_conditions(seed in 0u64..10_000, n in 4usize..40, d in 1usize..5, c in prop::sample::select(vec![0.1, 1.0, 5.0])) {
        let (x, y) = common::random_svm_data(seed, n, d);
        let cfg = TrainConfig { c, tolerance: 1e-8, max_iterations: 100_000, ..Default::default() };
        let sol = solve(&x, &y, &cfg).unwrap();
        prop_assert!(sol.report.converged);
        prop_assert!(sol.report.primal >= sol.report.dual - 1e-9);
        prop_assert!(condalert::learner::kkt_residual(&x, &y, &sol) <= 1e-3);
        for (a, u) in sol.alpha.iter().zip(&sol.upper) {
            prop_assert!(*a >= 0.0 && *a <= *u);
        }
    }
}
