//! Independent reference implementations and fixtures shared by the
//! integration tests and the acceptance target.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use condalert::alert::alert_id;
use condalert::features::{FeatureCatalog, FeatureDescriptor, GroupSource};
use condalert::matrix::Matrix;
use condalert::pipeline::{self, PipelineConfig, Report};
use condalert::record::write_jsonl;
use condalert::synth::{generate_cohort, CohortSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Box-constrained QP `min 1/2 a'Qa - sum(a)`, `0 <= a_i <= upper_i`,
/// `Q_ij = y_i y_j (x_i.x_j + 1)`, solved by accelerated projected gradient
/// run far past the point where the objective stops moving.
pub fn qp_oracle(x: &Matrix, y: &[bool], upper: &[f64]) -> (Vec<f64>, f64) {
    let n = x.rows();
    let s: Vec<f64> = y.iter().map(|&v| if v { 1.0 } else { -1.0 }).collect();
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let k: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| a * b).sum::<f64>() + 1.0;
            q[i][j] = s[i] * s[j] * k;
        }
    }
    let obj = |a: &[f64]| -> f64 {
        let mut v = 0.0;
        for i in 0..n {
            for j in 0..n {
                v += 0.5 * a[i] * q[i][j] * a[j];
            }
            v -= a[i];
        }
        v
    };
    // Lipschitz bound: trace of a PSD matrix bounds its largest eigenvalue.
    let lip: f64 = (0..n).map(|i| q[i][i]).sum::<f64>().max(1e-12);
    let step = 1.0 / lip;
    let project = |v: f64, i: usize| v.clamp(0.0, upper[i]);
    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let grad: Vec<f64> = (0..n).map(|i| (0..n).map(|j| q[i][j] * z[j]).sum::<f64>() - 1.0).collect();
        let next: Vec<f64> = (0..n).map(|i| project(z[i] - step * grad[i], i)).collect();
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let momentum = (t - 1.0) / t_next;
        // restart when the objective goes up
        if obj(&next) > obj(&a) {
            t = 1.0;
            z = a.clone();
            continue;
        }
        z = (0..n).map(|i| next[i] + momentum * (next[i] - a[i])).collect();
        a = next;
        t = t_next;
    }
    let v = obj(&a);
    (a, v)
}

/// Random dataset of `n` points in `d` dimensions with labels from a noisy
/// hyperplane; both classes are always present.
pub fn random_svm_data(seed: u64, n: usize, d: usize) -> (Matrix, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let mut y: Vec<bool> = rows
        .iter()
        .map(|r| {
            let m: f64 = r.iter().zip(&w).map(|(a, b)| a * b).sum();
            let noise: f64 = rng.sample(StandardNormal);
            m + 0.7 * noise > 0.0
        })
        .collect();
    y[0] = true;
    y[1] = false;
    (Matrix::from_rows(&rows), y)
}

/// Pairwise definition of AUC: fraction of (positive, negative) pairs
/// ranked correctly, ties counted as half.
pub fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    num / pairs
}

/// Decision values uniform on [-2, 2] with labels drawn from
/// P(y=1|f) = 1 / (1 + exp(a f + b)).
pub fn platt_sample(seed: u64, n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y = f.iter().map(|&v| rng.random::<f64>() < 1.0 / (1.0 + (a * v + b).exp())).collect();
    (f, y)
}

/// Five three-column groups; only `INFORMATIVE_GROUP` carries the label,
/// which is a noiseless halfspace with a margin around the boundary.
pub const INFORMATIVE_GROUP: usize = 2;

pub fn selection_data(seed: u64) -> (Matrix, Vec<bool>, FeatureCatalog) {
    let (groups, width, n) = (5, 3, 300);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    while rows.len() < n {
        let r: Vec<f64> = (0..groups * width).map(|_| StandardNormal.sample(&mut rng)).collect();
        let g = &r[INFORMATIVE_GROUP * width..(INFORMATIVE_GROUP + 1) * width];
        let s = 2.0 * g[0] - g[1] + 0.5 * g[2];
        if s.abs() < 0.5 {
            continue;
        }
        y.push(s > 0.0);
        rows.push(r);
    }
    let catalog = FeatureCatalog {
        groups: (0..groups).map(|g| GroupSource::Lab(format!("G{g}"))).collect(),
        features: (0..groups * width)
            .map(|c| FeatureDescriptor { group: c / width, name: format!("f{c}"), units: String::new() })
            .collect(),
    };
    (Matrix::from_rows(&rows), y, catalog)
}

/// Artifacts and statistics of one generate -> train -> alert -> evaluate run.
pub struct DemoRun {
    pub report: Report,
    pub elapsed: Duration,
    pub n_models: usize,
    pub dir: PathBuf,
}

/// Runs the whole demo pipeline with `seed` driving both generation and
/// training, writing every stage's files under `dir`.
pub fn run_demo(seed: u64, dir: &Path) -> DemoRun {
    let start = Instant::now();
    let mut spec = CohortSpec::demo();
    spec.seed = seed;
    let cfg = PipelineConfig::demo();
    let (ds, truth) = generate_cohort(&spec).expect("demo spec generates");
    fs::create_dir_all(dir).unwrap();
    write_jsonl(&ds, BufWriter::new(fs::File::create(dir.join("cohort.jsonl")).unwrap())).unwrap();
    truth.write_csv(BufWriter::new(fs::File::create(dir.join("truth.csv")).unwrap())).unwrap();

    let trained = pipeline::train_pipeline(&ds, &cfg, seed).expect("demo cohort trains");
    let models = dir.join("models");
    pipeline::save_trained(&models, &trained).unwrap();
    let artifacts = pipeline::load_trained(&models).unwrap();
    let run = pipeline::run_alerts(&ds, &artifacts, &cfg, seed).unwrap();
    pipeline::write_alerts_file(&dir.join("alerts.csv"), &run.alerts).unwrap();

    let alerts: Vec<_> = run.alerts.iter().enumerate().map(|(i, a)| (alert_id(i), a.clone())).collect();
    let labels = pipeline::truth_labels(&alerts, &truth).unwrap();
    let report = pipeline::evaluate(&alerts, &labels, &cfg.evaluation).unwrap();
    pipeline::write_report(&dir.join("report"), &report, cfg.evaluation.bin_width).unwrap();
    DemoRun { report, elapsed: start.elapsed(), n_models: run.n_models_used, dir: dir.to_path_buf() }
}

/// Relative path to bytes for every file below `dir`.
pub fn tree_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, d: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
