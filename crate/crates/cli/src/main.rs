//! `condalert`: file-based driver for generating cohorts, training
//! per-action models, raising alerts and evaluating them.

mod manifest;

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use condalert::alert::write_alerts_jsonl;
use condalert::evaluation::{read_labels_csv, ReviewLabel};
use condalert::pipeline::{self, PipelineConfig, PipelineError, Report, DEMO_CONFIG};
use condalert::record::{parse_events, write_jsonl, CohortDataset, EventFormat};
use condalert::synth::{generate_cohort, simulated_reviews, CohortSpec, GroundTruth};
use condalert::time::Timestamp;

use manifest::RunManifest;

const EXIT_INPUT: u8 = 2;
const EXIT_NOTHING_TRAINABLE: u8 = 3;
const EXIT_SEVERITY: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "condalert", version, about = "Conditional outlier alerting over patient records")]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pipeline configuration (TOML). Defaults apply to keys it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a cohort with ground truth.
    Generate(GenerateArgs),
    /// Validate an event file and normalize it to JSONL.
    Ingest(IngestArgs),
    /// Train one calibrated model per action.
    Train(TrainArgs),
    /// Score the test split and write alerts.
    Alert(AlertArgs),
    /// Join alerts with labels and write the report.
    Evaluate(EvaluateArgs),
    /// Print a summary of a report directory.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Cohort spec (TOML, or JSON by extension). The bundled demo spec when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Format {
    Jsonl,
    Csv,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// Inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    cohort: PathBuf,
    /// Overrides the configured cutoff.
    #[arg(long, value_parser = parse_timestamp)]
    cutoff: Option<Timestamp>,
}

#[derive(Args, Debug)]
struct AlertArgs {
    #[arg(long)]
    cohort: PathBuf,
    /// Directory written by `train`.
    #[arg(long)]
    models: PathBuf,
    /// Exit with status 4 when any alert score exceeds this.
    #[arg(long)]
    severity_threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    alerts: PathBuf,
    /// Review labels: alert_id, reviewer_id, useful.
    #[arg(long, conflicts_with = "truth", required_unless_present = "truth")]
    labels: Option<PathBuf>,
    /// Ground truth written by `generate`; labels each alert by its slot.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// With --truth: simulate this many reviewers instead of using the truth directly.
    #[arg(long, requires = "truth")]
    reviewers: Option<usize>,
    /// Probability a simulated reviewer agrees with the truth.
    #[arg(long, default_value_t = 0.9, requires = "reviewers")]
    accuracy: f64,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory written by `evaluate`.
    #[arg(long)]
    report: PathBuf,
    /// Directory written by `train`; adds the model summary.
    #[arg(long)]
    models: Option<PathBuf>,
}

fn parse_timestamp(s: &str) -> Result<Timestamp, String> {
    Timestamp::parse(s).map_err(|e| e.to_string())
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { code: EXIT_INPUT, error: e.into() }
    }
}

fn pipeline_failure(e: PipelineError) -> Failure {
    let code = match e {
        PipelineError::NothingTrainable(_) => EXIT_NOTHING_TRAINABLE,
        _ => EXIT_INPUT,
    };
    Failure { code, error: e.into() }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(if cli.verbose { tracing::Level::INFO } else { tracing::Level::WARN })
        .init();
    let name = match &cli.command {
        Command::Generate(_) => "generate",
        Command::Ingest(_) => "ingest",
        Command::Train(_) => "train",
        Command::Alert(_) => "alert",
        Command::Evaluate(_) => "evaluate",
        Command::Report(_) => "report",
    };
    let mut m = RunManifest::start(name, cli.seed);
    let outcome = match &cli.command {
        Command::Generate(a) => generate(&cli, a, &mut m),
        Command::Ingest(a) => ingest(&cli, a, &mut m),
        Command::Train(a) => train(&cli, a, &mut m),
        Command::Alert(a) => alert(&cli, a, &mut m),
        Command::Evaluate(a) => evaluate(&cli, a, &mut m),
        Command::Report(a) => report(&cli, a, &mut m),
    };
    let code = match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    };
    if let Err(e) = m.finish(&cli.out, code as i32) {
        eprintln!("error: cannot write manifest: {e}");
        return ExitCode::from(EXIT_INPUT);
    }
    ExitCode::from(code)
}

fn load_config(cli: &Cli, m: &mut RunManifest) -> Result<PipelineConfig, Failure> {
    match &cli.config {
        Some(p) => {
            m.input(p);
            PipelineConfig::load(p).map_err(pipeline_failure)
        }
        None => Ok(PipelineConfig::default()),
    }
}

fn load_cohort(path: &Path, format: Option<Format>, m: &mut RunManifest) -> Result<CohortDataset, Failure> {
    let format = match format {
        Some(Format::Csv) => EventFormat::Csv,
        Some(Format::Jsonl) => EventFormat::Jsonl,
        None if path.extension().is_some_and(|e| e == "csv") => EventFormat::Csv,
        None => EventFormat::Jsonl,
    };
    let f = fs::File::open(path).with_context(|| format!("cannot open cohort {}", path.display()))?;
    m.input(path);
    let parsed = parse_events(BufReader::new(f), format).with_context(|| format!("{}", path.display()))?;
    if !parsed.rejected.is_empty() {
        tracing::warn!("{} lines rejected while reading {}", parsed.rejected.len(), path.display());
    }
    Ok(parsed.dataset)
}

fn create_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(())
}

fn generate(cli: &Cli, a: &GenerateArgs, m: &mut RunManifest) -> Outcome {
    let mut spec = match &a.spec {
        Some(p) => {
            m.input(p);
            CohortSpec::load(p)?
        }
        None => CohortSpec::demo(),
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    m.seed = Some(spec.seed);
    m.config_hash = condalert::digest(serde_json::to_string(&spec)?.as_bytes());
    spec.validate()?;
    let (ds, truth) = generate_cohort(&spec)?;
    create_out(&cli.out)?;
    let cohort = cli.out.join("cohort.jsonl");
    let mut w = BufWriter::new(fs::File::create(&cohort)?);
    write_jsonl(&ds, &mut w)?;
    w.flush()?;
    let truth_path = cli.out.join("truth.csv");
    truth.write_csv(BufWriter::new(fs::File::create(&truth_path)?))?;
    m.output(&cohort);
    m.output(&truth_path);
    if a.spec.is_none() {
        let cfg = cli.out.join("pipeline.toml");
        fs::write(&cfg, DEMO_CONFIG.trim_start())?;
        m.output(&cfg);
    }
    println!(
        "generated {} patients; injected fraction {:.4}",
        ds.len(),
        truth.injected_fraction().unwrap_or(0.0)
    );
    Ok(0)
}

fn ingest(cli: &Cli, a: &IngestArgs, m: &mut RunManifest) -> Outcome {
    let format = match a.format {
        Some(Format::Csv) => EventFormat::Csv,
        Some(Format::Jsonl) => EventFormat::Jsonl,
        None if a.input.extension().is_some_and(|e| e == "csv") => EventFormat::Csv,
        None => EventFormat::Jsonl,
    };
    let f = fs::File::open(&a.input).with_context(|| format!("cannot open {}", a.input.display()))?;
    m.input(&a.input);
    let parsed = parse_events(BufReader::new(f), format).with_context(|| format!("{}", a.input.display()))?;
    create_out(&cli.out)?;
    let cohort = cli.out.join("cohort.jsonl");
    let mut w = BufWriter::new(fs::File::create(&cohort)?);
    write_jsonl(&parsed.dataset, &mut w)?;
    w.flush()?;
    let rejected = cli.out.join("rejected.csv");
    let mut rw = csv::Writer::from_path(&rejected)?;
    rw.write_record(["line", "patient_id", "reason"])?;
    for r in &parsed.rejected {
        rw.write_record([r.line.to_string(), r.patient_id.clone().unwrap_or_default(), r.reason.clone()])?;
    }
    rw.flush()?;
    let channels = cli.out.join("channels.csv");
    let mut cw = csv::Writer::from_path(&channels)?;
    cw.write_record(["kind", "code", "patients"])?;
    for (key, n) in parsed.dataset.catalog.iter() {
        cw.write_record([key.kind.as_str(), key.code.as_str(), &n.to_string()])?;
    }
    cw.flush()?;
    for p in [&cohort, &rejected, &channels] {
        m.output(p);
    }
    println!(
        "{} patients, {} channels, {} rejected lines",
        parsed.dataset.len(),
        parsed.dataset.catalog.len(),
        parsed.rejected.len()
    );
    Ok(0)
}

fn train(cli: &Cli, a: &TrainArgs, m: &mut RunManifest) -> Outcome {
    let mut cfg = load_config(cli, m)?;
    if a.cutoff.is_some() {
        cfg.train.cutoff = a.cutoff;
    }
    let seed = cli.seed.unwrap_or(0);
    m.seed = Some(seed);
    m.config_hash = cfg.hash(seed);
    let ds = load_cohort(&a.cohort, None, m)?;
    let trained = pipeline::train_pipeline(&ds, &cfg, seed).map_err(pipeline_failure)?;
    pipeline::save_trained(&cli.out, &trained).map_err(pipeline_failure)?;
    let effective = cli.out.join("config.toml");
    fs::write(&effective, toml::to_string(&cfg)?)?;
    m.output(&cli.out);
    let mut stdout = std::io::stdout().lock();
    pipeline::write_summary_csv(&mut stdout, &trained.summaries)?;
    Ok(0)
}

/// `--config` when given, else the configuration saved by `train`, else defaults.
fn alert_config(cli: &Cli, models: &Path, m: &mut RunManifest) -> Result<PipelineConfig, Failure> {
    let saved = models.join("config.toml");
    if cli.config.is_none() && saved.exists() {
        m.input(&saved);
        return PipelineConfig::load(&saved).map_err(pipeline_failure);
    }
    load_config(cli, m)
}

fn alert(cli: &Cli, a: &AlertArgs, m: &mut RunManifest) -> Outcome {
    let mut cfg = alert_config(cli, &a.models, m)?;
    if a.severity_threshold.is_some() {
        cfg.alert.severity_threshold = a.severity_threshold;
    }
    let seed = cli.seed.unwrap_or(0);
    m.seed = Some(seed);
    m.config_hash = cfg.hash(seed);
    let ds = load_cohort(&a.cohort, None, m)?;
    let artifacts = pipeline::load_trained(&a.models).map_err(pipeline_failure)?;
    m.input(&a.models);
    let run = pipeline::run_alerts(&ds, &artifacts, &cfg, seed).map_err(pipeline_failure)?;
    for action in &run.rejected_models {
        tracing::warn!("model for {} is below the AUC gate", action.label());
    }
    create_out(&cli.out)?;
    let csv_path = cli.out.join("alerts.csv");
    pipeline::write_alerts_file(&csv_path, &run.alerts).map_err(pipeline_failure)?;
    let jsonl_path = cli.out.join("alerts.jsonl");
    let mut w = BufWriter::new(fs::File::create(&jsonl_path)?);
    write_alerts_jsonl(&mut w, &run.alerts)?;
    w.flush()?;
    m.output(&csv_path);
    m.output(&jsonl_path);
    println!(
        "{} alerts from {} candidates using {} models",
        run.alerts.len(),
        run.n_candidates,
        run.n_models_used
    );
    if let Some(t) = cfg.alert.severity_threshold {
        let severe = run.alerts.iter().filter(|x| x.alert_score > t).count();
        if severe > 0 {
            eprintln!("{severe} alerts exceed severity threshold {t}");
            return Ok(EXIT_SEVERITY);
        }
    }
    Ok(0)
}

fn evaluate(cli: &Cli, a: &EvaluateArgs, m: &mut RunManifest) -> Outcome {
    let cfg = load_config(cli, m)?;
    let seed = cli.seed.unwrap_or(0);
    m.seed = Some(seed);
    m.config_hash = cfg.hash(seed);
    let f = fs::File::open(&a.alerts).with_context(|| format!("cannot open alerts {}", a.alerts.display()))?;
    m.input(&a.alerts);
    let alerts = condalert::alert::read_alerts_csv(BufReader::new(f))?;
    let labels: Vec<ReviewLabel> = match (&a.labels, &a.truth) {
        (Some(p), _) => {
            let f = fs::File::open(p).with_context(|| format!("cannot open labels {}", p.display()))?;
            m.input(p);
            read_labels_csv(BufReader::new(f))?
        }
        (None, Some(p)) => {
            let f = fs::File::open(p).with_context(|| format!("cannot open truth {}", p.display()))?;
            m.input(p);
            let truth = GroundTruth::read_csv(BufReader::new(f))?;
            let labels = pipeline::truth_labels(&alerts, &truth).map_err(pipeline_failure)?;
            match a.reviewers {
                Some(n) => {
                    if !(0.0..=1.0).contains(&a.accuracy) {
                        return Err(anyhow!("--accuracy must lie in [0,1]").into());
                    }
                    let truth: Vec<(String, bool)> = labels.into_iter().map(|l| (l.alert_id, l.useful)).collect();
                    simulated_reviews(&truth, n, a.accuracy, seed)
                }
                None => labels,
            }
        }
        (None, None) => return Err(anyhow!("one of --labels or --truth is required").into()),
    };
    let report = pipeline::evaluate(&alerts, &labels, &cfg.evaluation).map_err(pipeline_failure)?;
    pipeline::write_report(&cli.out, &report, cfg.evaluation.bin_width).map_err(pipeline_failure)?;
    m.output(&cli.out);
    print!("{}", summarize(&report));
    Ok(0)
}

fn summarize(r: &Report) -> String {
    let mut s = format!("alerts {}  labelled {}  useful {}\n", r.n_alerts, r.n_labelled, r.n_useful);
    if let Some(roc) = &r.roc {
        s += &format!("roc auc {:.3} (se {:.3}, p {:.2e})\n", roc.auc, roc.standard_error, roc.p_value);
    }
    for b in &r.bins {
        let rate = b.true_alert_rate.map_or("-".to_string(), |v| format!("{v:.3}"));
        s += &format!("  [{:.2}, {:.2})  n={:<5} rate {}\n", b.lower, (b.lower + b.width).min(1.0), b.n_alerts, rate);
    }
    if let Some(f) = &r.fit {
        s += &format!("slope {:.3} (se {:.3}, p {:.2e}), intercept {:.3}\n", f.slope, f.slope_se, f.p_value, f.intercept);
    }
    for k in &r.kappa {
        s += &format!("kappa {}/{}: {:.3} over {}\n", k.reviewer_a, k.reviewer_b, k.kappa.value, k.shared_alerts);
    }
    for n in &r.notes {
        s += &format!("note: {n}\n");
    }
    s
}

fn report(cli: &Cli, a: &ReportArgs, m: &mut RunManifest) -> Outcome {
    let path = a.report.join("report.json");
    let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    m.input(&path);
    let r: Report = serde_json::from_str(&text).with_context(|| format!("{}", path.display()))?;
    let mut out = String::new();
    if let Some(models) = &a.models {
        let summary = models.join("summary.csv");
        let text = fs::read_to_string(&summary).with_context(|| format!("cannot read {}", summary.display()))?;
        m.input(&summary);
        out += &text;
        out.push('\n');
    }
    out += &summarize(&r);
    create_out(&cli.out)?;
    let dest = cli.out.join("summary.txt");
    fs::write(&dest, &out)?;
    m.output(&dest);
    print!("{out}");
    Ok(0)
}
