//! `tiersim`: generate traces, replay them under a policy, compare
//! policies against a baseline and study the model's prediction quality.

mod error;
mod out;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tiersim::config::{run, RunConfig};
use tiersim::metrics::{bin_deltas, RunReport};
use tiersim::sim::PlacementMode;
use tiersim::study::{
    ablation, accuracy_over_time, hindsight_points, split_evaluation, Learner, StudyConfig, StudyMode, SwitchResponse,
};
use tiersim::workload::{concat, generate, read_trace, write_trace, TraceEvent, TraceStats, WorkloadSpec};

use crate::error::CliError;
use crate::out::{fingerprint, opt, OutDir};

const HOUR: f64 = 3600.0;

#[derive(Parser)]
#[command(name = "tiersim", version, about = "Tiered storage simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace from a preset or a workload spec file.
    Generate(GenerateArgs),
    /// Replay a trace under one downgrade/upgrade pair.
    Run(RunArgs),
    /// Replay a trace under several pairs and a baseline, concurrently.
    Compare(CompareArgs),
    /// Hindsight-labelled prediction study of the tree model.
    ModelStudy(StudyArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Built-in workload: fb or cmu.
    #[arg(long, default_value = "fb", conflicts_with = "spec")]
    preset: String,
    /// Workload spec in TOML.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    hours: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct ReplayArgs {
    /// Trace in JSON Lines.
    #[arg(long)]
    trace: PathBuf,
    /// Run config in TOML: cluster, thresholds and policy parameters.
    #[arg(long)]
    cluster: Option<PathBuf>,
    /// Seeds the cluster's replica draws and the model.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    tier_aware: Option<bool>,
    /// Seconds; earlier events are not counted.
    #[arg(long)]
    measure_from: Option<f64>,
    /// Stored-to-nominal size ratio. Defaults to the value recorded next to
    /// the trace by `generate`, then to the config.
    #[arg(long)]
    size_scale: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    replay: ReplayArgs,
    #[arg(long)]
    down: Option<String>,
    #[arg(long)]
    up: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    replay: ReplayArgs,
    /// Comma-separated downgrade policies.
    #[arg(long, value_delimiter = ',', required = true)]
    down: Vec<String>,
    /// Comma-separated upgrade policies, one per downgrade policy or a
    /// single one for all.
    #[arg(long, value_delimiter = ',', default_value = "none")]
    up: Vec<String>,
    /// `hdfs` for all replicas on HDD without policies, or `down/up`.
    #[arg(long, default_value = "hdfs")]
    baseline: String,
}

#[derive(Args)]
struct StudyArgs {
    /// incremental, oneshot, retrain, mix or ablation.
    #[arg(long, default_value = "incremental")]
    mode: String,
    /// Study a trace file instead of a generated one.
    #[arg(long, conflicts_with = "preset")]
    trace: Option<PathBuf>,
    #[arg(long, default_value = "fb")]
    preset: String,
    /// Workload appended in mix mode.
    #[arg(long, default_value = "cmu")]
    switch_to: String,
    #[arg(long)]
    hours: Option<f64>,
    /// Label window in seconds.
    #[arg(long)]
    window: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct TraceInfo {
    path: PathBuf,
    fingerprint: String,
    events: usize,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<TraceInfo>,
    config: C,
}

fn manifest<C: Serialize>(dir: &OutDir, command: &str, seed: u64, trace: Option<TraceInfo>, config: C) -> Result<(), CliError> {
    let m = Manifest { command, version: env!("CARGO_PKG_VERSION"), seed, trace, config };
    dir.json("manifest.json", &m)
}

fn load_events(path: &Path) -> Result<(Vec<TraceEvent>, TraceInfo), CliError> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    let events = read_trace(bytes.as_slice()).map_err(|source| CliError::Trace { path: path.into(), source })?;
    let info = TraceInfo { path: path.into(), fingerprint: fingerprint(&bytes), events: events.len() };
    Ok((events, info))
}

/// `size_scale` from the manifest `generate` leaves beside a trace.
fn sibling_size_scale(trace: &Path) -> Option<f64> {
    let m = trace.parent()?.join("manifest.json");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(m).ok()?).ok()?;
    v.get("config")?.get("size_scale")?.as_f64()
}

fn base_config(a: &ReplayArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &a.cluster {
        Some(p) => RunConfig::from_toml(&std::fs::read_to_string(p).map_err(CliError::io(p))?)?,
        None => RunConfig::default(),
    };
    cfg.cluster.seed = a.seed;
    cfg.xgb.seed = a.seed;
    if let Some(t) = a.tier_aware {
        cfg.cluster.tier_aware = t;
    }
    if let Some(m) = a.measure_from {
        cfg.replay.measure_from = m;
    }
    if let Some(s) = a.size_scale.or_else(|| sibling_size_scale(&a.trace)) {
        cfg.replay.size_scale = s;
    }
    Ok(cfg)
}

fn cmd_generate(a: GenerateArgs) -> Result<(), CliError> {
    let mut spec = match &a.spec {
        Some(p) => WorkloadSpec::from_toml(&std::fs::read_to_string(p).map_err(CliError::io(p))?)?,
        None => WorkloadSpec::preset(&a.preset)?,
    };
    spec.seed = a.seed;
    if let Some(j) = a.jobs {
        spec.job_count = j;
    }
    if let Some(h) = a.hours {
        spec.duration = h * HOUR;
    }
    spec.validate()?;
    let events = generate(&spec)?;
    let dir = OutDir::create(&a.out)?;
    let mut body = Vec::new();
    write_trace(&events, &mut body).map_err(|source| CliError::Trace { path: dir.path("trace.jsonl"), source })?;
    let trace_path = dir.path("trace.jsonl");
    std::fs::write(&trace_path, &body).map_err(CliError::io(&trace_path))?;
    dir.json("stats.json", &TraceStats::of(&events, spec.size_scale))?;
    let info = TraceInfo { path: trace_path, fingerprint: fingerprint(&body), events: events.len() };
    manifest(&dir, "generate", a.seed, Some(info), &spec)
}

fn cmd_run(a: RunArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&a.replay)?;
    if let Some(d) = a.down {
        cfg.downgrade = d;
    }
    if let Some(u) = a.up {
        cfg.upgrade = u;
    }
    cfg.validate()?;
    let (events, info) = load_events(&a.replay.trace)?;
    let output = run(&events, &cfg)?;
    let dir = OutDir::create(&a.replay.out)?;
    dir.json("report.json", &output.report)?;
    dir.text("report.csv", &output.report.to_csv())?;
    dir.jsonl("accesses.jsonl", &output.accesses)?;
    dir.jsonl("jobs.jsonl", &output.jobs)?;
    dir.jsonl("moves.jsonl", &output.moves)?;
    dir.jsonl("warnings.jsonl", &output.warnings)?;
    manifest(&dir, "run", a.replay.seed, Some(info), &cfg)
}

fn pair_name(cfg: &RunConfig) -> String {
    if cfg.cluster.placement == PlacementMode::HdfsAllHdd && cfg.downgrade == "none" && cfg.upgrade == "none" {
        "hdfs".into()
    } else {
        format!("{}/{}", cfg.downgrade, cfg.upgrade)
    }
}

fn with_pair(base: &RunConfig, spec: &str) -> Result<RunConfig, CliError> {
    let mut cfg = base.clone();
    if spec == "hdfs" {
        cfg.cluster.placement = PlacementMode::HdfsAllHdd;
        cfg.downgrade = "none".into();
        cfg.upgrade = "none".into();
    } else {
        let (d, u) = spec.split_once('/').unwrap_or((spec, "none"));
        cfg.downgrade = d.into();
        cfg.upgrade = u.into();
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct CompareConfig<'a> {
    baseline: &'a RunConfig,
    candidates: &'a [RunConfig],
}

fn cmd_compare(a: CompareArgs) -> Result<(), CliError> {
    let base = base_config(&a.replay)?;
    if a.up.len() != 1 && a.up.len() != a.down.len() {
        return Err(CliError::Usage(format!("{} upgrade policies for {} downgrade policies", a.up.len(), a.down.len())));
    }
    let baseline = with_pair(&base, &a.baseline)?;
    let candidates = a
        .down
        .iter()
        .enumerate()
        .map(|(i, d)| with_pair(&base, &format!("{d}/{}", a.up[if a.up.len() == 1 { 0 } else { i }])))
        .collect::<Result<Vec<_>, _>>()?;
    let (events, info) = load_events(&a.replay.trace)?;

    let all: Vec<&RunConfig> = std::iter::once(&baseline).chain(&candidates).collect();
    let reports: Vec<RunReport> = std::thread::scope(|s| {
        let handles: Vec<_> = all.iter().map(|c| s.spawn(|| run(&events, c).map(|o| o.report))).collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect::<Result<Vec<_>, _>>()
    })?;

    let dir = OutDir::create(&a.replay.out)?;
    let mut rows: Vec<(String, &RunReport)> = all.iter().map(|c| pair_name(c)).zip(&reports).collect();
    let (base_name, base_report) = rows.remove(0);
    rows.sort_by(|x, y| x.0.cmp(&y.0));

    let mut deltas = String::from("policy,bin,jobs,completion_reduction_pct,machine_time_reduction_pct\n");
    let mut summary = String::from("policy,hr_access,hr_location,bhr_access,bhr_location,bac,bco,warnings\n");
    let mut summarize = |name: &str, r: &RunReport| {
        summary.push_str(&format!(
            "{name},{},{},{},{},{},{},{}\n",
            opt(r.hr_access),
            opt(r.hr_location),
            opt(r.bhr_access),
            opt(r.bhr_location),
            opt(r.bac),
            r.bco,
            r.warnings
        ));
    };
    summarize(&base_name, base_report);
    dir.json(&format!("reports/{}.json", base_name.replace('/', "+")), base_report)?;
    for (name, r) in &rows {
        summarize(name, r);
        dir.json(&format!("reports/{}.json", name.replace('/', "+")), r)?;
        for (d, b) in bin_deltas(&base_report.bins, &r.bins)?.iter().zip(&r.bins) {
            deltas.push_str(&format!(
                "{name},{},{},{},{}\n",
                d.bin.label(),
                b.jobs,
                opt(d.completion_reduction_pct),
                opt(d.machine_time_reduction_pct)
            ));
        }
    }
    dir.text("deltas.csv", &deltas)?;
    dir.text("summary.csv", &summary)?;
    manifest(&dir, "compare", a.replay.seed, Some(info), CompareConfig { baseline: &baseline, candidates: &candidates })
}

#[derive(Serialize)]
struct StudySettings<'a> {
    mode: StudyMode,
    hours: usize,
    split_hours: (f64, f64, f64),
    study: &'a StudyConfig,
    workloads: Vec<WorkloadSpec>,
}

fn preset_trace(name: &str, seed: u64, hours: Option<f64>) -> Result<(Vec<TraceEvent>, WorkloadSpec), CliError> {
    let mut spec = WorkloadSpec::preset(name)?;
    spec.seed = seed;
    if let Some(h) = hours {
        spec.job_count = (spec.job_count as f64 * h * HOUR / spec.duration).round().max(1.0) as usize;
        spec.duration = h * HOUR;
    }
    Ok((generate(&spec)?, spec))
}

fn roc_rows(set: &str, q: &tiersim::study::Quality, csv: &mut String) {
    for p in q.roc.iter().flat_map(|r| &r.points) {
        csv.push_str(&format!("{set},{},{},{}\n", p.threshold, p.fpr, p.tpr));
    }
}

fn accuracy_csv(rows: &[tiersim::study::HourAccuracy]) -> String {
    let mut csv = String::from("learner,hour,points,positives,accuracy\n");
    for r in rows {
        let learner = serde_json::to_value(r.learner).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        csv.push_str(&format!("{learner},{},{},{},{}\n", r.hour, r.points, r.positives, opt(r.accuracy)));
    }
    csv
}

fn cmd_model_study(a: StudyArgs) -> Result<(), CliError> {
    let mode: StudyMode = a.mode.parse()?;
    let mut cfg = StudyConfig { seed: a.seed, ..StudyConfig::default() };
    if let Some(w) = a.window {
        cfg.window = w;
    }
    let mut workloads = Vec::new();
    let mut trace_info = None;
    let events = match (&a.trace, mode) {
        (Some(p), _) => {
            let (ev, info) = load_events(p)?;
            trace_info = Some(info);
            ev
        }
        (None, StudyMode::Mix) => {
            let (first, s1) = preset_trace(&a.preset, a.seed, a.hours.map(|h| h / 2.0))?;
            let (second, s2) = preset_trace(&a.switch_to, a.seed.wrapping_add(1), a.hours.map(|h| h / 2.0))?;
            let offset = s1.duration;
            workloads = vec![s1, s2];
            concat(&first, &second, offset)
        }
        (None, _) => {
            let (ev, spec) = preset_trace(&a.preset, a.seed, a.hours)?;
            workloads.push(spec);
            ev
        }
    };
    let span = match (a.hours, &workloads[..]) {
        (Some(h), _) => h * HOUR,
        (None, []) => (events.last().map_or(0.0, |e| e.t) / HOUR).ceil() * HOUR,
        (None, specs) => specs.iter().map(|s| s.duration).sum(),
    };
    let hours = (span / HOUR).round() as usize;
    if hours == 0 {
        return Err(CliError::Usage("study needs at least one hour of trace".into()));
    }
    let split = (span * 4.0 / 6.0, span * 5.0 / 6.0, span);
    let dir = OutDir::create(&a.out)?;
    let mut roc = String::from("set,threshold,fpr,tpr\n");

    match mode {
        StudyMode::Incremental | StudyMode::Oneshot | StudyMode::Retrain => {
            let learner = match mode {
                StudyMode::Incremental => Learner::Incremental,
                StudyMode::Oneshot => Learner::Oneshot,
                _ => Learner::Retrain,
            };
            let pts = hindsight_points(&events, span, &cfg);
            dir.text("accuracy.csv", &accuracy_csv(&accuracy_over_time(&pts, learner, hours, &cfg)?))?;
            let mut eval = split_evaluation(&pts, &cfg, split.0, split.1, split.2)?;
            roc_rows("test", &eval.test, &mut roc);
            eval.validation.roc = None;
            eval.test.roc = None;
            dir.json("split.json", &eval)?;
        }
        StudyMode::Mix => {
            let pts = hindsight_points(&events, span, &cfg);
            let mut rows = Vec::new();
            for l in [Learner::Incremental, Learner::Oneshot, Learner::Retrain] {
                rows.extend(accuracy_over_time(&pts, l, hours, &cfg)?);
            }
            dir.text("accuracy.csv", &accuracy_csv(&rows))?;
            let inc: Vec<_> = rows.iter().filter(|r| r.learner == Learner::Incremental).cloned().collect();
            let switch_hour = workloads.first().map_or(hours / 2, |s| (s.duration / HOUR).round() as usize);
            dir.json("switch.json", &SwitchResponse::from_hours(&inc, switch_hour))?;
        }
        StudyMode::Ablation => {
            let mut csv = String::from("variant,train_points,validation_accuracy,validation_auc,test_accuracy,test_auc\n");
            for r in ablation(&events, &cfg, split)? {
                let (v, t) = (&r.evaluation.validation, &r.evaluation.test);
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.variant,
                    r.evaluation.train_points,
                    v.accuracy,
                    opt(v.auc),
                    t.accuracy,
                    opt(t.auc)
                ));
                roc_rows(&r.variant, t, &mut roc);
            }
            dir.text("ablation.csv", &csv)?;
        }
    }
    dir.text("roc.csv", &roc)?;
    let settings = StudySettings {
        mode,
        hours,
        split_hours: (split.0 / HOUR, split.1 / HOUR, split.2 / HOUR),
        study: &cfg,
        workloads,
    };
    manifest(&dir, "model-study", a.seed, trace_info, settings)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            let err = CliError::Usage(first);
            eprintln!("{}", err.to_line());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::ModelStudy(a) => cmd_model_study(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
