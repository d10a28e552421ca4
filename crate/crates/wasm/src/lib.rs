//! Browser bindings: workload summaries, small policy comparisons and a
//! per-file score calculator. Every call returns a JSON string.

use serde::Serialize;
use tiersim::classic::{exd_update, lrfu_update, ClassicConfig};
use tiersim::config::{run, RunConfig};
use tiersim::features::{features_from_history, FeatureConfig};
use tiersim::metrics::{bin_deltas, BinDelta};
use tiersim::sim::{PlacementMode, TierSpec};
use tiersim::workload::{generate, TraceEvent, TraceStats, WorkloadSpec};
use wasm_bindgen::prelude::*;

const HOUR: f64 = 3600.0;
const MAX_JOBS: usize = 3000;

fn spec(preset: &str, jobs: usize, hours: f64, seed: u64) -> Result<WorkloadSpec, String> {
    if jobs == 0 || jobs > MAX_JOBS {
        return Err(format!("jobs must be in 1..={MAX_JOBS}"));
    }
    if !(hours > 0.0 && hours <= 48.0) {
        return Err("hours must be in (0, 48]".into());
    }
    let base = WorkloadSpec::preset(preset).map_err(|e| e.to_string())?;
    Ok(WorkloadSpec { job_count: jobs, duration: hours * HOUR, seed, ..base })
}

fn trace(preset: &str, jobs: usize, hours: f64, seed: u64) -> Result<(Vec<TraceEvent>, WorkloadSpec), String> {
    let s = spec(preset, jobs, hours, seed)?;
    Ok((generate(&s).map_err(|e| e.to_string())?, s))
}

pub fn summarize(preset: &str, jobs: usize, hours: f64, seed: u64) -> Result<String, String> {
    let (events, s) = trace(preset, jobs, hours, seed)?;
    Ok(serde_json::to_string(&TraceStats::of(&events, s.size_scale)).expect("serializable"))
}

#[derive(Serialize)]
struct PolicyRow {
    policy: String,
    hr: Option<f64>,
    bhr: Option<f64>,
    bins: Vec<BinDelta>,
}

/// A cluster small enough that a few thousand jobs contend for memory.
fn demo_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.cluster.nodes = 4;
    cfg.cluster.memory = TierSpec { capacity_gb: 1.0, ..cfg.cluster.memory };
    cfg.cluster.ssd = TierSpec { capacity_gb: 8.0, ..cfg.cluster.ssd };
    cfg
}

/// `pairs` is comma-separated `down/up`; reductions are against all replicas
/// on HDD.
pub fn compare(preset: &str, jobs: usize, hours: f64, seed: u64, pairs: &str) -> Result<String, String> {
    let (events, s) = trace(preset, jobs, hours, seed)?;
    let mut base = demo_config();
    base.replay.size_scale = s.size_scale;
    base.cluster.seed = seed;
    base.xgb.seed = seed;
    let hdfs = RunConfig {
        downgrade: "none".into(),
        upgrade: "none".into(),
        cluster: tiersim::sim::ClusterConfig { placement: PlacementMode::HdfsAllHdd, ..base.cluster.clone() },
        ..base.clone()
    };
    let baseline = run(&events, &hdfs).map_err(|e| e.to_string())?.report;
    let mut rows = Vec::new();
    for pair in pairs.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (d, u) = pair.split_once('/').unwrap_or((pair, "none"));
        let cfg = RunConfig { downgrade: d.into(), upgrade: u.into(), ..base.clone() };
        let r = run(&events, &cfg).map_err(|e| e.to_string())?.report;
        rows.push(PolicyRow {
            policy: format!("{d}/{u}"),
            hr: r.hr_access,
            bhr: r.bhr_access,
            bins: bin_deltas(&baseline.bins, &r.bins).map_err(|e| e.to_string())?,
        });
    }
    Ok(serde_json::to_string(&rows).expect("serializable"))
}

#[derive(Serialize)]
struct Scores {
    features: Vec<f64>,
    lrfu: f64,
    exd: f64,
}

/// Model features and LRFU/EXD weights of one file with the given
/// comma-separated access times, all in seconds.
pub fn scores(size_mb: f64, created: f64, accesses: &str, t_ref: f64) -> Result<String, String> {
    let mut times = accesses
        .split(',')
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(|a| a.parse::<f64>().map_err(|_| format!("bad access time {a:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    times.sort_by(f64::total_cmp);
    if times.first().is_some_and(|&a| a < created) {
        return Err("access before creation".into());
    }
    let size = (size_mb.max(0.0) * 1024.0 * 1024.0) as u64;
    let features = features_from_history(size, created, &times, t_ref, &FeatureConfig::default()).map_err(|e| e.to_string())?;
    let cc = ClassicConfig::default();
    let (mut lrfu, mut exd, mut last) = (1.0, 1.0, created);
    for &a in times.iter().filter(|&&a| a < t_ref) {
        lrfu = lrfu_update(lrfu, a - last, cc.half_life);
        exd = exd_update(exd, a - last, cc.exd_alpha);
        last = a;
    }
    Ok(serde_json::to_string(&Scores { features, lrfu, exd }).expect("serializable"))
}

#[wasm_bindgen(js_name = workloadSummary)]
pub fn workload_summary(preset: &str, jobs: usize, hours: f64, seed: u64) -> Result<String, JsError> {
    summarize(preset, jobs, hours, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = comparePolicies)]
pub fn compare_policies(preset: &str, jobs: usize, hours: f64, seed: u64, pairs: &str) -> Result<String, JsError> {
    compare(preset, jobs, hours, seed, pairs).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = fileScores)]
pub fn file_scores(size_mb: f64, created: f64, accesses: &str, t_ref: f64) -> Result<String, JsError> {
    scores(size_mb, created, accesses, t_ref).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_is_json_with_requested_jobs() {
        let v: serde_json::Value = serde_json::from_str(&summarize("cmu", 120, 2.0, 1).unwrap()).unwrap();
        assert_eq!(v["jobs"], 120);
    }

    #[test]
    fn compare_returns_one_row_per_pair() {
        let v: serde_json::Value = serde_json::from_str(&compare("fb", 150, 1.0, 2, "lru/none, lfu/osa").unwrap()).unwrap();
        let rows = v.as_array().unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1]["policy"], "lfu/osa");
        assert_eq!(rows[0]["bins"].as_array().unwrap().len(), 6);
    }

    #[test]
    fn bad_inputs_are_errors() {
        assert!(summarize("fb", 0, 1.0, 0).is_err());
        assert!(summarize("nope", 10, 1.0, 0).is_err());
        assert!(compare("fb", 50, 1.0, 0, "mru").is_err());
        assert!(scores(1.0, 10.0, "5", 20.0).is_err());
        assert!(scores(1.0, 0.0, "x", 20.0).is_err());
    }

    #[test]
    fn two_quick_reads_weigh_more_than_one() {
        let parse = |s: &str| serde_json::from_str::<serde_json::Value>(s).unwrap();
        let one = parse(&scores(64.0, 0.0, "100", 200.0).unwrap());
        let two = parse(&scores(64.0, 0.0, "100,150", 200.0).unwrap());
        assert!(two["lrfu"].as_f64() > one["lrfu"].as_f64());
        assert!(two["exd"].as_f64() > one["exd"].as_f64());
        assert_eq!(two["features"].as_array().unwrap().len(), 15);
    }
}
