//! Drives a trace through the cluster and the replication manager.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{validate_trace, EventKind, TraceEvent};
use crate::metrics::{AccessRecord, Bin, JobRecord, RunLabel, RunReport};
use crate::policy::{MoveRecord, ReplicationManager, Warning};
use crate::sim::{Cluster, FileMeta, SimError};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("malformed trace at event {index}: {reason}")]
    MalformedTrace { index: usize, reason: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayOptions {
    /// Period of the manager's tick (training sweeps, periodic upgrades).
    pub tick_interval: f64,
    /// Reads, jobs and moves before this time are excluded from the report.
    pub measure_from: f64,
    /// Stored-to-nominal size ratio of the trace, for binning jobs.
    pub size_scale: f64,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        ReplayOptions { tick_interval: 60.0, measure_from: 0.0, size_scale: 1.0 }
    }
}

/// Report plus the raw logs it was computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub report: RunReport,
    pub label: RunLabel,
    pub accesses: Vec<AccessRecord>,
    pub jobs: Vec<JobRecord>,
    pub moves: Vec<MoveRecord>,
    pub warnings: Vec<Warning>,
}

impl RunOutput {
    /// Recomputes the report from the stored logs.
    pub fn recompute(&self) -> RunReport {
        RunReport::from_logs(
            &self.label,
            &self.accesses,
            &self.jobs,
            &self.moves,
            self.warnings.len(),
            self.report.diagnostics.clone(),
        )
    }
}

struct OpenJob {
    start: f64,
    cpu: f64,
    input: u64,
    io_max: f64,
    io_sum: f64,
}

pub fn replay(
    events: &[TraceEvent],
    cluster: &mut Cluster,
    manager: &mut ReplicationManager,
    opts: &ReplayOptions,
) -> Result<RunOutput, ReplayError> {
    validate_trace(events).map_err(|(index, reason)| ReplayError::MalformedTrace { index, reason })?;
    let cfg = cluster.config().clone();
    let mut accesses = Vec::new();
    let mut jobs: BTreeMap<u64, OpenJob> = BTreeMap::new();
    let mut next_tick = opts.tick_interval;

    for e in events {
        while opts.tick_interval > 0.0 && next_tick <= e.t {
            manager.tick(cluster, next_tick)?;
            next_tick += opts.tick_interval;
        }
        let file = e.file.unwrap_or_default();
        match e.kind {
            EventKind::JobStart => {
                let job = OpenJob { start: e.t, cpu: e.cpu.unwrap_or(0.0), input: 0, io_max: 0.0, io_sum: 0.0 };
                jobs.insert(e.job.unwrap_or_default(), job);
            }
            EventKind::Create => {
                let meta = FileMeta::new(file, e.size.unwrap_or_default(), e.t, cfg.history_k);
                manager.create_file(cluster, meta, cfg.replication, cfg.placement)?;
            }
            EventKind::Read => {
                let bytes = cluster.file(file).map(|m| m.size).ok_or(SimError::UnknownFile(file))?;
                let out = cluster.read_file(file, e.t, cfg.tier_aware)?;
                if let Some(j) = e.job.and_then(|j| jobs.get_mut(&j)) {
                    j.input += bytes;
                    j.io_max = j.io_max.max(out.service_time);
                    j.io_sum += out.service_time;
                }
                accesses.push(AccessRecord {
                    t: e.t,
                    file,
                    job: e.job,
                    bytes,
                    served: out.served.tier,
                    best: out.best_tier,
                    bin: Bin::of_scaled(bytes, opts.size_scale),
                    service_time: out.service_time,
                });
                manager.on_access(cluster, file, e.t);
                manager.run_upgrade(cluster, Some(file), e.t)?;
            }
            EventKind::Delete => manager.delete_file(cluster, file, e.t)?,
        }
    }

    let jobs: Vec<JobRecord> = jobs
        .into_iter()
        .map(|(id, j)| JobRecord {
            job: id,
            start: j.start,
            bin: Bin::of_scaled(j.input, opts.size_scale),
            input_bytes: j.input,
            io_time: j.io_max,
            io_total: j.io_sum,
            cpu_time: j.cpu,
        })
        .collect();
    let job_bin: BTreeMap<u64, Bin> = jobs.iter().map(|j| (j.job, j.bin)).collect();
    for a in &mut accesses {
        if let Some(b) = a.job.and_then(|j| job_bin.get(&j)) {
            a.bin = *b;
        }
    }
    let label = RunLabel {
        downgrade: manager.downgrade_name().to_string(),
        upgrade: manager.upgrade_name().to_string(),
        tier_aware: cfg.tier_aware,
        measure_from: opts.measure_from,
    };
    let moves = manager.moves().to_vec();
    let warnings = manager.warnings().to_vec();
    let report = RunReport::from_logs(&label, &accesses, &jobs, &moves, warnings.len(), manager.diagnostics());
    Ok(RunOutput { report, label, accesses, jobs, moves, warnings })
}
