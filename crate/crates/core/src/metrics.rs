//! Hit ratios, byte accuracy and coverage, and per-bin completion time and
//! machine time, all computed from run logs.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{MoveKind, MoveRecord};
use crate::sim::{FileId, TierKind, GB, MB};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no records")]
    Empty,
    #[error("ratio undefined: {0}")]
    DivisionDomain(&'static str),
    #[error("bins differ between runs: {0}")]
    BinMismatch(String),
}

/// Job-size class by input bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bin {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl Bin {
    pub const ALL: [Bin; 6] = [Bin::A, Bin::B, Bin::C, Bin::D, Bin::E, Bin::F];

    /// `(lower exclusive, upper inclusive)` bounds in bytes.
    pub fn range(self) -> (u64, u64) {
        match self {
            Bin::A => (0, 128 * MB),
            Bin::B => (128 * MB, 512 * MB),
            Bin::C => (512 * MB, GB),
            Bin::D => (GB, 2 * GB),
            Bin::E => (2 * GB, 5 * GB),
            Bin::F => (5 * GB, 10 * GB),
        }
    }

    /// Sizes above the last edge land in `F`.
    pub fn of_size(bytes: u64) -> Bin {
        Bin::ALL.into_iter().find(|b| bytes <= b.range().1).unwrap_or(Bin::F)
    }

    /// Bin of a file stored at `scale` times its nominal size.
    pub fn of_scaled(bytes: u64, scale: f64) -> Bin {
        Bin::of_size((bytes as f64 / scale).round() as u64)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        ["A", "B", "C", "D", "E", "F"][self.index()]
    }
}

impl fmt::Display for Bin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccessRecord {
    pub t: f64,
    pub file: FileId,
    pub job: Option<u64>,
    pub bytes: u64,
    /// Tier the read was served from.
    pub served: TierKind,
    /// Best tier holding a replica right before the read.
    pub best: TierKind,
    pub bin: Bin,
    pub service_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job: u64,
    pub start: f64,
    pub bin: Bin,
    pub input_bytes: u64,
    /// Longest read of the job.
    pub io_time: f64,
    /// Sum of the job's read service times.
    pub io_total: f64,
    pub cpu_time: f64,
}

impl JobRecord {
    pub fn completion(&self) -> f64 {
        self.io_time + self.cpu_time
    }

    pub fn machine_time(&self) -> f64 {
        self.io_total + self.cpu_time
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Access,
    Location,
}

fn tier_of(r: &AccessRecord, basis: Basis) -> TierKind {
    match basis {
        Basis::Access => r.served,
        Basis::Location => r.best,
    }
}

pub fn hit_ratio(records: &[AccessRecord], tier: TierKind, basis: Basis) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = records.iter().filter(|r| tier_of(r, basis) == tier).count();
    Ok(hits as f64 / records.len() as f64)
}

pub fn byte_hit_ratio(records: &[AccessRecord], tier: TierKind, basis: Basis) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut hit = 0u64;
    let mut total = 0u64;
    for r in records {
        total += r.bytes;
        if tier_of(r, basis) == tier {
            hit += r.bytes;
        }
    }
    if total == 0 {
        return Err(MetricsError::DivisionDomain("zero bytes read"));
    }
    Ok(hit as f64 / total as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCoverage {
    /// Absent when nothing was upgraded into memory.
    pub bac: Option<f64>,
    pub bco: f64,
    pub memory_read_bytes: u64,
    pub upgraded_bytes: u64,
    pub read_bytes: u64,
}

pub fn upgraded_to_memory(moves: &[MoveRecord]) -> u64 {
    moves
        .iter()
        .filter(|m| m.kind == MoveKind::Upgrade && m.to.is_some_and(|p| p.tier == TierKind::Memory))
        .map(|m| m.bytes)
        .sum()
}

pub fn byte_accuracy_coverage(moves: &[MoveRecord], records: &[AccessRecord]) -> AccuracyCoverage {
    let upgraded = upgraded_to_memory(moves);
    let read: u64 = records.iter().map(|r| r.bytes).sum();
    let mem: u64 = records.iter().filter(|r| r.served == TierKind::Memory).map(|r| r.bytes).sum();
    AccuracyCoverage {
        bac: (upgraded > 0).then(|| mem as f64 / upgraded as f64),
        bco: if read > 0 { mem as f64 / read as f64 } else { 0.0 },
        memory_read_bytes: mem,
        upgraded_bytes: upgraded,
        read_bytes: read,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub bin: Bin,
    pub jobs: usize,
    pub mean_completion: Option<f64>,
    pub machine_time: f64,
    pub io_time: f64,
    pub reads: usize,
    /// Fraction of reads served per tier, memory/ssd/hdd order.
    pub served_memory: f64,
    pub served_ssd: f64,
    pub served_hdd: f64,
}

/// Per-bin aggregates over jobs and reads.
pub fn efficiency_and_completion(jobs: &[JobRecord], records: &[AccessRecord]) -> Vec<BinStats> {
    Bin::ALL
        .into_iter()
        .map(|bin| {
            let mut n = 0usize;
            let mut completion = 0.0;
            let mut machine = 0.0;
            let mut io = 0.0;
            for j in jobs.iter().filter(|j| j.bin == bin) {
                n += 1;
                completion += j.completion();
                machine += j.machine_time();
                io += j.io_total;
            }
            let mut served = [0usize; 3];
            for r in records.iter().filter(|r| r.bin == bin) {
                served[r.served.index()] += 1;
            }
            let reads: usize = served.iter().sum();
            let frac = |t: TierKind| if reads == 0 { 0.0 } else { served[t.index()] as f64 / reads as f64 };
            BinStats {
                bin,
                jobs: n,
                mean_completion: (n > 0).then(|| completion / n as f64),
                machine_time: machine,
                io_time: io,
                reads,
                served_memory: frac(TierKind::Memory),
                served_ssd: frac(TierKind::Ssd),
                served_hdd: frac(TierKind::Hdd),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinDelta {
    pub bin: Bin,
    /// `(baseline - candidate) / baseline` in percent.
    pub completion_reduction_pct: Option<f64>,
    pub machine_time_reduction_pct: Option<f64>,
}

fn pct(base: f64, cand: f64) -> Option<f64> {
    (base > 0.0).then(|| (base - cand) / base * 100.0)
}

/// Percent reductions against a baseline over the same jobs.
pub fn bin_deltas(baseline: &[BinStats], candidate: &[BinStats]) -> Result<Vec<BinDelta>, MetricsError> {
    if baseline.len() != candidate.len() {
        return Err(MetricsError::BinMismatch(format!("{} vs {} bins", baseline.len(), candidate.len())));
    }
    baseline
        .iter()
        .zip(candidate)
        .map(|(b, c)| {
            if b.bin != c.bin || b.jobs != c.jobs {
                return Err(MetricsError::BinMismatch(format!("bin {} has {} vs {} jobs", b.bin, b.jobs, c.jobs)));
            }
            Ok(BinDelta {
                bin: b.bin,
                completion_reduction_pct: match (b.mean_completion, c.mean_completion) {
                    (Some(x), Some(y)) => pct(x, y),
                    _ => None,
                },
                machine_time_reduction_pct: pct(b.machine_time, c.machine_time),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TierBytes {
    pub memory: u64,
    pub ssd: u64,
    pub hdd: u64,
}

impl TierBytes {
    fn add(&mut self, tier: TierKind, bytes: u64) {
        match tier {
            TierKind::Memory => self.memory += bytes,
            TierKind::Ssd => self.ssd += bytes,
            TierKind::Hdd => self.hdd += bytes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub downgrade: String,
    pub upgrade: String,
    pub tier_aware: bool,
    /// Only events at or after this time are counted.
    pub measure_from: f64,
    pub jobs: usize,
    pub reads: usize,
    pub hr_access: Option<f64>,
    pub hr_location: Option<f64>,
    pub bhr_access: Option<f64>,
    pub bhr_location: Option<f64>,
    pub bac: Option<f64>,
    pub bco: f64,
    pub read_bytes: u64,
    pub memory_read_bytes: u64,
    pub upgraded_to_memory_bytes: u64,
    /// Bytes moved into each tier by upgrades.
    pub upgraded_into: TierBytes,
    /// Bytes moved out of (or dropped from) each tier by downgrades.
    pub downgraded_from: TierBytes,
    pub bins: Vec<BinStats>,
    pub warnings: usize,
    pub diagnostics: Vec<serde_json::Value>,
    pub notes: Vec<String>,
}

/// Identification of the run a report describes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLabel {
    pub downgrade: String,
    pub upgrade: String,
    pub tier_aware: bool,
    pub measure_from: f64,
}

pub const REPORT_NOTES: [&str; 2] = [
    "completion times are simulated proxies: read service time plus per-job cpu time",
    "replica moves complete instantly; their bytes are charged to the movement ledger",
];

impl RunReport {
    /// Builds the report from the persisted logs, counting only entries at or
    /// after `label.measure_from`; the same logs always give the same report.
    pub fn from_logs(
        label: &RunLabel,
        records: &[AccessRecord],
        jobs: &[JobRecord],
        moves: &[MoveRecord],
        warnings: usize,
        diagnostics: Vec<serde_json::Value>,
    ) -> RunReport {
        let from = label.measure_from;
        let records: Vec<AccessRecord> = records.iter().filter(|r| r.t >= from).cloned().collect();
        let jobs: Vec<JobRecord> = jobs.iter().filter(|j| j.start >= from).cloned().collect();
        let moves: Vec<MoveRecord> = moves.iter().filter(|m| m.t >= from).cloned().collect();
        let (records, jobs, moves) = (&records[..], &jobs[..], &moves[..]);
        let ac = byte_accuracy_coverage(moves, records);
        let mut upgraded_into = TierBytes::default();
        let mut downgraded_from = TierBytes::default();
        for m in moves {
            match m.kind {
                MoveKind::Upgrade => {
                    if let Some(to) = m.to {
                        upgraded_into.add(to.tier, m.bytes);
                    }
                }
                MoveKind::Downgrade | MoveKind::Drop => downgraded_from.add(m.from.tier, m.bytes),
            }
        }
        RunReport {
            downgrade: label.downgrade.clone(),
            upgrade: label.upgrade.clone(),
            tier_aware: label.tier_aware,
            measure_from: label.measure_from,
            jobs: jobs.len(),
            reads: records.len(),
            hr_access: hit_ratio(records, TierKind::Memory, Basis::Access).ok(),
            hr_location: hit_ratio(records, TierKind::Memory, Basis::Location).ok(),
            bhr_access: byte_hit_ratio(records, TierKind::Memory, Basis::Access).ok(),
            bhr_location: byte_hit_ratio(records, TierKind::Memory, Basis::Location).ok(),
            bac: ac.bac,
            bco: ac.bco,
            read_bytes: ac.read_bytes,
            memory_read_bytes: ac.memory_read_bytes,
            upgraded_to_memory_bytes: ac.upgraded_bytes,
            upgraded_into,
            downgraded_from,
            bins: efficiency_and_completion(jobs, records),
            warnings,
            diagnostics,
            notes: REPORT_NOTES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Flat `bin,metric,value` rows; run-wide metrics use bin `all`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,metric,value\n");
        let mut row = |bin: &str, metric: &str, value: Option<f64>| {
            let v = value.map_or(String::new(), |v| format!("{v}"));
            out.push_str(&format!("{bin},{metric},{v}\n"));
        };
        row("all", "jobs", Some(self.jobs as f64));
        row("all", "reads", Some(self.reads as f64));
        row("all", "hr_access", self.hr_access);
        row("all", "hr_location", self.hr_location);
        row("all", "bhr_access", self.bhr_access);
        row("all", "bhr_location", self.bhr_location);
        row("all", "bac", self.bac);
        row("all", "bco", Some(self.bco));
        row("all", "read_gb", Some(self.read_bytes as f64 / GB as f64));
        row("all", "memory_read_gb", Some(self.memory_read_bytes as f64 / GB as f64));
        row("all", "upgraded_to_memory_gb", Some(self.upgraded_to_memory_bytes as f64 / GB as f64));
        for b in &self.bins {
            let l = b.bin.label();
            row(l, "jobs", Some(b.jobs as f64));
            row(l, "mean_completion_s", b.mean_completion);
            row(l, "machine_time_s", Some(b.machine_time));
            row(l, "io_time_s", Some(b.io_time));
            row(l, "served_memory", Some(b.served_memory));
            row(l, "served_ssd", Some(b.served_ssd));
            row(l, "served_hdd", Some(b.served_hdd));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Placement;
    use proptest::prelude::*;

    fn rec(bytes: u64, served: TierKind, best: TierKind) -> AccessRecord {
        AccessRecord { t: 0.0, file: 1, job: None, bytes, served, best, bin: Bin::of_size(bytes), service_time: 1.0 }
    }

    fn upgrade(bytes: u64) -> MoveRecord {
        MoveRecord {
            t: 0.0,
            file: 1,
            bytes,
            kind: MoveKind::Upgrade,
            from: Placement::new(0, TierKind::Hdd),
            to: Some(Placement::new(0, TierKind::Memory)),
        }
    }

    #[test]
    fn bin_edges() {
        assert_eq!(Bin::of_size(1), Bin::A);
        assert_eq!(Bin::of_size(128 * MB), Bin::A);
        assert_eq!(Bin::of_size(128 * MB + 1), Bin::B);
        assert_eq!(Bin::of_size(GB), Bin::C);
        assert_eq!(Bin::of_size(5 * GB + 1), Bin::F);
        assert_eq!(Bin::of_size(20 * GB), Bin::F);
    }

    #[test]
    fn hit_ratios() {
        let m = TierKind::Memory;
        let h = TierKind::Hdd;
        let all = vec![rec(GB, m, m); 3];
        assert_eq!(hit_ratio(&all, m, Basis::Access), Ok(1.0));
        let mixed = [rec(GB, m, m), rec(GB, m, m), rec(GB, m, m), rec(GB, h, m)];
        assert_eq!(hit_ratio(&mixed, m, Basis::Access), Ok(0.75));
        assert_eq!(hit_ratio(&mixed, m, Basis::Location), Ok(1.0));
        let half = [rec(GB, m, m), rec(GB, h, h)];
        assert_eq!(byte_hit_ratio(&half, m, Basis::Access), Ok(0.5));
        assert_eq!(hit_ratio(&[], m, Basis::Access), Err(MetricsError::Empty));
    }

    #[test]
    fn accuracy_and_coverage() {
        let m = TierKind::Memory;
        let h = TierKind::Hdd;
        let reads = [rec(2 * GB, m, m), rec(6 * GB, h, h)];
        let ac = byte_accuracy_coverage(&[upgrade(4 * GB)], &reads);
        assert_eq!(ac.bac, Some(0.5));
        assert_eq!(ac.bco, 0.25);
        let none = byte_accuracy_coverage(&[], &reads);
        assert_eq!(none.bac, None);
        assert_eq!(none.bco, 0.25);
        let idle = byte_accuracy_coverage(&[upgrade(GB)], &[]);
        assert_eq!((idle.bac, idle.bco), (Some(0.0), 0.0));
    }

    #[test]
    fn memory_instead_of_hdd_shrinks_io() {
        let job = |io: f64| JobRecord { job: 1, start: 0.0, bin: Bin::A, input_bytes: 100 * MB, io_time: io, io_total: io, cpu_time: 10.0 };
        let hdd = 100.0 / 150.0;
        let mem = 100.0 / 2000.0;
        let a = efficiency_and_completion(&[job(hdd)], &[]);
        let b = efficiency_and_completion(&[job(mem)], &[]);
        assert!((a[0].io_time / b[0].io_time - 2000.0 / 150.0).abs() < 1e-9);
        let d = bin_deltas(&a, &a).unwrap();
        assert!(d.iter().all(|x| x.machine_time_reduction_pct.unwrap_or(0.0) == 0.0));
        assert!(bin_deltas(&a, &efficiency_and_completion(&[], &[])).is_err());
    }

    fn arb_records() -> impl Strategy<Value = Vec<AccessRecord>> {
        let tier = prop_oneof![Just(TierKind::Hdd), Just(TierKind::Ssd), Just(TierKind::Memory)];
        prop::collection::vec((1u64..(4 * GB), tier.clone(), tier), 1..100).prop_map(|v| {
            v.into_iter()
                .map(|(b, s, best)| {
                    let best = best.max(s);
                    rec(b, s, best)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn ratios_match_counting_oracle(records in arb_records()) {
            let m = TierKind::Memory;
            let mut n = 0.0;
            let mut bytes = 0.0;
            let mut total = 0.0;
            for r in &records {
                total += r.bytes as f64;
                if r.served == m {
                    n += 1.0;
                    bytes += r.bytes as f64;
                }
            }
            let hr = hit_ratio(&records, m, Basis::Access).unwrap();
            let bhr = byte_hit_ratio(&records, m, Basis::Access).unwrap();
            prop_assert!((hr - n / records.len() as f64).abs() < 1e-12);
            prop_assert!((bhr - bytes / total).abs() < 1e-12);
            prop_assert!(hit_ratio(&records, m, Basis::Location).unwrap() >= hr);
            prop_assert!((0.0..=1.0).contains(&bhr));
            if records.len() == 1 {
                prop_assert_eq!(hr, bhr);
            }
        }

        #[test]
        fn served_fractions_sum_to_one(records in arb_records()) {
            for b in efficiency_and_completion(&[], &records) {
                if b.reads > 0 {
                    prop_assert!((b.served_memory + b.served_ssd + b.served_hdd - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
