//! Synthetic job traces: generation from a workload spec, JSON Lines
//! persistence and structural validation.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::Bin;
use crate::sim::{FileId, GB};

pub mod replay;

pub use replay::{replay, ReplayError, ReplayOptions, RunOutput};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid workload spec: {0}")]
    SpecInvalid(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    JobStart,
    Create,
    Read,
    Delete,
}

/// One trace line. `job` and `cpu` describe job starts, `size` creates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceEvent {
    pub t: f64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub job: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<FileId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu: Option<f64>,
}

impl TraceEvent {
    pub fn job_start(t: f64, job: u64, cpu: f64) -> Self {
        TraceEvent { t, kind: EventKind::JobStart, job: Some(job), file: None, size: None, cpu: Some(cpu) }
    }

    pub fn create(t: f64, file: FileId, size: u64, job: Option<u64>) -> Self {
        TraceEvent { t, kind: EventKind::Create, job, file: Some(file), size: Some(size), cpu: None }
    }

    pub fn read(t: f64, job: Option<u64>, file: FileId) -> Self {
        TraceEvent { t, kind: EventKind::Read, job, file: Some(file), size: None, cpu: None }
    }

    pub fn delete(t: f64, file: FileId) -> Self {
        TraceEvent { t, kind: EventKind::Delete, job: None, file: Some(file), size: None, cpu: None }
    }

    /// Checks that the fields required by `kind` are present and sane.
    pub fn check_fields(&self) -> Result<(), String> {
        if !self.t.is_finite() || self.t < 0.0 {
            return Err(format!("bad time {}", self.t));
        }
        let need = |ok: bool, what: &str| if ok { Ok(()) } else { Err(format!("{:?} event needs {what}", self.kind)) };
        match self.kind {
            EventKind::JobStart => {
                need(self.job.is_some(), "job")?;
                need(self.cpu.is_some_and(|c| c.is_finite() && c >= 0.0), "a non-negative cpu")
            }
            EventKind::Create => {
                need(self.file.is_some(), "file")?;
                need(self.size.is_some_and(|s| s > 0), "a positive size")
            }
            EventKind::Read | EventKind::Delete => need(self.file.is_some(), "file"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinSpec {
    pub label: Bin,
    /// Exclusive lower size bound, bytes.
    pub lo: u64,
    /// Inclusive upper size bound, bytes.
    pub hi: u64,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub name: String,
    pub job_count: usize,
    pub duration: f64,
    pub bins: Vec<BinSpec>,
    pub popularity_zipf_s: f64,
    pub never_reaccessed_frac: f64,
    /// Chance that a job without a ready pipeline input re-reads an
    /// existing file of its bin instead of loading a fresh one.
    pub reuse_prob: f64,
    /// Delay range between an output's creation and its pipeline read.
    pub pipeline_delay: [f64; 2],
    /// Log-uniform per-job cpu range, seconds.
    pub cpu_time: [f64; 2],
    pub min_file_size: u64,
    /// Stored bytes per nominal byte; bins use nominal sizes.
    pub size_scale: f64,
    /// Share of never-read outputs that are deleted later.
    pub scratch_delete_prob: f64,
    pub scratch_lifetime: [f64; 2],
    pub seed: u64,
}

const FB_PRESET: &str = include_str!("../presets/fb.toml");
const CMU_PRESET: &str = include_str!("../presets/cmu.toml");

impl WorkloadSpec {
    pub fn preset(name: &str) -> Result<WorkloadSpec, WorkloadError> {
        let text = match name {
            "fb" => FB_PRESET,
            "cmu" => CMU_PRESET,
            other => return Err(WorkloadError::UnknownPreset(other.to_string())),
        };
        let spec: WorkloadSpec = toml::from_str(text).map_err(|e| WorkloadError::SpecInvalid(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_toml(text: &str) -> Result<WorkloadSpec, WorkloadError> {
        let spec: WorkloadSpec = toml::from_str(text).map_err(|e| WorkloadError::SpecInvalid(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: String| Err(WorkloadError::SpecInvalid(m));
        if self.bins.is_empty() {
            return bad("no bins".into());
        }
        let sum: f64 = self.bins.iter().map(|b| b.fraction).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("bin fractions sum to {sum}"));
        }
        if self.bins.iter().any(|b| !(b.fraction >= 0.0) || b.lo >= b.hi) {
            return bad("bins need lo < hi and non-negative fractions".into());
        }
        if self.bins[0].lo != 0 || self.bins.last().map(|b| b.hi) != Some(10 * GB) {
            return bad("bins must cover (0, 10GB]".into());
        }
        if self.bins.windows(2).any(|w| w[0].hi != w[1].lo) {
            return bad("bins must be contiguous".into());
        }
        if !(0.0..1.0).contains(&self.never_reaccessed_frac) {
            return bad("never_reaccessed_frac must lie in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.reuse_prob) || !(0.0..=1.0).contains(&self.scratch_delete_prob) {
            return bad("probabilities must lie in [0, 1]".into());
        }
        if !(self.duration > 0.0) || !(self.popularity_zipf_s > 0.0) {
            return bad("duration and popularity_zipf_s must be positive".into());
        }
        for (name, [a, b]) in [
            ("pipeline_delay", self.pipeline_delay),
            ("cpu_time", self.cpu_time),
            ("scratch_lifetime", self.scratch_lifetime),
        ] {
            if !(a >= 0.0 && b >= a && b.is_finite()) {
                return bad(format!("{name} must be an ordered non-negative range"));
            }
        }
        if self.cpu_time[0] <= 0.0 {
            return bad("cpu_time lower bound must be positive".into());
        }
        if !(self.size_scale > 0.0 && self.size_scale <= 1.0) {
            return bad("size_scale must lie in (0, 1]".into());
        }
        if self.min_file_size == 0 || self.min_file_size >= self.bins[0].hi {
            return bad("min_file_size must be positive and inside the first bin".into());
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, [a, b]: [f64; 2]) -> f64 {
    if b > a {
        rng.random_range(a..b)
    } else {
        a
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, a: f64, b: f64) -> f64 {
    uniform(rng, [a.ln(), b.ln()]).exp()
}

fn pick_bin(rng: &mut ChaCha8Rng, bins: &[BinSpec]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, b) in bins.iter().enumerate() {
        acc += b.fraction;
        if u < acc {
            return i;
        }
    }
    bins.len() - 1
}

/// Stored size of a file whose nominal size is log-uniform in the bin.
fn file_size(rng: &mut ChaCha8Rng, bin: &BinSpec, min: u64, scale: f64) -> u64 {
    let lo = (bin.lo.max(min) as f64).max(1.0);
    let nominal = log_uniform(rng, lo, bin.hi as f64).clamp(bin.lo as f64 + 1.0, bin.hi as f64);
    ((nominal * scale).round() as u64).max(1)
}

/// Pipeline output waiting for its reader.
#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct Pending {
    ready_at: u64,
    file: FileId,
    bin: usize,
}

/// Generates the trace, calibrating the share of outputs nobody reads so
/// that the overall never-read file fraction matches `never_reaccessed_frac`.
pub fn generate(spec: &WorkloadSpec) -> Result<Vec<TraceEvent>, WorkloadError> {
    spec.validate()?;
    let p = calibrated_dead_prob(spec);
    Ok(generate_with(spec, p))
}

/// Bisects the per-output dead probability against the measured never-read
/// fraction.
pub fn calibrated_dead_prob(spec: &WorkloadSpec) -> f64 {
    let target = spec.never_reaccessed_frac;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best = (f64::INFINITY, 0.0);
    for _ in 0..20 {
        let mid = 0.5 * (lo + hi);
        let frac = TraceStats::of(&generate_with(spec, mid), spec.size_scale).never_read_frac;
        if (frac - target).abs() < best.0 {
            best = ((frac - target).abs(), mid);
        }
        if frac < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best.1
}

/// Generation with a fixed probability that an output is never read.
pub fn generate_with(spec: &WorkloadSpec, dead_prob: f64) -> Vec<TraceEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.job_count;
    let nb = spec.bins.len();
    let mut events: Vec<TraceEvent> = Vec::with_capacity(n * 4);
    let mut next_file: FileId = 0;
    // Per bin: files eligible for reuse with their popularity weight.
    let mut pool: Vec<Vec<(FileId, f64)>> = vec![Vec::new(); nb];
    // Sorted Pareto(1/s) weights follow a rank-size law with exponent s.
    let popularity = Pareto::new(1.0, 1.0 / spec.popularity_zipf_s).ok();
    let mut pending: BinaryHeap<Reverse<Pending>> = BinaryHeap::new();
    let slot = spec.duration / n.max(1) as f64;

    for job in 0..n {
        let t = (job as f64 + rng.random::<f64>()) * slot;
        let mut b = pick_bin(&mut rng, &spec.bins);
        let cpu = log_uniform(&mut rng, spec.cpu_time[0], spec.cpu_time[1]);
        events.push(TraceEvent::job_start(t, job as u64, cpu));

        // A ready pipeline output goes to the next job, which takes its bin.
        let ready = pending.peek().is_some_and(|Reverse(p)| f64::from_bits(p.ready_at) <= t);
        let input = if ready {
            pending.pop().map(|Reverse(p)| {
                b = p.bin;
                p.file
            })
        } else if !pool[b].is_empty() && rng.random::<f64>() < spec.reuse_prob {
            let total: f64 = pool[b].iter().map(|(_, w)| w).sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = pool[b][pool[b].len() - 1].0;
            for (f, w) in &pool[b] {
                if u < *w {
                    pick = *f;
                    break;
                }
                u -= w;
            }
            Some(pick)
        } else {
            None
        };
        let input = input.unwrap_or_else(|| {
            let id = next_file;
            next_file += 1;
            events.push(TraceEvent::create(t, id, file_size(&mut rng, &spec.bins[b], spec.min_file_size, spec.size_scale), None));
            id
        });
        events.push(TraceEvent::read(t, Some(job as u64), input));
        if !pool[b].iter().any(|(f, _)| *f == input) {
            let w = popularity.map_or(1.0, |p| p.sample(&mut rng));
            pool[b].push((input, w));
        }

        let out_t = t + cpu;
        let out = next_file;
        next_file += 1;
        let target = pick_bin(&mut rng, &spec.bins);
        let size = file_size(&mut rng, &spec.bins[target], spec.min_file_size, spec.size_scale);
        events.push(TraceEvent::create(out_t, out, size, Some(job as u64)));
        if rng.random::<f64>() < dead_prob {
            if rng.random::<f64>() < spec.scratch_delete_prob {
                let at = out_t + uniform(&mut rng, spec.scratch_lifetime);
                if at < spec.duration {
                    events.push(TraceEvent::delete(at, out));
                }
            }
        } else {
            // Non-negative finite floats order like their bit patterns.
            let ready_at = out_t + uniform(&mut rng, spec.pipeline_delay);
            pending.push(Reverse(Pending { ready_at: ready_at.to_bits(), file: out, bin: target }));
        }
    }
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    events
}

/// Appends `second` after `first`, shifting its times by `offset` and its
/// job and file ids past those used in `first`.
pub fn concat(first: &[TraceEvent], second: &[TraceEvent], offset: f64) -> Vec<TraceEvent> {
    let file_base = first.iter().filter_map(|e| e.file).max().map_or(0, |m| m + 1);
    let job_base = first.iter().filter_map(|e| e.job).max().map_or(0, |m| m + 1);
    let mut out = first.to_vec();
    out.extend(second.iter().map(|e| TraceEvent {
        t: e.t + offset,
        job: e.job.map(|j| j + job_base),
        file: e.file.map(|f| f + file_base),
        ..e.clone()
    }));
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    out
}

/// Summary statistics of a trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub jobs: usize,
    pub files: usize,
    pub reads: usize,
    /// Share of jobs per bin of input bytes.
    pub bin_fractions: [f64; 6],
    /// Share of read bytes per bin.
    pub bin_byte_fractions: [f64; 6],
    /// Created files never read afterwards.
    pub never_read_frac: f64,
    /// Files read more than five times.
    pub hot_file_frac: f64,
    pub created_bytes: u64,
}

impl TraceStats {
    /// `scale` is the stored-to-nominal size ratio used to bin jobs.
    pub fn of(events: &[TraceEvent], scale: f64) -> TraceStats {
        let mut sizes: HashMap<FileId, u64> = HashMap::new();
        let mut reads: HashMap<FileId, usize> = HashMap::new();
        let mut job_bytes: HashMap<u64, u64> = HashMap::new();
        let mut created_bytes = 0;
        let mut n_reads = 0;
        for e in events {
            match (e.kind, e.file) {
                (EventKind::Create, Some(f)) => {
                    let s = e.size.unwrap_or(0);
                    sizes.insert(f, s);
                    created_bytes += s;
                }
                (EventKind::Read, Some(f)) => {
                    n_reads += 1;
                    *reads.entry(f).or_default() += 1;
                    if let Some(j) = e.job {
                        *job_bytes.entry(j).or_default() += sizes.get(&f).copied().unwrap_or(0);
                    }
                }
                (EventKind::JobStart, _) => {
                    job_bytes.entry(e.job.unwrap_or(0)).or_default();
                }
                _ => {}
            }
        }
        let mut counts = [0usize; 6];
        let mut bytes = [0u64; 6];
        for b in job_bytes.values() {
            let i = Bin::of_scaled(*b, scale).index();
            counts[i] += 1;
            bytes[i] += b;
        }
        let jobs = job_bytes.len();
        let total_bytes: u64 = bytes.iter().sum();
        let files = sizes.len();
        let frac = |x: usize, n: usize| if n == 0 { 0.0 } else { x as f64 / n as f64 };
        TraceStats {
            jobs,
            files,
            reads: n_reads,
            bin_fractions: counts.map(|c| frac(c, jobs)),
            bin_byte_fractions: bytes.map(|b| if total_bytes == 0 { 0.0 } else { b as f64 / total_bytes as f64 }),
            never_read_frac: frac(sizes.keys().filter(|f| !reads.contains_key(f)).count(), files),
            hot_file_frac: frac(reads.values().filter(|c| **c > 5).count(), files),
            created_bytes,
        }
    }
}

/// Structural check: times sorted, ids consistent, reads and deletes only
/// on live files. Returns the index of the first offending event.
pub fn validate_trace(events: &[TraceEvent]) -> Result<(), (usize, String)> {
    let mut live: HashSet<FileId> = HashSet::new();
    let mut seen: HashSet<FileId> = HashSet::new();
    let mut jobs: HashSet<u64> = HashSet::new();
    let mut last = f64::NEG_INFINITY;
    for (i, e) in events.iter().enumerate() {
        e.check_fields().map_err(|m| (i, m))?;
        if e.t < last {
            return Err((i, format!("time {} precedes {}", e.t, last)));
        }
        last = e.t;
        let file = e.file.unwrap_or_default();
        match e.kind {
            EventKind::JobStart => {
                if !jobs.insert(e.job.unwrap_or_default()) {
                    return Err((i, format!("job {} started twice", e.job.unwrap_or_default())));
                }
            }
            EventKind::Create => {
                if !seen.insert(file) {
                    return Err((i, format!("file {file} created twice")));
                }
                live.insert(file);
            }
            EventKind::Read | EventKind::Delete => {
                if !live.contains(&file) {
                    return Err((i, format!("file {file} is not live")));
                }
                if e.kind == EventKind::Delete {
                    live.remove(&file);
                } else if let Some(j) = e.job {
                    if !jobs.contains(&j) {
                        return Err((i, format!("read for unknown job {j}")));
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn write_trace<W: Write>(events: &[TraceEvent], mut w: W) -> Result<(), TraceError> {
    for e in events {
        serde_json::to_writer(&mut w, e).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Parses JSON Lines; blank lines are skipped, line numbers are 1-based.
pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<TraceEvent>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| TraceError::Parse { line: i + 1, message };
        let e: TraceEvent = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        e.check_fields().map_err(parse_err)?;
        out.push(e);
    }
    Ok(out)
}

pub fn save_trace(events: &[TraceEvent], path: &Path) -> Result<(), TraceError> {
    let f = std::fs::File::create(path)?;
    write_trace(events, std::io::BufWriter::new(f))
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceEvent>, TraceError> {
    let f = std::fs::File::open(path)?;
    read_trace(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fb(jobs: usize, seed: u64) -> WorkloadSpec {
        WorkloadSpec { job_count: jobs, seed, ..WorkloadSpec::preset("fb").unwrap() }
    }

    #[test]
    fn presets_match_published_fractions() {
        let f = WorkloadSpec::preset("fb").unwrap();
        let got: Vec<f64> = f.bins.iter().map(|b| b.fraction).collect();
        assert_eq!(got, vec![0.744, 0.162, 0.040, 0.030, 0.016, 0.008]);
        assert_eq!(f.never_reaccessed_frac, 0.23);
        assert_eq!(f.job_count, 1000);
        let c = WorkloadSpec::preset("cmu").unwrap();
        let got: Vec<f64> = c.bins.iter().map(|b| b.fraction).collect();
        assert_eq!(got, vec![0.633, 0.291, 0.009, 0.049, 0.015, 0.003]);
        assert_eq!(c.never_reaccessed_frac, 0.18);
        assert!(matches!(WorkloadSpec::preset("x"), Err(WorkloadError::UnknownPreset(_))));
    }

    #[test]
    fn bin_edges_follow_table() {
        let f = WorkloadSpec::preset("fb").unwrap();
        for b in &f.bins {
            assert_eq!((b.lo, b.hi), b.label.range());
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = fb(10, 0);
        s.bins[0].fraction += 0.01;
        assert!(s.validate().is_err());
        let mut s = fb(10, 0);
        s.never_reaccessed_frac = 1.0;
        assert!(s.validate().is_err());
        let mut s = fb(10, 0);
        s.bins[2].lo += 1;
        assert!(s.validate().is_err());
    }

    #[test]
    fn fb_thousand_jobs_shares() {
        let spec = fb(1000, 7);
        let st = TraceStats::of(&generate(&spec).unwrap(), spec.size_scale);
        assert_eq!(st.jobs, 1000);
        assert!((st.bin_fractions[0] - 0.744).abs() <= 0.02, "{:?}", st.bin_fractions);
        assert!((st.never_read_frac - 0.23).abs() <= 0.02, "{}", st.never_read_frac);
    }

    #[test]
    fn deterministic_under_seed() {
        let s = fb(300, 3);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        assert_ne!(generate(&s).unwrap(), generate(&fb(300, 4)).unwrap());
    }

    #[test]
    fn generated_traces_are_well_formed() {
        for seed in 0..5 {
            let ev = generate(&fb(400, seed)).unwrap();
            validate_trace(&ev).unwrap();
            assert!(ev.last().unwrap().t < 6.0 * 3600.0 + 400.0);
        }
    }

    #[test]
    fn top_bin_is_byte_heavy() {
        let spec = fb(4000, 11);
        let st = TraceStats::of(&generate(&spec).unwrap(), spec.size_scale);
        assert!(st.bin_byte_fractions[5] > 10.0 * st.bin_fractions[5], "{st:?}");
    }

    #[test]
    fn round_trip_through_jsonl() {
        let ev = generate(&fb(50, 1)).unwrap();
        let mut buf = Vec::new();
        write_trace(&ev, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().starts_with("{\"t\":"));
        assert_eq!(read_trace(&buf[..]).unwrap(), ev);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let mut lines: Vec<String> = (0..6).map(|i| format!("{{\"t\":{i}.0,\"kind\":\"job_start\",\"job\":{i},\"cpu\":1.0}}")).collect();
        lines.push("{\"t\":7.0,\"kind\":".into());
        let err = read_trace(lines.join("\n").as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 7, .. }), "{err}");
        let err = read_trace(&b"{\"t\":1.0,\"kind\":\"teleport\",\"file\":1}"[..]).unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 1, .. }));
        let err = read_trace(&b"\n{\"t\":1.0,\"kind\":\"create\",\"file\":1}"[..]).unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 2, .. }));
    }

    #[test]
    fn validation_catches_dangling_and_unsorted() {
        let ok = vec![TraceEvent::create(0.0, 1, 10, None), TraceEvent::read(1.0, None, 1), TraceEvent::delete(2.0, 1)];
        assert!(validate_trace(&ok).is_ok());
        let mut dangling = ok.clone();
        dangling.push(TraceEvent::read(3.0, None, 1));
        assert_eq!(validate_trace(&dangling).unwrap_err().0, 3);
        let unsorted = vec![TraceEvent::create(5.0, 1, 10, None), TraceEvent::read(1.0, None, 1)];
        assert_eq!(validate_trace(&unsorted).unwrap_err().0, 1);
    }

    #[test]
    fn concat_shifts_ids_and_time() {
        let a = generate(&fb(20, 1)).unwrap();
        let b = generate(&fb(20, 2)).unwrap();
        let c = concat(&a, &b, 21600.0);
        validate_trace(&c).unwrap();
        assert_eq!(TraceStats::of(&c, 1.0).jobs, 40);
    }
}
