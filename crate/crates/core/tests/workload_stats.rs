use std::collections::HashSet;

use proptest::prelude::*;

use tiersim::metrics::Bin;
use tiersim::workload::{generate, load_trace, save_trace, EventKind, TraceError, TraceStats, WorkloadSpec};

/// Upper 0.001 quantile of the chi-squared distribution with 5 degrees of
/// freedom.
const CHI2_5_P001: f64 = 20.515;

#[test]
fn bin_shares_pass_chi_squared_at_ten_thousand_jobs() {
    for preset in ["fb", "cmu"] {
        let spec = WorkloadSpec { job_count: 10_000, ..WorkloadSpec::preset(preset).unwrap() };
        let stats = TraceStats::of(&generate(&spec).unwrap(), spec.size_scale);
        let n = stats.jobs as f64;
        let chi2: f64 = spec
            .bins
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let expected = n * b.fraction;
                let observed = n * stats.bin_fractions[i];
                (observed - expected).powi(2) / expected
            })
            .sum();
        assert!(chi2 < CHI2_5_P001, "{preset}: chi2 {chi2:.2} over {n} jobs");
    }
}

#[test]
fn top_bin_is_heavy_in_bytes() {
    let spec = WorkloadSpec { job_count: 5000, ..WorkloadSpec::preset("fb").unwrap() };
    let stats = TraceStats::of(&generate(&spec).unwrap(), spec.size_scale);
    let f = Bin::F.index();
    assert!(stats.bin_byte_fractions[f] > 10.0 * stats.bin_fractions[f]);
}

#[test]
fn saved_traces_load_back_equal() {
    let spec = WorkloadSpec { job_count: 200, seed: 4, ..WorkloadSpec::preset("cmu").unwrap() };
    let events = generate(&spec).unwrap();
    let path = std::env::temp_dir().join(format!("tiersim-trace-{}.jsonl", std::process::id()));
    save_trace(&events, &path).unwrap();
    let back = load_trace(&path).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(back, events);
}

#[test]
fn missing_trace_file_is_an_io_error() {
    let err = load_trace(std::path::Path::new("/nonexistent/trace.jsonl")).unwrap_err();
    assert!(matches!(err, TraceError::Io(_)));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn generated_traces_are_well_formed(seed in any::<u64>(), jobs in 1usize..400, cmu in any::<bool>()) {
        let base = WorkloadSpec::preset(if cmu { "cmu" } else { "fb" }).unwrap();
        let spec = WorkloadSpec { job_count: jobs, seed, ..base };
        let events = generate(&spec).unwrap();
        let mut live = HashSet::new();
        let mut created = HashSet::new();
        let mut starts = 0;
        for w in events.windows(2) {
            prop_assert!(w[0].t <= w[1].t);
        }
        for e in &events {
            match e.kind {
                EventKind::JobStart => starts += 1,
                EventKind::Create => {
                    let f = e.file.unwrap();
                    prop_assert!(created.insert(f), "file {} created twice", f);
                    prop_assert!(e.size.unwrap() > 0);
                    live.insert(f);
                }
                EventKind::Read => prop_assert!(live.contains(&e.file.unwrap())),
                EventKind::Delete => prop_assert!(live.remove(&e.file.unwrap())),
            }
        }
        prop_assert_eq!(starts, jobs);
        prop_assert_eq!(generate(&spec).unwrap(), events);
    }
}
