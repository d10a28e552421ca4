//! Feature vectors and class labels for access prediction.
//!
//! Layout for history length `k` (length `k + 3`):
//!
//! | slot      | value                                          |
//! |-----------|------------------------------------------------|
//! | 0         | file size                                      |
//! | 1         | reference time minus creation                  |
//! | 2         | reference time minus most recent access        |
//! | 3         | oldest retained access minus creation          |
//! | 4..k+2    | gaps between consecutive accesses, newest first |
//!
//! Deltas are divided by `max_interval` and clamped to 1; size is divided by
//! `max_file_size` and clamped to 1. Undefined slots hold `missing_sentinel`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{FileMeta, GB};

pub const MINUTE: f64 = 60.0;
pub const HOUR: f64 = 3600.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub history_k: usize,
    pub max_interval: f64,
    pub missing_sentinel: f64,
    pub max_file_size: f64,
    pub use_size: bool,
    pub use_creation: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            history_k: 12,
            max_interval: 2_592_000.0,
            missing_sentinel: -1.0,
            max_file_size: (10 * GB) as f64,
            use_size: true,
            use_creation: true,
        }
    }
}

impl FeatureConfig {
    pub fn width(&self) -> usize {
        self.history_k + 3
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let sentinel_ok = !(0.0..=1.0).contains(&self.missing_sentinel);
        if self.history_k == 0 || self.max_interval <= 0.0 || self.max_file_size <= 0.0 || !sentinel_ok {
            return Err(FeatureError::InvalidConfig);
        }
        Ok(())
    }
}

/// Forward-looking label window, seconds.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassWindow(pub f64);

impl ClassWindow {
    pub const UPGRADE: ClassWindow = ClassWindow(30.0 * MINUTE);
    pub const DOWNGRADE: ClassWindow = ClassWindow(6.0 * HOUR);

    pub fn seconds(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("reference time {t_ref} precedes creation at {created}")]
    InvalidReference { t_ref: f64, created: f64 },
    #[error("label window ending at {end} is still open at {now}")]
    FutureWindow { end: f64, now: f64 },
    #[error("file created at {created} is younger than the class window at {now}")]
    TooYoung { created: f64, now: f64 },
    #[error("invalid feature config")]
    InvalidConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint {
    pub features: Vec<f64>,
    pub label: u8,
    #[serde(rename = "t_ref")]
    pub reference_time: f64,
}

/// Features from raw values. `accesses` must be sorted ascending; entries at
/// or after `t_ref` are ignored and only the last `history_k` before it count.
pub fn features_from_history(
    size: u64,
    created_at: f64,
    accesses: &[f64],
    t_ref: f64,
    cfg: &FeatureConfig,
) -> Result<Vec<f64>, FeatureError> {
    if t_ref < created_at {
        return Err(FeatureError::InvalidReference { t_ref, created: created_at });
    }
    let norm = |d: f64| (d.max(0.0) / cfg.max_interval).min(1.0);
    let k = cfg.history_k;
    let miss = cfg.missing_sentinel;
    let before = accesses.partition_point(|a| *a < t_ref);
    let past = &accesses[before.saturating_sub(k)..before];

    let mut x = vec![miss; k + 3];
    if cfg.use_size {
        x[0] = (size as f64 / cfg.max_file_size).min(1.0);
    }
    if cfg.use_creation {
        x[1] = norm(t_ref - created_at);
    }
    if let (Some(&newest), Some(&oldest)) = (past.last(), past.first()) {
        x[2] = norm(t_ref - newest);
        if cfg.use_creation {
            x[3] = norm(oldest - created_at);
        }
        for (slot, pair) in past.windows(2).rev().enumerate() {
            x[4 + slot] = norm(pair[1] - pair[0]);
        }
    }
    Ok(x)
}

fn history(meta: &FileMeta) -> Vec<f64> {
    meta.access_times.iter().copied().collect()
}

pub fn build_features(meta: &FileMeta, t_ref: f64, cfg: &FeatureConfig) -> Result<Vec<f64>, FeatureError> {
    features_from_history(meta.size, meta.created_at, &history(meta), t_ref, cfg)
}

/// 1 iff some access lies in `(t_ref, t_ref + w]`.
pub fn label_from_history(accesses: &[f64], t_ref: f64, w: ClassWindow) -> u8 {
    let end = t_ref + w.0;
    u8::from(accesses.iter().any(|a| *a > t_ref && *a <= end))
}

pub fn label(meta: &FileMeta, t_ref: f64, w: ClassWindow, now: f64) -> Result<u8, FeatureError> {
    let end = t_ref + w.0;
    if end > now {
        return Err(FeatureError::FutureWindow { end, now });
    }
    Ok(label_from_history(&history(meta), t_ref, w))
}

/// Training point with `t_ref = now - w`, labelled over `(t_ref, now]`.
pub fn sample_training_point(
    meta: &FileMeta,
    now: f64,
    w: ClassWindow,
    cfg: &FeatureConfig,
) -> Result<TrainingPoint, FeatureError> {
    let t_ref = now - w.0;
    if t_ref < meta.created_at {
        return Err(FeatureError::TooYoung { created: meta.created_at, now });
    }
    let h = history(meta);
    Ok(TrainingPoint {
        features: features_from_history(meta.size, meta.created_at, &h, t_ref, cfg)?,
        label: label_from_history(&h, t_ref, w),
        reference_time: t_ref,
    })
}

/// Positive point emitted right after an access at `now`.
pub fn on_access_positive_sample(
    meta: &FileMeta,
    now: f64,
    w: ClassWindow,
    cfg: &FeatureConfig,
) -> Result<TrainingPoint, FeatureError> {
    let p = sample_training_point(meta, now, w, cfg)?;
    debug_assert_eq!(p.label, 1, "triggering access must fall inside the window");
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const M: f64 = 2_592_000.0;

    fn meta_with(created: f64, accesses: &[f64], k: usize) -> FileMeta {
        let mut m = FileMeta::new(1, GB, created, k);
        for a in accesses {
            m.record_access(*a);
        }
        m
    }

    fn populated(x: &[f64]) -> usize {
        x.iter().filter(|v| **v != -1.0).count()
    }

    #[test]
    fn three_accesses_fill_five_deltas() {
        let cfg = FeatureConfig::default();
        let m = meta_with(0.0, &[100.0, 400.0, 1000.0], 12);
        let x = build_features(&m, 2000.0, &cfg).unwrap();
        assert_eq!(x.len(), 15);
        assert_eq!(populated(&x), 6);
        assert_eq!(x[0], 0.1);
        assert_eq!(x[1], 2000.0 / M);
        assert_eq!(x[2], 1000.0 / M);
        assert_eq!(x[3], 100.0 / M);
        assert_eq!(x[4], 600.0 / M);
        assert_eq!(x[5], 300.0 / M);
        assert!(x[6..].iter().all(|v| *v == -1.0));
    }

    #[test]
    fn never_accessed_has_two_values() {
        let cfg = FeatureConfig::default();
        let x = build_features(&meta_with(0.0, &[], 12), 50.0, &cfg).unwrap();
        assert_eq!(populated(&x), 2);
        assert!(x[2..].iter().all(|v| *v == -1.0));
    }

    #[test]
    fn deltas_clamp_at_one() {
        let cfg = FeatureConfig::default();
        let x = build_features(&meta_with(0.0, &[], 12), 2.0 * M, &cfg).unwrap();
        assert_eq!(x[1], 1.0);
    }

    #[test]
    fn reference_before_creation_is_rejected() {
        let cfg = FeatureConfig::default();
        let err = build_features(&meta_with(10.0, &[], 12), 5.0, &cfg).unwrap_err();
        assert!(matches!(err, FeatureError::InvalidReference { .. }));
    }

    #[test]
    fn accesses_at_or_after_reference_are_ignored() {
        let cfg = FeatureConfig::default();
        let m = meta_with(0.0, &[10.0, 20.0, 30.0], 12);
        let x = build_features(&m, 20.0, &cfg).unwrap();
        assert_eq!(x[2], 10.0 / M);
        assert_eq!(x[4], -1.0);
    }

    #[test]
    fn label_window_is_half_open() {
        let w = ClassWindow(100.0);
        assert_eq!(label_from_history(&[150.0], 100.0, w), 1);
        assert_eq!(label_from_history(&[200.0], 100.0, w), 1);
        assert_eq!(label_from_history(&[100.0], 100.0, w), 0);
        assert_eq!(label_from_history(&[200.5], 100.0, w), 0);
        let m = meta_with(0.0, &[150.0], 12);
        assert_eq!(label(&m, 100.0, w, 200.0), Ok(1));
        assert!(matches!(label(&m, 100.0, w, 199.0), Err(FeatureError::FutureWindow { .. })));
    }

    #[test]
    fn training_points() {
        let cfg = FeatureConfig::default();
        let w = ClassWindow::UPGRADE;
        let now = 10_000.0;
        let fresh = meta_with(0.0, &[now - 600.0], 12);
        assert_eq!(sample_training_point(&fresh, now, w, &cfg).unwrap().label, 1);
        let stale = meta_with(0.0, &[now - 2.0 * w.0], 12);
        assert_eq!(sample_training_point(&stale, now, w, &cfg).unwrap().label, 0);
        let young = meta_with(now - 60.0, &[], 12);
        assert!(matches!(sample_training_point(&young, now, w, &cfg), Err(FeatureError::TooYoung { .. })));
    }

    // Hand-simulated timeline: created at 0, accesses at 1000, 5000 and the
    // triggering one at 9000, window 3000 so t_ref = 6000.
    #[test]
    fn positive_sample_excludes_trigger_from_features() {
        let cfg = FeatureConfig::default();
        let m = meta_with(0.0, &[1000.0, 5000.0, 9000.0], 12);
        let p = on_access_positive_sample(&m, 9000.0, ClassWindow(3000.0), &cfg).unwrap();
        assert_eq!(p.label, 1);
        assert_eq!(p.reference_time, 6000.0);
        assert_eq!(p.features[1], 6000.0 / M);
        assert_eq!(p.features[2], 1000.0 / M);
        assert_eq!(p.features[3], 1000.0 / M);
        assert_eq!(p.features[4], 4000.0 / M);
        assert_eq!(p.features[5], -1.0);
    }

    #[test]
    fn ablation_switches_blank_slots() {
        let cfg = FeatureConfig { use_size: false, use_creation: false, ..FeatureConfig::default() };
        let x = build_features(&meta_with(0.0, &[10.0], 12), 20.0, &cfg).unwrap();
        assert_eq!(x[0], -1.0);
        assert_eq!(x[1], -1.0);
        assert_eq!(x[3], -1.0);
        assert_eq!(x[2], 10.0 / M);
    }

    #[test]
    fn training_point_json_field_names() {
        let p = TrainingPoint { features: vec![0.5], label: 1, reference_time: 3.0 };
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        assert_eq!(v["t_ref"], 3.0);
        assert_eq!(v["label"], 1);
    }

    fn arb_history() -> impl Strategy<Value = (f64, Vec<f64>, f64)> {
        (0.0..1e5f64, prop::collection::vec(0.0..1e6f64, 0..30), 0.0..2e6f64).prop_map(|(c, mut a, r)| {
            for v in a.iter_mut() {
                *v += c;
            }
            a.sort_by(f64::total_cmp);
            (c, a, c + r)
        })
    }

    proptest! {
        #[test]
        fn vectors_are_well_formed((created, accesses, t_ref) in arb_history(), k in 1usize..20) {
            let cfg = FeatureConfig { history_k: k, ..FeatureConfig::default() };
            let x = features_from_history(3 * GB, created, &accesses, t_ref, &cfg).unwrap();
            prop_assert_eq!(x.len(), k + 3);
            for v in &x {
                prop_assert!(*v == -1.0 || (0.0..=1.0).contains(v));
            }
            let m = accesses.iter().filter(|a| **a < t_ref).count().min(k);
            let expected = if m == 0 { 2 } else { m + 3 };
            prop_assert_eq!(x.iter().filter(|v| **v != -1.0).count(), expected);
        }

        #[test]
        fn recency_grows_with_reference((created, accesses, t_ref) in arb_history(), step in 0.0..1e5f64) {
            let cfg = FeatureConfig::default();
            let later = accesses.partition_point(|a| *a < t_ref);
            let frozen = &accesses[..later];
            let a = features_from_history(GB, created, frozen, t_ref, &cfg).unwrap();
            let b = features_from_history(GB, created, frozen, t_ref + step, &cfg).unwrap();
            prop_assert!(b[2] >= a[2] || a[2] == -1.0);
        }

        #[test]
        fn label_matches_brute_force((_c, accesses, t_ref) in arb_history(), w in 1.0..1e5f64) {
            let mut hit = 0u8;
            for a in &accesses {
                if t_ref < *a && *a <= t_ref + w {
                    hit = 1;
                }
            }
            prop_assert_eq!(label_from_history(&accesses, t_ref, ClassWindow(w)), hit);
        }
    }
}
