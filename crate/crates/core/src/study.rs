//! Offline model experiments on a trace: time-split evaluation, accuracy
//! over time for incremental, one-shot and hourly-retrained learners, and
//! feature ablations. Labels are computed with full hindsight of the trace.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{features_from_history, label_from_history, ClassWindow, FeatureConfig, TrainingPoint, HOUR};
use crate::gbt::roc::{roc_auc, RocCurve};
use crate::gbt::{evaluate, fit, predict_all, Dataset, GbtConfig, GbtError, GbtModel, IncrementalLearner};
use crate::sim::FileId;
use crate::workload::{EventKind, TraceEvent};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Model(#[from] GbtError),
    #[error("no points in {0}")]
    EmptySplit(&'static str),
    #[error("unknown study mode {0:?}")]
    UnknownMode(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyMode {
    Incremental,
    Oneshot,
    Retrain,
    Mix,
    Ablation,
}

impl std::str::FromStr for StudyMode {
    type Err = StudyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "incremental" => StudyMode::Incremental,
            "oneshot" => StudyMode::Oneshot,
            "retrain" => StudyMode::Retrain,
            "mix" => StudyMode::Mix,
            "ablation" => StudyMode::Ablation,
            other => return Err(StudyError::UnknownMode(other.to_string())),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub window: f64,
    pub sample_interval: f64,
    /// Files sampled per sampling instant.
    pub samples_per_tick: usize,
    /// Also emit a positive point for every read, referenced one window
    /// before it.
    pub access_points: bool,
    pub boost_every: usize,
    pub store_capacity: usize,
    pub threshold: f64,
    pub seed: u64,
    pub gbt: GbtConfig,
    pub features: FeatureConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            window: ClassWindow::DOWNGRADE.0,
            sample_interval: 300.0,
            samples_per_tick: 250,
            access_points: true,
            boost_every: 500,
            store_capacity: 100_000,
            threshold: 0.5,
            seed: 0,
            gbt: GbtConfig::default(),
            features: FeatureConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
struct FileLife {
    size: u64,
    created: f64,
    deleted: Option<f64>,
    reads: Vec<f64>,
}

fn lives(events: &[TraceEvent]) -> BTreeMap<FileId, FileLife> {
    let mut files: BTreeMap<FileId, FileLife> = BTreeMap::new();
    for e in events {
        let Some(f) = e.file else { continue };
        match e.kind {
            EventKind::Create => {
                files.insert(f, FileLife { size: e.size.unwrap_or(0), created: e.t, deleted: None, reads: Vec::new() });
            }
            EventKind::Read => {
                if let Some(l) = files.get_mut(&f) {
                    l.reads.push(e.t);
                }
            }
            EventKind::Delete => {
                if let Some(l) = files.get_mut(&f) {
                    l.deleted = Some(e.t);
                }
            }
            EventKind::JobStart => {}
        }
    }
    files
}

/// Points at every sampling instant in `(0, until)`: a uniform sample of
/// live files, featurized at the instant and labelled from the rest of the
/// trace. With `access_points`, every read at `a` adds the file's point at
/// `a - window` as well. Sorted by reference time.
pub fn hindsight_points(events: &[TraceEvent], until: f64, cfg: &StudyConfig) -> Vec<TrainingPoint> {
    let files = lives(events);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    let mut t = cfg.sample_interval;
    while t < until {
        let live: Vec<&FileLife> =
            files.values().filter(|l| l.created <= t && l.deleted.is_none_or(|d| d > t)).collect();
        let take = live.len().min(cfg.samples_per_tick);
        let mut picked = rand::seq::index::sample(&mut rng, live.len(), take).into_vec();
        picked.sort_unstable();
        for i in picked {
            let l = live[i];
            if let Ok(features) = features_from_history(l.size, l.created, &l.reads, t, &cfg.features) {
                let label = label_from_history(&l.reads, t, ClassWindow(cfg.window));
                out.push(TrainingPoint { features, label, reference_time: t });
            }
        }
        t += cfg.sample_interval;
    }
    if cfg.access_points {
        for l in files.values() {
            for &a in &l.reads {
                let t = a - cfg.window;
                if t <= 0.0 || t >= until || t < l.created {
                    continue;
                }
                if let Ok(features) = features_from_history(l.size, l.created, &l.reads, t, &cfg.features) {
                    out.push(TrainingPoint { features, label: 1, reference_time: t });
                }
            }
        }
        out.sort_by(|a, b| a.reference_time.total_cmp(&b.reference_time));
    }
    out
}

fn dataset<'a>(width: usize, pts: impl Iterator<Item = &'a TrainingPoint>) -> Result<Dataset, GbtError> {
    let mut ds = Dataset::new(width);
    for p in pts {
        ds.push(&p.features, p.label)?;
    }
    Ok(ds)
}

fn in_range(p: &TrainingPoint, lo: f64, hi: f64) -> bool {
    p.reference_time >= lo && p.reference_time < hi
}

/// Fits a batch model, or a constant one when the data has a single class.
fn fit_or_constant(ds: &Dataset, cfg: &GbtConfig) -> Result<GbtModel, GbtError> {
    match fit(ds, cfg) {
        Err(GbtError::SingleClass) => {
            let rate = ds.positives() as f64 / ds.len() as f64;
            Ok(GbtModel::empty(ds.width(), &GbtConfig { base_score: rate.clamp(0.01, 0.99), ..*cfg }))
        }
        other => other,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    pub points: usize,
    pub positives: usize,
    pub accuracy: f64,
    /// Absent when the split has a single class.
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roc: Option<RocCurve>,
}

pub fn quality(model: &GbtModel, ds: &Dataset, threshold: f64) -> Result<Quality, GbtError> {
    let conf = evaluate(model, ds, threshold)?;
    let scores = predict_all(model, ds)?;
    let roc = roc_auc(&scores, ds.labels()).ok();
    Ok(Quality { points: ds.len(), positives: ds.positives(), accuracy: conf.accuracy(), auc: roc.as_ref().map(|r| r.auc), roc })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitEvaluation {
    pub train_points: usize,
    pub trees: usize,
    pub validation: Quality,
    pub test: Quality,
}

/// Trains the incremental learner on points with reference time in
/// `[0, train_end)` in time order, then evaluates on the validation
/// `[train_end, val_end)` and test `[val_end, test_end)` hours.
pub fn split_evaluation(
    points: &[TrainingPoint],
    cfg: &StudyConfig,
    train_end: f64,
    val_end: f64,
    test_end: f64,
) -> Result<SplitEvaluation, StudyError> {
    let width = cfg.features.width();
    let mut learner = IncrementalLearner::new(width, cfg.gbt, cfg.store_capacity, cfg.boost_every);
    let mut train_points = 0;
    for p in points.iter().filter(|p| in_range(p, 0.0, train_end)) {
        learner.add(&p.features, p.label)?;
        train_points += 1;
    }
    if train_points == 0 {
        return Err(StudyError::EmptySplit("training"));
    }
    learner.flush()?;
    let val = dataset(width, points.iter().filter(|p| in_range(p, train_end, val_end)))?;
    let test = dataset(width, points.iter().filter(|p| in_range(p, val_end, test_end)))?;
    if val.is_empty() {
        return Err(StudyError::EmptySplit("validation"));
    }
    if test.is_empty() {
        return Err(StudyError::EmptySplit("test"));
    }
    Ok(SplitEvaluation {
        train_points,
        trees: learner.model().tree_count(),
        validation: quality(learner.model(), &val, cfg.threshold)?,
        test: quality(learner.model(), &test, cfg.threshold)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    /// Test-then-train on every hour, boosting on the cumulative store.
    Incremental,
    /// Trained once on the first hour, then frozen.
    Oneshot,
    /// Refit from scratch on every point seen so far at each hour boundary.
    Retrain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HourAccuracy {
    pub learner: Learner,
    /// 1-based hour index.
    pub hour: usize,
    pub points: usize,
    pub positives: usize,
    /// Absent for hours before the learner has a model.
    pub accuracy: Option<f64>,
}

/// Hourly accuracy of one learner over `hours` hours of points.
pub fn accuracy_over_time(
    points: &[TrainingPoint],
    learner: Learner,
    hours: usize,
    cfg: &StudyConfig,
) -> Result<Vec<HourAccuracy>, StudyError> {
    let width = cfg.features.width();
    let mut out = Vec::with_capacity(hours);
    let mut inc = IncrementalLearner::new(width, cfg.gbt, cfg.store_capacity, cfg.boost_every);
    let mut frozen: Option<GbtModel> = None;
    let mut seen = Dataset::new(width);
    for h in 0..hours {
        let (lo, hi) = (h as f64 * HOUR, (h + 1) as f64 * HOUR);
        let ds = dataset(width, points.iter().filter(|p| in_range(p, lo, hi)))?;
        let model: Option<&GbtModel> = match learner {
            Learner::Incremental => (h > 0).then(|| inc.model()),
            Learner::Oneshot | Learner::Retrain => frozen.as_ref(),
        };
        let accuracy = match model {
            Some(m) if !ds.is_empty() => Some(evaluate(m, &ds, cfg.threshold)?.accuracy()),
            _ => None,
        };
        out.push(HourAccuracy { learner, hour: h + 1, points: ds.len(), positives: ds.positives(), accuracy });
        match learner {
            Learner::Incremental => {
                for i in 0..ds.len() {
                    inc.add(ds.row(i), ds.label(i))?;
                }
                inc.flush()?;
            }
            Learner::Oneshot => {
                if frozen.is_none() && !ds.is_empty() {
                    frozen = Some(fit_or_constant(&ds, &cfg.gbt)?);
                }
            }
            Learner::Retrain => {
                for i in 0..ds.len() {
                    seen.push(ds.row(i), ds.label(i))?;
                }
                if !seen.is_empty() {
                    frozen = Some(fit_or_constant(&seen, &cfg.gbt)?);
                }
            }
        }
    }
    Ok(out)
}

/// Accuracy drop and recovery around a workload switch, from hourly
/// accuracies of an incremental learner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchResponse {
    pub before: f64,
    /// Lowest accuracy in the two hours after the switch.
    pub trough: f64,
    pub last: f64,
}

impl SwitchResponse {
    /// `switch_hour` is the number of hours run before the switch.
    pub fn from_hours(hours: &[HourAccuracy], switch_hour: usize) -> Option<SwitchResponse> {
        let acc = |h: usize| hours.iter().find(|x| x.hour == h).and_then(|x| x.accuracy);
        let before = acc(switch_hour)?;
        let trough = [acc(switch_hour + 1), acc(switch_hour + 2)].into_iter().flatten().reduce(f64::min)?;
        let last = hours.last()?.accuracy?;
        Some(SwitchResponse { before, trough, last })
    }

    pub fn dipped(&self) -> bool {
        self.trough < self.before
    }

    pub fn recovered(&self) -> bool {
        self.last > self.trough
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub variant: String,
    pub evaluation: SplitEvaluation,
}

/// Feature variants: without size, without creation time, and with 6, 12
/// and 18 access times.
pub fn ablation_variants(base: &FeatureConfig) -> Vec<(String, FeatureConfig)> {
    vec![
        ("no_size".into(), FeatureConfig { use_size: false, ..*base }),
        ("no_creation".into(), FeatureConfig { use_creation: false, ..*base }),
        ("k6".into(), FeatureConfig { history_k: 6, ..*base }),
        ("k12".into(), FeatureConfig { history_k: 12, ..*base }),
        ("k18".into(), FeatureConfig { history_k: 18, ..*base }),
    ]
}

pub fn ablation(
    events: &[TraceEvent],
    cfg: &StudyConfig,
    split: (f64, f64, f64),
) -> Result<Vec<AblationResult>, StudyError> {
    ablation_variants(&cfg.features)
        .into_iter()
        .map(|(variant, features)| {
            let c = StudyConfig { features, ..*cfg };
            let pts = hindsight_points(events, split.2, &c);
            let evaluation = split_evaluation(&pts, &c, split.0, split.1, split.2)?;
            Ok(AblationResult { variant, evaluation })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn periodic_trace() -> Vec<TraceEvent> {
        // File 1 is read every 10 minutes, file 2 never.
        let mut ev = vec![TraceEvent::create(0.0, 1, 1 << 20, None), TraceEvent::create(0.0, 2, 1 << 20, None)];
        let mut t = 600.0;
        while t < 4.0 * HOUR {
            ev.push(TraceEvent::read(t, None, 1));
            t += 600.0;
        }
        ev
    }

    #[test]
    fn hindsight_labels_follow_the_window() {
        let cfg = StudyConfig { window: 1800.0, access_points: false, ..StudyConfig::default() };
        let pts = hindsight_points(&periodic_trace(), 3.0 * HOUR, &cfg);
        assert_eq!(pts.len(), 2 * 35);
        // Size-and-creation slots are equal, so the history slot tells the
        // files apart.
        for p in &pts {
            let read_before = p.features[2] >= 0.0;
            if read_before {
                assert_eq!(p.label, 1);
            }
        }
        assert_eq!(pts.iter().filter(|p| p.label == 1).count(), 35);
    }

    #[test]
    fn reads_add_positive_points_one_window_back() {
        let base = StudyConfig { window: 1800.0, access_points: false, ..StudyConfig::default() };
        let with = StudyConfig { access_points: true, ..base };
        let a = hindsight_points(&periodic_trace(), 3.0 * HOUR, &base);
        let b = hindsight_points(&periodic_trace(), 3.0 * HOUR, &with);
        // Reads at 2400..=12000 reference back into (0, 3h).
        assert_eq!(b.len() - a.len(), 17);
        assert_eq!(b.iter().filter(|p| p.label == 1).count(), 35 + 17);
        assert!(b.windows(2).all(|w| w[0].reference_time <= w[1].reference_time));
    }

    #[test]
    fn deleted_files_are_not_sampled() {
        let mut ev = periodic_trace();
        ev.push(TraceEvent::delete(4.0 * HOUR + 1.0, 2));
        let cfg = StudyConfig::default();
        let pts = hindsight_points(&ev, 5.0 * HOUR, &cfg);
        assert!(pts.iter().all(|p| p.reference_time <= 4.0 * HOUR + 1.0 || p.features[2] >= 0.0));
    }

    #[test]
    fn split_evaluation_learns_the_periodic_file() {
        let cfg = StudyConfig { window: 1800.0, boost_every: 20, ..StudyConfig::default() };
        let mut ev = periodic_trace();
        let mut t = 4.0 * HOUR;
        while t < 7.0 * HOUR {
            ev.push(TraceEvent::read(t, None, 1));
            t += 600.0;
        }
        let pts = hindsight_points(&ev, 6.0 * HOUR, &cfg);
        let r = split_evaluation(&pts, &cfg, 4.0 * HOUR, 5.0 * HOUR, 6.0 * HOUR).unwrap();
        assert_eq!(r.test.accuracy, 1.0);
        assert_eq!(r.test.auc, Some(1.0));
    }

    #[test]
    fn switch_response_reads_hours() {
        let h = |hour, a| HourAccuracy { learner: Learner::Incremental, hour, points: 1, positives: 0, accuracy: Some(a) };
        let hours = vec![h(1, 0.9), h(2, 0.95), h(3, 0.8), h(4, 0.85), h(5, 0.97)];
        let r = SwitchResponse::from_hours(&hours, 2).unwrap();
        assert_eq!((r.before, r.trough, r.last), (0.95, 0.8, 0.97));
        assert!(r.dipped() && r.recovered());
    }

    #[test]
    fn modes_parse() {
        assert_eq!("mix".parse::<StudyMode>().unwrap(), StudyMode::Mix);
        assert!("grid".parse::<StudyMode>().is_err());
    }
}
