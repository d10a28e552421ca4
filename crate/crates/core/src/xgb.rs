//! Learned downgrade and upgrade policies backed by incrementally boosted
//! tree models, one per class window.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classic::{select_downgrade_victim, DowngradeKind, VictimInfo};
use crate::features::{features_from_history, label_from_history, ClassWindow, FeatureConfig, TrainingPoint, HOUR, MINUTE};
use crate::gbt::{GbtConfig, GbtModel, IncrementalLearner};
use crate::policy::{DowngradePolicy, UpgradePolicy, UpgradeRequest};
use crate::sim::{Cluster, FileId, FileMeta, TierKind, GB};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum XgbError {
    #[error("model has not passed warm-up")]
    NotWarm,
    #[error("no candidate files")]
    EmptyCandidates,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XgbPolicyConfig {
    pub scan_k: usize,
    pub discrimination_threshold: f64,
    pub warmup_error_threshold: f64,
    pub upgrade_batch_cap: u64,
    pub downgrade_window: f64,
    pub upgrade_window: f64,
    /// Every n-th generated point is scored before training.
    pub holdout_every: u64,
    /// Rolling holdout window length.
    pub holdout_window: usize,
    pub sweep_interval: f64,
    pub sweep_sample: usize,
    pub boost_every: usize,
    pub store_capacity: usize,
    pub seed: u64,
    pub gbt: GbtConfig,
    pub features: FeatureConfig,
}

impl Default for XgbPolicyConfig {
    fn default() -> Self {
        XgbPolicyConfig {
            scan_k: 200,
            discrimination_threshold: 0.5,
            warmup_error_threshold: 0.01,
            upgrade_batch_cap: GB,
            downgrade_window: 6.0 * HOUR,
            upgrade_window: 30.0 * MINUTE,
            holdout_every: 10,
            holdout_window: 200,
            sweep_interval: 5.0 * MINUTE,
            sweep_sample: 500,
            boost_every: 500,
            store_capacity: 100_000,
            seed: 0,
            gbt: GbtConfig::default(),
            features: FeatureConfig::default(),
        }
    }
}

impl XgbPolicyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.scan_k == 0 {
            return Err("scan_k must be at least 1".into());
        }
        if !(self.discrimination_threshold > 0.0 && self.discrimination_threshold < 1.0) {
            return Err("discrimination_threshold must lie in (0, 1)".into());
        }
        if self.holdout_every == 0 || self.holdout_window == 0 || self.sweep_interval <= 0.0 {
            return Err("holdout_every, holdout_window and sweep_interval must be positive".into());
        }
        self.gbt.validate().map_err(|e| e.to_string())?;
        self.features.validate().map_err(|e| e.to_string())
    }
}

/// Anything that maps a feature vector to an access probability.
pub trait Scorer {
    fn score(&self, features: &[f64]) -> f64;
}

impl Scorer for GbtModel {
    fn score(&self, features: &[f64]) -> f64 {
        self.predict_proba(features).unwrap_or(0.5)
    }
}

/// Size, creation time and access history of a file as seen by a learner.
#[derive(Clone, Debug, PartialEq)]
pub struct FileView {
    pub file: FileId,
    pub size: u64,
    pub created_at: f64,
    /// Ascending.
    pub accesses: Vec<f64>,
}

impl FileView {
    pub fn from_meta(meta: &FileMeta) -> Self {
        FileView {
            file: meta.file_id,
            size: meta.size,
            created_at: meta.created_at,
            accesses: meta.access_times.iter().copied().collect(),
        }
    }

    pub fn last_touch(&self) -> f64 {
        self.accesses.last().copied().unwrap_or(self.created_at)
    }

    fn features(&self, t_ref: f64, cfg: &FeatureConfig) -> Vec<f64> {
        let t_ref = t_ref.max(self.created_at);
        features_from_history(self.size, self.created_at, &self.accesses, t_ref, cfg)
            .unwrap_or_else(|_| vec![cfg.missing_sentinel; cfg.width()])
    }
}

fn by_recency(a: &FileView, b: &FileView) -> std::cmp::Ordering {
    a.last_touch().total_cmp(&b.last_touch()).then(a.file.cmp(&b.file))
}

/// Scores the `scan_k` least recently used candidates at `t_ref = now` and
/// returns the least likely to be accessed (lowest id on ties).
pub fn xgb_select_downgrade<S: Scorer + ?Sized>(
    candidates: &[FileView],
    model: Option<&S>,
    now: f64,
    cfg: &XgbPolicyConfig,
) -> Result<FileId, XgbError> {
    let model = model.ok_or(XgbError::NotWarm)?;
    pick_coldest(candidates, cfg.scan_k, |f| model.score(&f.features(now, &cfg.features)))
        .ok_or(XgbError::EmptyCandidates)
}

fn pick_coldest(candidates: &[FileView], scan_k: usize, mut score: impl FnMut(&FileView) -> f64) -> Option<FileId> {
    let mut lru: Vec<&FileView> = candidates.iter().collect();
    lru.sort_by(|a, b| by_recency(a, b));
    lru.truncate(scan_k);
    let mut best: Option<(f64, FileId)> = None;
    for f in lru {
        let p = score(f);
        if best.is_none_or(|(bp, bf)| p < bp || (p == bp && f.file < bf)) {
            best = Some((p, f.file));
        }
    }
    best.map(|(_, f)| f)
}

/// Upgrade-model verdict for one file: probability strictly above the
/// discrimination threshold.
pub fn xgb_should_upgrade<S: Scorer + ?Sized>(
    file: &FileView,
    model: Option<&S>,
    now: f64,
    cfg: &XgbPolicyConfig,
) -> Result<bool, XgbError> {
    let model = model.ok_or(XgbError::NotWarm)?;
    Ok(model.score(&file.features(now, &cfg.features)) > cfg.discrimination_threshold)
}

/// Scans the `scan_k` most recently used files not in memory, best score
/// first, and schedules them while the score clears the threshold and the
/// bytes scheduled so far are below the batch cap.
pub fn xgb_upgrade_loop<S: Scorer + ?Sized>(
    candidates: &[(FileView, bool)],
    model: Option<&S>,
    now: f64,
    cfg: &XgbPolicyConfig,
) -> Result<Vec<FileId>, XgbError> {
    let model = model.ok_or(XgbError::NotWarm)?;
    let mut mru: Vec<&FileView> = candidates.iter().filter(|(_, in_mem)| !in_mem).map(|(f, _)| f).collect();
    mru.sort_by(|a, b| by_recency(b, a));
    mru.truncate(cfg.scan_k);
    let mut scored: Vec<(f64, &FileView)> =
        mru.into_iter().map(|f| (model.score(&f.features(now, &cfg.features)), f)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.file.cmp(&b.1.file)));
    let mut out = Vec::new();
    let mut scheduled = 0u64;
    for (p, f) in scored {
        if p <= cfg.discrimination_threshold || scheduled >= cfg.upgrade_batch_cap {
            break;
        }
        scheduled += f.size;
        out.push(f.file);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldoutSample {
    pub t: f64,
    pub holdout_points: usize,
    pub rolling_error: Option<f64>,
    pub trees: usize,
    pub warm: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearnerDiagnostics {
    pub window: f64,
    pub points: u64,
    pub positives: u64,
    pub boosts: usize,
    pub trees: usize,
    pub store: usize,
    pub warm_since: Option<f64>,
    pub model_decisions: u64,
    pub fallback_decisions: u64,
    pub timeline: Vec<HoldoutSample>,
}

/// Training-point generator plus incremental model for one class window.
#[derive(Clone, Debug)]
pub struct AccessLearner {
    window: ClassWindow,
    cfg: XgbPolicyConfig,
    learner: IncrementalLearner,
    files: BTreeMap<FileId, FileView>,
    rng: ChaCha8Rng,
    next_sweep: f64,
    generated: u64,
    positives: u64,
    holdout: VecDeque<bool>,
    warm_since: Option<f64>,
    timeline: Vec<HoldoutSample>,
}

impl AccessLearner {
    pub fn new(window: ClassWindow, cfg: XgbPolicyConfig) -> Self {
        let width = cfg.features.width();
        let seed = cfg.seed ^ window.0.to_bits();
        AccessLearner {
            window,
            cfg,
            learner: IncrementalLearner::new(width, cfg.gbt, cfg.store_capacity, cfg.boost_every),
            files: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_sweep: cfg.sweep_interval,
            generated: 0,
            positives: 0,
            holdout: VecDeque::new(),
            warm_since: None,
            timeline: Vec::new(),
        }
    }

    pub fn window(&self) -> ClassWindow {
        self.window
    }

    pub fn model(&self) -> &GbtModel {
        self.learner.model()
    }

    pub fn file(&self, id: FileId) -> Option<&FileView> {
        self.files.get(&id)
    }

    pub fn files(&self) -> impl Iterator<Item = &FileView> {
        self.files.values()
    }

    pub fn rolling_error(&self) -> Option<f64> {
        if self.holdout.is_empty() {
            return None;
        }
        Some(self.holdout.iter().filter(|e| **e).count() as f64 / self.holdout.len() as f64)
    }

    /// Whether the current holdout window passes the warm-up check.
    pub fn passes_warmup(&self) -> bool {
        warmup_check(self.holdout.len(), self.rolling_error(), &self.cfg)
    }

    /// Latched: true from the first passing warm-up check onwards.
    pub fn is_warm(&self) -> bool {
        self.warm_since.is_some()
    }

    pub fn warm_model(&self) -> Option<&GbtModel> {
        self.is_warm().then(|| self.learner.model())
    }

    pub fn on_create(&mut self, meta: &FileMeta) {
        self.files.insert(meta.file_id, FileView::from_meta(meta));
    }

    pub fn on_delete(&mut self, file: FileId) {
        self.files.remove(&file);
    }

    /// Records an access and emits the on-access positive point.
    pub fn on_access(&mut self, meta: &FileMeta, now: f64) {
        let view = self.files.entry(meta.file_id).or_insert_with(|| FileView::from_meta(meta));
        view.accesses.push(now);
        trim_history(view, now - self.window.0, self.cfg.features.history_k);
        let t_ref = now - self.window.0;
        if t_ref >= view.created_at {
            let features = view.features(t_ref, &self.cfg.features);
            self.push(TrainingPoint { features, label: 1, reference_time: t_ref }, now);
        }
    }

    /// Runs every sweep that is due by `now`.
    pub fn on_tick(&mut self, now: f64) {
        while self.next_sweep <= now {
            let at = self.next_sweep;
            self.sweep(at);
            self.next_sweep += self.cfg.sweep_interval;
        }
    }

    /// Labelled points for a uniform sample of files old enough to have a
    /// complete window ending at `now`.
    pub fn sweep(&mut self, now: f64) {
        let t_ref = now - self.window.0;
        let eligible: Vec<FileId> = self.files.values().filter(|f| f.created_at <= t_ref).map(|f| f.file).collect();
        let take = eligible.len().min(self.cfg.sweep_sample);
        let mut picked: Vec<usize> = rand::seq::index::sample(&mut self.rng, eligible.len(), take).into_vec();
        picked.sort_unstable();
        for i in picked {
            let f = &self.files[&eligible[i]];
            let features = f.features(t_ref, &self.cfg.features);
            let label = label_from_history(&f.accesses, t_ref, self.window);
            self.push(TrainingPoint { features, label, reference_time: t_ref }, now);
        }
        self.timeline.push(HoldoutSample {
            t: now,
            holdout_points: self.holdout.len(),
            rolling_error: self.rolling_error(),
            trees: self.learner.model().tree_count(),
            warm: self.passes_warmup(),
        });
    }

    fn push(&mut self, p: TrainingPoint, now: f64) {
        self.generated += 1;
        self.positives += u64::from(p.label);
        if self.generated % self.cfg.holdout_every == 0 {
            let predicted = self.learner.model().score(&p.features) > self.cfg.discrimination_threshold;
            self.holdout.push_back(predicted != (p.label == 1));
            if self.holdout.len() > self.cfg.holdout_window {
                self.holdout.pop_front();
            }
            if self.warm_since.is_none() && self.passes_warmup() {
                self.warm_since = Some(now);
            }
        }
        if let Err(e) = self.learner.add(&p.features, p.label) {
            log::warn!("dropping training point: {e}");
        }
    }

    pub fn diagnostics(&self, model_decisions: u64, fallback_decisions: u64) -> LearnerDiagnostics {
        LearnerDiagnostics {
            window: self.window.0,
            points: self.generated,
            positives: self.positives,
            boosts: self.learner.boosts(),
            trees: self.learner.model().tree_count(),
            store: self.learner.store().len(),
            warm_since: self.warm_since,
            model_decisions,
            fallback_decisions,
            timeline: self.timeline.clone(),
        }
    }
}

/// Keeps every access after `horizon` plus the `k` most recent before it.
fn trim_history(view: &mut FileView, horizon: f64, k: usize) {
    let before = view.accesses.partition_point(|a| *a <= horizon);
    if before > k {
        view.accesses.drain(..before - k);
    }
}

pub fn warmup_check(holdout_points: usize, rolling_error: Option<f64>, cfg: &XgbPolicyConfig) -> bool {
    holdout_points >= cfg.holdout_window && rolling_error.is_some_and(|e| e < cfg.warmup_error_threshold)
}

/// Memo of scores for one `(model size, now)` pair.
#[derive(Clone, Debug, Default)]
struct ScoreCache {
    trees: usize,
    now: f64,
    scores: HashMap<FileId, f64>,
}

/// XGB downgrade policy with LRU fallback during warm-up.
pub struct XgbDowngrade {
    learner: AccessLearner,
    cfg: XgbPolicyConfig,
    cache: ScoreCache,
    model_decisions: u64,
    fallback_decisions: u64,
}

impl XgbDowngrade {
    pub fn new(cfg: XgbPolicyConfig) -> Self {
        XgbDowngrade {
            learner: AccessLearner::new(ClassWindow(cfg.downgrade_window), cfg),
            cfg,
            cache: ScoreCache::default(),
            model_decisions: 0,
            fallback_decisions: 0,
        }
    }

    pub fn learner(&self) -> &AccessLearner {
        &self.learner
    }
}

impl DowngradePolicy for XgbDowngrade {
    fn name(&self) -> &str {
        "xgb"
    }

    fn on_create(&mut self, meta: &FileMeta, _now: f64) {
        self.learner.on_create(meta);
    }

    fn on_access(&mut self, meta: &FileMeta, now: f64) {
        self.learner.on_access(meta, now);
    }

    fn on_delete(&mut self, file: FileId) {
        self.learner.on_delete(file);
    }

    fn on_tick(&mut self, _cluster: &Cluster, now: f64) {
        self.learner.on_tick(now);
    }

    fn select_file_to_downgrade(&mut self, cluster: &Cluster, candidates: &[FileId], now: f64) -> Option<FileId> {
        let Some(model) = self.learner.warm_model() else {
            self.fallback_decisions += 1;
            let infos: Vec<VictimInfo> =
                candidates.iter().filter_map(|f| cluster.file(*f)).map(|m| VictimInfo::from_meta(m, 1.0)).collect();
            return select_downgrade_victim(DowngradeKind::Lru, &infos, now, 0.0).ok();
        };
        self.model_decisions += 1;
        if self.cache.trees != model.tree_count() || self.cache.now != now {
            self.cache = ScoreCache { trees: model.tree_count(), now, scores: HashMap::new() };
        }
        let views: Vec<FileView> = candidates
            .iter()
            .filter_map(|f| self.learner.file(*f).cloned().or_else(|| cluster.file(*f).map(FileView::from_meta)))
            .collect();
        let (scores, fcfg) = (&mut self.cache.scores, &self.cfg.features);
        pick_coldest(&views, self.cfg.scan_k, |f| {
            *scores.entry(f.file).or_insert_with(|| model.score(&f.features(now, fcfg)))
        })
    }

    fn diagnostics(&self) -> Option<serde_json::Value> {
        let d = self.learner.diagnostics(self.model_decisions, self.fallback_decisions);
        let mut v = serde_json::to_value(d).ok()?;
        v["policy"] = "xgb-downgrade".into();
        Some(v)
    }
}

/// XGB upgrade policy with OSA fallback during warm-up.
pub struct XgbUpgrade {
    learner: AccessLearner,
    cfg: XgbPolicyConfig,
    queue: VecDeque<FileId>,
    model_decisions: u64,
    fallback_decisions: u64,
}

impl XgbUpgrade {
    pub fn new(cfg: XgbPolicyConfig) -> Self {
        XgbUpgrade {
            learner: AccessLearner::new(ClassWindow(cfg.upgrade_window), cfg),
            cfg,
            queue: VecDeque::new(),
            model_decisions: 0,
            fallback_decisions: 0,
        }
    }

    pub fn learner(&self) -> &AccessLearner {
        &self.learner
    }
}

impl UpgradePolicy for XgbUpgrade {
    fn name(&self) -> &str {
        "xgb"
    }

    fn on_create(&mut self, meta: &FileMeta, _now: f64) {
        self.learner.on_create(meta);
    }

    fn on_access(&mut self, meta: &FileMeta, now: f64) {
        self.learner.on_access(meta, now);
    }

    fn on_delete(&mut self, file: FileId) {
        self.learner.on_delete(file);
    }

    fn on_tick(&mut self, _cluster: &Cluster, now: f64) {
        self.learner.on_tick(now);
    }

    fn start_upgrade(&mut self, cluster: &Cluster, request: Option<&UpgradeRequest>, now: f64) -> bool {
        self.queue.clear();
        let Some(model) = self.learner.warm_model() else {
            if let Some(req) = request.filter(|r| !r.in_memory) {
                self.fallback_decisions += 1;
                self.queue.push_back(req.file);
            }
            return !self.queue.is_empty();
        };
        self.model_decisions += 1;
        if let Some(req) = request {
            // The triggering access is not yet part of the learner's view at
            // t_ref = now, matching a decision taken before the read.
            let view = self.learner.file(req.file).cloned();
            let hot = view.is_some_and(|v| xgb_should_upgrade(&v, Some(model), now, &self.cfg).unwrap_or(false));
            if !hot {
                return false;
            }
        }
        let candidates: Vec<(FileView, bool)> =
            self.learner.files().map(|f| (f.clone(), cluster.has_tier(f.file, TierKind::Memory))).collect();
        if let Ok(list) = xgb_upgrade_loop(&candidates, Some(model), now, &self.cfg) {
            self.queue.extend(list);
        }
        !self.queue.is_empty()
    }

    fn select_file_to_upgrade(&mut self, _cluster: &Cluster, _now: f64) -> Option<FileId> {
        self.queue.pop_front()
    }

    fn stop_upgrade(&mut self, _cluster: &Cluster, _now: f64) -> bool {
        self.queue.is_empty()
    }

    fn diagnostics(&self) -> Option<serde_json::Value> {
        let d = self.learner.diagnostics(self.model_decisions, self.fallback_decisions);
        let mut v = serde_json::to_value(d).ok()?;
        v["policy"] = "xgb-upgrade".into();
        Some(v)
    }
}
