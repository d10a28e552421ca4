//! Non-learned policies: LRU, LFU, LRFU, LIFE, LFU-F and EXD downgrades,
//! and OSA, LRFU-threshold and EXD-admission upgrades.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{DowngradePolicy, UpgradePolicy, UpgradeRequest};
use crate::sim::{Cluster, FileId, FileMeta};

pub const HOUR: f64 = 3600.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("no candidate files")]
    EmptyCandidates,
    #[error("unknown policy name '{0}'")]
    UnknownPolicy(String),
}

/// LRFU weight after an access `delta` seconds after the previous one.
pub fn lrfu_update(weight: f64, delta: f64, half_life: f64) -> f64 {
    1.0 + half_life * weight / (delta.max(0.0) + half_life)
}

/// EXD weight after an access `delta` seconds after the previous one.
pub fn exd_update(weight: f64, delta: f64, alpha: f64) -> f64 {
    1.0 + weight * (-alpha * delta.max(0.0)).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum WeightRule {
    Lrfu { half_life: f64 },
    Exd { alpha: f64 },
}

impl WeightRule {
    pub fn apply(self, weight: f64, delta: f64) -> f64 {
        match self {
            WeightRule::Lrfu { half_life } => lrfu_update(weight, delta, half_life),
            WeightRule::Exd { alpha } => exd_update(weight, delta, alpha),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightEntry {
    pub weight: f64,
    pub last_access: f64,
}

/// Per-file recency/frequency weights, updated on access only.
#[derive(Clone, Debug)]
pub struct WeightTable {
    rule: WeightRule,
    entries: HashMap<FileId, WeightEntry>,
}

pub type LrfuState = WeightTable;
pub type ExdState = WeightTable;

impl WeightTable {
    pub fn new(rule: WeightRule) -> Self {
        WeightTable { rule, entries: HashMap::new() }
    }

    pub fn lrfu(half_life: f64) -> Self {
        Self::new(WeightRule::Lrfu { half_life })
    }

    pub fn exd(alpha: f64) -> Self {
        Self::new(WeightRule::Exd { alpha })
    }

    pub fn rule(&self) -> WeightRule {
        self.rule
    }

    pub fn insert(&mut self, file: FileId, now: f64) {
        self.entries.insert(file, WeightEntry { weight: 1.0, last_access: now });
    }

    /// Applies the update rule; unknown files start from `W = 1` at `now`.
    pub fn touch(&mut self, file: FileId, now: f64) -> f64 {
        let rule = self.rule;
        let e = self.entries.entry(file).or_insert(WeightEntry { weight: 1.0, last_access: now });
        e.weight = rule.apply(e.weight, now - e.last_access);
        e.last_access = now;
        e.weight
    }

    pub fn weight(&self, file: FileId) -> f64 {
        self.entries.get(&file).map_or(1.0, |e| e.weight)
    }

    pub fn remove(&mut self, file: FileId) {
        self.entries.remove(&file);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicConfig {
    /// LRFU half life `H`, seconds.
    pub half_life: f64,
    /// EXD decay rate, 1/seconds.
    pub exd_alpha: f64,
    pub lrfu_upgrade_threshold: f64,
    /// LIFE and LFU-F age window, seconds.
    pub old_window: f64,
}

impl Default for ClassicConfig {
    fn default() -> Self {
        ClassicConfig { half_life: 6.0 * HOUR, exd_alpha: 1.16e-8, lrfu_upgrade_threshold: 3.0, old_window: 9.0 * HOUR }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DowngradeKind {
    Lru,
    Lfu,
    Lrfu,
    Life,
    LfuF,
    Exd,
}

impl DowngradeKind {
    pub const ALL: [DowngradeKind; 6] =
        [DowngradeKind::Lru, DowngradeKind::Lfu, DowngradeKind::Lrfu, DowngradeKind::Life, DowngradeKind::LfuF, DowngradeKind::Exd];

    pub fn name(self) -> &'static str {
        match self {
            DowngradeKind::Lru => "lru",
            DowngradeKind::Lfu => "lfu",
            DowngradeKind::Lrfu => "lrfu",
            DowngradeKind::Life => "life",
            DowngradeKind::LfuF => "lfu-f",
            DowngradeKind::Exd => "exd",
        }
    }
}

impl fmt::Display for DowngradeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DowngradeKind {
    type Err = PolicyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DowngradeKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| PolicyError::UnknownPolicy(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpgradeKind {
    Osa,
    Lrfu,
    Exd,
}

impl UpgradeKind {
    pub const ALL: [UpgradeKind; 3] = [UpgradeKind::Osa, UpgradeKind::Lrfu, UpgradeKind::Exd];

    pub fn name(self) -> &'static str {
        match self {
            UpgradeKind::Osa => "osa",
            UpgradeKind::Lrfu => "lrfu",
            UpgradeKind::Exd => "exd",
        }
    }
}

impl fmt::Display for UpgradeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UpgradeKind {
    type Err = PolicyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UpgradeKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| PolicyError::UnknownPolicy(s.to_string()))
    }
}

/// What a victim selector needs to know about one candidate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VictimInfo {
    pub file: FileId,
    /// Last access, or creation time for never-read files.
    pub last_touch: f64,
    pub access_count: u64,
    pub size: u64,
    /// LRFU or EXD weight; ignored by the other selectors.
    pub weight: f64,
}

impl VictimInfo {
    pub fn from_meta(meta: &FileMeta, weight: f64) -> Self {
        VictimInfo {
            file: meta.file_id,
            last_touch: meta.last_touch(),
            access_count: meta.total_access_count,
            size: meta.size,
            weight,
        }
    }
}

fn argmin_by<K: PartialOrd>(items: &[&VictimInfo], key: impl Fn(&VictimInfo) -> K) -> Option<FileId> {
    let mut best: Option<(&VictimInfo, K)> = None;
    for v in items {
        let k = key(v);
        let better = match &best {
            None => true,
            Some((b, bk)) => match k.partial_cmp(bk) {
                Some(std::cmp::Ordering::Less) => true,
                Some(std::cmp::Ordering::Equal) | None => v.file < b.file,
                Some(std::cmp::Ordering::Greater) => false,
            },
        };
        if better {
            best = Some((v, k));
        }
    }
    best.map(|(v, _)| v.file)
}

/// Picks the file to downgrade. Ties go to the lowest file id, so the result
/// does not depend on candidate order.
pub fn select_downgrade_victim(
    kind: DowngradeKind,
    candidates: &[VictimInfo],
    now: f64,
    old_window: f64,
) -> Result<FileId, PolicyError> {
    let all: Vec<&VictimInfo> = candidates.iter().collect();
    let lfu = |set: &[&VictimInfo]| argmin_by(set, |v| v.access_count);
    let (old, new): (Vec<&VictimInfo>, Vec<&VictimInfo>) =
        if matches!(kind, DowngradeKind::Life | DowngradeKind::LfuF) {
            all.iter().partition(|v| now - v.last_touch >= old_window)
        } else {
            (Vec::new(), Vec::new())
        };
    let picked = match kind {
        DowngradeKind::Lru => argmin_by(&all, |v| v.last_touch),
        DowngradeKind::Lfu => lfu(&all),
        DowngradeKind::Lrfu | DowngradeKind::Exd => argmin_by(&all, |v| v.weight),
        DowngradeKind::Life if !old.is_empty() => lfu(&old),
        DowngradeKind::Life => argmin_by(&new, |v| std::cmp::Reverse(v.size)),
        DowngradeKind::LfuF if !old.is_empty() => lfu(&old),
        DowngradeKind::LfuF => lfu(&new),
    };
    picked.ok_or(PolicyError::EmptyCandidates)
}

/// Access-triggered upgrade decision for the classic upgrade policies.
pub fn should_upgrade(kind: UpgradeKind, request: &UpgradeRequest, weight: f64, preview_weights: &[f64], cfg: &ClassicConfig) -> bool {
    if request.in_memory {
        return false;
    }
    match kind {
        UpgradeKind::Osa => true,
        UpgradeKind::Lrfu => weight > cfg.lrfu_upgrade_threshold,
        UpgradeKind::Exd => request.size <= request.headroom || weight > preview_weights.iter().sum::<f64>(),
    }
}

/// Downgrade policy wrapping [`select_downgrade_victim`].
#[derive(Clone, Debug)]
pub struct ClassicDowngrade {
    kind: DowngradeKind,
    cfg: ClassicConfig,
    weights: Option<WeightTable>,
}

impl ClassicDowngrade {
    pub fn new(kind: DowngradeKind, cfg: ClassicConfig) -> Self {
        let weights = match kind {
            DowngradeKind::Lrfu => Some(WeightTable::lrfu(cfg.half_life)),
            DowngradeKind::Exd => Some(WeightTable::exd(cfg.exd_alpha)),
            _ => None,
        };
        ClassicDowngrade { kind, cfg, weights }
    }

    pub fn kind(&self) -> DowngradeKind {
        self.kind
    }

    pub fn weight(&self, file: FileId) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w.weight(file))
    }
}

impl DowngradePolicy for ClassicDowngrade {
    fn name(&self) -> &str {
        self.kind.name()
    }

    fn on_create(&mut self, meta: &FileMeta, now: f64) {
        if let Some(w) = self.weights.as_mut() {
            w.insert(meta.file_id, now);
        }
    }

    fn on_access(&mut self, meta: &FileMeta, now: f64) {
        if let Some(w) = self.weights.as_mut() {
            w.touch(meta.file_id, now);
        }
    }

    fn on_delete(&mut self, file: FileId) {
        if let Some(w) = self.weights.as_mut() {
            w.remove(file);
        }
    }

    fn select_file_to_downgrade(&mut self, cluster: &Cluster, candidates: &[FileId], now: f64) -> Option<FileId> {
        let infos: Vec<VictimInfo> = candidates
            .iter()
            .filter_map(|f| cluster.file(*f))
            .map(|m| VictimInfo::from_meta(m, self.weight(m.file_id)))
            .collect();
        select_downgrade_victim(self.kind, &infos, now, self.cfg.old_window).ok()
    }
}

/// Upgrade policy acting only on the accessed file.
#[derive(Clone, Debug)]
pub struct ClassicUpgrade {
    kind: UpgradeKind,
    cfg: ClassicConfig,
    weights: Option<WeightTable>,
    pending: Option<FileId>,
}

impl ClassicUpgrade {
    pub fn new(kind: UpgradeKind, cfg: ClassicConfig) -> Self {
        let weights = match kind {
            UpgradeKind::Lrfu => Some(WeightTable::lrfu(cfg.half_life)),
            UpgradeKind::Exd => Some(WeightTable::exd(cfg.exd_alpha)),
            UpgradeKind::Osa => None,
        };
        ClassicUpgrade { kind, cfg, weights, pending: None }
    }

    pub fn kind(&self) -> UpgradeKind {
        self.kind
    }

    pub fn weight(&self, file: FileId) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w.weight(file))
    }
}

impl UpgradePolicy for ClassicUpgrade {
    fn name(&self) -> &str {
        self.kind.name()
    }

    fn on_create(&mut self, meta: &FileMeta, now: f64) {
        if let Some(w) = self.weights.as_mut() {
            w.insert(meta.file_id, now);
        }
    }

    fn on_access(&mut self, meta: &FileMeta, now: f64) {
        if let Some(w) = self.weights.as_mut() {
            w.touch(meta.file_id, now);
        }
    }

    fn on_delete(&mut self, file: FileId) {
        if let Some(w) = self.weights.as_mut() {
            w.remove(file);
        }
    }

    fn start_upgrade(&mut self, _cluster: &Cluster, request: Option<&UpgradeRequest>, _now: f64) -> bool {
        self.pending = None;
        let Some(req) = request else {
            return false;
        };
        let preview: Vec<f64> = req.eviction_preview.iter().map(|f| self.weight(*f)).collect();
        if should_upgrade(self.kind, req, self.weight(req.file), &preview, &self.cfg) {
            self.pending = Some(req.file);
        }
        self.pending.is_some()
    }

    fn select_file_to_upgrade(&mut self, _cluster: &Cluster, _now: f64) -> Option<FileId> {
        self.pending.take()
    }

    fn stop_upgrade(&mut self, _cluster: &Cluster, _now: f64) -> bool {
        self.pending.is_none()
    }

    fn wants_eviction_preview(&self) -> bool {
        self.kind == UpgradeKind::Exd
    }
}
