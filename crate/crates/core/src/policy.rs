//! Policy contract with the four decision points (start, select file,
//! select tier, stop) for downgrades and upgrades, and the replication
//! manager that drives both loops against a [`Cluster`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::sim::{Cluster, FileId, FileMeta, NodeId, Placement, PlacementMode, SimError, TierKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyThresholds {
    pub start_downgrade_frac: f64,
    pub stop_downgrade_frac: f64,
}

impl Default for PolicyThresholds {
    fn default() -> Self {
        PolicyThresholds { start_downgrade_frac: 0.90, stop_downgrade_frac: 0.85 }
    }
}

impl PolicyThresholds {
    pub fn validate(&self) -> Result<(), String> {
        let ok = 0.0 < self.stop_downgrade_frac
            && self.stop_downgrade_frac < self.start_downgrade_frac
            && self.start_downgrade_frac <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(format!(
                "thresholds need 0 < stop ({}) < start ({}) <= 1",
                self.stop_downgrade_frac, self.start_downgrade_frac
            ))
        }
    }
}

/// One pass through the decision points, kept for decision logs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub t: f64,
    pub tier: TierKind,
    pub start: bool,
    pub selected_file: Option<FileId>,
    pub target: Option<Placement>,
    pub stop: bool,
    /// Tier usage when the stop condition was evaluated.
    pub usage: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

/// Placement heuristic standing in for a full multi-objective placer.
///
/// Down: the adjacent lower tier on the source node or on any node without
/// a replica, most free bytes first. Up: the memory tier on the same kind of
/// eligible node. Ties go to the lowest node id. Returns `None` when nothing
/// fits.
pub fn select_target_tier(cluster: &Cluster, file: FileId, direction: Direction, from: Placement) -> Option<Placement> {
    let meta = cluster.file(file)?;
    let tier = match direction {
        Direction::Down => from.tier.lower()?,
        Direction::Up => {
            if from.tier == TierKind::Memory {
                return None;
            }
            TierKind::Memory
        }
    };
    let exclude = holders_except(cluster, file, from.node);
    cluster.best_node(tier, meta.size, &exclude).map(|n| Placement::new(n, tier))
}

fn holders_except(cluster: &Cluster, file: FileId, keep: NodeId) -> Vec<NodeId> {
    cluster.placements(file).iter().map(|p| p.node).filter(|n| *n != keep).collect()
}

/// Aggregate information about an access that may trigger an upgrade.
#[derive(Clone, Debug, PartialEq)]
pub struct UpgradeRequest {
    pub file: FileId,
    pub size: u64,
    pub in_memory: bool,
    /// Free memory bytes on the best eligible destination node.
    pub headroom: u64,
    /// Files the downgrade policy would evict to fit this one (empty when it
    /// already fits or no preview was requested).
    pub eviction_preview: Vec<FileId>,
}

pub trait DowngradePolicy {
    fn name(&self) -> &str;

    fn on_create(&mut self, _meta: &FileMeta, _now: f64) {}
    fn on_access(&mut self, _meta: &FileMeta, _now: f64) {}
    fn on_delete(&mut self, _file: FileId) {}
    fn on_tick(&mut self, _cluster: &Cluster, _now: f64) {}

    fn start_downgrade(&self, cluster: &Cluster, tier: TierKind, th: &PolicyThresholds) -> bool {
        cluster.tier_usage(tier) > th.start_downgrade_frac
    }

    fn select_file_to_downgrade(&mut self, cluster: &Cluster, candidates: &[FileId], now: f64) -> Option<FileId>;

    fn select_downgrade_tier(&self, cluster: &Cluster, file: FileId, from: Placement) -> Option<Placement> {
        select_target_tier(cluster, file, Direction::Down, from)
    }

    fn stop_downgrade(&self, cluster: &Cluster, tier: TierKind, th: &PolicyThresholds) -> bool {
        cluster.tier_usage(tier) <= th.stop_downgrade_frac
    }

    fn diagnostics(&self) -> Option<serde_json::Value> {
        None
    }
}

pub trait UpgradePolicy {
    fn name(&self) -> &str;

    fn on_create(&mut self, _meta: &FileMeta, _now: f64) {}
    fn on_access(&mut self, _meta: &FileMeta, _now: f64) {}
    fn on_delete(&mut self, _file: FileId) {}
    fn on_tick(&mut self, _cluster: &Cluster, _now: f64) {}

    /// `request` is `Some` for an access-triggered invocation and `None` for
    /// the periodic one.
    fn start_upgrade(&mut self, cluster: &Cluster, request: Option<&UpgradeRequest>, now: f64) -> bool;

    fn select_file_to_upgrade(&mut self, cluster: &Cluster, now: f64) -> Option<FileId>;

    fn select_upgrade_tier(&self, cluster: &Cluster, file: FileId, from: Placement) -> Option<Placement> {
        select_target_tier(cluster, file, Direction::Up, from)
    }

    fn stop_upgrade(&mut self, cluster: &Cluster, now: f64) -> bool;

    /// Whether access-triggered requests need an eviction preview.
    fn wants_eviction_preview(&self) -> bool {
        false
    }

    fn diagnostics(&self) -> Option<serde_json::Value> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Upgrade,
    Downgrade,
    /// Replica deleted because no lower tier had room.
    Drop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub t: f64,
    pub file: FileId,
    pub bytes: u64,
    pub kind: MoveKind,
    pub from: Placement,
    pub to: Option<Placement>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub t: f64,
    pub message: String,
}

/// Drives the downgrade and upgrade loops and owns the two policies.
pub struct ReplicationManager {
    down: Option<Box<dyn DowngradePolicy>>,
    up: Option<Box<dyn UpgradePolicy>>,
    thresholds: PolicyThresholds,
    moves: Vec<MoveRecord>,
    warnings: Vec<Warning>,
    decisions: Option<Vec<PolicyDecision>>,
}

impl ReplicationManager {
    pub fn new(
        down: Option<Box<dyn DowngradePolicy>>,
        up: Option<Box<dyn UpgradePolicy>>,
        thresholds: PolicyThresholds,
    ) -> Self {
        ReplicationManager { down, up, thresholds, moves: Vec::new(), warnings: Vec::new(), decisions: None }
    }

    pub fn thresholds(&self) -> &PolicyThresholds {
        &self.thresholds
    }

    pub fn enable_decision_log(&mut self) {
        self.decisions.get_or_insert_with(Vec::new);
    }

    pub fn decisions(&self) -> Option<&[PolicyDecision]> {
        self.decisions.as_deref()
    }

    pub fn moves(&self) -> &[MoveRecord] {
        &self.moves
    }

    pub fn warnings(&self) -> &[Warning] {
        &self.warnings
    }

    pub fn downgrade_name(&self) -> &str {
        self.down.as_ref().map_or("none", |p| p.name())
    }

    pub fn upgrade_name(&self) -> &str {
        self.up.as_ref().map_or("none", |p| p.name())
    }

    pub fn diagnostics(&self) -> Vec<serde_json::Value> {
        let d = self.down.as_ref().and_then(|p| p.diagnostics());
        let u = self.up.as_ref().and_then(|p| p.diagnostics());
        d.into_iter().chain(u).collect()
    }

    fn warn(&mut self, t: f64, message: String) {
        log::debug!("t={t}: {message}");
        self.warnings.push(Warning { t, message });
    }

    /// Creates a file, making room in memory first when static tiered
    /// placement would otherwise have to skip the memory tier.
    pub fn create_file(
        &mut self,
        cluster: &mut Cluster,
        meta: FileMeta,
        replication: usize,
        mode: PlacementMode,
    ) -> Result<Vec<Placement>, SimError> {
        let now = meta.created_at;
        let size = meta.size;
        let id = meta.file_id;
        if mode == PlacementMode::StaticTiered && self.down.is_some() && cluster.best_node(TierKind::Memory, size, &[]).is_none() {
            if let Some(node) = roomiest_node(cluster, TierKind::Memory, size, &[]) {
                self.make_room(cluster, node, TierKind::Memory, size, None, now)?;
            }
        }
        let placements = cluster.create_file(meta, replication, mode)?;
        if let Some(meta) = cluster.file(id) {
            let meta = meta.clone();
            if let Some(p) = self.down.as_mut() {
                p.on_create(&meta, now);
            }
            if let Some(p) = self.up.as_mut() {
                p.on_create(&meta, now);
            }
        }
        for tier in TierKind::DESCENDING {
            if placements.iter().any(|p| p.tier == tier) {
                self.run_downgrade(cluster, tier, now)?;
            }
        }
        Ok(placements)
    }

    pub fn on_access(&mut self, cluster: &Cluster, file: FileId, now: f64) {
        let Some(meta) = cluster.file(file) else { return };
        if let Some(p) = self.down.as_mut() {
            p.on_access(meta, now);
        }
        if let Some(p) = self.up.as_mut() {
            p.on_access(meta, now);
        }
    }

    pub fn delete_file(&mut self, cluster: &mut Cluster, file: FileId, now: f64) -> Result<(), SimError> {
        cluster.delete_file(file, now)?;
        if let Some(p) = self.down.as_mut() {
            p.on_delete(file);
        }
        if let Some(p) = self.up.as_mut() {
            p.on_delete(file);
        }
        Ok(())
    }

    /// Periodic hook: lets policies train, then runs a periodic upgrade pass.
    pub fn tick(&mut self, cluster: &mut Cluster, now: f64) -> Result<(), SimError> {
        if let Some(p) = self.down.as_mut() {
            p.on_tick(cluster, now);
        }
        if let Some(p) = self.up.as_mut() {
            p.on_tick(cluster, now);
        }
        self.run_upgrade(cluster, None, now)?;
        Ok(())
    }

    /// Downgrade loop for `tier`. Returns the moves executed by this call,
    /// including cascaded downgrades of the tiers that received data.
    pub fn run_downgrade(&mut self, cluster: &mut Cluster, tier: TierKind, now: f64) -> Result<Vec<MoveRecord>, SimError> {
        let mark = self.moves.len();
        let Some(mut down) = self.down.take() else {
            return Ok(Vec::new());
        };
        let result = self.downgrade_loop(cluster, down.as_mut(), tier, now);
        self.down = Some(down);
        result?;
        let executed = self.moves[mark..].to_vec();
        if let Some(lower) = tier.lower() {
            if executed.iter().any(|m| m.to.is_some_and(|p| p.tier == lower)) {
                let more = self.run_downgrade(cluster, lower, now)?;
                return Ok(executed.into_iter().chain(more).collect());
            }
        }
        Ok(executed)
    }

    fn downgrade_loop(
        &mut self,
        cluster: &mut Cluster,
        down: &mut dyn DowngradePolicy,
        tier: TierKind,
        now: f64,
    ) -> Result<(), SimError> {
        let th = self.thresholds;
        let start = down.start_downgrade(cluster, tier, &th);
        if !start {
            return Ok(());
        }
        let mut excluded = BTreeSet::new();
        loop {
            // A single replica on the bottom tier can be neither moved nor
            // dropped.
            let candidates: Vec<FileId> = cluster
                .files_on_tier(tier)
                .filter(|f| !excluded.contains(f) && (tier.lower().is_some() || cluster.placements(*f).len() >= 2))
                .collect();
            if candidates.is_empty() {
                self.warn(now, format!("downgrade of {tier} stopped: no candidates left"));
                break;
            }
            let Some(victim) = down.select_file_to_downgrade(cluster, &candidates, now) else {
                self.warn(now, format!("downgrade of {tier} stopped: policy selected nothing"));
                break;
            };
            let Some(source) = source_on_tier(cluster, victim, tier) else {
                excluded.insert(victim);
                continue;
            };
            let target = down.select_downgrade_tier(cluster, victim, source);
            let record = self.execute_downgrade(cluster, victim, source, target, now)?;
            if record.is_none() {
                excluded.insert(victim);
            }
            let stop = down.stop_downgrade(cluster, tier, &th);
            if let Some(log) = self.decisions.as_mut() {
                log.push(PolicyDecision {
                    t: now,
                    tier,
                    start,
                    selected_file: Some(victim),
                    target,
                    stop,
                    usage: cluster.tier_usage(tier),
                });
            }
            if stop {
                break;
            }
        }
        Ok(())
    }

    fn execute_downgrade(
        &mut self,
        cluster: &mut Cluster,
        file: FileId,
        source: Placement,
        target: Option<Placement>,
        now: f64,
    ) -> Result<Option<MoveRecord>, SimError> {
        let bytes = cluster.file(file).map_or(0, |m| m.size);
        let record = match target {
            Some(to) => {
                cluster.move_replica(file, source, to, now)?;
                MoveRecord { t: now, file, bytes, kind: MoveKind::Downgrade, from: source, to: Some(to) }
            }
            None if cluster.placements(file).len() >= 2 => {
                cluster.delete_replica(file, source, now)?;
                MoveRecord { t: now, file, bytes, kind: MoveKind::Drop, from: source, to: None }
            }
            None => {
                self.warn(now, format!("file {file} exempt from downgrade: single replica on {source}"));
                return Ok(None);
            }
        };
        self.moves.push(record.clone());
        Ok(Some(record))
    }

    /// Evicts files from one `(node, tier)` until `bytes` fit there. Returns
    /// whether enough room was made.
    pub fn make_room(
        &mut self,
        cluster: &mut Cluster,
        node: NodeId,
        tier: TierKind,
        bytes: u64,
        protect: Option<FileId>,
        now: f64,
    ) -> Result<bool, SimError> {
        let Some(mut down) = self.down.take() else {
            return Ok(cluster.node(node).tier(tier).free() >= bytes);
        };
        let mark = self.moves.len();
        let result = self.make_room_with(cluster, down.as_mut(), node, tier, bytes, protect, now);
        self.down = Some(down);
        let fits = result?;
        if let Some(lower) = tier.lower() {
            if self.moves[mark..].iter().any(|m| m.to.is_some_and(|p| p.tier == lower)) {
                self.run_downgrade(cluster, lower, now)?;
            }
        }
        Ok(fits)
    }

    #[allow(clippy::too_many_arguments)]
    fn make_room_with(
        &mut self,
        cluster: &mut Cluster,
        down: &mut dyn DowngradePolicy,
        node: NodeId,
        tier: TierKind,
        bytes: u64,
        protect: Option<FileId>,
        now: f64,
    ) -> Result<bool, SimError> {
        let mut excluded: BTreeSet<FileId> = protect.into_iter().collect();
        let source = Placement::new(node, tier);
        while cluster.node(node).tier(tier).free() < bytes {
            let candidates: Vec<FileId> =
                cluster.files_on_node_tier(node, tier).into_iter().filter(|f| !excluded.contains(f)).collect();
            if candidates.is_empty() {
                self.warn(now, format!("cannot free {bytes} bytes on {source}: no candidates left"));
                return Ok(false);
            }
            let Some(victim) = down.select_file_to_downgrade(cluster, &candidates, now) else {
                self.warn(now, format!("cannot free {bytes} bytes on {source}: policy selected nothing"));
                return Ok(false);
            };
            let target = down.select_downgrade_tier(cluster, victim, source);
            if self.execute_downgrade(cluster, victim, source, target, now)?.is_none() {
                excluded.insert(victim);
            }
        }
        Ok(true)
    }

    /// Files the downgrade policy would pick to free `bytes` on one
    /// `(node, tier)`, without moving anything.
    pub fn eviction_preview(
        &mut self,
        cluster: &Cluster,
        node: NodeId,
        tier: TierKind,
        bytes: u64,
        protect: FileId,
        now: f64,
    ) -> Vec<FileId> {
        let Some(down) = self.down.as_mut() else {
            return Vec::new();
        };
        let mut free = cluster.node(node).tier(tier).free();
        let mut candidates: Vec<FileId> =
            cluster.files_on_node_tier(node, tier).into_iter().filter(|f| *f != protect).collect();
        let mut chosen = Vec::new();
        while free < bytes && !candidates.is_empty() {
            let Some(victim) = down.select_file_to_downgrade(cluster, &candidates, now) else {
                break;
            };
            candidates.retain(|f| *f != victim);
            free += cluster.file(victim).map_or(0, |m| m.size);
            chosen.push(victim);
        }
        chosen
    }

    /// Upgrade loop. `accessed` is the file being read, or `None` for the
    /// periodic invocation.
    pub fn run_upgrade(
        &mut self,
        cluster: &mut Cluster,
        accessed: Option<FileId>,
        now: f64,
    ) -> Result<Vec<MoveRecord>, SimError> {
        let mark = self.moves.len();
        let Some(mut up) = self.up.take() else {
            return Ok(Vec::new());
        };
        let result = self.upgrade_loop(cluster, up.as_mut(), accessed, now);
        self.up = Some(up);
        result?;
        Ok(self.moves[mark..].to_vec())
    }

    fn upgrade_loop(
        &mut self,
        cluster: &mut Cluster,
        up: &mut dyn UpgradePolicy,
        accessed: Option<FileId>,
        now: f64,
    ) -> Result<(), SimError> {
        let request = match accessed {
            Some(file) => match self.upgrade_request(cluster, up, file, now) {
                Some(r) => Some(r),
                None => return Ok(()),
            },
            None => None,
        };
        if !up.start_upgrade(cluster, request.as_ref(), now) {
            return Ok(());
        }
        let mut attempted = BTreeSet::new();
        loop {
            let Some(file) = up.select_file_to_upgrade(cluster, now) else {
                break;
            };
            if !attempted.insert(file) {
                self.warn(now, format!("upgrade loop stopped: file {file} selected twice"));
                break;
            }
            self.execute_upgrade(cluster, up, file, now)?;
            if up.stop_upgrade(cluster, now) {
                break;
            }
        }
        Ok(())
    }

    fn upgrade_request(
        &mut self,
        cluster: &Cluster,
        up: &dyn UpgradePolicy,
        file: FileId,
        now: f64,
    ) -> Option<UpgradeRequest> {
        let size = cluster.file(file)?.size;
        let in_memory = cluster.has_tier(file, TierKind::Memory);
        let (headroom, preview) = match lowest_placement(cluster, file) {
            Some(source) if !in_memory => {
                let exclude = holders_except(cluster, file, source.node);
                match roomiest_node(cluster, TierKind::Memory, size, &exclude) {
                    Some(node) => {
                        let free = cluster.node(node).tier(TierKind::Memory).free();
                        let preview = if free < size && up.wants_eviction_preview() {
                            self.eviction_preview(cluster, node, TierKind::Memory, size, file, now)
                        } else {
                            Vec::new()
                        };
                        (free, preview)
                    }
                    None => (0, Vec::new()),
                }
            }
            _ => (0, Vec::new()),
        };
        Some(UpgradeRequest { file, size, in_memory, headroom, eviction_preview: preview })
    }

    fn execute_upgrade(
        &mut self,
        cluster: &mut Cluster,
        up: &mut dyn UpgradePolicy,
        file: FileId,
        now: f64,
    ) -> Result<(), SimError> {
        if cluster.has_tier(file, TierKind::Memory) {
            return Ok(());
        }
        let Some(source) = lowest_placement(cluster, file) else {
            return Ok(());
        };
        let size = cluster.file(file).map_or(0, |m| m.size);
        let mut target = up.select_upgrade_tier(cluster, file, source);
        if target.is_none() {
            let exclude = holders_except(cluster, file, source.node);
            if let Some(node) = roomiest_node(cluster, TierKind::Memory, size, &exclude) {
                if self.make_room(cluster, node, TierKind::Memory, size, Some(file), now)? {
                    target = Some(Placement::new(node, TierKind::Memory));
                }
            }
        }
        let Some(to) = target else {
            self.warn(now, format!("upgrade of file {file} skipped: no memory room"));
            return Ok(());
        };
        // Making room may have cascaded into this file's own replicas.
        let source = match lowest_placement(cluster, file) {
            Some(p) if !holders_except(cluster, file, p.node).contains(&to.node) => p,
            _ => {
                self.warn(now, format!("upgrade of file {file} skipped: replicas moved while making room"));
                return Ok(());
            }
        };
        cluster.move_replica(file, source, to, now)?;
        self.moves.push(MoveRecord { t: now, file, bytes: size, kind: MoveKind::Upgrade, from: source, to: Some(to) });
        self.run_downgrade(cluster, TierKind::Memory, now)?;
        Ok(())
    }
}

/// Node with the most free bytes on `tier` among those whose capacity could
/// hold `size` at all, ignoring current usage.
fn roomiest_node(cluster: &Cluster, tier: TierKind, size: u64, exclude: &[NodeId]) -> Option<NodeId> {
    cluster
        .nodes()
        .iter()
        .filter(|n| !exclude.contains(&n.id) && n.tier(tier).capacity >= size)
        .max_by(|a, b| a.tier(tier).free().cmp(&b.tier(tier).free()).then(b.id.cmp(&a.id)))
        .map(|n| n.id)
}

/// Replica of `file` on `tier` on the most loaded node (lowest id on ties).
fn source_on_tier(cluster: &Cluster, file: FileId, tier: TierKind) -> Option<Placement> {
    cluster
        .placements(file)
        .iter()
        .filter(|p| p.tier == tier)
        .max_by(|a, b| {
            let ua = cluster.node(a.node).tier(tier).used;
            let ub = cluster.node(b.node).tier(tier).used;
            ua.cmp(&ub).then(b.node.cmp(&a.node))
        })
        .copied()
}

/// Lowest-tier replica (lowest node id on ties): the one an upgrade moves.
fn lowest_placement(cluster: &Cluster, file: FileId) -> Option<Placement> {
    cluster.placements(file).iter().min_by(|a, b| a.tier.cmp(&b.tier).then(a.node.cmp(&b.node))).copied()
}
