//! Discrete-event model of a multi-tier cluster.
//!
//! Every node carries a memory, SSD and HDD tier with fixed capacity and
//! bandwidth. Files are placed whole (one replica = one full copy on a
//! `(node, tier)` pair) and the [`Cluster`] keeps the replica map, the per-tier
//! usage accounting and a ledger of background bytes moved between tiers.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type FileId = u64;
pub type NodeId = usize;

pub const MB: u64 = 1 << 20;
pub const GB: u64 = 1 << 30;

/// Storage media class. The derived order is `Hdd < Ssd < Memory`, so a
/// "higher" tier always compares greater.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TierKind {
    Hdd,
    Ssd,
    Memory,
}

impl TierKind {
    /// Highest to lowest.
    pub const DESCENDING: [TierKind; 3] = [TierKind::Memory, TierKind::Ssd, TierKind::Hdd];

    pub fn index(self) -> usize {
        match self {
            TierKind::Hdd => 0,
            TierKind::Ssd => 1,
            TierKind::Memory => 2,
        }
    }

    pub fn lower(self) -> Option<TierKind> {
        match self {
            TierKind::Memory => Some(TierKind::Ssd),
            TierKind::Ssd => Some(TierKind::Hdd),
            TierKind::Hdd => None,
        }
    }

    pub fn higher(self) -> Option<TierKind> {
        match self {
            TierKind::Hdd => Some(TierKind::Ssd),
            TierKind::Ssd => Some(TierKind::Memory),
            TierKind::Memory => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TierKind::Memory => "memory",
            TierKind::Ssd => "ssd",
            TierKind::Hdd => "hdd",
        }
    }
}

impl fmt::Display for TierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TierState {
    pub capacity: u64,
    pub used: u64,
    /// bytes per second
    pub read_bw: f64,
    /// bytes per second
    pub write_bw: f64,
}

impl TierState {
    pub fn free(&self) -> u64 {
        self.capacity - self.used
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    tiers: [TierState; 3],
}

impl Node {
    pub fn tier(&self, kind: TierKind) -> &TierState {
        &self.tiers[kind.index()]
    }

    fn tier_mut(&mut self, kind: TierKind) -> &mut TierState {
        &mut self.tiers[kind.index()]
    }
}

/// Capacity and bandwidth of one tier instance, as written in config files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierSpec {
    pub capacity_gb: f64,
    pub read_mbps: f64,
    pub write_mbps: f64,
}

impl TierSpec {
    fn state(&self) -> TierState {
        TierState {
            capacity: (self.capacity_gb * GB as f64).round() as u64,
            used: 0,
            read_bw: self.read_mbps * MB as f64,
            write_bw: self.write_mbps * MB as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementMode {
    /// Every replica on HDD, distinct nodes.
    HdfsAllHdd,
    /// One replica per tier (memory, SSD, HDD), degrading toward HDD when a
    /// tier has no room.
    StaticTiered,
    /// Every replica on HDD; used by upgrade-only experiments where the
    /// upgrade policy alone decides what reaches memory.
    AllHdd,
}

impl PlacementMode {
    fn desired_tiers(self, replication: usize) -> Vec<TierKind> {
        match self {
            PlacementMode::HdfsAllHdd | PlacementMode::AllHdd => vec![TierKind::Hdd; replication],
            PlacementMode::StaticTiered => (0..replication)
                .map(|i| TierKind::DESCENDING[i.min(2)])
                .collect(),
        }
    }

    fn degrades(self) -> bool {
        matches!(self, PlacementMode::StaticTiered)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub nodes: usize,
    pub memory: TierSpec,
    pub ssd: TierSpec,
    pub hdd: TierSpec,
    /// Length of the per-file access history.
    pub history_k: usize,
    pub replication: usize,
    pub placement: PlacementMode,
    /// Serve reads from the best replica instead of a uniformly drawn one.
    pub tier_aware: bool,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            nodes: 11,
            memory: TierSpec { capacity_gb: 4.0, read_mbps: 2000.0, write_mbps: 1000.0 },
            ssd: TierSpec { capacity_gb: 64.0, read_mbps: 500.0, write_mbps: 300.0 },
            hdd: TierSpec { capacity_gb: 400.0, read_mbps: 150.0, write_mbps: 90.0 },
            history_k: 12,
            replication: 3,
            placement: PlacementMode::StaticTiered,
            tier_aware: true,
            seed: 0,
        }
    }
}

impl ClusterConfig {
    pub fn tier_spec(&self, kind: TierKind) -> &TierSpec {
        match kind {
            TierKind::Memory => &self.memory,
            TierKind::Ssd => &self.ssd,
            TierKind::Hdd => &self.hdd,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.nodes == 0 || self.history_k == 0 || self.replication == 0 {
            return Err(SimError::Config("nodes, history_k and replication must be positive".into()));
        }
        if self.replication > self.nodes {
            return Err(SimError::InvalidReplication { requested: self.replication, nodes: self.nodes });
        }
        for kind in TierKind::DESCENDING {
            let spec = self.tier_spec(kind);
            if !(spec.capacity_gb >= 0.0 && spec.read_mbps > 0.0 && spec.write_mbps > 0.0) {
                return Err(SimError::Config(format!("tier {kind} needs capacity >= 0 and positive bandwidths")));
            }
        }
        Ok(())
    }
}

/// Per-file metadata: size, creation time and a bounded FIFO of the most
/// recent access timestamps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileMeta {
    pub file_id: FileId,
    pub size: u64,
    pub created_at: f64,
    pub access_times: VecDeque<f64>,
    pub total_access_count: u64,
    pub history_k: usize,
}

impl FileMeta {
    pub fn new(file_id: FileId, size: u64, created_at: f64, history_k: usize) -> Self {
        FileMeta {
            file_id,
            size,
            created_at,
            access_times: VecDeque::with_capacity(history_k),
            total_access_count: 0,
            history_k,
        }
    }

    /// Appends an access, dropping the oldest one beyond `history_k`.
    /// Out-of-order timestamps are clamped to the latest recorded access so
    /// the history stays sorted.
    pub fn record_access(&mut self, at: f64) {
        let at = match self.access_times.back() {
            Some(&last) if at < last => last,
            _ => at,
        };
        if self.access_times.len() == self.history_k {
            self.access_times.pop_front();
        }
        self.access_times.push_back(at);
        self.total_access_count += 1;
    }

    pub fn last_access(&self) -> Option<f64> {
        self.access_times.back().copied()
    }

    /// Last access, or creation time for files never read.
    pub fn last_touch(&self) -> f64 {
        self.last_access().unwrap_or(self.created_at)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Placement {
    pub node: NodeId,
    pub tier: TierKind,
}

impl Placement {
    pub fn new(node: NodeId, tier: TierKind) -> Self {
        Placement { node, tier }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}:{}", self.node, self.tier)
    }
}

/// Which `(node, tier)` pairs hold each live file, with a per-tier index.
#[derive(Clone, Debug, Default)]
pub struct ReplicaMap {
    placements: BTreeMap<FileId, Vec<Placement>>,
    by_tier: [BTreeMap<FileId, u32>; 3],
}

impl ReplicaMap {
    pub fn get(&self, file: FileId) -> Option<&[Placement]> {
        self.placements.get(&file).map(Vec::as_slice)
    }

    pub fn files(&self) -> impl Iterator<Item = (FileId, &[Placement])> {
        self.placements.iter().map(|(f, p)| (*f, p.as_slice()))
    }

    pub fn files_on_tier(&self, tier: TierKind) -> impl Iterator<Item = FileId> + '_ {
        self.by_tier[tier.index()].keys().copied()
    }

    pub fn count_on_tier(&self, tier: TierKind) -> usize {
        self.by_tier[tier.index()].len()
    }

    fn insert(&mut self, file: FileId, p: Placement) {
        let list = self.placements.entry(file).or_default();
        list.push(p);
        list.sort();
        *self.by_tier[p.tier.index()].entry(file).or_insert(0) += 1;
    }

    fn remove(&mut self, file: FileId, p: Placement) -> bool {
        let Some(list) = self.placements.get_mut(&file) else {
            return false;
        };
        let Some(pos) = list.iter().position(|x| *x == p) else {
            return false;
        };
        list.remove(pos);
        if list.is_empty() {
            self.placements.remove(&file);
        }
        let idx = &mut self.by_tier[p.tier.index()];
        if let Some(c) = idx.get_mut(&file) {
            *c -= 1;
            if *c == 0 {
                idx.remove(&file);
            }
        }
        true
    }
}

/// A scheduled item ordered by `(time, insertion sequence)`.
#[derive(Debug)]
struct Scheduled<E> {
    time: f64,
    seq: u64,
    payload: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<E> Eq for Scheduled<E> {}
impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Scheduled<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

/// Simulation clock and event queue. Ties are broken by insertion order.
#[derive(Debug)]
pub struct SimClock<E> {
    now: f64,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Scheduled<E>>>,
}

impl<E> Default for SimClock<E> {
    fn default() -> Self {
        SimClock { now: 0.0, next_seq: 0, queue: BinaryHeap::new() }
    }
}

impl<E> SimClock<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Schedules `payload` at `time`; times in the past are clamped to `now`.
    pub fn schedule(&mut self, time: f64, payload: E) {
        let time = if time < self.now { self.now } else { time };
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Scheduled { time, seq, payload }));
    }

    pub fn pop(&mut self) -> Option<(f64, E)> {
        let Reverse(item) = self.queue.pop()?;
        self.now = item.time;
        Some((item.time, item.payload))
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.queue.peek().map(|Reverse(s)| s.time)
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("no feasible placement for file {file} ({size} bytes)")]
    CapacityExhausted { file: FileId, size: u64 },
    #[error("file {0} already exists")]
    DuplicateFile(FileId),
    #[error("unknown file {0}")]
    UnknownFile(FileId),
    #[error("invalid move of file {file}: {reason}")]
    InvalidMove { file: FileId, reason: String },
    #[error("refusing to delete the last replica of file {0}")]
    LastReplica(FileId),
    #[error("replication {requested} exceeds node count {nodes}")]
    InvalidReplication { requested: usize, nodes: usize },
    #[error("invalid cluster config: {0}")]
    Config(String),
}

/// One line of the optional event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEvent {
    Create { t: f64, file: FileId, size: u64, placements: Vec<Placement> },
    Read { t: f64, file: FileId, served: Placement, service: f64 },
    Move { t: f64, file: FileId, from: Placement, to: Placement, bytes: u64 },
    DeleteReplica { t: f64, file: FileId, placement: Placement },
    DeleteFile { t: f64, file: FileId },
}

/// Background I/O charged to replica movement.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveLedger {
    /// `moved[from][to]` in bytes, indexed by [`TierKind::index`].
    pub moved: [[u64; 3]; 3],
    /// Bytes removed by replica deletions (not whole-file deletes), per tier.
    pub dropped: [u64; 3],
}

impl MoveLedger {
    pub fn upgraded_into(&self, tier: TierKind) -> u64 {
        let to = tier.index();
        (0..to).map(|from| self.moved[from][to]).sum()
    }

    pub fn downgraded_from(&self, tier: TierKind) -> u64 {
        let from = tier.index();
        (0..from).map(|to| self.moved[from][to]).sum::<u64>() + self.dropped[from]
    }
}

/// Outcome of a read: where it was served from and what the best replica was
/// right before the access.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadOutcome {
    pub served: Placement,
    pub best_tier: TierKind,
    pub service_time: f64,
}

/// The simulated cluster: nodes, file metadata and replica placements.
#[derive(Clone, Debug)]
pub struct Cluster {
    cfg: ClusterConfig,
    nodes: Vec<Node>,
    files: BTreeMap<FileId, FileMeta>,
    replicas: ReplicaMap,
    rng: ChaCha8Rng,
    ledger: MoveLedger,
    log: Option<Vec<SimEvent>>,
}

impl Cluster {
    pub fn new(cfg: ClusterConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let nodes = (0..cfg.nodes)
            .map(|id| Node {
                id,
                tiers: [cfg.hdd.state(), cfg.ssd.state(), cfg.memory.state()],
            })
            .collect();
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Cluster {
            cfg,
            nodes,
            files: BTreeMap::new(),
            replicas: ReplicaMap::default(),
            rng,
            ledger: MoveLedger::default(),
            log: None,
        })
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.cfg
    }

    pub fn enable_event_log(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn event_log(&self) -> Option<&[SimEvent]> {
        self.log.as_deref()
    }

    fn emit(&mut self, ev: SimEvent) {
        if let Some(log) = self.log.as_mut() {
            log.push(ev);
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn file(&self, id: FileId) -> Option<&FileMeta> {
        self.files.get(&id)
    }

    pub fn files(&self) -> impl Iterator<Item = &FileMeta> {
        self.files.values()
    }

    pub fn file_count(&self) -> usize {
        self.files.len()
    }

    pub fn placements(&self, id: FileId) -> &[Placement] {
        self.replicas.get(id).unwrap_or(&[])
    }

    pub fn replicas(&self) -> &ReplicaMap {
        &self.replicas
    }

    pub fn ledger(&self) -> &MoveLedger {
        &self.ledger
    }

    pub fn has_tier(&self, id: FileId, tier: TierKind) -> bool {
        self.placements(id).iter().any(|p| p.tier == tier)
    }

    pub fn best_tier(&self, id: FileId) -> Option<TierKind> {
        self.placements(id).iter().map(|p| p.tier).max()
    }

    pub fn files_on_tier(&self, tier: TierKind) -> impl Iterator<Item = FileId> + '_ {
        self.replicas.files_on_tier(tier)
    }

    pub fn files_on_node_tier(&self, node: NodeId, tier: TierKind) -> Vec<FileId> {
        self.replicas
            .files_on_tier(tier)
            .filter(|f| self.placements(*f).contains(&Placement::new(node, tier)))
            .collect()
    }

    /// Node holding a free slot of at least `size` bytes on `tier`, preferring
    /// the most free bytes and then the lowest node id.
    pub fn best_node(&self, tier: TierKind, size: u64, exclude: &[NodeId]) -> Option<NodeId> {
        self.nodes
            .iter()
            .filter(|n| !exclude.contains(&n.id) && n.tier(tier).free() >= size)
            .max_by(|a, b| a.tier(tier).free().cmp(&b.tier(tier).free()).then(b.id.cmp(&a.id)))
            .map(|n| n.id)
    }

    /// Fraction of the tier's aggregate capacity in use.
    pub fn tier_usage(&self, tier: TierKind) -> f64 {
        let (used, cap) = self.nodes.iter().fold((0u64, 0u64), |(u, c), n| {
            let t = n.tier(tier);
            (u + t.used, c + t.capacity)
        });
        if cap == 0 {
            0.0
        } else {
            used as f64 / cap as f64
        }
    }

    pub fn tier_used_bytes(&self, tier: TierKind) -> u64 {
        self.nodes.iter().map(|n| n.tier(tier).used).sum()
    }

    pub fn tier_capacity_bytes(&self, tier: TierKind) -> u64 {
        self.nodes.iter().map(|n| n.tier(tier).capacity).sum()
    }

    /// Registers a new file and places `replication` whole replicas on
    /// distinct nodes according to `mode`.
    pub fn create_file(
        &mut self,
        meta: FileMeta,
        replication: usize,
        mode: PlacementMode,
    ) -> Result<Vec<Placement>, SimError> {
        if self.files.contains_key(&meta.file_id) {
            return Err(SimError::DuplicateFile(meta.file_id));
        }
        if replication == 0 || replication > self.nodes.len() {
            return Err(SimError::InvalidReplication { requested: replication, nodes: self.nodes.len() });
        }
        let plan = self.plan_placements(meta.size, replication, mode).ok_or(SimError::CapacityExhausted {
            file: meta.file_id,
            size: meta.size,
        })?;
        let id = meta.file_id;
        let size = meta.size;
        let t = meta.created_at;
        for p in &plan {
            self.nodes[p.node].tier_mut(p.tier).used += size;
            self.replicas.insert(id, *p);
        }
        self.files.insert(id, meta);
        let placements = self.placements(id).to_vec();
        self.emit(SimEvent::Create { t, file: id, size, placements: placements.clone() });
        Ok(placements)
    }

    fn plan_placements(&self, size: u64, replication: usize, mode: PlacementMode) -> Option<Vec<Placement>> {
        let mut used_nodes: Vec<NodeId> = Vec::with_capacity(replication);
        let mut plan = Vec::with_capacity(replication);
        for want in mode.desired_tiers(replication) {
            let mut tier = Some(want);
            let mut chosen = None;
            while let Some(t) = tier {
                if let Some(n) = self.best_node(t, size, &used_nodes) {
                    chosen = Some(Placement::new(n, t));
                    break;
                }
                tier = if mode.degrades() { t.lower() } else { None };
            }
            let p = chosen?;
            used_nodes.push(p.node);
            plan.push(p);
        }
        Some(plan)
    }

    /// Serves a read and appends `at` to the file's access history.
    pub fn read_file(&mut self, id: FileId, at: f64, tier_aware: bool) -> Result<ReadOutcome, SimError> {
        let placements = self.replicas.get(id).ok_or(SimError::UnknownFile(id))?;
        let best = placements
            .iter()
            .copied()
            .max_by(|a, b| a.tier.cmp(&b.tier).then(b.node.cmp(&a.node)))
            .ok_or(SimError::UnknownFile(id))?;
        let served = if tier_aware {
            best
        } else {
            placements[self.rng.random_range(0..placements.len())]
        };
        let meta = self.files.get_mut(&id).ok_or(SimError::UnknownFile(id))?;
        meta.record_access(at);
        let size = meta.size;
        let service_time = size as f64 / self.nodes[served.node].tier(served.tier).read_bw;
        self.emit(SimEvent::Read { t: at, file: id, served, service: service_time });
        Ok(ReadOutcome { served, best_tier: best.tier, service_time })
    }

    /// Moves one replica; usage is conserved and the replica count unchanged.
    pub fn move_replica(&mut self, id: FileId, from: Placement, to: Placement, at: f64) -> Result<(), SimError> {
        let placements = self.replicas.get(id).ok_or(SimError::UnknownFile(id))?;
        let invalid = |reason: &str| SimError::InvalidMove { file: id, reason: reason.to_string() };
        if !placements.contains(&from) {
            return Err(invalid("source is not a current placement"));
        }
        if from == to {
            return Err(invalid("source equals destination"));
        }
        if to.node != from.node && placements.iter().any(|p| p.node == to.node) {
            return Err(invalid("destination node already holds the file"));
        }
        if to.node >= self.nodes.len() {
            return Err(invalid("destination node does not exist"));
        }
        let size = self.files[&id].size;
        if self.nodes[to.node].tier(to.tier).free() < size {
            return Err(SimError::CapacityExhausted { file: id, size });
        }
        self.nodes[from.node].tier_mut(from.tier).used -= size;
        self.nodes[to.node].tier_mut(to.tier).used += size;
        self.replicas.remove(id, from);
        self.replicas.insert(id, to);
        self.ledger.moved[from.tier.index()][to.tier.index()] += size;
        self.emit(SimEvent::Move { t: at, file: id, from, to, bytes: size });
        Ok(())
    }

    /// Drops one replica. The last replica of a file is never removed here;
    /// use [`Cluster::delete_file`] for that.
    pub fn delete_replica(&mut self, id: FileId, placement: Placement, at: f64) -> Result<(), SimError> {
        let placements = self.replicas.get(id).ok_or(SimError::UnknownFile(id))?;
        if !placements.contains(&placement) {
            return Err(SimError::InvalidMove { file: id, reason: "no such placement".into() });
        }
        if placements.len() < 2 {
            return Err(SimError::LastReplica(id));
        }
        let size = self.files[&id].size;
        self.nodes[placement.node].tier_mut(placement.tier).used -= size;
        self.replicas.remove(id, placement);
        self.ledger.dropped[placement.tier.index()] += size;
        self.emit(SimEvent::DeleteReplica { t: at, file: id, placement });
        Ok(())
    }

    /// Removes a file with all of its replicas.
    pub fn delete_file(&mut self, id: FileId, at: f64) -> Result<FileMeta, SimError> {
        let meta = self.files.remove(&id).ok_or(SimError::UnknownFile(id))?;
        for p in self.replicas.get(id).map(<[Placement]>::to_vec).unwrap_or_default() {
            self.nodes[p.node].tier_mut(p.tier).used -= meta.size;
            self.replicas.remove(id, p);
        }
        self.emit(SimEvent::DeleteFile { t: at, file: id });
        Ok(meta)
    }

    /// Full consistency check, used by tests and debug assertions.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut expected = vec![[0u64; 3]; self.nodes.len()];
        for (id, placements) in self.replicas.files() {
            let meta = self.files.get(&id).ok_or_else(|| format!("placements for unknown file {id}"))?;
            if placements.is_empty() {
                return Err(format!("file {id} has no placements"));
            }
            let mut nodes: Vec<NodeId> = placements.iter().map(|p| p.node).collect();
            nodes.sort_unstable();
            nodes.dedup();
            if nodes.len() != placements.len() {
                return Err(format!("file {id} has two replicas on one node"));
            }
            for p in placements {
                expected[p.node][p.tier.index()] += meta.size;
            }
        }
        for meta in self.files.values() {
            if self.replicas.get(meta.file_id).is_none() {
                return Err(format!("file {} has zero placements", meta.file_id));
            }
            if meta.access_times.len() > meta.history_k {
                return Err(format!("file {} history too long", meta.file_id));
            }
            if meta.access_times.iter().zip(meta.access_times.iter().skip(1)).any(|(a, b)| a > b) {
                return Err(format!("file {} history unsorted", meta.file_id));
            }
            if (meta.total_access_count as usize) < meta.access_times.len() {
                return Err(format!("file {} access count below history length", meta.file_id));
            }
        }
        for n in &self.nodes {
            for kind in TierKind::DESCENDING {
                let t = n.tier(kind);
                if t.used > t.capacity {
                    return Err(format!("node {} tier {kind} over capacity", n.id));
                }
                if t.used != expected[n.id][kind.index()] {
                    return Err(format!(
                        "node {} tier {kind}: used {} but placements sum to {}",
                        n.id, t.used, expected[n.id][kind.index()]
                    ));
                }
            }
        }
        Ok(())
    }
}
