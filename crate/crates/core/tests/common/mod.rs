//! Randomized event driver shared by the invariant suites.
#![allow(dead_code)]

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tiersim::config::RunConfig;
use tiersim::policy::{PolicyThresholds, ReplicationManager};
use tiersim::sim::{Cluster, ClusterConfig, FileId, FileMeta, PlacementMode, TierKind, TierSpec, MB};

pub const EVENTS: usize = 10_000;

pub const PAIRS: [(&str, &str); 8] = [
    ("lru", "none"),
    ("lfu", "osa"),
    ("lrfu", "lrfu"),
    ("exd", "exd"),
    ("life", "osa"),
    ("lfu-f", "lrfu"),
    ("lru", "osa"),
    ("xgb", "xgb"),
];

pub fn small_config(downgrade: &str, upgrade: &str, placement: PlacementMode) -> RunConfig {
    let mut cfg = RunConfig { downgrade: downgrade.into(), upgrade: upgrade.into(), ..RunConfig::default() };
    cfg.cluster = ClusterConfig {
        nodes: 4,
        memory: TierSpec { capacity_gb: 0.25, read_mbps: 2000.0, write_mbps: 1000.0 },
        ssd: TierSpec { capacity_gb: 1.0, read_mbps: 500.0, write_mbps: 300.0 },
        hdd: TierSpec { capacity_gb: 4.0, read_mbps: 150.0, write_mbps: 90.0 },
        replication: 3,
        placement,
        ..ClusterConfig::default()
    };
    cfg.xgb.upgrade_batch_cap = 64 * MB;
    cfg.xgb.scan_k = 32;
    cfg.xgb.sweep_sample = 50;
    cfg.xgb.boost_every = 200;
    cfg.xgb.store_capacity = 3000;
    cfg.xgb.holdout_window = 20;
    cfg.xgb.warmup_error_threshold = 0.2;
    cfg.xgb.gbt.max_depth = 6;
    cfg.xgb.gbt.rounds_per_fit = 3;
    cfg
}

/// Everything a run produced, serialized for byte comparison.
pub struct Outcome {
    pub log: String,
    pub moves: String,
    pub move_count: usize,
}

pub fn drive(seed: u64, cfg: &RunConfig) -> Result<Outcome, TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cluster = Cluster::new(cfg.cluster.clone()).unwrap();
    cluster.enable_event_log();
    let mut mgr: ReplicationManager = cfg.manager().unwrap();
    mgr.enable_decision_log();
    let th: PolicyThresholds = *mgr.thresholds();
    let tier_aware = cfg.cluster.tier_aware;
    let mut live: Vec<FileId> = Vec::new();
    let mut next_id: FileId = 1;
    let mut now = 0.0;
    for _ in 0..EVENTS {
        now += rng.random_range(0.0..30.0);
        let roll: f64 = rng.random();
        let decisions_before = mgr.decisions().map_or(0, |d| d.len());
        let warnings_before = mgr.warnings().len();
        let mut created = false;
        let (mut forced, mut forced_moves, mut forced_warned) = (TierKind::Memory, 0, false);
        if roll < 0.30 || live.is_empty() {
            let size = rng.random_range(1..=48) * MB;
            let meta = FileMeta::new(next_id, size, now, cfg.cluster.history_k);
            if mgr.create_file(&mut cluster, meta, cfg.cluster.replication, cfg.cluster.placement).is_ok() {
                live.push(next_id);
                created = true;
            }
            next_id += 1;
        } else if roll < 0.70 {
            let f = live[rng.random_range(0..live.len())];
            let before = cluster.placements(f).to_vec();
            let out = cluster.read_file(f, now, tier_aware).unwrap();
            prop_assert!(before.contains(&out.served));
            prop_assert_eq!(out.best_tier, before.iter().map(|p| p.tier).max().unwrap());
            mgr.on_access(&cluster, f, now);
            mgr.run_upgrade(&mut cluster, Some(f), now).unwrap();
        } else if roll < 0.95 {
            let f = live.swap_remove(rng.random_range(0..live.len()));
            mgr.delete_file(&mut cluster, f, now).unwrap();
            prop_assert!(cluster.file(f).is_none());
        } else if roll < 0.98 {
            mgr.tick(&mut cluster, now).unwrap();
        } else {
            // Direct call: a non-empty move list means the tier ended at or
            // below the stop fraction, or the candidates ran out.
            forced = TierKind::DESCENDING[rng.random_range(0..3)];
            let w = mgr.warnings().len();
            forced_moves = mgr.run_downgrade(&mut cluster, forced, now).unwrap().len();
            forced_warned = mgr.warnings().len() > w;
        }

        // Capacity, conservation, distinct nodes, non-empty placements.
        if let Err(e) = cluster.check_invariants() {
            return Err(TestCaseError::fail(e));
        }
        prop_assert_eq!(cluster.file_count(), live.len());
        for &f in &live {
            prop_assert!(!cluster.placements(f).is_empty());
        }
        for tier in TierKind::DESCENDING {
            let used: u64 = cluster.nodes().iter().map(|n| n.tier(tier).used).sum();
            prop_assert_eq!(used, cluster.tier_used_bytes(tier));
            prop_assert!(used <= cluster.tier_capacity_bytes(tier));
        }

        // Every stop decision saw the tier at or below the stop fraction,
        // and a create leaves no tier above the start fraction unless the
        // loop ran out of candidates.
        let warned = mgr.warnings().len() > warnings_before;
        for d in &mgr.decisions().unwrap()[decisions_before..] {
            prop_assert_eq!(d.stop, d.usage <= th.stop_downgrade_frac);
            prop_assert!(d.selected_file.is_some());
        }
        if created && !warned {
            for tier in TierKind::DESCENDING {
                prop_assert!(cluster.tier_usage(tier) <= th.start_downgrade_frac, "{tier} left above start");
            }
        }
        if forced_moves > 0 && !forced_warned {
            prop_assert!(cluster.tier_usage(forced) <= th.stop_downgrade_frac);
        }
    }
    Ok(Outcome {
        log: serde_json::to_string(cluster.event_log().unwrap()).unwrap(),
        moves: serde_json::to_string(mgr.moves()).unwrap(),
        move_count: mgr.moves().len(),
    })
}

