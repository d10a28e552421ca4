//! Run configuration: cluster, thresholds, policy choice and policy
//! parameters, loadable from TOML.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classic::{ClassicConfig, ClassicDowngrade, ClassicUpgrade, DowngradeKind, PolicyError, UpgradeKind};
use crate::policy::{DowngradePolicy, PolicyThresholds, ReplicationManager, UpgradePolicy};
use crate::sim::{Cluster, ClusterConfig, SimError};
use crate::workload::{replay, ReplayError, ReplayOptions, RunOutput, TraceEvent};
use crate::xgb::{XgbDowngrade, XgbPolicyConfig, XgbUpgrade};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(String),
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

pub const DOWNGRADE_NAMES: [&str; 8] = ["none", "lru", "lfu", "lrfu", "life", "lfu-f", "exd", "xgb"];
pub const UPGRADE_NAMES: [&str; 5] = ["none", "osa", "lrfu", "exd", "xgb"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub downgrade: String,
    pub upgrade: String,
    pub cluster: ClusterConfig,
    pub thresholds: PolicyThresholds,
    pub classic: ClassicConfig,
    pub xgb: XgbPolicyConfig,
    pub replay: ReplayOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            downgrade: "lru".into(),
            upgrade: "none".into(),
            cluster: ClusterConfig::default(),
            thresholds: PolicyThresholds::default(),
            classic: ClassicConfig::default(),
            xgb: XgbPolicyConfig::default(),
            replay: ReplayOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.cluster.validate()?;
        self.thresholds.validate().map_err(ConfigError::Invalid)?;
        self.xgb.validate().map_err(ConfigError::Invalid)?;
        if !(self.replay.tick_interval > 0.0) || !(self.replay.size_scale > 0.0) {
            return Err(ConfigError::Invalid("tick_interval and size_scale must be positive".into()));
        }
        downgrade_policy(&self.downgrade, self)?;
        upgrade_policy(&self.upgrade, self)?;
        Ok(())
    }

    pub fn manager(&self) -> Result<ReplicationManager, ConfigError> {
        Ok(ReplicationManager::new(
            downgrade_policy(&self.downgrade, self)?,
            upgrade_policy(&self.upgrade, self)?,
            self.thresholds,
        ))
    }
}

pub fn downgrade_policy(name: &str, cfg: &RunConfig) -> Result<Option<Box<dyn DowngradePolicy>>, ConfigError> {
    Ok(match name {
        "none" => None,
        "xgb" => Some(Box::new(XgbDowngrade::new(cfg.xgb))),
        other => Some(Box::new(ClassicDowngrade::new(other.parse::<DowngradeKind>()?, cfg.classic))),
    })
}

pub fn upgrade_policy(name: &str, cfg: &RunConfig) -> Result<Option<Box<dyn UpgradePolicy>>, ConfigError> {
    Ok(match name {
        "none" => None,
        "xgb" => Some(Box::new(XgbUpgrade::new(cfg.xgb))),
        other => Some(Box::new(ClassicUpgrade::new(other.parse::<UpgradeKind>()?, cfg.classic))),
    })
}

/// Builds a fresh cluster and manager and replays the trace.
pub fn run(events: &[TraceEvent], cfg: &RunConfig) -> Result<RunOutput, ConfigError> {
    cfg.validate()?;
    let mut cluster = Cluster::new(cfg.cluster.clone())?;
    let mut manager = cfg.manager()?;
    Ok(replay(events, &mut cluster, &mut manager, &cfg.replay)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_name_builds() {
        for d in DOWNGRADE_NAMES {
            for u in UPGRADE_NAMES {
                let cfg = RunConfig { downgrade: d.into(), upgrade: u.into(), ..RunConfig::default() };
                let m = cfg.manager().unwrap();
                assert_eq!((m.downgrade_name(), m.upgrade_name()), (d, u));
            }
        }
    }

    #[test]
    fn unknown_policy_is_an_error() {
        let cfg = RunConfig { downgrade: "mru".into(), ..RunConfig::default() };
        assert!(matches!(cfg.validate(), Err(ConfigError::Policy(_))));
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig { downgrade: "xgb".into(), upgrade: "osa".into(), ..RunConfig::default() };
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let partial = RunConfig::from_toml("downgrade = \"lfu\"\n[cluster]\nnodes = 5\n").unwrap();
        assert_eq!(partial.cluster.nodes, 5);
        assert!(RunConfig::from_toml("bogus = 1").is_err());
    }
}
