//! Trace-driven simulator for automated data movement across memory, SSD and
//! HDD tiers, with classic cache-replacement policies and an incrementally
//! trained gradient-boosted-tree policy.

pub mod sim;
pub mod classic;
pub mod policy;
pub mod features;
pub mod gbt;
pub mod metrics;
pub mod xgb;
pub mod workload;
pub mod config;
pub mod study;
