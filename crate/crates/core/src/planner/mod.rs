//! Frequency analysis, tier assignment, the segmented disk-cache plan and
//! its I/O objective, and the searches over segment size and threshold.

mod cost;
mod disk_plan;
mod frequency;
mod manifest;
mod search;
mod tiers;

pub use cost::{io_cost, BatchCost, IoCost};
pub use disk_plan::{build_disk_plan, space_for, space_usage, DiskPlan, SegmentPlan};
pub use frequency::{count_frequencies, skew_report, FrequencyTable, SkewReport};
pub use manifest::{PlanManifest, PLAN_MANIFEST_VERSION};
pub use search::{
    brute_force_search, heuristic_search, BruteForceOutcome, GridPoint, HeuristicOutcome,
};
pub use tiers::{assign_memory_tiers, MemoryTierPlan, Tier};
