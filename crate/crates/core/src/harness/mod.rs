//! Deterministic scenario runner, actor scripts, attack catalog and the
//! public-data linkage analyzer.

pub mod analyzer;
pub mod attacks;
mod runner;
pub mod scenario;

pub use analyzer::{linkage_analyzer, LinkageGuess, PublicView};
pub use attacks::{
    analysis_cutoff, analyze, anonymity_scenario, attack_catalog, careless_funding_scenario,
    happy_path_scenario, key_transfer_attack_scenario, liveness_scenario, measure_anonymity,
    outcome_label, supersession_scenario, whale_attack_scenario, AnonymityMode, AnonymityResult,
    AttackCase, AttackSelection, KeyTransferParams, WhaleParams,
};
pub use runner::{run, Rejection, RunError, RunOutcome};
pub use scenario::{parse_scenario, ConfigError, Scenario};
