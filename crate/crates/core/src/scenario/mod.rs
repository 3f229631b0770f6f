//! Scenario configuration, validation and batch execution over all bins.

mod config;
mod run;

pub use config::{
    apply_override, validate_config, validate_value, ConfigError, DemandSource, Engine, OutputConfig, Participants,
    ScenarioConfig, Sweep, TopologySource, Violation, BUILTIN_ABILENE, DEFAULT_QUANTA, DEFAULT_TOP_K,
};
pub use run::{
    execute, load_inputs, prepare, run_scenario, select_top_k, write_atomic, write_reports, BinError, BinResult,
    ObjectiveRun, ObjectiveSummary, ScenarioError, ScenarioOutcome, VariantRun,
};
