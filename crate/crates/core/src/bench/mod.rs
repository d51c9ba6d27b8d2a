//! Scenario configuration, runners and result files.

pub mod compare;
pub mod config;
pub mod env;
pub mod metrics;
pub mod runner;

pub use config::{RunMode, ScenarioConfig, UeConfig};
pub use metrics::{read_summary, MetricsLog, Summary, SummaryFile, TimingStats};
pub use runner::{run_scenario, RunError, RunOptions};
