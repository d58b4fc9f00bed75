//! Config-driven experiment runner: loads a JSON run description, executes
//! its scenarios through the synthetic measurement chain and writes CSV/JSON
//! artifacts plus a run manifest.

pub mod config;
pub mod output;
pub mod pipeline;
pub mod scenario;

pub use config::{load_config, parse_config, LoadedConfig, ScenarioSpec};
pub use scenario::{run, RunManifest, RunOptions};
