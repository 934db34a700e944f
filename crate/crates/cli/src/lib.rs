//! Command-line front end: run configs, the scenario registry, and the
//! CSV/JSON/SVG writers.

pub mod config;
pub mod export;
pub mod registry;
pub mod run;
pub mod svg;

pub use config::{parse_config, parse_config_str, ConfigErrors, RunConfig};
pub use registry::Registry;
pub use run::{run, RunStatus, EXIT_CONFIG, EXIT_GATE, EXIT_PASS};
