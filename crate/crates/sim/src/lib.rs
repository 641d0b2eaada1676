//! Configuration, scenario orchestration and file formats around
//! `bingham-core`.

pub mod config;
pub mod error;
pub mod io;
pub mod scenario;

pub use config::{parse_config, RunConfig, Scenario};
pub use error::{ConfigError, SimError};
pub use scenario::{run_scenario, Simulation, Summary};
