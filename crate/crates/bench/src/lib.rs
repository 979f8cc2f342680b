//! Instance files, built-in instances, parallel evaluation and training
//! campaigns, and checkpoints for `qnet-core`.

pub mod campaign;
pub mod checkpoint;
pub mod config;
pub mod instances;
pub mod training;
pub mod yaml;

pub use campaign::{evaluate_parallel, report_csv, PolicySpec};
pub use checkpoint::Checkpoint;
pub use config::{ConfigError, EnvConfig};
pub use instances::{builtin_instances, Instance};
pub use training::train_parallel;

use std::path::Path;

/// A built-in name, or else a path to an instance file.
pub fn resolve_env(name_or_path: &str) -> Result<EnvConfig, ConfigError> {
    match instances::find(name_or_path) {
        Some(inst) => Ok(inst.config),
        None if Path::new(name_or_path).is_file() => EnvConfig::load(Path::new(name_or_path)),
        None => Err(ConfigError::UnknownEnv(name_or_path.to_string())),
    }
}
