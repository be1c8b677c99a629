use std::fs;
use std::path::{Path, PathBuf};

use super::{io_err, PersistError};
use crate::simulation::ExperimentConfig;

/// Reads an experiment config and resolves its schema path against the
/// config file's directory.
pub fn load_experiment_config(path: &Path) -> Result<(ExperimentConfig, PathBuf), PersistError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let config = ExperimentConfig::parse(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let schema = base.join(&config.schema);
    Ok((config, schema))
}
