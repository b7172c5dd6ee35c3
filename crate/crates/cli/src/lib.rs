//! Commands behind the `wban` binary. Each returns data as well as writing
//! files so tests can check results without parsing stdout.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;
use wban_core::framing::CodecError;
use wban_core::simnet::{run_scenario, ConfigError, LossModel, Profile, ScenarioConfig, SimError, SimReport};

pub mod opcount;
pub mod randomness;
pub mod vectors;

pub use opcount::{cmd_opcount, OpcountFormat};
pub use randomness::{cmd_randomness, ChiSquare, RandomnessReport, Scheme, SelectionRow};
pub use vectors::{cmd_vectors, golden_vectors, VectorMode};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: expected `name: hex`", path.display())]
    VectorSyntax { path: PathBuf, line: usize },
    #[error("vector mismatch: {}", names.join(", "))]
    Mismatch { names: Vec<String> },
    #[error("setup: {0}")]
    Setup(String),
}

impl CliError {
    fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Options shared by `simulate` and `randomness`. Unset values fall back
/// to the script file, then to the scenario defaults.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub profile: Option<Profile>,
    pub frames: Option<u64>,
    pub loss: Option<f64>,
    pub seed: Option<u64>,
    pub script: Option<PathBuf>,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn scenario(&self) -> Result<ScenarioConfig, CliError> {
        let mut cfg = ScenarioConfig::default();
        if let Some(path) = &self.script {
            cfg.apply(&read_file(path)?)?;
        }
        if let Some(p) = self.profile {
            cfg.profile = p;
        }
        if let Some(n) = self.frames {
            cfg.frames = n;
        }
        if let Some(p) = self.loss {
            cfg.loss = LossModel::uniform(p);
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn create_out(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))
    }
}

/// Runs one scenario and writes `trace.log`, `trace.csv` and `summary.txt`.
pub fn cmd_simulate(config: &RunConfig) -> Result<SimReport, CliError> {
    let cfg = config.scenario()?;
    let report = run_scenario(&cfg)?;
    config.create_out()?;
    write_file(&config.out.join("trace.log"), &report.trace.to_log())?;
    write_file(&config.out.join("trace.csv"), &report.trace.to_csv())?;
    write_file(&config.out.join("summary.txt"), &report.summary.to_string())?;
    Ok(report)
}
