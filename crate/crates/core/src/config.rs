//! TOML run configuration. Every key is optional; command-line flags
//! override whatever the file sets.
//!
//! ```toml
//! seed = 42
//! snapshots = 10000
//! policy = "moderate"
//!
//! [scenario]
//! n_rus = 6
//! n_ues = 30
//!
//! [twin]
//! demand_sigma = 2.0
//!
//! [train.forest]
//! n_trees = 100
//! max_depth = 10
//!
//! [train.split]
//! cv_folds = 5
//!
//! [paths]
//! data = "out/snapshots.csv"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeler::PolicyName;
use crate::model::Scenario;
use crate::pipeline::TrainParams;
use crate::twin::TwinParams;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub bundle: Option<PathBuf>,
    pub state: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub snapshots: Option<usize>,
    pub policy: Option<PolicyName>,
    pub scenario: Scenario,
    pub twin: TwinParams,
    pub train: TrainParams,
    pub paths: Paths,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
