use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use trackedit_core::augment::AugmentConfig;
use trackedit_model::train::ToyTrainConfig;

use crate::commands::CliError;
use crate::Flags;

/// Everything a command reads, after merging the config file with flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub project: Option<PathBuf>,
    pub edit: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tracks: Option<usize>,
    pub steps: Option<usize>,
    pub port: Option<u16>,
    pub threads: Option<usize>,
    pub log_level: Option<String>,
    pub augment: Option<AugmentConfig>,
    pub train: Option<ToyTrainConfig>,
}

impl RunConfig {
    pub fn resolve(flags: &Flags) -> Result<Self, CliError> {
        let mut cfg = match &flags.config {
            Some(path) => {
                let text = std::fs::read(path).map_err(|e| CliError::Io { path: path.clone(), message: e.to_string() })?;
                serde_json::from_slice(&text).map_err(|e| CliError::Config { path: path.clone(), message: e.to_string() })?
            }
            None => RunConfig::default(),
        };
        macro_rules! flag {
            ($($field:ident),*) => {
                $(if let Some(v) = &flags.$field {
                    cfg.$field = Some(v.clone());
                })*
            };
        }
        flag!(project, edit, out, seed, tracks, steps, port, threads, log_level);
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn project(&self) -> Result<&Path, CliError> {
        self.project.as_deref().ok_or(CliError::Usage("--project is required".into()))
    }

    pub fn out(&self) -> Result<&Path, CliError> {
        self.out.as_deref().ok_or(CliError::Usage("--out is required".into()))
    }

    /// Toy training config with the run seed and thread count applied.
    pub fn train(&self) -> ToyTrainConfig {
        let mut t = self.train.clone().unwrap_or_default();
        if self.seed.is_some() || self.train.is_none() {
            t.seed = self.seed();
        }
        if let Some(n) = self.threads {
            t.threads = n;
        }
        t
    }

    /// Augment config with the run seed applied.
    pub fn augment(&self) -> AugmentConfig {
        let mut a = self.augment.clone().unwrap_or_default();
        if self.seed.is_some() || self.augment.is_none() {
            a.seed = self.seed();
        }
        a
    }
}
