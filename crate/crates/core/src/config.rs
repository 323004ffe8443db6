//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::ChannelConfig;
use crate::checkpoint::content_hash;
use crate::equalizer::CodebookOptions;
use crate::error::{Error, Result};
use crate::gridworld::GridConfig;
use crate::harness::SweepConfig;
use crate::language::DqnConfig;
use crate::partition::PartitionOptions;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub grid: GridConfig,
    pub dqn: DqnConfig,
    /// Channel used while training.
    pub channel: ChannelConfig,
    pub partition: PartitionOptions,
    pub codebook: CodebookOptions,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("out"),
            grid: GridConfig::default(),
            dqn: DqnConfig::default(),
            channel: ChannelConfig::default(),
            partition: PartitionOptions::default(),
            codebook: CodebookOptions::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Source,
    Target,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Source => "source",
            Role::Target => "target",
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.dqn.validate()?;
        self.channel.validate()?;
        self.partition.validate()?;
        self.sweep.validate()?;
        Ok(())
    }

    /// Hash of everything that affects results; the output directory is excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        content_hash(&c)
    }

    pub fn training_seed(&self, role: Role) -> u64 {
        seed::derive_path(self.seed, &[seed::label("train"), seed::label(role.name())])
    }

    pub fn partition_seed(&self, role: Role, n_c: usize) -> u64 {
        seed::derive_path(
            self.seed,
            &[
                seed::label("partition"),
                seed::label(role.name()),
                n_c as u64,
            ],
        )
    }

    pub fn codebook_seed(&self, partition_id: &str) -> u64 {
        seed::derive_path(
            self.seed,
            &[seed::label("codebook"), seed::label(partition_id)],
        )
    }
}
