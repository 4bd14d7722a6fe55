use std::path::PathBuf;

use clap::Args;
use serde::de::DeserializeOwned;

use scalelaw::accounting::{ArchitectureKind, ArchitectureProfile};

use crate::artifacts::OutputDir;
use crate::config::EngineConfig;
use crate::failure::{AtStage, CmdResult, Stage};

pub mod budget;
pub mod correlate;
pub mod fit;
pub mod predict;
pub mod report;
pub mod synth;

pub struct Context {
    pub config: EngineConfig,
    pub output_dir: Option<PathBuf>,
}

impl Context {
    pub fn output(&self, config: &EngineConfig) -> CmdResult<OutputDir> {
        OutputDir::create(config.resolve_output_dir(self.output_dir.as_deref())).at(Stage::Other)
    }
}

/// Parse a flag value with the same spelling the config file uses.
pub fn serde_value<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// Architecture overrides shared by `fit` and `budget`.
#[derive(Debug, Clone, Args)]
pub struct ProfileArgs {
    /// wm_token, bc_token, bc_cnn or plain_lm.
    #[arg(long, value_parser = serde_value::<ArchitectureKind>)]
    pub kind: Option<ArchitectureKind>,
    /// Tokens per image observation.
    #[arg(long)]
    pub d_z: Option<u64>,
    /// Tokens per action.
    #[arg(long)]
    pub d_a: Option<u64>,
    /// Frozen encoder parameters counted into N for bc_cnn.
    #[arg(long)]
    pub encoder_params: Option<u64>,
}

impl ProfileArgs {
    pub fn apply(&self, profile: &mut ArchitectureProfile) {
        if let Some(kind) = self.kind {
            profile.kind = kind;
        }
        if let Some(d_z) = self.d_z {
            profile.d_z = d_z;
        }
        if let Some(d_a) = self.d_a {
            profile.d_a = d_a;
        }
        if let Some(p) = self.encoder_params {
            profile.fixed_encoder_params = p;
        }
    }
}
