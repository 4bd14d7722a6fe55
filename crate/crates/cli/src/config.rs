//! Engine configuration: a TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use scalelaw::accounting::ArchitectureProfile;
use scalelaw::curves::{LossUnits, ParseMode, Smoothing, TokensUnit};
use scalelaw::frontier::DEFAULT_BINS_PER_DECADE;
use scalelaw::parametric::{LossLawOptions, ParametricOptions};
use scalelaw::{EstimatorRegistry, EstimatorSettings};

/// Default output directory when neither a flag nor the config sets one.
pub const OUTPUT_DIR_ENV: &str = "SCALELAW_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub label: String,
    pub profile: ArchitectureProfile,
    pub ingest: IngestConfig,
    pub frontier: FrontierConfig,
    pub parametric: ParametricOptions,
    pub loss_law: LossLawOptions,
    /// Estimators to run, by registry name.
    pub methods: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            label: "family".into(),
            profile: ArchitectureProfile::default(),
            ingest: IngestConfig::default(),
            frontier: FrontierConfig::default(),
            parametric: ParametricOptions::default(),
            loss_law: LossLawOptions::default(),
            methods: vec!["frontier".into(), "parametric".into()],
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub mode: ParseMode,
    pub loss_units: LossUnits,
    pub tokens_unit: TokensUnit,
    pub smoothing: Smoothing,
    pub warmup_tokens: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontierConfig {
    pub bins_per_decade: u32,
}

impl Default for FrontierConfig {
    fn default() -> Self {
        Self {
            bins_per_decade: DEFAULT_BINS_PER_DECADE,
        }
    }
}

impl EngineConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self, registry: &EstimatorRegistry) -> anyhow::Result<()> {
        self.profile.validate()?;
        ensure!(self.frontier.bins_per_decade > 0, "frontier.bins_per_decade must be at least 1");
        ensure!(!self.methods.is_empty(), "methods must name at least one estimator");
        for m in &self.methods {
            if registry.get(m).is_none() {
                bail!("unknown estimator '{m}' (available: {})", registry.names().join(", "));
            }
        }
        let p = &self.parametric;
        ensure!(p.tolerance > 0.0, "parametric.tolerance must be positive");
        ensure!(p.huber_delta > 0.0, "parametric.huber_delta must be positive");
        ensure!(p.max_iterations > 0, "parametric.max_iterations must be positive");
        ensure!(p.max_points_per_run >= 2, "parametric.max_points_per_run must be at least 2");
        ensure!(
            self.ingest.warmup_tokens.is_finite() && self.ingest.warmup_tokens >= 0.0,
            "ingest.warmup_tokens must be finite and non-negative"
        );
        if let Smoothing::Ema { half_life_tokens } = self.ingest.smoothing {
            ensure!(half_life_tokens > 0.0, "ingest.smoothing.half_life_tokens must be positive");
        }
        Ok(())
    }

    pub fn estimator_settings(&self) -> EstimatorSettings {
        EstimatorSettings {
            bins_per_decade: self.frontier.bins_per_decade,
            parametric: self.parametric.clone(),
        }
    }

    /// Flag, then config file, then the environment, then the working directory.
    pub fn resolve_output_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    /// SHA-256 over the canonical JSON form of the effective configuration.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config always serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
