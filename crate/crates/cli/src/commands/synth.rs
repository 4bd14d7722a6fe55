use std::path::PathBuf;

use anyhow::Context as _;
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use scalelaw::curves::write_curve_records;
use scalelaw::synth::{
    generate_family, DEFAULT_CHECKPOINTS, DEFAULT_SIZE_DECADES, DEFAULT_TOKEN_DECADES,
};
use scalelaw::synth::log_uniform_counts;
use scalelaw::{LossSurface, NoiseModel, SyntheticSpec};

use super::Context;
use crate::artifacts::{read_input, Provenance};
use crate::failure::{AtStage, CmdResult, Stage};

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Synthetic family description (TOML).
    pub spec: PathBuf,
}

fn default_label() -> String {
    "synthetic".into()
}

fn default_noise() -> NoiseModel {
    NoiseModel::None
}

fn size_decades() -> f64 {
    DEFAULT_SIZE_DECADES
}

fn token_decades() -> f64 {
    DEFAULT_TOKEN_DECADES
}

fn checkpoints() -> usize {
    DEFAULT_CHECKPOINTS
}

/// How model sizes and checkpoints are laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layout {
    /// Sizes log-uniform from `n_min`, checkpoints spread around each size's optimum.
    Centered {
        n_min: f64,
        count: usize,
        #[serde(default = "size_decades")]
        size_decades: f64,
        #[serde(default = "token_decades")]
        token_decades: f64,
        #[serde(default = "checkpoints")]
        checkpoints: usize,
    },
    /// Each size trained only across the budgets where it is compute-optimal.
    Resolved {
        n_min: f64,
        count: usize,
        #[serde(default = "size_decades")]
        size_decades: f64,
    },
    Explicit {
        model_sizes: Vec<f64>,
        tokens_schedule: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthFile {
    #[serde(default = "default_label")]
    pub label: String,
    pub seed: u64,
    pub truth: LossSurface,
    #[serde(default = "default_noise")]
    pub noise: NoiseModel,
    pub layout: Layout,
}

impl SynthFile {
    pub fn into_spec(self) -> SyntheticSpec {
        let mut spec = match self.layout {
            Layout::Centered {
                n_min,
                count,
                size_decades,
                token_decades,
                checkpoints,
            } => SyntheticSpec::centered_on_optimum(
                self.truth,
                log_uniform_counts(n_min, size_decades, count),
                token_decades,
                checkpoints,
                self.noise,
                self.seed,
            ),
            Layout::Resolved {
                n_min,
                count,
                size_decades,
            } => SyntheticSpec::frontier_resolved(self.truth, n_min, size_decades, count, self.noise, self.seed),
            Layout::Explicit {
                model_sizes,
                tokens_schedule,
            } => SyntheticSpec {
                truth: self.truth,
                model_sizes,
                tokens_schedule,
                noise: self.noise,
                seed: self.seed,
                label: String::new(),
            },
        };
        spec.label = self.label;
        spec
    }
}

pub fn run(ctx: &Context, args: SynthArgs) -> CmdResult {
    let (bytes, digest) = read_input(&args.spec).at(Stage::Config)?;
    let text = std::str::from_utf8(&bytes).context("spec is not UTF-8").at(Stage::Config)?;
    let file: SynthFile = toml::from_str(text)
        .with_context(|| format!("parsing {}", args.spec.display()))
        .at(Stage::Config)?;
    let spec = file.into_spec();
    spec.validate().at(Stage::Config)?;
    let family = generate_family(&spec).at(Stage::Other)?;

    let out = ctx.output(&ctx.config)?;
    for curve in &family.curves {
        let mut buf = Vec::new();
        write_curve_records(curve, &mut buf).at(Stage::Other)?;
        out.write(&format!("{}.jsonl", curve.run_id), &buf)?;
    }
    let (a, b) = spec.truth.allocation_exponents();
    let manifest = json!({
        "spec": spec,
        "exponents": { "a": a, "b": b },
        "runs": family.curves.iter().map(|c| format!("{}.jsonl", c.run_id)).collect::<Vec<_>>(),
        "provenance": Provenance::new(ctx.config.digest(), vec![digest]),
    });
    out.write_json("truth.json", &manifest)?;
    println!(
        "{}: {} runs, {} points, true exponents a = {a:.4}, b = {b:.4}",
        family.label,
        family.curves.len(),
        family.total_points()
    );
    Ok(())
}
