use std::path::PathBuf;

use anyhow::Context as _;
use clap::Args;
use serde_json::Value;

use scalelaw::report::{coefficient_csv, coefficient_table, CoefficientRow};
use scalelaw::EstimatorRegistry;

use super::Context;
use crate::failure::{AtStage, CmdResult, Stage};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Artifact directories written by `fit`, one row each.
    #[arg(required = true)]
    pub dirs: Vec<PathBuf>,
    /// Also write coefficients.csv to the output directory.
    #[arg(long)]
    pub csv: bool,
}

pub fn run(ctx: &Context, args: ReportArgs) -> CmdResult {
    let registry = EstimatorRegistry::with_builtin();
    let mut rows = Vec::new();
    for dir in &args.dirs {
        let mut row = CoefficientRow {
            label: dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned()),
            frontier: None,
            parametric: None,
        };
        let mut found = false;
        for estimator in registry.iter() {
            let path = dir.join(estimator.artifact_name());
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))
                .at(Stage::Ingest)?;
            let doc: Value = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .at(Stage::Ingest)?;
            let law = registry.load_document(&doc).at(Stage::Ingest)?;
            if let Some(label) = doc.get("label").and_then(Value::as_str) {
                row.label = label.to_string();
            }
            match law.method() {
                "frontier" => row.frontier = Some(law.exponents()),
                "parametric" => row.parametric = Some(law.exponents()),
                other => log::warn!("{}: no report column for '{other}'", path.display()),
            }
            found = true;
        }
        if !found {
            log::warn!("{}: no law artifacts", dir.display());
        }
        rows.push(row);
    }
    print!("{}", coefficient_table(&rows));
    if args.csv {
        ctx.output(&ctx.config)?.write("coefficients.csv", coefficient_csv(&rows).as_bytes())?;
    }
    Ok(())
}
