use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::Args;
use serde_json::json;

use scalelaw::correlation::{proxy_report, BetterDirection, CorrelationKind, MetricSeries};

use super::Context;
use crate::artifacts::{read_input, Provenance};
use crate::failure::{AtStage, CmdResult, Stage};

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// CSV files with `loss` and `metric` columns, each optionally suffixed
    /// with `:lower` or `:higher` for the metric's better direction (default lower).
    #[arg(required = true)]
    pub series: Vec<String>,
    /// Spearman rank correlation instead of Pearson.
    #[arg(long)]
    pub rank: bool,
}

fn split_direction(arg: &str) -> (PathBuf, BetterDirection) {
    match arg.rsplit_once(':') {
        Some((path, "lower")) => (PathBuf::from(path), BetterDirection::Lower),
        Some((path, "higher")) => (PathBuf::from(path), BetterDirection::Higher),
        _ => (PathBuf::from(arg), BetterDirection::Lower),
    }
}

fn metric_name(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn run(ctx: &Context, args: CorrelateArgs) -> CmdResult {
    let mut series = Vec::new();
    let mut inputs = Vec::new();
    for arg in &args.series {
        let (path, direction) = split_direction(arg);
        let (bytes, digest) = read_input(&path).at(Stage::Ingest)?;
        let s = MetricSeries::from_csv(bytes.as_slice(), &metric_name(&path), direction)
            .with_context(|| format!("{}", path.display()))
            .at(Stage::Ingest)?;
        series.push(s);
        inputs.push(digest);
    }
    let kind = if args.rank {
        CorrelationKind::Spearman
    } else {
        CorrelationKind::Pearson
    };
    let report = proxy_report(&series, kind).at(Stage::Fit)?;
    let table = report.to_table();
    print!("{table}");

    let out = ctx.output(&ctx.config)?;
    let doc = json!({
        "report": report,
        "provenance": Provenance::new(ctx.config.digest(), inputs),
    });
    out.write_json("correlation.json", &doc)?;
    out.write("correlation.txt", table.as_bytes())?;
    Ok(())
}
