use std::path::PathBuf;

use anyhow::{anyhow, bail, Context as _};
use clap::Args;
use serde::Serialize;
use serde_json::{json, Value};

use scalelaw::allocator::{budget_sweep, predict_loss};
use scalelaw::parametric::LossLaw;
use scalelaw::{AllocationLaw, AllocationPlan, ComputeBudget, EstimatorRegistry};

use super::Context;
use crate::artifacts::{read_input, InputDigest, Provenance};
use crate::failure::{AtStage, CmdResult, Stage};

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Directory holding law artifacts from `fit`; defaults to the output directory.
    #[arg(long)]
    pub laws: Option<PathBuf>,
    /// FLOPs budgets, comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    pub budget: Vec<f64>,
    /// Log-uniform sweep as LO:HI:POINTS, e.g. 1e18:1e21:31.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Only use these estimators' laws.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
}

#[derive(Debug, Serialize)]
struct PlanRow {
    method: &'static str,
    #[serde(flatten)]
    plan: AllocationPlan,
}

fn parse_sweep(spec: &str) -> anyhow::Result<Vec<ComputeBudget>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        bail!("sweep must look like LO:HI:POINTS, got '{spec}'");
    };
    let lo: f64 = lo.parse().context("sweep LO")?;
    let hi: f64 = hi.parse().context("sweep HI")?;
    let n: usize = n.parse().context("sweep POINTS")?;
    Ok(budget_sweep(lo, hi, n)?)
}

fn budgets(args: &PredictArgs) -> anyhow::Result<Vec<ComputeBudget>> {
    let mut out = args
        .budget
        .iter()
        .map(|&c| ComputeBudget::new(c))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(s) = &args.sweep {
        out.extend(parse_sweep(s)?);
    }
    if out.is_empty() {
        bail!("give at least one --budget or a --sweep");
    }
    Ok(out)
}

fn load_doc(path: &std::path::Path) -> anyhow::Result<(Value, InputDigest)> {
    let (bytes, digest) = read_input(path)?;
    let doc = serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    Ok((doc, digest))
}

fn csv_cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn run(ctx: &Context, args: PredictArgs) -> CmdResult {
    let registry = EstimatorRegistry::with_builtin();
    let budgets = budgets(&args).at(Stage::Config)?;
    if let Some(methods) = &args.methods {
        for m in methods {
            registry.require(m).at(Stage::Config)?;
        }
    }
    let dir = args
        .laws
        .clone()
        .unwrap_or_else(|| ctx.config.resolve_output_dir(ctx.output_dir.as_deref()));

    let mut inputs = Vec::new();
    let mut laws: Vec<Box<dyn AllocationLaw>> = Vec::new();
    for estimator in registry.iter() {
        if args.methods.as_ref().is_some_and(|m| !m.iter().any(|n| n == estimator.name())) {
            continue;
        }
        let path = dir.join(estimator.artifact_name());
        if !path.exists() {
            continue;
        }
        let (doc, digest) = load_doc(&path).at(Stage::Ingest)?;
        let law = registry
            .load_document(&doc)
            .with_context(|| format!("loading {}", path.display()))
            .at(Stage::Ingest)?;
        inputs.push(digest);
        laws.push(law);
    }
    if laws.is_empty() {
        return Err(anyhow!("no law artifacts found in {}", dir.display())).at(Stage::Ingest);
    }

    let loss_law_path = dir.join("loss_law.json");
    let loss_law: Option<LossLaw> = if loss_law_path.exists() {
        let (doc, digest) = load_doc(&loss_law_path).at(Stage::Ingest)?;
        inputs.push(digest);
        let law = doc.get("law").cloned().ok_or_else(|| anyhow!("loss_law.json has no 'law' field"));
        Some(serde_json::from_value(law.at(Stage::Ingest)?).at(Stage::Ingest)?)
    } else {
        None
    };

    let mut rows = Vec::new();
    for &budget in &budgets {
        for law in &laws {
            let mut plan = law.allocate(budget).at(Stage::Fit)?;
            if plan.predicted_loss.is_none() {
                if let Some(l) = &loss_law {
                    plan = plan.with_predicted_loss(predict_loss(l, budget));
                }
            }
            rows.push(PlanRow {
                method: law.method(),
                plan,
            });
        }
    }

    println!(
        "{:<11} {:>11} {:>11} {:>11} {:>9} {:>8}",
        "method", "budget", "N_opt", "D_opt", "loss", "extrap"
    );
    let mut csv = String::from("method,budget,n_optimal,d_optimal,predicted_loss,extrapolation_decades,d_law_discrepancy\n");
    for r in &rows {
        let p = &r.plan;
        println!(
            "{:<11} {:>11.3e} {:>11.3e} {:>11.3e} {:>9} {:>8.2}",
            r.method,
            p.budget.flops(),
            p.n_optimal,
            p.d_optimal,
            p.predicted_loss.map_or_else(|| "-".into(), |l| format!("{l:.4}")),
            p.extrapolation_decades
        );
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method,
            p.budget.flops(),
            p.n_optimal,
            p.d_optimal,
            csv_cell(p.predicted_loss),
            p.extrapolation_decades,
            csv_cell(p.d_law_discrepancy)
        ));
    }

    let out = ctx.output(&ctx.config)?;
    let doc = json!({
        "plans": rows,
        "provenance": Provenance::new(ctx.config.digest(), inputs),
    });
    out.write_json("allocations.json", &doc)?;
    out.write("allocations.csv", csv.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_spec() {
        let b = parse_sweep("1e18:1e20:3").unwrap();
        assert_eq!(b.len(), 3);
        assert!((b[1].flops() / 1e19 - 1.0).abs() < 1e-12);
        assert!(parse_sweep("1e18:1e20").is_err());
        assert!(parse_sweep("1e20:1e18:3").is_err());
    }
}
