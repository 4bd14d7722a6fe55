use std::path::PathBuf;

use anyhow::{anyhow, Context as _};
use clap::Args;
use serde_json::json;

use scalelaw::curves::{
    build_curves, parse_run_log, BuildOptions, LogFormat, LossUnits, ParseMode, ParseOptions, Smoothing,
    TokensUnit,
};
use scalelaw::estimator::law_document;
use scalelaw::frontier::{envelope_loss_points, extract_envelope};
use scalelaw::parametric::{fit_loss_law, FitSpace, PointSelection};
use scalelaw::{CurveFamily, Error, EstimatorRegistry};

use super::{serde_value, Context, ProfileArgs};
use crate::artifacts::{read_input, InputDigest, Provenance};
use crate::config::EngineConfig;
use crate::failure::{AtStage, CmdResult, Stage};

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Run logs: line-delimited JSON, or CSV when the extension is .csv.
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
    /// Family label written into every artifact.
    #[arg(long)]
    pub label: Option<String>,
    /// Estimators to run, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Envelope bins per decade of FLOPs.
    #[arg(long)]
    pub bins_per_decade: Option<u32>,
    /// raw_loss or log_loss_huber.
    #[arg(long, value_parser = serde_value::<FitSpace>)]
    pub fit_space: Option<FitSpace>,
    /// Points for the parametric fit: all or envelope.
    #[arg(long, value_parser = serde_value::<PointSelection>)]
    pub points: Option<PointSelection>,
    /// Skip invalid records instead of failing.
    #[arg(long)]
    pub lenient: bool,
    /// nats or bits.
    #[arg(long, value_parser = serde_value::<LossUnits>)]
    pub loss_units: Option<LossUnits>,
    /// What tokens_seen counts: inputs or pairs.
    #[arg(long, value_parser = serde_value::<TokensUnit>)]
    pub tokens_unit: Option<TokensUnit>,
    /// Drop points before this many tokens.
    #[arg(long)]
    pub warmup_tokens: Option<f64>,
    /// Smooth losses with an EMA of this half-life, in tokens.
    #[arg(long)]
    pub ema_half_life: Option<f64>,
    #[command(flatten)]
    pub profile: ProfileArgs,
}

impl FitArgs {
    fn apply(&self, cfg: &mut EngineConfig) {
        if let Some(label) = &self.label {
            cfg.label = label.clone();
        }
        if let Some(m) = &self.methods {
            cfg.methods = m.clone();
        }
        if let Some(b) = self.bins_per_decade {
            cfg.frontier.bins_per_decade = b;
        }
        if let Some(f) = self.fit_space {
            cfg.parametric.fit_space = f;
        }
        if let Some(p) = self.points {
            cfg.parametric.points = p;
        }
        if self.lenient {
            cfg.ingest.mode = ParseMode::Lenient;
        }
        if let Some(u) = self.loss_units {
            cfg.ingest.loss_units = u;
        }
        if let Some(u) = self.tokens_unit {
            cfg.ingest.tokens_unit = u;
        }
        if let Some(w) = self.warmup_tokens {
            cfg.ingest.warmup_tokens = w;
        }
        if let Some(h) = self.ema_half_life {
            cfg.ingest.smoothing = Smoothing::Ema { half_life_tokens: h };
        }
        self.profile.apply(&mut cfg.profile);
    }
}

fn ingest(cfg: &EngineConfig, logs: &[PathBuf]) -> CmdResult<(CurveFamily, Vec<InputDigest>)> {
    let mut records = Vec::new();
    let mut inputs = Vec::new();
    for path in logs {
        let (bytes, digest) = read_input(path).at(Stage::Ingest)?;
        let options = ParseOptions {
            format: LogFormat::from_path(path),
            mode: cfg.ingest.mode,
            loss_units: cfg.ingest.loss_units,
        };
        let parsed = parse_run_log(bytes.as_slice(), &options)
            .with_context(|| format!("{}", path.display()))
            .at(Stage::Ingest)?;
        for e in &parsed.errors {
            log::warn!("{}:{}: skipped record: {}", path.display(), e.line, e.message);
        }
        records.extend(parsed.records);
        inputs.push(digest);
    }
    let build = build_curves(
        &records,
        &BuildOptions {
            label: cfg.label.clone(),
            profile: cfg.profile.clone(),
            smoothing: cfg.ingest.smoothing,
            warmup_tokens: cfg.ingest.warmup_tokens,
            tokens_unit: cfg.ingest.tokens_unit,
        },
    )
    .at(Stage::Ingest)?;
    for w in &build.warnings {
        log::warn!("{w}");
    }
    Ok((build.family, inputs))
}

pub fn run(ctx: &Context, args: FitArgs) -> CmdResult {
    let registry = EstimatorRegistry::with_builtin();
    let mut cfg = ctx.config.clone();
    args.apply(&mut cfg);
    cfg.validate(&registry).at(Stage::Config)?;

    let (family, inputs) = ingest(&cfg, &args.logs)?;
    println!(
        "{}: {} runs, {} points",
        family.label,
        family.curves.len(),
        family.total_points()
    );
    if family.curves.len() < 2 {
        log::warn!("only one model size: the parametric size exponent and Nc are not identifiable");
    }

    let out = ctx.output(&cfg)?;
    let extra = json!({
        "label": cfg.label,
        "provenance": Provenance::new(cfg.digest(), inputs),
    });
    let settings = cfg.estimator_settings();
    let mut laws_written = 0;
    for name in &cfg.methods {
        let estimator = registry.require(name).at(Stage::Config)?;
        match estimator.estimate(&family, &settings) {
            Ok(law) => {
                let (a, b) = law.exponents();
                println!("{name:<11} N_opt ~ C^{a:.4}  D_opt ~ C^{b:.4}");
                let doc = law_document(law.as_ref(), extra.clone()).at(Stage::Other)?;
                out.write_json(estimator.artifact_name(), &doc)?;
                laws_written += 1;
            }
            Err(Error::FrontierUnderdetermined { distinct_sizes }) => {
                log::warn!(
                    "{name} fit skipped: {distinct_sizes} model size(s) on the envelope; rely on the parametric fit"
                );
            }
            Err(e) => return Err(anyhow!(e).context(format!("{name} fit"))).at(Stage::Fit),
        }
    }

    match extract_envelope(&family, cfg.frontier.bins_per_decade) {
        Ok(envelope) => {
            let mut csv = Vec::new();
            envelope.write_csv(&mut csv).at(Stage::Other)?;
            out.write("envelope.csv", &csv)?;
            match fit_loss_law(&envelope_loss_points(&envelope), &cfg.loss_law) {
                Ok(law) => {
                    println!(
                        "{:<11} L_opt = {:.4e} C^-{:.4} + {:.4}",
                        "loss_law", law.c0, law.c, law.e_irreducible
                    );
                    let mut doc = json!({ "method": "loss_law", "law": law });
                    if let (Some(d), Some(e)) = (doc.as_object_mut(), extra.as_object()) {
                        d.extend(e.clone());
                    }
                    out.write_json("loss_law.json", &doc)?;
                }
                Err(e @ Error::InsufficientData(_)) => log::warn!("loss law skipped: {e}"),
                Err(e) => return Err(anyhow!(e).context("loss-law fit")).at(Stage::Fit),
            }
        }
        Err(Error::FrontierUnderdetermined { .. }) => {
            log::warn!("envelope and loss law skipped: fewer than two model sizes on the envelope");
        }
        Err(e) => return Err(anyhow!(e).context("envelope extraction")).at(Stage::Fit),
    }

    if laws_written == 0 {
        return Err(anyhow!("no estimator produced a law")).at(Stage::Fit);
    }
    Ok(())
}
