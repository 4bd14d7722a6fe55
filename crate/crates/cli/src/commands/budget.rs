use clap::Args;
use serde::Serialize;

use scalelaw::accounting::{infinite_data_budget, tokens_per_pair, DEFAULT_MAX_EPOCHS};
use scalelaw::ArchitectureProfile;

use super::{Context, ProfileArgs};
use crate::failure::{AtStage, CmdResult, Stage};

#[derive(Debug, Args)]
pub struct BudgetArgs {
    #[command(flatten)]
    pub profile: ProfileArgs,
    /// Model size N in parameters.
    #[arg(long)]
    pub n_params: f64,
    /// Unique observation-action pairs (or tokens, for plain_lm) in the dataset.
    #[arg(long)]
    pub pairs: f64,
    /// How many times each unique token may be seen.
    #[arg(long, default_value_t = DEFAULT_MAX_EPOCHS)]
    pub epochs: u32,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Serialize)]
struct BudgetReport {
    profile: ArchitectureProfile,
    n_params: f64,
    tokens_per_pair: u64,
    unique_tokens: f64,
    epochs: u32,
    effective_tokens: f64,
    flops_ceiling: f64,
}

pub fn run(ctx: &Context, args: BudgetArgs) -> CmdResult {
    let mut profile = ctx.config.profile.clone();
    args.profile.apply(&mut profile);
    profile.validate().at(Stage::Config)?;
    let tpp = tokens_per_pair(&profile).at(Stage::Config)?;
    let ceiling = infinite_data_budget(args.n_params, args.pairs, &profile, args.epochs).at(Stage::Config)?;
    let unique = args.pairs * tpp as f64;
    let report = BudgetReport {
        profile,
        n_params: args.n_params,
        tokens_per_pair: tpp,
        unique_tokens: unique,
        epochs: args.epochs,
        effective_tokens: unique * f64::from(args.epochs),
        flops_ceiling: ceiling.flops(),
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).at(Stage::Other)?);
    } else {
        println!("tokens per pair     {}", report.tokens_per_pair);
        println!("unique tokens       {:.4e}", report.unique_tokens);
        println!("effective tokens    {:.4e} ({} epochs)", report.effective_tokens, report.epochs);
        println!("FLOPs ceiling       {:.4e}", report.flops_ceiling);
    }
    Ok(())
}
