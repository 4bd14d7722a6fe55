//! Synthetic training-curve families with known ground truth.
//!
//! Losses are the parametric surface evaluated at each checkpoint, optionally
//! multiplied by lognormal noise. Randomness is ChaCha20 seeded from the spec
//! seed; run `i` draws from stream `i`, so each run is reproducible on its own
//! regardless of how many runs there are or in which order they are built.
//! Each noise factor is `exp(sigma * g)` with `g` from the Box-Muller cosine
//! branch, `g = sqrt(-2 ln(1 - u1)) cos(2 pi u2)`, consuming two uniform
//! `f64` draws per checkpoint.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accounting::{ArchitectureProfile, ComputeBudget};
use crate::allocator::parametric_optimal_size;
use crate::curves::{CurveFamily, CurvePoint, Smoothing, TrainingCurve};
use crate::error::{Error, Result};
use crate::frontier::{extract_envelope, fit_frontier_laws, FrontierLaw, DEFAULT_BINS_PER_DECADE};
use crate::parametric::{fit_parametric, LossSurface, ParametricLaw, ParametricOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    None,
    Lognormal { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub truth: LossSurface,
    pub model_sizes: Vec<f64>,
    /// Checkpoint token counts, one strictly increasing list per model.
    pub tokens_schedule: Vec<Vec<f64>>,
    pub noise: NoiseModel,
    pub seed: u64,
    #[serde(default = "default_label")]
    pub label: String,
}

fn default_label() -> String {
    "synthetic".into()
}

pub const DEFAULT_CHECKPOINTS: usize = 64;
pub const DEFAULT_TOKEN_DECADES: f64 = 3.0;
pub const DEFAULT_SIZE_DECADES: f64 = 2.5;

/// `count` values log-uniform over `[lo, lo * 10^decades]`, rounded to integers.
pub fn log_uniform_counts(lo: f64, decades: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo.round()];
    }
    let base = lo.log10();
    let mut out: Vec<f64> = (0..count)
        .map(|i| 10f64.powf(base + decades * i as f64 / (count - 1) as f64).round().max(1.0))
        .collect();
    out.dedup();
    out
}

/// Token count at which `n_params` is the compute-optimal model size.
pub fn optimal_tokens_for(truth: &LossSurface, n_params: f64) -> f64 {
    // alpha Nc N^-alpha = beta Dc D^-beta at the optimum.
    let ln_d = ((truth.beta * truth.d_c).ln() - (truth.alpha * truth.n_c).ln()
        + truth.alpha * n_params.ln())
        / truth.beta;
    ln_d.exp()
}

impl SyntheticSpec {
    /// Every model shares one log-uniform schedule over `[d_min, d_min * 10^decades]`.
    pub fn shared_schedule(
        truth: LossSurface,
        model_sizes: Vec<f64>,
        d_min: f64,
        decades: f64,
        checkpoints: usize,
        noise: NoiseModel,
        seed: u64,
    ) -> Self {
        let schedule = log_uniform_counts(d_min, decades, checkpoints);
        Self {
            truth,
            tokens_schedule: vec![schedule; model_sizes.len()],
            model_sizes,
            noise,
            seed,
            label: default_label(),
        }
    }

    /// Each model is trained from `10^-(decades/2)` to `10^(decades/2)` times
    /// its compute-optimal token count, so curves overlap and cross.
    pub fn centered_on_optimum(
        truth: LossSurface,
        model_sizes: Vec<f64>,
        decades: f64,
        checkpoints: usize,
        noise: NoiseModel,
        seed: u64,
    ) -> Self {
        let tokens_schedule = model_sizes
            .iter()
            .map(|&n| {
                let center = optimal_tokens_for(&truth, n);
                log_uniform_counts(center * 10f64.powf(-decades / 2.0), decades, checkpoints)
            })
            .collect();
        Self {
            truth,
            model_sizes,
            tokens_schedule,
            noise,
            seed,
            label: default_label(),
        }
    }

    /// Default layout: `count` sizes log-uniform over 2.5 decades from
    /// `n_min`, 64 checkpoints over 3 decades around each optimum.
    pub fn with_defaults(truth: LossSurface, n_min: f64, count: usize, noise: NoiseModel, seed: u64) -> Self {
        Self::centered_on_optimum(
            truth,
            log_uniform_counts(n_min, DEFAULT_SIZE_DECADES, count),
            DEFAULT_TOKEN_DECADES,
            DEFAULT_CHECKPOINTS,
            noise,
            seed,
        )
    }

    /// Each model is trained over exactly the compute interval in which it is
    /// the compute-optimal size among its neighbors.
    ///
    /// With wider spans the smallest and largest models win long stretches of
    /// the envelope where the true optimum lies outside the sampled sizes, and
    /// frontier regressions come out flattened. `count` sizes are spread over
    /// `size_decades` from `n_min`.
    pub fn frontier_resolved(
        truth: LossSurface,
        n_min: f64,
        size_decades: f64,
        count: usize,
        noise: NoiseModel,
        seed: u64,
    ) -> Self {
        let (a, _) = truth.allocation_exponents();
        let step = size_decades / count.saturating_sub(1).max(1) as f64;
        Self::centered_on_optimum(
            truth,
            log_uniform_counts(n_min, size_decades, count),
            step / a,
            DEFAULT_CHECKPOINTS,
            noise,
            seed,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.truth.validate()?;
        if self.model_sizes.is_empty() {
            return Err(Error::validation("model_sizes", "need at least one model size"));
        }
        if self.model_sizes.iter().any(|&n| !(n.is_finite() && n > 0.0)) {
            return Err(Error::validation("model_sizes", "sizes must be finite and positive"));
        }
        let mut sorted = self.model_sizes.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("model_sizes", "sizes must be distinct"));
        }
        if self.tokens_schedule.len() != self.model_sizes.len() {
            return Err(Error::validation(
                "tokens_schedule",
                "need exactly one schedule per model size",
            ));
        }
        for (i, s) in self.tokens_schedule.iter().enumerate() {
            if s.is_empty() || s.iter().any(|&d| !(d.is_finite() && d > 0.0)) {
                return Err(Error::validation(
                    "tokens_schedule",
                    format!("schedule {i} must be non-empty with positive entries"),
                ));
            }
            if s.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::validation(
                    "tokens_schedule",
                    format!("schedule {i} is not strictly increasing"),
                ));
            }
        }
        if let NoiseModel::Lognormal { sigma } = self.noise {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(Error::validation("noise.sigma", "must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// Standard normal draw via the Box-Muller cosine branch.
fn standard_normal(rng: &mut ChaCha20Rng) -> f64 {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn generate_family(spec: &SyntheticSpec) -> Result<CurveFamily> {
    spec.validate()?;
    let curves: Vec<TrainingCurve> = spec
        .model_sizes
        .par_iter()
        .zip(&spec.tokens_schedule)
        .enumerate()
        .map(|(i, (&n, schedule))| {
            let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            let points = schedule
                .iter()
                .enumerate()
                .map(|(k, &d)| {
                    let clean = spec.truth.loss(n, d);
                    let loss = match spec.noise {
                        NoiseModel::None => clean,
                        NoiseModel::Lognormal { sigma } => clean * (sigma * standard_normal(&mut rng)).exp(),
                    };
                    CurvePoint {
                        step: k as u64 + 1,
                        tokens_seen: d,
                        flops: 6.0 * n * d,
                        loss,
                    }
                })
                .collect();
            TrainingCurve {
                run_id: format!("{}-{i:02}", spec.label),
                n_params: n,
                points,
                smoothing: Smoothing::None,
            }
        })
        .collect();
    CurveFamily::new(spec.label.clone(), ArchitectureProfile::plain_lm(), curves)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BruteForceOptimum {
    pub n_optimal: f64,
    pub loss: f64,
    /// Spacing of the search grid in natural-log units.
    pub grid_step_ln: f64,
}

/// Exhaustive scan of `L(N, C / 6N)` over `grid_points` log-spaced model
/// sizes between 1 and `C / 6` (one token).
pub fn brute_force_optimal(truth: &LossSurface, budget: ComputeBudget, grid_points: usize) -> Result<BruteForceOptimum> {
    truth.validate()?;
    if grid_points < 1000 {
        return Err(Error::validation("grid_points", "need at least 1000 grid points"));
    }
    let half = budget.flops() / 6.0;
    if !(half > 1.0) {
        return Err(Error::validation("budget", "budget must exceed 6 FLOPs"));
    }
    let hi = half.ln();
    let step = hi / (grid_points - 1) as f64;
    let mut best = BruteForceOptimum {
        n_optimal: f64::NAN,
        loss: f64::INFINITY,
        grid_step_ln: step,
    };
    for i in 0..grid_points {
        let ln_n = step * i as f64;
        let n = ln_n.exp();
        let loss = truth.loss(n, (hi - ln_n).exp());
        if loss < best.loss {
            best.loss = loss;
            best.n_optimal = n;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamErrors {
    pub alpha: f64,
    pub beta: f64,
    pub n_c: f64,
    pub d_c: f64,
    pub e_irreducible: f64,
}

impl ParamErrors {
    pub fn max(&self) -> f64 {
        [self.alpha, self.beta, self.n_c, self.d_c, self.e_irreducible]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTripReport {
    pub truth_exponents: (f64, f64),
    /// Relative errors of the fitted surface coefficients.
    pub param_errors: ParamErrors,
    /// Absolute errors of the parametric allocation exponents `(a, b)`.
    pub exponent_errors: (f64, f64),
    /// Absolute error of the frontier `a`; `None` when the frontier was underdetermined.
    pub frontier_a_error: Option<f64>,
    /// `|a_frontier - a_parametric|`.
    pub frontier_vs_parametric_gap: Option<f64>,
    pub parametric: ParametricLaw,
    pub frontier: Option<FrontierLaw>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTripOptions {
    pub parametric: ParametricOptions,
    pub bins_per_decade: u32,
}

impl Default for RoundTripOptions {
    fn default() -> Self {
        Self {
            parametric: ParametricOptions::default(),
            bins_per_decade: DEFAULT_BINS_PER_DECADE,
        }
    }
}

fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

/// Generate, fit both ways, and measure recovery against the truth.
pub fn round_trip(spec: &SyntheticSpec, options: &RoundTripOptions) -> Result<RoundTripReport> {
    let family = generate_family(spec)?;
    let parametric = fit_parametric(&family, &options.parametric)?;
    let frontier = match extract_envelope(&family, options.bins_per_decade) {
        Ok(env) => Some(fit_frontier_laws(&env)?),
        Err(Error::FrontierUnderdetermined { .. }) => None,
        Err(e) => return Err(e),
    };
    let t = &spec.truth;
    let f = &parametric.surface;
    let truth_exponents = t.allocation_exponents();
    let fitted = f.allocation_exponents();
    let a_param = fitted.0;
    Ok(RoundTripReport {
        truth_exponents,
        param_errors: ParamErrors {
            alpha: rel_err(f.alpha, t.alpha),
            beta: rel_err(f.beta, t.beta),
            n_c: rel_err(f.n_c, t.n_c),
            d_c: rel_err(f.d_c, t.d_c),
            e_irreducible: rel_err(f.e_irreducible, t.e_irreducible),
        },
        exponent_errors: (
            (fitted.0 - truth_exponents.0).abs(),
            (fitted.1 - truth_exponents.1).abs(),
        ),
        frontier_a_error: frontier.as_ref().map(|l| (l.a - truth_exponents.0).abs()),
        frontier_vs_parametric_gap: frontier.as_ref().map(|l| (l.a - a_param).abs()),
        parametric,
        frontier,
    })
}

/// Compute-optimal model size from the closed form, for comparing against
/// [`brute_force_optimal`].
pub fn closed_form_optimal(truth: &LossSurface, budget: ComputeBudget) -> f64 {
    let law = ParametricLaw {
        surface: *truth,
        residual: 0.0,
        initial_residual: 0.0,
        n_points: 0,
        fit_space: Default::default(),
        winning_init: *truth,
        starts_tried: 0,
        starts_converged: 0,
        iterations: 0,
        distinct_model_sizes: 0,
        identifiable: true,
        e_at_bound: false,
        fit_range: (budget.flops(), budget.flops()),
    };
    parametric_optimal_size(&law, budget.flops())
}
