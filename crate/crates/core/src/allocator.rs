//! Compute-optimal allocation plans from fitted laws.
//!
//! A plan always satisfies `C = 6 N D`: the model size comes from the law
//! and the token count is derived from the budget, never fitted separately.

use serde::{Deserialize, Serialize};

use crate::accounting::ComputeBudget;
use crate::error::{Error, Result};
use crate::frontier::FrontierLaw;
use crate::parametric::{LossLaw, ParametricLaw};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSource {
    FrontierLaw,
    ParametricLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub budget: ComputeBudget,
    pub n_optimal: f64,
    pub d_optimal: f64,
    pub predicted_loss: Option<f64>,
    pub source: PlanSource,
    /// Decades outside the FLOPs range the law was fitted on; 0 inside it.
    pub extrapolation_decades: f64,
    /// Frontier plans only: `b0 C^b / d_optimal - 1`, the disagreement
    /// between the independently fitted data law and the constraint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_law_discrepancy: Option<f64>,
}

impl AllocationPlan {
    fn from_model_size(
        budget: ComputeBudget,
        n_optimal: f64,
        source: PlanSource,
        fit_range: (f64, f64),
    ) -> Result<Self> {
        let c = budget.flops();
        if !(c > 0.0) {
            return Err(Error::validation("budget", "allocation needs a positive FLOPs budget"));
        }
        if !(n_optimal.is_finite() && n_optimal > 0.0) {
            return Err(Error::Domain(format!("law produced an invalid model size {n_optimal}")));
        }
        let d_optimal = c / (6.0 * n_optimal);
        debug_assert!(((6.0 * n_optimal * d_optimal - c) / c).abs() < 1e-6);
        Ok(Self {
            budget,
            n_optimal,
            d_optimal,
            predicted_loss: None,
            source,
            extrapolation_decades: extrapolation_decades(fit_range, c),
            d_law_discrepancy: None,
        })
    }

    pub fn with_predicted_loss(mut self, loss: f64) -> Self {
        self.predicted_loss = Some(loss);
        self
    }
}

/// Distance in decades from `flops` to the closed interval `range`.
pub fn extrapolation_decades(range: (f64, f64), flops: f64) -> f64 {
    let (lo, hi) = range;
    if flops > hi {
        (flops / hi).log10()
    } else if flops < lo {
        (lo / flops).log10()
    } else {
        0.0
    }
}

pub fn allocate_from_frontier(law: &FrontierLaw, budget: ComputeBudget) -> Result<AllocationPlan> {
    let c = budget.flops();
    let mut plan =
        AllocationPlan::from_model_size(budget, law.n_optimal(c), PlanSource::FrontierLaw, law.fit_range)?;
    plan.d_law_discrepancy = Some(law.d_optimal(c) / plan.d_optimal - 1.0);
    Ok(plan)
}

/// Closed-form minimizer of the parametric surface along `C = 6 N D`:
/// `N* = [(alpha Nc) / (beta Dc)]^(1/(alpha+beta)) (C/6)^(beta/(alpha+beta))`.
pub fn parametric_optimal_size(law: &ParametricLaw, flops: f64) -> f64 {
    let s = &law.surface;
    let sum = s.alpha + s.beta;
    // Stay in log space: Nc and Dc can span many decades.
    let ln_ratio = (s.alpha * s.n_c).ln() - (s.beta * s.d_c).ln();
    (ln_ratio / sum + (s.beta / sum) * (flops / 6.0).ln()).exp()
}

pub fn allocate_from_parametric(law: &ParametricLaw, budget: ComputeBudget) -> Result<AllocationPlan> {
    let n = parametric_optimal_size(law, budget.flops());
    let plan = AllocationPlan::from_model_size(budget, n, PlanSource::ParametricLaw, law.fit_range)?;
    let loss = law.loss(plan.n_optimal, plan.d_optimal);
    Ok(plan.with_predicted_loss(loss))
}

/// Compute-optimal loss predicted by the loss law.
pub fn predict_loss(law: &LossLaw, budget: ComputeBudget) -> f64 {
    law.predict(budget.flops())
}

/// Log-uniform budgets between `lo` and `hi` inclusive.
pub fn budget_sweep(lo: f64, hi: f64, points: usize) -> Result<Vec<ComputeBudget>> {
    if !(lo > 0.0 && hi >= lo) || points == 0 {
        return Err(Error::validation("sweep", "need 0 < lo <= hi and at least one point"));
    }
    if points == 1 {
        return Ok(vec![ComputeBudget::new(lo)?]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..points)
        .map(|i| ComputeBudget::new(10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64)))
        .collect()
}
