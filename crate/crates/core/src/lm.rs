//! Small dense Levenberg-Marquardt solver.
//!
//! Problems here have a handful of parameters and at most a few thousand
//! residuals, so the normal equations are formed explicitly and solved with a
//! Cholesky factorization. Bounds are handled by the callers through smooth
//! reparameterizations; the solver itself is unconstrained. Only steps that
//! lower the cost are accepted, so the final cost never exceeds the cost at
//! the starting point.

use nalgebra::{DMatrix, DVector};

/// A residual vector `r(x)` with its Jacobian.
pub trait LeastSquaresProblem {
    fn num_params(&self) -> usize;
    fn num_residuals(&self) -> usize;
    /// Fill `residuals` and, when requested, the row-major `m x n` Jacobian.
    /// Returns `false` if the model is not finite at `x`.
    fn evaluate(&self, x: &[f64], residuals: &mut [f64], jacobian: Option<&mut [f64]>) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Stop when `|dx| <= xtol * (|x| + xtol)`.
    pub xtol: f64,
    /// Stop when the largest gradient component falls below this.
    pub gtol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            xtol: 1e-10,
            gtol: 1e-15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ParameterTolerance,
    GradientTolerance,
    ZeroResidual,
    MaxIterations,
    /// The starting point itself could not be evaluated.
    NonFinite,
    /// The damped system could not be solved at any damping level.
    Singular,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(
            self,
            Termination::ParameterTolerance | Termination::GradientTolerance | Termination::ZeroResidual
        )
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    /// Half the sum of squared residuals at `x`.
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub termination: Termination,
}

fn half_sq(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

pub fn minimize<P: LeastSquaresProblem + ?Sized>(problem: &P, x0: &[f64], config: &LmConfig) -> LmOutcome {
    let n = problem.num_params();
    let m = problem.num_residuals();
    let mut x = x0.to_vec();
    let mut r = vec![0.0; m];
    let mut jac = vec![0.0; m * n];

    if !problem.evaluate(&x, &mut r, Some(&mut jac)) {
        return LmOutcome {
            x,
            cost: f64::INFINITY,
            initial_cost: f64::INFINITY,
            iterations: 0,
            termination: Termination::NonFinite,
        };
    }
    let mut cost = half_sq(&r);
    let initial_cost = cost;
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];

    let mut lambda: Option<f64> = None;
    let mut nu = 2.0;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    'outer: while iterations < config.max_iterations {
        iterations += 1;
        if cost == 0.0 {
            termination = Termination::ZeroResidual;
            break;
        }
        let j = DMatrix::from_row_slice(m, n, &jac);
        let jt = j.transpose();
        let a = &jt * &j;
        let g = &jt * DVector::from_column_slice(&r);
        if g.amax() <= config.gtol {
            termination = Termination::GradientTolerance;
            break;
        }
        let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].max(1e-300)).collect();
        let mut lam = *lambda.get_or_insert_with(|| 1e-3 * diag.iter().cloned().fold(0.0, f64::max));

        // Inner loop: raise damping until a step lowers the cost.
        loop {
            let mut damped = a.clone();
            for i in 0..n {
                damped[(i, i)] += lam * diag[i];
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lam *= nu;
                    nu *= 2.0;
                    if !lam.is_finite() {
                        termination = Termination::Singular;
                        break 'outer;
                    }
                    continue;
                }
            };
            let step_norm = step.norm();
            let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if step_norm <= config.xtol * (x_norm + config.xtol) {
                termination = Termination::ParameterTolerance;
                break 'outer;
            }
            for i in 0..n {
                trial[i] = x[i] + step[i];
            }
            let ok = problem.evaluate(&trial, &mut r_trial, None);
            let new_cost = if ok { half_sq(&r_trial) } else { f64::INFINITY };
            // Predicted reduction of the quadratic model.
            let predicted: f64 = (0..n)
                .map(|i| 0.5 * step[i] * (lam * diag[i] * step[i] - g[i]))
                .sum();
            if new_cost < cost {
                let rho = if predicted > 0.0 { (cost - new_cost) / predicted } else { 1.0 };
                x.copy_from_slice(&trial);
                cost = new_cost;
                problem.evaluate(&x, &mut r, Some(&mut jac));
                lam *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                nu = 2.0;
                lambda = Some(lam);
                continue 'outer;
            }
            lam *= nu;
            nu *= 2.0;
            if !lam.is_finite() || lam > 1e300 {
                // No descent direction left at machine precision.
                termination = Termination::ParameterTolerance;
                break 'outer;
            }
        }
    }

    LmOutcome {
        x,
        cost,
        initial_cost,
        iterations,
        termination,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y = p0 * exp(p1 * t)
    struct ExpDecay {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquaresProblem for ExpDecay {
        fn num_params(&self) -> usize {
            2
        }
        fn num_residuals(&self) -> usize {
            self.t.len()
        }
        fn evaluate(&self, x: &[f64], r: &mut [f64], jac: Option<&mut [f64]>) -> bool {
            for (i, (&t, &y)) in self.t.iter().zip(&self.y).enumerate() {
                r[i] = x[0] * (x[1] * t).exp() - y;
            }
            if let Some(j) = jac {
                for (i, &t) in self.t.iter().enumerate() {
                    let e = (x[1] * t).exp();
                    j[2 * i] = e;
                    j[2 * i + 1] = x[0] * t * e;
                }
            }
            r.iter().all(|v| v.is_finite())
        }
    }

    #[test]
    fn recovers_exponential() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let y = t.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let p = ExpDecay { t, y };
        let out = minimize(&p, &[1.0, 0.0], &LmConfig::default());
        assert!(out.termination.converged(), "{:?}", out.termination);
        assert!((out.x[0] - 3.0).abs() < 1e-8);
        assert!((out.x[1] + 0.7).abs() < 1e-8);
        assert!(out.cost <= out.initial_cost);
    }

    #[test]
    fn never_increases_cost() {
        let t: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let y = t.iter().map(|t| (2.0 * t).sin() + 1.5).collect();
        let p = ExpDecay { t, y };
        for start in [[1.0, 0.0], [10.0, -3.0], [0.1, 1.0]] {
            let out = minimize(&p, &start, &LmConfig::default());
            assert!(out.cost <= out.initial_cost);
        }
    }

    #[test]
    fn non_finite_start_is_reported() {
        let p = ExpDecay {
            t: vec![1000.0],
            y: vec![1.0],
        };
        let out = minimize(&p, &[1.0, 10.0], &LmConfig::default());
        assert_eq!(out.termination, Termination::NonFinite);
    }
}
