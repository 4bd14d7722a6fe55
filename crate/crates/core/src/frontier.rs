//! Compute-efficient frontier and the allocation power laws fitted to it.
//!
//! FLOPs are split into log-uniform bins anchored at the smallest FLOPs value
//! in the family, so rescaling every FLOPs value by a constant moves the bins
//! with the data. Each non-empty bin keeps its lowest-loss point; the power
//! laws `N = a0 C^a` and `D = b0 C^b` are then ordinary least squares fits in
//! log10 space over those points.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::curves::CurveFamily;
use crate::error::{Error, Result};

pub const DEFAULT_BINS_PER_DECADE: u32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub run_id: String,
    pub n_params: f64,
    pub tokens_seen: f64,
    pub flops: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeBin {
    pub c_center: f64,
    pub best: EnvelopePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierEnvelope {
    pub bins: Vec<EnvelopeBin>,
    pub bins_per_decade: u32,
    /// Smallest and largest FLOPs over the whole family.
    pub flops_range: (f64, f64),
}

impl FrontierEnvelope {
    pub fn distinct_model_sizes(&self) -> usize {
        self.bins
            .iter()
            .map(|b| b.best.n_params.to_bits())
            .collect::<HashSet<_>>()
            .len()
    }

    /// FLOPs span covered by the envelope, including the centers of partially
    /// filled end bins.
    pub fn covered_range(&self) -> (f64, f64) {
        let last_center = self.bins.last().map_or(self.flops_range.1, |b| b.c_center);
        (self.flops_range.0, self.flops_range.1.max(last_center))
    }

    /// Envelope as CSV with columns `c_center,n_params,tokens_seen,loss`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["c_center", "n_params", "tokens_seen", "loss"])?;
        for b in &self.bins {
            w.write_record(&[
                b.c_center.to_string(),
                b.best.n_params.to_string(),
                b.best.tokens_seen.to_string(),
                b.best.loss.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `a` is strictly better than `b`: lower loss, then smaller model, then fewer tokens.
fn better(a: &EnvelopePoint, b: &EnvelopePoint) -> bool {
    (a.loss, a.n_params, a.tokens_seen) < (b.loss, b.n_params, b.tokens_seen)
}

pub fn extract_envelope(family: &CurveFamily, bins_per_decade: u32) -> Result<FrontierEnvelope> {
    if bins_per_decade == 0 {
        return Err(Error::validation("bins_per_decade", "must be at least 1"));
    }
    if family.curves.len() < 2 {
        return Err(Error::FrontierUnderdetermined {
            distinct_sizes: family.curves.len(),
        });
    }
    let (c_min, c_max) = family
        .flops_range()
        .ok_or_else(|| Error::InsufficientData("family has no points".into()))?;
    if !(c_min > 0.0) {
        return Err(Error::validation("flops", "envelope needs strictly positive FLOPs"));
    }
    let origin = c_min.log10();
    let per = f64::from(bins_per_decade);

    let mut best: BTreeMap<i64, EnvelopePoint> = BTreeMap::new();
    for (curve, p) in family.points() {
        let idx = ((p.flops.log10() - origin) * per).floor() as i64;
        let candidate = EnvelopePoint {
            run_id: curve.run_id.clone(),
            n_params: curve.n_params,
            tokens_seen: p.tokens_seen,
            flops: p.flops,
            loss: p.loss,
        };
        match best.get(&idx) {
            Some(current) if !better(&candidate, current) => {}
            _ => {
                best.insert(idx, candidate);
            }
        }
    }
    let bins: Vec<EnvelopeBin> = best
        .into_iter()
        .map(|(idx, best)| EnvelopeBin {
            c_center: 10f64.powf(origin + (idx as f64 + 0.5) / per),
            best,
        })
        .collect();
    let envelope = FrontierEnvelope {
        bins,
        bins_per_decade,
        flops_range: (c_min, c_max),
    };
    let distinct = envelope.distinct_model_sizes();
    if distinct < 2 {
        return Err(Error::FrontierUnderdetermined {
            distinct_sizes: distinct,
        });
    }
    Ok(envelope)
}

/// `(c_center, loss)` for every non-empty bin, in increasing FLOPs.
pub fn envelope_loss_points(envelope: &FrontierEnvelope) -> Vec<(f64, f64)> {
    envelope.bins.iter().map(|b| (b.c_center, b.best.loss)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares `y = intercept + slope * x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return Err(Error::InsufficientData(format!("need at least 2 paired points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        let (dx, dy) = (xi - mx, yi - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= f64::EPSILON * f64::EPSILON * nf * mx.abs().max(1.0) {
        return Err(Error::InsufficientData("zero variance in the regressor".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LineFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierLaw {
    pub a0: f64,
    pub a: f64,
    pub b0: f64,
    pub b: f64,
    pub r2_n: f64,
    pub r2_d: f64,
    pub n_envelope_points: usize,
    pub distinct_models_on_envelope: usize,
    /// FLOPs span the law was fitted on.
    pub fit_range: (f64, f64),
}

impl FrontierLaw {
    pub fn n_optimal(&self, flops: f64) -> f64 {
        self.a0 * flops.powf(self.a)
    }

    pub fn d_optimal(&self, flops: f64) -> f64 {
        self.b0 * flops.powf(self.b)
    }
}

/// Fit `N_opt = a0 C^a` and `D_opt = b0 C^b` through the envelope points.
///
/// The regressor is each point's own FLOPs rather than its bin center, so
/// `D = C / 6N` holds point by point and the two slopes sum to one.
pub fn fit_frontier_laws(envelope: &FrontierEnvelope) -> Result<FrontierLaw> {
    let distinct = envelope.distinct_model_sizes();
    if distinct < 2 {
        return Err(Error::FrontierUnderdetermined {
            distinct_sizes: distinct,
        });
    }
    if envelope.bins.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "frontier fit needs at least 3 envelope points, got {}",
            envelope.bins.len()
        )));
    }
    let x: Vec<f64> = envelope.bins.iter().map(|b| b.best.flops.log10()).collect();
    let yn: Vec<f64> = envelope.bins.iter().map(|b| b.best.n_params.log10()).collect();
    let yd: Vec<f64> = envelope.bins.iter().map(|b| b.best.tokens_seen.log10()).collect();
    let n_fit = ols(&x, &yn)?;
    let d_fit = ols(&x, &yd)?;
    Ok(FrontierLaw {
        a0: 10f64.powf(n_fit.intercept),
        a: n_fit.slope,
        b0: 10f64.powf(d_fit.intercept),
        b: d_fit.slope,
        r2_n: n_fit.r2,
        r2_d: d_fit.r2,
        n_envelope_points: envelope.bins.len(),
        distinct_models_on_envelope: distinct,
        fit_range: envelope.covered_range(),
    })
}
