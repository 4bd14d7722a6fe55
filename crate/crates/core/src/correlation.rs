//! Correlation between pre-training loss and downstream metrics.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetterDirection {
    Lower,
    Higher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub metric_name: String,
    pub better_direction: BetterDirection,
    /// `(loss, metric)` pairs.
    pub pairs: Vec<(f64, f64)>,
}

impl MetricSeries {
    pub fn new(
        metric_name: impl Into<String>,
        better_direction: BetterDirection,
        pairs: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let s = Self {
            metric_name: metric_name.into(),
            better_direction,
            pairs,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "'{}' needs at least 3 pairs, got {}",
                self.metric_name,
                self.pairs.len()
            )));
        }
        if self.pairs.iter().any(|(l, m)| !(l.is_finite() && m.is_finite())) {
            return Err(Error::validation("pairs", format!("'{}' has non-finite values", self.metric_name)));
        }
        Ok(())
    }

    /// Read a CSV with `loss` and `metric` columns.
    pub fn from_csv<R: Read>(source: R, metric_name: &str, better_direction: BetterDirection) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::validation(name, "missing required column"))
        };
        let (li, mi) = (col("loss")?, col("metric")?);
        let mut pairs = Vec::new();
        for row in reader.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line() as usize);
            let num = |i: usize, field: &str| -> Result<f64> {
                row.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::Record {
                        line,
                        field: Some(field.into()),
                        message: format!("{field}: expected a number"),
                    })
            };
            pairs.push((num(li, "loss")?, num(mi, "metric")?));
        }
        Self::new(metric_name, better_direction, pairs)
    }
}

fn pearson_xy(name: &str, x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        let which = if sxx == 0.0 { "loss" } else { "metric" };
        return Err(Error::UndefinedCorrelation {
            metric: name.to_string(),
            reason: format!("{which} has zero variance"),
        });
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson product-moment correlation between loss and metric.
pub fn pearson(series: &MetricSeries) -> Result<f64> {
    series.validate()?;
    let (x, y): (Vec<f64>, Vec<f64>) = series.pairs.iter().cloned().unzip();
    pearson_xy(&series.metric_name, &x, &y)
}

/// Average ranks, ties sharing the mean of their positions.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(series: &MetricSeries) -> Result<f64> {
    series.validate()?;
    let (x, y): (Vec<f64>, Vec<f64>) = series.pairs.iter().cloned().unzip();
    pearson_xy(&series.metric_name, &ranks(&x), &ranks(&y))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    #[default]
    Pearson,
    Spearman,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxyRow {
    pub metric_name: String,
    pub n: usize,
    /// `None` when the correlation is undefined.
    pub r: Option<f64>,
    pub undefined_reason: Option<String>,
    /// Lower loss goes with a better metric.
    pub direction_consistent: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxyReport {
    pub kind: CorrelationKind,
    pub rows: Vec<ProxyRow>,
}

impl ProxyReport {
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<24} {:>6} {:>9} {:>11}\n", "metric", "n", "R", "consistent");
        for row in &self.rows {
            let r = row.r.map_or_else(|| "undefined".to_string(), |r| format!("{r:.4}"));
            let c = match row.direction_consistent {
                Some(true) => "yes",
                Some(false) => "no",
                None => "-",
            };
            out.push_str(&format!("{:<24} {:>6} {:>9} {:>11}\n", row.metric_name, row.n, r, c));
        }
        out
    }
}

pub fn proxy_report(series: &[MetricSeries], kind: CorrelationKind) -> Result<ProxyReport> {
    let mut rows = Vec::with_capacity(series.len());
    for s in series {
        let r = match kind {
            CorrelationKind::Pearson => pearson(s),
            CorrelationKind::Spearman => spearman(s),
        };
        let row = match r {
            Ok(r) => ProxyRow {
                metric_name: s.metric_name.clone(),
                n: s.pairs.len(),
                r: Some(r),
                undefined_reason: None,
                direction_consistent: Some(match s.better_direction {
                    BetterDirection::Lower => r > 0.0,
                    BetterDirection::Higher => r < 0.0,
                }),
            },
            Err(Error::UndefinedCorrelation { reason, .. }) => ProxyRow {
                metric_name: s.metric_name.clone(),
                n: s.pairs.len(),
                r: None,
                undefined_reason: Some(reason),
                direction_consistent: None,
            },
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    Ok(ProxyReport { kind, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(pairs: Vec<(f64, f64)>) -> MetricSeries {
        MetricSeries::new("m", BetterDirection::Lower, pairs).unwrap()
    }

    #[test]
    fn exact_lines() {
        let down = series((0..6).map(|i| (i as f64, 10.0 - 2.0 * i as f64)).collect());
        assert!((pearson(&down).unwrap() + 1.0).abs() < 1e-15);
        let up = series((0..6).map(|i| (i as f64, 3.0 * i as f64 + 1.0)).collect());
        assert!((pearson(&up).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_parabola_is_uncorrelated() {
        let s = series((-2..=2).map(|x| (x as f64, (x * x) as f64)).collect());
        assert!(pearson(&s).unwrap().abs() < 1e-15);
    }

    #[test]
    fn zero_variance_is_an_error() {
        let s = series(vec![(1.0, 5.0), (2.0, 5.0), (3.0, 5.0)]);
        assert!(matches!(pearson(&s), Err(Error::UndefinedCorrelation { .. })));
        assert!(MetricSeries::new("m", BetterDirection::Lower, vec![(1.0, 1.0)]).is_err());
    }

    #[test]
    fn report_rows_and_flags() {
        let a = MetricSeries::new("fvd", BetterDirection::Lower, vec![(1.0, 1.0), (2.0, 2.5), (3.0, 2.9)]).unwrap();
        let b = MetricSeries::new("const", BetterDirection::Lower, vec![(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]).unwrap();
        let c = MetricSeries::new("reward", BetterDirection::Higher, vec![(1.0, 9.0), (2.0, 5.0), (3.0, 1.0)]).unwrap();
        let rep = proxy_report(&[a, b, c], CorrelationKind::Pearson).unwrap();
        assert_eq!(rep.rows.len(), 3);
        assert_eq!(rep.rows[0].direction_consistent, Some(true));
        assert!(rep.rows[1].r.is_none());
        assert!(rep.rows[1].direction_consistent.is_none());
        assert_eq!(rep.rows[2].direction_consistent, Some(true));
        let table = rep.to_table();
        assert!(table.contains("undefined"));
        assert_eq!(table.lines().count(), 4);
    }

    #[test]
    fn spearman_handles_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        let s = series(vec![(1.0, 1.0), (2.0, 4.0), (3.0, 9.0), (4.0, 100.0)]);
        assert!((spearman(&s).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn csv_ingest() {
        let text = "loss,metric\n2.0,300\n1.5,200\n1.2,150\n";
        let s = MetricSeries::from_csv(text.as_bytes(), "fvd", BetterDirection::Lower).unwrap();
        assert_eq!(s.pairs.len(), 3);
        assert!(pearson(&s).unwrap() > 0.99);
        assert!(MetricSeries::from_csv("loss\n1\n".as_bytes(), "x", BetterDirection::Lower).is_err());
    }

    proptest! {
        #[test]
        fn affine_invariance(
            pts in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
            scale in 0.01f64..100.0,
            shift in -1e3f64..1e3,
        ) {
            let base = series(pts.clone());
            let Ok(r) = pearson(&base) else { return Ok(()); };
            prop_assert!(r.abs() <= 1.0);
            let moved = series(pts.iter().map(|&(x, y)| (scale * x + shift, y)).collect());
            prop_assert!((pearson(&moved).unwrap() - r).abs() < 1e-12);
            let flipped = series(pts.iter().map(|&(x, y)| (x, -scale * y + shift)).collect());
            prop_assert!((pearson(&flipped).unwrap() + r).abs() < 1e-12);
        }
    }
}
