//! Training-curve ingestion.
//!
//! Logs are line-delimited JSON (one record per line) or CSV with a header
//! row using the same column names. Every record is validated on the way in;
//! strict parsing stops at the first bad line, lenient parsing keeps going and
//! hands back the rejected lines alongside the good records.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::accounting::{tokens_per_pair, ArchitectureProfile};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub n_params: f64,
    pub step: u64,
    pub tokens_seen: f64,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogFormat {
    LineJson,
    Csv,
}

impl LogFormat {
    /// Guess the format from a file extension; anything but `.csv` is line-JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => LogFormat::Csv,
            _ => LogFormat::LineJson,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossUnits {
    #[default]
    Nats,
    Bits,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    pub format: LogFormat,
    pub mode: ParseMode,
    pub loss_units: LossUnits,
}

impl ParseOptions {
    pub fn strict(format: LogFormat) -> Self {
        Self {
            format,
            mode: ParseMode::Strict,
            loss_units: LossUnits::Nats,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordError {
    pub line: usize,
    pub field: Option<String>,
    pub message: String,
}

impl From<RecordError> for Error {
    fn from(e: RecordError) -> Self {
        Error::Record {
            line: e.line,
            field: e.field,
            message: e.message,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedLog {
    pub records: Vec<RunRecord>,
    /// Rejected lines; always empty in strict mode.
    pub errors: Vec<RecordError>,
}

const REQUIRED: [&str; 5] = ["run_id", "n_params", "step", "tokens_seen", "loss"];

fn field_err(line: usize, field: &str, message: impl Into<String>) -> RecordError {
    RecordError {
        line,
        field: Some(field.to_string()),
        message: format!("{field}: {}", message.into()),
    }
}

/// Rewrites the bare `NaN` / `Infinity` / `-Infinity` literals some JSON
/// writers emit into strings, so the offending field can be reported by name.
fn quote_nonfinite_literals(line: &str) -> String {
    let mut out = String::with_capacity(line.len() + 8);
    let mut in_string = false;
    let mut escaped = false;
    let mut rest = line;
    while let Some(ch) = rest.chars().next() {
        if in_string {
            out.push(ch);
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_string = false;
            }
            rest = &rest[ch.len_utf8()..];
            continue;
        }
        if ch == '"' {
            in_string = true;
            out.push(ch);
            rest = &rest[1..];
            continue;
        }
        let literal = ["-Infinity", "Infinity", "NaN"]
            .into_iter()
            .find(|lit| rest.starts_with(lit));
        if let Some(lit) = literal {
            out.push('"');
            out.push_str(lit);
            out.push('"');
            rest = &rest[lit.len()..];
        } else {
            out.push(ch);
            rest = &rest[ch.len_utf8()..];
        }
    }
    out
}

/// A numeric field as it came off the wire: JSON number or numeric string.
fn number_from_json(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    }
}

/// Raw field accessor shared by the JSON and CSV paths.
trait FieldSource {
    fn text(&self, name: &str) -> Option<String>;
    fn number(&self, name: &str) -> std::result::Result<Option<f64>, String>;
}

impl FieldSource for serde_json::Map<String, Value> {
    fn text(&self, name: &str) -> Option<String> {
        match self.get(name)? {
            Value::String(s) => Some(s.clone()),
            Value::Null => None,
            other => Some(other.to_string()),
        }
    }

    fn number(&self, name: &str) -> std::result::Result<Option<f64>, String> {
        match self.get(name) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => number_from_json(v)
                .map(Some)
                .ok_or_else(|| format!("expected a number, got {v}")),
        }
    }
}

struct CsvRow<'a> {
    headers: &'a HashMap<String, usize>,
    row: &'a csv::StringRecord,
}

impl FieldSource for CsvRow<'_> {
    fn text(&self, name: &str) -> Option<String> {
        let s = self.row.get(*self.headers.get(name)?)?.trim();
        (!s.is_empty()).then(|| s.to_string())
    }

    fn number(&self, name: &str) -> std::result::Result<Option<f64>, String> {
        match self.text(name) {
            None => Ok(None),
            Some(s) => s
                .parse::<f64>()
                .map(Some)
                .map_err(|_| format!("expected a number, got '{s}'")),
        }
    }
}

fn integral_count(line: usize, field: &str, v: f64, positive: bool) -> std::result::Result<f64, RecordError> {
    if !v.is_finite() {
        return Err(field_err(line, field, format!("must be finite, got {v}")));
    }
    if v < 0.0 || (positive && v == 0.0) {
        let bound = if positive { "positive" } else { "non-negative" };
        return Err(field_err(line, field, format!("must be {bound}, got {v}")));
    }
    if v.fract() != 0.0 {
        return Err(field_err(line, field, format!("must be an integer count, got {v}")));
    }
    Ok(v)
}

fn record_from_fields(
    line: usize,
    src: &dyn FieldSource,
    units: LossUnits,
) -> std::result::Result<RunRecord, RecordError> {
    for name in REQUIRED {
        if src.text(name).is_none() {
            return Err(field_err(line, name, "missing required field"));
        }
    }
    let num = |name: &str| -> std::result::Result<f64, RecordError> {
        src.number(name)
            .map_err(|m| field_err(line, name, m))?
            .ok_or_else(|| field_err(line, name, "missing required field"))
    };
    let opt = |name: &str| src.number(name).map_err(|m| field_err(line, name, m));

    let run_id = src.text("run_id").unwrap_or_default();
    if run_id.trim().is_empty() {
        return Err(field_err(line, "run_id", "must be non-empty"));
    }
    let n_params = integral_count(line, "n_params", num("n_params")?, true)?;
    let step = integral_count(line, "step", num("step")?, false)?;
    if step > u64::MAX as f64 {
        return Err(field_err(line, "step", "out of range"));
    }
    let tokens_seen = integral_count(line, "tokens_seen", num("tokens_seen")?, false)?;
    let mut loss = num("loss")?;
    if !loss.is_finite() {
        return Err(field_err(line, "loss", format!("must be finite, got {loss}")));
    }
    if loss <= 0.0 {
        return Err(field_err(line, "loss", format!("must be positive, got {loss}")));
    }
    if units == LossUnits::Bits {
        loss *= std::f64::consts::LN_2;
    }
    Ok(RunRecord {
        run_id,
        n_params,
        step: step as u64,
        tokens_seen,
        loss,
        learning_rate: opt("learning_rate")?,
        wall_time_s: opt("wall_time_s")?,
    })
}

/// Cross-record invariants within a run: constant model size and strictly
/// increasing token counts, in file order.
#[derive(Default)]
struct RunTracker {
    runs: HashMap<String, (f64, f64)>,
}

impl RunTracker {
    fn admit(&mut self, line: usize, r: &RunRecord) -> std::result::Result<(), RecordError> {
        if let Some(&(n, last_tokens)) = self.runs.get(&r.run_id) {
            if n != r.n_params {
                return Err(field_err(
                    line,
                    "n_params",
                    format!("run '{}' changed size from {n} to {}", r.run_id, r.n_params),
                ));
            }
            if r.tokens_seen <= last_tokens {
                return Err(field_err(
                    line,
                    "tokens_seen",
                    format!(
                        "run '{}' is not strictly increasing ({} after {last_tokens})",
                        r.run_id, r.tokens_seen
                    ),
                ));
            }
        }
        self.runs.insert(r.run_id.clone(), (r.n_params, r.tokens_seen));
        Ok(())
    }
}

struct Collector {
    mode: ParseMode,
    tracker: RunTracker,
    out: ParsedLog,
}

impl Collector {
    fn push(&mut self, line: usize, rec: std::result::Result<RunRecord, RecordError>) -> Result<()> {
        let checked = rec.and_then(|r| self.tracker.admit(line, &r).map(|_| r));
        match checked {
            Ok(r) => self.out.records.push(r),
            Err(e) if self.mode == ParseMode::Strict => return Err(e.into()),
            Err(e) => self.out.errors.push(e),
        }
        Ok(())
    }
}

/// Decode and validate a run log.
pub fn parse_run_log<R: Read>(source: R, options: &ParseOptions) -> Result<ParsedLog> {
    let mut collector = Collector {
        mode: options.mode,
        tracker: RunTracker::default(),
        out: ParsedLog::default(),
    };
    match options.format {
        LogFormat::LineJson => {
            for (idx, line) in BufReader::new(source).lines().enumerate() {
                let lineno = idx + 1;
                let line = line.map_err(|e| Error::Record {
                    line: lineno,
                    field: None,
                    message: format!("unreadable line: {e}"),
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec = serde_json::from_str::<Value>(&quote_nonfinite_literals(&line))
                    .map_err(|e| RecordError {
                        line: lineno,
                        field: None,
                        message: format!("malformed JSON: {e}"),
                    })
                    .and_then(|v| match v {
                        Value::Object(map) => record_from_fields(lineno, &map, options.loss_units),
                        _ => Err(RecordError {
                            line: lineno,
                            field: None,
                            message: "expected a JSON object".into(),
                        }),
                    });
                collector.push(lineno, rec)?;
            }
        }
        LogFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(true)
                .flexible(false)
                .from_reader(source);
            let headers: HashMap<String, usize> = reader
                .headers()?
                .iter()
                .enumerate()
                .map(|(i, h)| (h.trim().to_string(), i))
                .collect();
            for name in REQUIRED {
                if !headers.contains_key(name) {
                    return Err(Error::Record {
                        line: 1,
                        field: Some(name.into()),
                        message: format!("{name}: missing required column"),
                    });
                }
            }
            for row in reader.records() {
                let (lineno, rec) = match row {
                    Ok(row) => {
                        let lineno = row.position().map_or(0, |p| p.line() as usize);
                        let src = CsvRow {
                            headers: &headers,
                            row: &row,
                        };
                        (lineno, record_from_fields(lineno, &src, options.loss_units))
                    }
                    Err(e) => {
                        let lineno = e.position().map_or(0, |p| p.line() as usize);
                        let err = RecordError {
                            line: lineno,
                            field: None,
                            message: format!("malformed CSV row: {e}"),
                        };
                        (lineno, Err(err))
                    }
                };
                collector.push(lineno, rec)?;
            }
        }
    }
    Ok(collector.out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Smoothing {
    #[default]
    None,
    /// Exponential moving average whose weight on the past halves every
    /// `half_life_tokens` tokens.
    Ema { half_life_tokens: f64 },
}

/// What the logged `tokens_seen` counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokensUnit {
    /// Transformer inputs, already the D of the scaling analysis.
    #[default]
    Inputs,
    /// Observation-action pairs; multiplied by the profile's tokens per pair.
    Pairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub tokens_seen: f64,
    pub flops: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub run_id: String,
    pub n_params: f64,
    pub points: Vec<CurvePoint>,
    pub smoothing: Smoothing,
}

impl TrainingCurve {
    pub fn flops_range(&self) -> Option<(f64, f64)> {
        Some((self.points.first()?.flops, self.points.last()?.flops))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFamily {
    pub label: String,
    pub profile: ArchitectureProfile,
    /// Sorted by model size, ascending.
    pub curves: Vec<TrainingCurve>,
}

impl CurveFamily {
    /// Assemble a family, checking its invariants and ordering curves by size.
    pub fn new(
        label: impl Into<String>,
        profile: ArchitectureProfile,
        mut curves: Vec<TrainingCurve>,
    ) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::InsufficientData("a family needs at least one curve".into()));
        }
        let mut ids = HashSet::new();
        for c in &curves {
            if !ids.insert(c.run_id.as_str()) {
                return Err(Error::validation("run_id", format!("duplicate run '{}'", c.run_id)));
            }
        }
        curves.sort_by(|a, b| a.n_params.total_cmp(&b.n_params));
        if let Some(w) = curves.windows(2).find(|w| w[0].n_params == w[1].n_params) {
            return Err(Error::validation(
                "n_params",
                format!(
                    "runs '{}' and '{}' share model size {}",
                    w[0].run_id, w[1].run_id, w[0].n_params
                ),
            ));
        }
        Ok(Self {
            label: label.into(),
            profile,
            curves,
        })
    }

    pub fn points(&self) -> impl Iterator<Item = (&TrainingCurve, &CurvePoint)> {
        self.curves
            .iter()
            .flat_map(|c| c.points.iter().map(move |p| (c, p)))
    }

    pub fn total_points(&self) -> usize {
        self.curves.iter().map(|c| c.points.len()).sum()
    }

    pub fn flops_range(&self) -> Option<(f64, f64)> {
        self.points().fold(None, |acc, (_, p)| match acc {
            None => Some((p.flops, p.flops)),
            Some((lo, hi)) => Some((lo.min(p.flops), hi.max(p.flops))),
        })
    }

    /// Every point as a line-JSON log, curves in order.
    pub fn write_line_json<W: Write>(&self, out: W) -> Result<()> {
        let mut out = std::io::BufWriter::new(out);
        for c in &self.curves {
            write_curve_records(c, &mut out)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Serialize one curve as line-JSON run records.
pub fn write_curve_records<W: Write>(curve: &TrainingCurve, mut out: W) -> Result<()> {
    for p in &curve.points {
        let rec = RunRecord {
            run_id: curve.run_id.clone(),
            n_params: curve.n_params,
            step: p.step,
            tokens_seen: p.tokens_seen,
            loss: p.loss,
            learning_rate: None,
            wall_time_s: None,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub label: String,
    pub profile: ArchitectureProfile,
    pub smoothing: Smoothing,
    /// Points with fewer tokens than this are dropped before smoothing.
    pub warmup_tokens: f64,
    pub tokens_unit: TokensUnit,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            label: "family".into(),
            profile: ArchitectureProfile::default(),
            smoothing: Smoothing::None,
            warmup_tokens: 0.0,
            tokens_unit: TokensUnit::Inputs,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CurveBuild {
    pub family: CurveFamily,
    pub warnings: Vec<String>,
}

fn apply_smoothing(points: &mut [CurvePoint], smoothing: Smoothing) {
    let Smoothing::Ema { half_life_tokens } = smoothing else {
        return;
    };
    let mut prev: Option<(f64, f64)> = None;
    for p in points.iter_mut() {
        if let Some((tokens, avg)) = prev {
            let keep = 0.5f64.powf((p.tokens_seen - tokens) / half_life_tokens);
            p.loss = keep * avg + (1.0 - keep) * p.loss;
        }
        prev = Some((p.tokens_seen, p.loss));
    }
}

/// Group validated records into per-run curves with FLOPs attached.
pub fn build_curves(records: &[RunRecord], options: &BuildOptions) -> Result<CurveBuild> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no records to build curves from".into()));
    }
    options.profile.validate()?;
    if let Smoothing::Ema { half_life_tokens } = options.smoothing {
        if !(half_life_tokens.is_finite() && half_life_tokens > 0.0) {
            return Err(Error::validation(
                "smoothing.half_life_tokens",
                format!("must be positive, got {half_life_tokens}"),
            ));
        }
    }
    if !(options.warmup_tokens.is_finite() && options.warmup_tokens >= 0.0) {
        return Err(Error::validation("warmup_tokens", "must be finite and non-negative"));
    }
    let token_scale = match options.tokens_unit {
        TokensUnit::Inputs => 1.0,
        TokensUnit::Pairs => tokens_per_pair(&options.profile)? as f64,
    };

    let mut grouped: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        grouped.entry(r.run_id.as_str()).or_default().push(r);
    }

    let mut warnings = Vec::new();
    let mut curves = Vec::with_capacity(grouped.len());
    for (run_id, mut recs) in grouped {
        let mut steps = HashSet::new();
        for r in &recs {
            if !steps.insert(r.step) {
                return Err(Error::validation(
                    "step",
                    format!("run '{run_id}' logs step {} more than once", r.step),
                ));
            }
            if r.n_params != recs[0].n_params {
                return Err(Error::validation(
                    "n_params",
                    format!("run '{run_id}' is not a single model size"),
                ));
            }
        }
        recs.sort_by(|a, b| a.tokens_seen.total_cmp(&b.tokens_seen));
        if let Some(w) = recs.windows(2).find(|w| w[0].tokens_seen == w[1].tokens_seen) {
            return Err(Error::validation(
                "tokens_seen",
                format!("run '{run_id}' repeats tokens_seen {}", w[0].tokens_seen),
            ));
        }
        let n_params = options.profile.total_params(recs[0].n_params);
        let mut zero_tokens = 0usize;
        let mut points = Vec::with_capacity(recs.len());
        for r in recs {
            let tokens = r.tokens_seen * token_scale;
            if tokens <= 0.0 {
                zero_tokens += 1;
                continue;
            }
            if tokens < options.warmup_tokens {
                continue;
            }
            points.push(CurvePoint {
                step: r.step,
                tokens_seen: tokens,
                flops: 6.0 * n_params * tokens,
                loss: r.loss,
            });
        }
        if zero_tokens > 0 {
            warnings.push(format!(
                "run '{run_id}': dropped {zero_tokens} point(s) with zero tokens seen"
            ));
        }
        if points.is_empty() {
            warnings.push(format!(
                "run '{run_id}': no points left after warmup truncation at {} tokens; run dropped",
                options.warmup_tokens
            ));
            continue;
        }
        apply_smoothing(&mut points, options.smoothing);
        curves.push(TrainingCurve {
            run_id: run_id.to_string(),
            n_params,
            points,
            smoothing: options.smoothing,
        });
    }
    let family = CurveFamily::new(options.label.clone(), options.profile.clone(), curves)?;
    Ok(CurveBuild { family, warnings })
}
