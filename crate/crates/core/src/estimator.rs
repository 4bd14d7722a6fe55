//! Named allocation estimators.
//!
//! Each way of estimating compute-optimal allocation sits behind
//! [`Estimator`] and is looked up by name, so callers (the CLI, config files)
//! pick methods at runtime. An estimator turns a curve family into an
//! [`AllocationLaw`], and can reload the law from the JSON it serialized.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::accounting::ComputeBudget;
use crate::allocator::{allocate_from_frontier, allocate_from_parametric, AllocationPlan};
use crate::curves::CurveFamily;
use crate::error::{Error, Result};
use crate::frontier::{extract_envelope, fit_frontier_laws, FrontierLaw, DEFAULT_BINS_PER_DECADE};
use crate::parametric::{fit_parametric, ParametricLaw, ParametricOptions};

/// A fitted law that can produce allocation plans.
pub trait AllocationLaw: Debug + Send + Sync {
    /// Name of the estimator that produced this law.
    fn method(&self) -> &'static str;
    /// `(a, b)` in `N_opt ~ C^a`, `D_opt ~ C^b`.
    fn exponents(&self) -> (f64, f64);
    fn fit_range(&self) -> (f64, f64);
    fn allocate(&self, budget: ComputeBudget) -> Result<AllocationPlan>;
    /// The law itself as JSON, without the `method` wrapper.
    fn to_json(&self) -> Result<Value>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSettings {
    pub bins_per_decade: u32,
    pub parametric: ParametricOptions,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            bins_per_decade: DEFAULT_BINS_PER_DECADE,
            parametric: ParametricOptions::default(),
        }
    }
}

pub trait Estimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    /// Artifact file the law is written to.
    fn artifact_name(&self) -> &'static str;
    fn estimate(&self, family: &CurveFamily, settings: &EstimatorSettings) -> Result<Box<dyn AllocationLaw>>;
    fn load(&self, law: &Value) -> Result<Box<dyn AllocationLaw>>;
}

impl AllocationLaw for FrontierLaw {
    fn method(&self) -> &'static str {
        FrontierEstimator.name()
    }
    fn exponents(&self) -> (f64, f64) {
        (self.a, self.b)
    }
    fn fit_range(&self) -> (f64, f64) {
        self.fit_range
    }
    fn allocate(&self, budget: ComputeBudget) -> Result<AllocationPlan> {
        allocate_from_frontier(self, budget)
    }
    fn to_json(&self) -> Result<Value> {
        Ok(serde_json::to_value(self)?)
    }
}

impl AllocationLaw for ParametricLaw {
    fn method(&self) -> &'static str {
        ParametricEstimator.name()
    }
    fn exponents(&self) -> (f64, f64) {
        self.surface.allocation_exponents()
    }
    fn fit_range(&self) -> (f64, f64) {
        self.fit_range
    }
    fn allocate(&self, budget: ComputeBudget) -> Result<AllocationPlan> {
        allocate_from_parametric(self, budget)
    }
    fn to_json(&self) -> Result<Value> {
        Ok(serde_json::to_value(self)?)
    }
}

/// Envelope extraction plus log-log regression.
pub struct FrontierEstimator;

impl Estimator for FrontierEstimator {
    fn name(&self) -> &'static str {
        "frontier"
    }
    fn summary(&self) -> &'static str {
        "power laws fitted to the compute-efficient envelope"
    }
    fn artifact_name(&self) -> &'static str {
        "frontier_law.json"
    }
    fn estimate(&self, family: &CurveFamily, settings: &EstimatorSettings) -> Result<Box<dyn AllocationLaw>> {
        let envelope = extract_envelope(family, settings.bins_per_decade)?;
        Ok(Box::new(fit_frontier_laws(&envelope)?))
    }
    fn load(&self, law: &Value) -> Result<Box<dyn AllocationLaw>> {
        Ok(Box::new(serde_json::from_value::<FrontierLaw>(law.clone())?))
    }
}

/// Parametric loss surface fitted to every curve point.
pub struct ParametricEstimator;

impl Estimator for ParametricEstimator {
    fn name(&self) -> &'static str {
        "parametric"
    }
    fn summary(&self) -> &'static str {
        "Nc/N^alpha + Dc/D^beta + E fitted to the training curves"
    }
    fn artifact_name(&self) -> &'static str {
        "parametric_law.json"
    }
    fn estimate(&self, family: &CurveFamily, settings: &EstimatorSettings) -> Result<Box<dyn AllocationLaw>> {
        Ok(Box::new(fit_parametric(family, &settings.parametric)?))
    }
    fn load(&self, law: &Value) -> Result<Box<dyn AllocationLaw>> {
        Ok(Box::new(serde_json::from_value::<ParametricLaw>(law.clone())?))
    }
}

pub struct EstimatorRegistry {
    entries: Vec<Box<dyn Estimator>>,
}

impl Default for EstimatorRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}

impl EstimatorRegistry {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(FrontierEstimator)).expect("builtin names are unique");
        r.register(Box::new(ParametricEstimator)).expect("builtin names are unique");
        r
    }

    pub fn register(&mut self, estimator: Box<dyn Estimator>) -> Result<()> {
        if self.get(estimator.name()).is_some() {
            return Err(Error::validation(
                "estimator",
                format!("'{}' is already registered", estimator.name()),
            ));
        }
        self.entries.push(estimator);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&dyn Estimator> {
        self.entries.iter().find(|e| e.name() == name).map(|e| e.as_ref())
    }

    pub fn require(&self, name: &str) -> Result<&dyn Estimator> {
        self.get(name).ok_or_else(|| Error::UnknownEstimator(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Estimator> {
        self.entries.iter().map(|e| e.as_ref())
    }

    /// Rebuild a law from a document written by [`law_document`].
    pub fn load_document(&self, doc: &Value) -> Result<Box<dyn AllocationLaw>> {
        let method = doc
            .get("method")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::validation("method", "law document has no 'method' field"))?;
        let law = doc
            .get("law")
            .ok_or_else(|| Error::validation("law", "law document has no 'law' field"))?;
        self.require(method)?.load(law)
    }
}

/// `{"method": ..., "exponents": {...}, "law": {...}}` plus any extra fields.
pub fn law_document(law: &dyn AllocationLaw, extra: Value) -> Result<Value> {
    let (a, b) = law.exponents();
    let mut doc = json!({
        "method": law.method(),
        "exponents": { "a": a, "b": b },
        "law": law.to_json()?,
    });
    if let (Value::Object(d), Value::Object(e)) = (&mut doc, extra) {
        d.extend(e);
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed;

    impl Estimator for Fixed {
        fn name(&self) -> &'static str {
            "frontier"
        }
        fn summary(&self) -> &'static str {
            ""
        }
        fn artifact_name(&self) -> &'static str {
            "x.json"
        }
        fn estimate(&self, _: &CurveFamily, _: &EstimatorSettings) -> Result<Box<dyn AllocationLaw>> {
            Err(Error::Domain("unused".into()))
        }
        fn load(&self, _: &Value) -> Result<Box<dyn AllocationLaw>> {
            Err(Error::Domain("unused".into()))
        }
    }

    #[test]
    fn builtin_names_and_lookup() {
        let r = EstimatorRegistry::with_builtin();
        assert_eq!(r.names(), vec!["frontier", "parametric"]);
        assert!(r.get("parametric").is_some());
        assert!(matches!(r.require("isoflop"), Err(Error::UnknownEstimator(_))));
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut r = EstimatorRegistry::with_builtin();
        assert!(r.register(Box::new(Fixed)).is_err());
    }

    #[test]
    fn document_round_trip() {
        let law = FrontierLaw {
            a0: 0.1,
            a: 0.49,
            b0: 1.0 / 0.6,
            b: 0.51,
            r2_n: 0.99,
            r2_d: 0.98,
            n_envelope_points: 12,
            distinct_models_on_envelope: 5,
            fit_range: (1e16, 1e19),
        };
        let doc = law_document(&law, json!({"label": "wm"})).unwrap();
        assert_eq!(doc["method"], "frontier");
        assert_eq!(doc["label"], "wm");
        let back = EstimatorRegistry::with_builtin().load_document(&doc).unwrap();
        assert_eq!(back.exponents(), (0.49, 0.51));
        assert_eq!(back.fit_range(), (1e16, 1e19));
    }
}
