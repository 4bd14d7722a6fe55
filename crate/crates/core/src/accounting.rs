//! FLOPs, token and supervision arithmetic.
//!
//! Everything here is held as `f64`: budgets reach 1e21 FLOPs and beyond, far
//! past the point where integer products of parameter and token counts are
//! comfortable. Count-like inputs are still validated as non-negative integers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How an architecture turns one observation-action pair into transformer inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureKind {
    /// Tokenized world model: `d_z` observation tokens plus `d_a` action tokens.
    WmToken,
    /// Tokenized behavior cloning, same token layout as [`ArchitectureKind::WmToken`].
    BcToken,
    /// Behavior cloning over a fixed CNN embedding: one input per pair.
    BcCnn,
    /// Ordinary language model, one input per token.
    PlainLm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    WorldModel,
    BehaviorClone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureProfile {
    pub kind: ArchitectureKind,
    /// Tokens per image observation.
    #[serde(default)]
    pub d_z: u64,
    /// Tokens per action.
    #[serde(default)]
    pub d_a: u64,
    /// Parameters of the frozen per-observation encoder, counted into N for `bc_cnn`.
    #[serde(default)]
    pub fixed_encoder_params: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_size: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_height: Option<u32>,
}

impl Default for ArchitectureProfile {
    fn default() -> Self {
        Self::new(ArchitectureKind::PlainLm, 0, 0)
    }
}

impl ArchitectureProfile {
    pub fn new(kind: ArchitectureKind, d_z: u64, d_a: u64) -> Self {
        Self {
            kind,
            d_z,
            d_a,
            fixed_encoder_params: 0,
            vocab_size: None,
            image_width: None,
            image_height: None,
        }
    }

    pub fn wm_token(d_z: u64, d_a: u64) -> Self {
        Self::new(ArchitectureKind::WmToken, d_z, d_a)
    }

    pub fn bc_token(d_z: u64, d_a: u64) -> Self {
        Self::new(ArchitectureKind::BcToken, d_z, d_a)
    }

    pub fn bc_cnn(fixed_encoder_params: u64) -> Self {
        Self {
            fixed_encoder_params,
            ..Self::new(ArchitectureKind::BcCnn, 0, 0)
        }
    }

    pub fn plain_lm() -> Self {
        Self::new(ArchitectureKind::PlainLm, 0, 0)
    }

    fn is_tokenized(&self) -> bool {
        matches!(self.kind, ArchitectureKind::WmToken | ArchitectureKind::BcToken)
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_tokenized() && self.d_z == 0 {
            return Err(Error::validation(
                "profile.d_z",
                format!("{:?} requires d_z > 0", self.kind),
            ));
        }
        Ok(())
    }

    /// Model size N for a logged transformer parameter count. Only `bc_cnn`
    /// carries trainable parameters outside the transformer.
    pub fn total_params(&self, transformer_params: f64) -> f64 {
        match self.kind {
            ArchitectureKind::BcCnn => transformer_params + self.fixed_encoder_params as f64,
            _ => transformer_params,
        }
    }
}

/// A training compute budget in FLOPs. Always finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ComputeBudget(f64);

impl ComputeBudget {
    pub fn new(flops: f64) -> Result<Self> {
        if !flops.is_finite() || flops < 0.0 {
            return Err(Error::validation(
                "budget",
                format!("FLOPs must be finite and non-negative, got {flops}"),
            ));
        }
        Ok(Self(flops))
    }

    pub fn flops(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for ComputeBudget {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ComputeBudget> for f64 {
    fn from(value: ComputeBudget) -> f64 {
        value.0
    }
}

pub(crate) fn check_count(field: &str, value: f64) -> Result<f64> {
    if !value.is_finite() || value < 0.0 {
        return Err(Error::validation(
            field,
            format!("expected a finite non-negative count, got {value}"),
        ));
    }
    Ok(value)
}

/// Training compute under the usual `C = 6 N D` approximation.
pub fn training_flops(n_params: f64, tokens: f64) -> Result<ComputeBudget> {
    let n = check_count("n_params", n_params)?;
    let d = check_count("tokens", tokens)?;
    ComputeBudget::new(6.0 * n * d)
}

/// Transformer inputs generated by one observation-action pair.
pub fn tokens_per_pair(profile: &ArchitectureProfile) -> Result<u64> {
    profile.validate()?;
    Ok(match profile.kind {
        ArchitectureKind::WmToken | ArchitectureKind::BcToken => profile.d_z + profile.d_a,
        ArchitectureKind::BcCnn | ArchitectureKind::PlainLm => 1,
    })
}

/// Share of sequence positions that receive a loss signal.
pub fn supervised_fraction(profile: &ArchitectureProfile, task: Task) -> Result<f64> {
    profile.validate()?;
    match (profile.kind, task) {
        (ArchitectureKind::WmToken | ArchitectureKind::BcToken, Task::WorldModel) => {
            Ok(profile.d_z as f64 / (profile.d_z + profile.d_a) as f64)
        }
        (ArchitectureKind::WmToken | ArchitectureKind::BcToken, Task::BehaviorClone) => {
            Ok(profile.d_a as f64 / (profile.d_z + profile.d_a) as f64)
        }
        (ArchitectureKind::BcCnn, Task::BehaviorClone) => Ok(1.0),
        (ArchitectureKind::PlainLm, Task::WorldModel) => Ok(1.0),
        (kind, task) => Err(Error::Domain(format!(
            "{kind:?} profiles do not support the {task:?} task"
        ))),
    }
}

/// How many times more transformer inputs `a` consumes per prediction than `b`.
pub fn compute_per_prediction_ratio(
    a: &ArchitectureProfile,
    b: &ArchitectureProfile,
) -> Result<f64> {
    Ok(tokens_per_pair(a)? as f64 / tokens_per_pair(b)? as f64)
}

/// FLOPs ceiling for staying in the infinite-data regime when each unique
/// token may be seen at most `max_epochs` times.
pub fn infinite_data_budget(
    n_params: f64,
    unique_pairs: f64,
    profile: &ArchitectureProfile,
    max_epochs: u32,
) -> Result<ComputeBudget> {
    let n = check_count("n_params", n_params)?;
    let pairs = check_count("unique_pairs", unique_pairs)?;
    let tokens = pairs * tokens_per_pair(profile)? as f64 * f64::from(max_epochs);
    let flops = 6.0 * n * tokens;
    if !flops.is_finite() {
        return Err(Error::validation("budget", "FLOPs overflow"));
    }
    ComputeBudget::new(flops)
}

/// Default reuse limit for the infinite-data regime.
pub const DEFAULT_MAX_EPOCHS: u32 = 4;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn flops_matches_reference_budgets() {
        let c = training_flops(200e6, 3.6e12).unwrap().flops();
        assert!(rel(c, 4.32e21) < 1e-12);
        assert!(rel(c, 4.3e21) < 0.05);
        let c = training_flops(50e6, 6.52e9).unwrap().flops();
        assert!(rel(c, 1.956e18) < 1e-12);
        assert!(rel(c, 2.0e18) < 0.05);
        assert_eq!(training_flops(0.0, 1e12).unwrap().flops(), 0.0);
    }

    #[test]
    fn flops_rejects_bad_inputs() {
        assert!(training_flops(-1.0, 1.0).is_err());
        assert!(training_flops(1.0, f64::NAN).is_err());
        assert!(training_flops(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn tokens_per_pair_by_kind() {
        assert_eq!(tokens_per_pair(&ArchitectureProfile::wm_token(540, 16)).unwrap(), 556);
        assert_eq!(tokens_per_pair(&ArchitectureProfile::wm_token(256, 16)).unwrap(), 272);
        let mut cnn = ArchitectureProfile::bc_cnn(1_000_000);
        cnn.d_z = 540;
        assert_eq!(tokens_per_pair(&cnn).unwrap(), 1);
        assert_eq!(tokens_per_pair(&ArchitectureProfile::plain_lm()).unwrap(), 1);
        assert!(tokens_per_pair(&ArchitectureProfile::wm_token(0, 16)).is_err());
    }

    #[test]
    fn supervised_fractions() {
        let p = ArchitectureProfile::bc_token(540, 16);
        let wm = supervised_fraction(&p, Task::WorldModel).unwrap();
        let bc = supervised_fraction(&p, Task::BehaviorClone).unwrap();
        assert!((wm - 540.0 / 556.0).abs() < 1e-15);
        assert!((wm - 0.9712).abs() < 1e-4);
        assert!((bc - 0.0288).abs() < 1e-4);
        let cnn = ArchitectureProfile::bc_cnn(0);
        assert_eq!(supervised_fraction(&cnn, Task::BehaviorClone).unwrap(), 1.0);
        assert!(matches!(
            supervised_fraction(&cnn, Task::WorldModel),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn per_prediction_ratio() {
        let tok = ArchitectureProfile::bc_token(540, 16);
        let cnn = ArchitectureProfile::bc_cnn(0);
        assert_eq!(compute_per_prediction_ratio(&tok, &cnn).unwrap(), 556.0);
        assert_eq!(compute_per_prediction_ratio(&tok, &tok).unwrap(), 1.0);
        let wm = ArchitectureProfile::wm_token(256, 16);
        assert_eq!(
            compute_per_prediction_ratio(&wm, &cnn).unwrap(),
            tokens_per_pair(&wm).unwrap() as f64
        );
    }

    #[test]
    fn infinite_data_budgets() {
        let c = infinite_data_budget(200e6, 355e6, &ArchitectureProfile::wm_token(256, 16), 4)
            .unwrap()
            .flops();
        assert!(rel(c, 6.0 * 200e6 * 355e6 * 272.0 * 4.0) < 1e-12);
        assert!(rel(c, 4.63e20) < 2e-3, "{c}");
        assert!(rel(c, 4.6e20) < 0.05);
        let c = infinite_data_budget(200e6, 1.63e9, &ArchitectureProfile::wm_token(540, 16), 4)
            .unwrap()
            .flops();
        assert!(rel(c, 4.35e21) < 1e-3, "{c}");
        assert!(rel(c, 4.3e21) < 0.05);
        let c = infinite_data_budget(50e6, 1.63e9, &ArchitectureProfile::bc_cnn(0), 4)
            .unwrap()
            .flops();
        assert!(rel(c, 1.956e18) < 1e-12);
        assert_eq!(
            infinite_data_budget(1e9, 0.0, &ArchitectureProfile::plain_lm(), 4)
                .unwrap()
                .flops(),
            0.0
        );
        assert!(infinite_data_budget(1e300, 1e300, &ArchitectureProfile::plain_lm(), 4).is_err());
    }

    #[test]
    fn encoder_params_only_count_for_cnn() {
        assert_eq!(ArchitectureProfile::bc_cnn(10).total_params(5.0), 15.0);
        let mut wm = ArchitectureProfile::wm_token(256, 16);
        wm.fixed_encoder_params = 10;
        assert_eq!(wm.total_params(5.0), 5.0);
    }

    proptest! {
        #[test]
        fn flops_linear_in_params(n in 0.0f64..1e12, d in 0.0f64..1e13, k in 0.0f64..1e3) {
            let scaled = training_flops(k * n, d).unwrap().flops();
            let base = training_flops(n, d).unwrap().flops();
            prop_assert!((scaled - k * base).abs() <= 1e-12 * scaled.abs().max(1.0));
        }

        #[test]
        fn fractions_sum_to_one(d_z in 1u64..4096, d_a in 0u64..512) {
            let p = ArchitectureProfile::wm_token(d_z, d_a);
            let q = ArchitectureProfile::bc_token(d_z, d_a);
            prop_assert_eq!(tokens_per_pair(&p).unwrap(), tokens_per_pair(&q).unwrap());
            let s = supervised_fraction(&p, Task::WorldModel).unwrap()
                + supervised_fraction(&p, Task::BehaviorClone).unwrap();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn single_epoch_budget_is_training_flops(n in 1.0f64..1e10, pairs in 1.0f64..1e10, d_z in 1u64..1024, d_a in 0u64..64) {
            let p = ArchitectureProfile::wm_token(d_z, d_a);
            let tpp = tokens_per_pair(&p).unwrap() as f64;
            let a = infinite_data_budget(n, pairs, &p, 1).unwrap().flops();
            let b = training_flops(n, pairs * tpp).unwrap().flops();
            prop_assert!((a - b).abs() <= 1e-12 * b);
        }
    }
}
