//! Differential privacy accounting for the DP-SGD trainer, plus the sweep
//! that maps noise levels to both a formal epsilon and an empirical attack
//! outcome so the two can be weighed side by side.
//!
//! The bound is deliberately simple: zero-concentrated DP composition of
//! the Gaussian mechanism, `rho = T / (2 sigma^2)`, converted to
//! `epsilon = rho + 2 sqrt(rho ln(1/delta))`. It ignores subsampling
//! amplification, so it never understates epsilon; the method tag on every
//! report says exactly which bound produced the number.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::attacks::{run_attacks, AttackSelection};
use crate::datasets::{AuditSplit, LabeledDataset};
use crate::error::{AuditError, Result};
use crate::metrics::compute_roc;
use crate::models::{evaluate, generalization_gap, init_mlp, train_dp_sgd, TrainConfig};
use crate::rng;

pub const ACCOUNTING_METHOD: &str = "zcdp-no-subsampling";

/// An (epsilon, delta) guarantee with the intermediate quantities and the
/// bound that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonReport {
    pub epsilon: f64,
    pub rho: f64,
    pub sigma: f64,
    pub steps: usize,
    pub delta: f64,
    pub method: String,
}

/// Epsilon for `steps` Gaussian-mechanism releases at noise multiplier
/// `sigma`. The clipping bound cancels (noise stddev is `sigma * C` against
/// sensitivity `C`), so it does not appear here. Zero steps leak nothing
/// and give epsilon 0.
pub fn epsilon_of(sigma: f64, steps: usize, delta: f64) -> Result<EpsilonReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AuditError::InvalidArgument(
            "delta must be in (0, 1)".into(),
        ));
    }
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(AuditError::InvalidArgument(
            "sigma must be finite and non-negative".into(),
        ));
    }
    if sigma == 0.0 && steps > 0 {
        return Err(AuditError::InvalidArgument(
            "sigma must be positive when steps > 0".into(),
        ));
    }
    let rho = if steps == 0 {
        0.0
    } else {
        steps as f64 / (2.0 * sigma * sigma)
    };
    let epsilon = rho + 2.0 * (rho * (1.0 / delta).ln()).sqrt();
    Ok(EpsilonReport {
        epsilon,
        rho,
        sigma,
        steps,
        delta,
        method: ACCOUNTING_METHOD.to_string(),
    })
}

/// One point of the privacy-utility sweep: the formal guarantee next to
/// what actually happened to utility and attack success at that noise
/// level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub sigma: f64,
    pub epsilon: f64,
    pub test_accuracy: f64,
    pub attack_auc: BTreeMap<String, f64>,
    pub loss_gap: f64,
}

/// What to vary and what to hold fixed across the sweep. `base_train` must
/// carry DP parameters (finite clip bound, delta); its noise multiplier is
/// replaced by each entry of `sigmas` in turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Full layer sizes of the target trained at each sweep point.
    pub model_layers: Vec<usize>,
    pub base_train: TrainConfig,
    /// Noise multipliers, strictly increasing, all positive.
    pub sigmas: Vec<f64>,
    pub attacks: AttackSelection,
    /// Master seed; every sweep point derives its own independent
    /// initialization, training, and attack seeds from it.
    pub seed: u64,
}

impl SweepSpec {
    fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() {
            return Err(AuditError::InvalidArgument("sigmas must be non-empty".into()));
        }
        if self.sigmas.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(AuditError::InvalidArgument(
                "every sigma must be finite and positive".into(),
            ));
        }
        if !self.sigmas.windows(2).all(|w| w[0] < w[1]) {
            return Err(AuditError::InvalidArgument(
                "sigmas must be strictly increasing".into(),
            ));
        }
        let dp = self.base_train.dp.as_ref().ok_or_else(|| {
            AuditError::InvalidArgument("sweep base config has no DP parameters".into())
        })?;
        if !dp.clip_norm.is_finite() {
            return Err(AuditError::InvalidArgument(
                "sweep requires a finite clip_norm so the noise stddev is defined".into(),
            ));
        }
        self.base_train.validate()?;
        self.attacks.validate()?;
        if self.model_layers.len() < 2 || self.model_layers.contains(&0) {
            return Err(AuditError::InvalidArgument(
                "model_layers must list at least two positive sizes".into(),
            ));
        }
        Ok(())
    }
}

fn sweep_point(
    dataset: &LabeledDataset,
    split: &AuditSplit,
    spec: &SweepSpec,
    index: usize,
    sigma: f64,
) -> Result<TradeoffRow> {
    let mut train_cfg = spec.base_train.clone();
    train_cfg.seed = rng::derive_seed(spec.seed, "sweep-train", index as u64);
    train_cfg.dp.as_mut().unwrap().noise_multiplier = sigma;

    let model0 = init_mlp(
        &spec.model_layers,
        rng::derive_seed(spec.seed, "sweep-init", index as u64),
    )?;
    let (target, _, steps) = train_dp_sgd(&model0, dataset, &split.member_idx, &train_cfg)?;
    let (test_accuracy, _) = evaluate(&target, dataset, &split.nonmember_idx)?;
    let (loss_gap, _) =
        generalization_gap(&target, dataset, &split.member_idx, &split.nonmember_idx)?;
    let delta = train_cfg.dp.as_ref().unwrap().delta;
    let epsilon = epsilon_of(sigma, steps, delta)?.epsilon;

    // fresh attack seeds per sweep point, so rows stay independent
    let mut selection = spec.attacks.clone();
    if let Some(shadow) = selection.shadow.as_mut() {
        shadow.shadow_train_config.seed =
            rng::derive_seed(spec.seed, "sweep-shadow", index as u64);
        shadow.attack_train_config.seed =
            rng::derive_seed(spec.seed, "sweep-attack", index as u64);
    }
    let mut attack_auc = BTreeMap::new();
    for group in run_attacks(&target, dataset, split, &selection)? {
        let members: Vec<f64> = group.iter().filter(|r| r.is_member).map(|r| r.score).collect();
        let others: Vec<f64> = group.iter().filter(|r| !r.is_member).map(|r| r.score).collect();
        let curve = compute_roc(&members, &others)?;
        attack_auc.insert(group[0].attack_name.clone(), curve.auc);
    }

    Ok(TradeoffRow {
        sigma,
        epsilon,
        test_accuracy,
        attack_auc,
        loss_gap,
    })
}

/// Train, attack, and account at every noise level. Rows come back in
/// sigma order, each computed from independently derived seeds, so the
/// result does not depend on how many threads ran the sweep.
pub fn sweep_tradeoff(
    dataset: &LabeledDataset,
    split: &AuditSplit,
    spec: &SweepSpec,
) -> Result<Vec<TradeoffRow>> {
    spec.validate()?;
    spec.sigmas
        .par_iter()
        .enumerate()
        .map(|(i, &sigma)| sweep_point(dataset, split, spec, i, sigma))
        .collect()
}
