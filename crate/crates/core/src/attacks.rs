//! Membership inference attackers at three access levels: loss-only
//! black-box, prediction-vector black-box with shadow models, and white-box
//! with gradient features.
//!
//! Shadow-based attackers never see the target's training split. They train
//! surrogate models on the population set, learn an attack classifier from
//! the surrogates' own in/out behavior, and only then score the audited
//! records; the signatures enforce that separation by handing attack
//! training the population indices alone.

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{AuditSplit, LabeledDataset};
use crate::error::{AuditError, Result};
use crate::models::{
    forward, init_mlp, per_example_gradient, per_example_loss, train_sgd, MlpModel, TrainConfig,
};
use crate::rng;

pub const POPULATION_LOSS: &str = "population_loss";
pub const SHADOW_BLACKBOX: &str = "shadow_blackbox";
pub const SHADOW_WHITEBOX: &str = "shadow_whitebox";

/// Fixed presentation order for attack outputs, from weakest to strongest
/// assumed access.
pub const CANONICAL_ORDER: [&str; 3] = [POPULATION_LOSS, SHADOW_BLACKBOX, SHADOW_WHITEBOX];

/// One attacker verdict about one audited record. Higher scores mean the
/// attacker believes the record was more likely a training member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub record_id: usize,
    pub is_member: bool,
    pub score: f64,
    pub class_label: usize,
    pub attack_name: String,
}

/// Configuration of the shadow-model pipeline shared by the black-box and
/// white-box shadow attacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowConfig {
    /// Number of surrogate models; at least 2 so both membership labels
    /// appear in the attack training data.
    pub n_shadows: usize,
    /// Fraction of the population each shadow trains on, in (0, 1).
    pub shadow_train_fraction: f64,
    /// Full layer sizes of each shadow model. Must equal the target's
    /// architecture for the white-box attack.
    pub shadow_model_layers: Vec<usize>,
    pub shadow_train_config: TrainConfig,
    pub attack_train_config: TrainConfig,
}

impl ShadowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_shadows < 2 {
            return Err(AuditError::InvalidArgument(
                "n_shadows must be at least 2".into(),
            ));
        }
        if !(self.shadow_train_fraction > 0.0 && self.shadow_train_fraction < 1.0) {
            return Err(AuditError::InvalidArgument(
                "shadow_train_fraction must be strictly between 0 and 1".into(),
            ));
        }
        if self.shadow_model_layers.len() < 2 || self.shadow_model_layers.contains(&0) {
            return Err(AuditError::InvalidArgument(
                "shadow_model_layers must list at least two positive sizes".into(),
            ));
        }
        self.shadow_train_config.validate()?;
        self.attack_train_config.validate()
    }
}

/// Which attacks an audit runs. The shadow config is required whenever a
/// shadow-based attack is enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSelection {
    pub population_loss: bool,
    pub shadow_blackbox: bool,
    pub shadow_whitebox: bool,
    pub shadow: Option<ShadowConfig>,
}

impl AttackSelection {
    pub fn validate(&self) -> Result<()> {
        if !(self.population_loss || self.shadow_blackbox || self.shadow_whitebox) {
            return Err(AuditError::InvalidArgument("no attacks enabled".into()));
        }
        if (self.shadow_blackbox || self.shadow_whitebox) && self.shadow.is_none() {
            return Err(AuditError::InconsistentInputs(
                "shadow attacks enabled but no shadow config given".into(),
            ));
        }
        if let Some(cfg) = &self.shadow {
            cfg.validate()?;
        }
        Ok(())
    }
}

/// A trained surrogate model together with the population indices it did
/// and did not train on (both sorted ascending).
pub type ShadowModel = (MlpModel, Vec<usize>, Vec<usize>);

fn check_sorted_disjoint(a: &[usize], b: &[usize], what: &str) -> Result<()> {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                return Err(AuditError::InconsistentInputs(format!(
                    "{what} share record {}",
                    a[i]
                )))
            }
        }
    }
    Ok(())
}

/// Revalidate a split against a dataset. `AuditSplit` fields are public, so
/// attacks do not assume the constructor's invariants still hold.
fn validate_split(dataset: &LabeledDataset, split: &AuditSplit) -> Result<()> {
    let n = dataset.n_records();
    for (name, idx) in [
        ("member_idx", &split.member_idx),
        ("nonmember_idx", &split.nonmember_idx),
        ("population_idx", &split.population_idx),
    ] {
        if !idx.windows(2).all(|w| w[0] < w[1]) {
            return Err(AuditError::InconsistentInputs(format!(
                "{name} is not sorted strictly ascending"
            )));
        }
        if let Some(&i) = idx.last().filter(|&&i| i >= n) {
            return Err(AuditError::InconsistentInputs(format!(
                "{name} contains record {i}, dataset has {n}"
            )));
        }
    }
    check_sorted_disjoint(&split.member_idx, &split.nonmember_idx, "members and non-members")?;
    check_sorted_disjoint(&split.member_idx, &split.population_idx, "members and population")?;
    check_sorted_disjoint(
        &split.nonmember_idx,
        &split.population_idx,
        "non-members and population",
    )?;
    if split.member_idx.is_empty() || split.nonmember_idx.is_empty() {
        return Err(AuditError::InconsistentInputs(
            "split must contain members and non-members".into(),
        ));
    }
    Ok(())
}

/// The weakest attacker: knows only per-record losses. Each audited record
/// is scored by the negated cross-entropy loss under the target, so
/// low-loss (well-memorized) records look most member-like.
pub fn population_loss_attack(
    target: &MlpModel,
    dataset: &LabeledDataset,
    split: &AuditSplit,
) -> Result<Vec<AttackRecord>> {
    validate_split(dataset, split)?;
    split
        .audited_ids()
        .into_iter()
        .map(|id| {
            let label = dataset.labels[id];
            let loss = per_example_loss(target, dataset.features.row(id), label)?;
            Ok(AttackRecord {
                record_id: id,
                is_member: split.is_member(id),
                score: -loss,
                class_label: label,
                attack_name: POPULATION_LOSS.to_string(),
            })
        })
        .collect()
}

/// Train `n_shadows` surrogate models, each on its own random
/// `shadow_train_fraction` of the population records. Returns each model
/// with its in-training and held-out index sets (indices into `dataset`).
/// Fully deterministic: every shadow's split, initialization and training
/// seed is derived from the shadow train seed and the shadow index.
pub fn train_shadow_models(
    dataset: &LabeledDataset,
    population_idx: &[usize],
    cfg: &ShadowConfig,
) -> Result<Vec<ShadowModel>> {
    cfg.validate()?;
    if let Some(&i) = population_idx.iter().find(|&&i| i >= dataset.n_records()) {
        return Err(AuditError::InvalidArgument(format!(
            "population index {i} out of range for {} records",
            dataset.n_records()
        )));
    }
    let n_pop = population_idx.len();
    let in_size = (cfg.shadow_train_fraction * n_pop as f64).floor() as usize;
    let out_size = n_pop - in_size;
    if in_size == 0 || out_size == 0 {
        return Err(AuditError::InsufficientPopulation(format!(
            "population of {n_pop} with train fraction {} leaves {in_size} in / {out_size} out",
            cfg.shadow_train_fraction
        )));
    }

    let master = cfg.shadow_train_config.seed;
    (0..cfg.n_shadows)
        .into_par_iter()
        .map(|s| {
            let mut pool = population_idx.to_vec();
            let mut split_rng = rng::stream(master, "shadow-split", s as u64);
            use rand::seq::SliceRandom;
            pool.shuffle(&mut split_rng);
            let mut in_idx: Vec<usize> = pool[..in_size].to_vec();
            let mut out_idx: Vec<usize> = pool[in_size..].to_vec();
            in_idx.sort_unstable();
            out_idx.sort_unstable();

            let model0 = init_mlp(
                &cfg.shadow_model_layers,
                rng::derive_seed(master, "shadow-init", s as u64),
            )?;
            let mut train_cfg = cfg.shadow_train_config.clone();
            train_cfg.seed = rng::derive_seed(master, "shadow-train", s as u64);
            let (model, _) = train_sgd(&model0, dataset, &in_idx, &train_cfg)?;
            Ok((model, in_idx, out_idx))
        })
        .collect()
}

/// Sorted prediction vector (descending, length C) concatenated with the
/// one-hot true class (length C): the black-box attack feature.
fn blackbox_features(model: &MlpModel, dataset: &LabeledDataset, id: usize) -> Result<Vec<f64>> {
    let row = dataset.features.row(id).insert_axis(Axis(0));
    let probs = forward(model, row)?;
    let mut sorted: Vec<f64> = probs.row(0).to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut features = sorted;
    let mut one_hot = vec![0.0; dataset.num_classes];
    one_hot[dataset.labels[id]] = 1.0;
    features.extend(one_hot);
    Ok(features)
}

/// White-box attack feature: per-example loss, the L2 norm of the
/// per-example gradient of each layer's weights, the true-class and maximum
/// predicted probabilities, and the one-hot true class. Length is
/// `1 + L + 2 + C` for a model with L weight matrices and C classes.
pub fn extract_whitebox_features(
    target: &MlpModel,
    dataset: &LabeledDataset,
    record_id: usize,
) -> Result<Vec<f64>> {
    if record_id >= dataset.n_records() {
        return Err(AuditError::InvalidArgument(format!(
            "record_id {record_id} out of range for {} records",
            dataset.n_records()
        )));
    }
    let label = dataset.labels[record_id];
    let record = dataset.features.row(record_id);
    let loss = per_example_loss(target, record, label)?;
    let grads = per_example_gradient(target, record, label)?;
    let probs = forward(target, record.insert_axis(Axis(0)))?;
    let p_true = probs[[0, label]];
    let p_max = probs.row(0).iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut features = Vec::with_capacity(1 + target.n_layers() + 2 + dataset.num_classes);
    features.push(loss);
    for w in &grads.weights {
        features.push(w.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    features.push(p_true);
    features.push(p_max);
    let mut one_hot = vec![0.0; dataset.num_classes];
    one_hot[label] = 1.0;
    features.extend(one_hot);
    Ok(features)
}

/// Assemble the attack classifier's training set from shadow behavior: one
/// row per (shadow, record) pair with membership under that shadow as the
/// binary label. Each shadow's majority side is downsampled to the minority
/// size (seeded) so the labels come out balanced.
fn build_attack_dataset_with<F>(
    shadows: &[ShadowModel],
    seed: u64,
    featurize: F,
) -> Result<LabeledDataset>
where
    F: Fn(&MlpModel, usize) -> Result<Vec<f64>>,
{
    if shadows.is_empty() {
        return Err(AuditError::InvalidArgument("no shadow models given".into()));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (s, (model, in_idx, out_idx)) in shadows.iter().enumerate() {
        let keep = in_idx.len().min(out_idx.len());
        let mut balance_rng = rng::stream(seed, "attack-balance", s as u64);
        let mut pick = |idx: &[usize]| -> Vec<usize> {
            if idx.len() == keep {
                idx.to_vec()
            } else {
                use rand::seq::SliceRandom;
                let mut pool = idx.to_vec();
                pool.shuffle(&mut balance_rng);
                let mut chosen: Vec<usize> = pool[..keep].to_vec();
                chosen.sort_unstable();
                chosen
            }
        };
        for id in pick(in_idx) {
            rows.push(featurize(model, id)?);
            labels.push(1);
        }
        for id in pick(out_idx) {
            rows.push(featurize(model, id)?);
            labels.push(0);
        }
    }
    let width = rows[0].len();
    let flat: Vec<f64> = rows.concat();
    let features = Array2::from_shape_vec((labels.len(), width), flat)
        .map_err(|e| AuditError::ShapeMismatch(e.to_string()))?;
    LabeledDataset::new(features, labels, 2, None)
}

/// Black-box attack training set: sorted prediction vectors plus one-hot
/// class, labeled by shadow membership and balanced per shadow.
pub fn build_attack_dataset(
    shadows: &[ShadowModel],
    dataset: &LabeledDataset,
    seed: u64,
) -> Result<LabeledDataset> {
    build_attack_dataset_with(shadows, seed, |model, id| {
        blackbox_features(model, dataset, id)
    })
}

/// Train the attack classifier (a logistic regression: one weight matrix,
/// softmax head) on the shadow-derived dataset.
fn train_attack_classifier(attack_data: &LabeledDataset, cfg: &TrainConfig) -> Result<MlpModel> {
    let layers = [attack_data.n_features(), 2];
    let model0 = init_mlp(&layers, rng::derive_seed(cfg.seed, "attack-init", 0))?;
    let idx: Vec<usize> = (0..attack_data.n_records()).collect();
    let (model, _) = train_sgd(&model0, attack_data, &idx, cfg)?;
    Ok(model)
}

/// Score audited records by the attack classifier's membership probability
/// over target-derived features.
fn score_with_classifier<F>(
    classifier: &MlpModel,
    split: &AuditSplit,
    dataset: &LabeledDataset,
    attack_name: &str,
    featurize: F,
) -> Result<Vec<AttackRecord>>
where
    F: Fn(usize) -> Result<Vec<f64>>,
{
    let ids = split.audited_ids();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(ids.len());
    for &id in &ids {
        rows.push(featurize(id)?);
    }
    let width = rows[0].len();
    let flat: Vec<f64> = rows.concat();
    let features = Array2::from_shape_vec((ids.len(), width), flat)
        .map_err(|e| AuditError::ShapeMismatch(e.to_string()))?;
    let probs = forward(classifier, features.view())?;
    Ok(ids
        .iter()
        .enumerate()
        .map(|(row, &id)| AttackRecord {
            record_id: id,
            is_member: split.is_member(id),
            score: probs[[row, 1]],
            class_label: dataset.labels[id],
            attack_name: attack_name.to_string(),
        })
        .collect())
}

/// The black-box shadow attack: shadows trained on the population imitate
/// the target, an attack classifier learns to tell their in-records from
/// out-records by prediction vector, and audited records are scored by that
/// classifier applied to the target's predictions. Scores are membership
/// probabilities in [0, 1].
pub fn shadow_attack(
    target: &MlpModel,
    dataset: &LabeledDataset,
    split: &AuditSplit,
    cfg: &ShadowConfig,
) -> Result<Vec<AttackRecord>> {
    validate_split(dataset, split)?;
    cfg.validate()?;
    let shadows = train_shadow_models(dataset, &split.population_idx, cfg)?;
    let attack_data = build_attack_dataset(&shadows, dataset, cfg.shadow_train_config.seed)?;
    let classifier = train_attack_classifier(&attack_data, &cfg.attack_train_config)?;
    score_with_classifier(&classifier, split, dataset, SHADOW_BLACKBOX, |id| {
        blackbox_features(target, dataset, id)
    })
}

/// The white-box shadow attack: same pipeline as [`shadow_attack`] but
/// with gradient-based features, so shadows must share the target's exact
/// architecture.
pub fn whitebox_attack(
    target: &MlpModel,
    dataset: &LabeledDataset,
    split: &AuditSplit,
    cfg: &ShadowConfig,
) -> Result<Vec<AttackRecord>> {
    validate_split(dataset, split)?;
    cfg.validate()?;
    if cfg.shadow_model_layers != target.layer_sizes() {
        return Err(AuditError::ArchitectureMismatch(format!(
            "shadow layers {:?} differ from target layers {:?}",
            cfg.shadow_model_layers,
            target.layer_sizes()
        )));
    }
    let shadows = train_shadow_models(dataset, &split.population_idx, cfg)?;
    let attack_data =
        build_attack_dataset_with(&shadows, cfg.shadow_train_config.seed, |model, id| {
            extract_whitebox_features(model, dataset, id)
        })?;
    let classifier = train_attack_classifier(&attack_data, &cfg.attack_train_config)?;
    score_with_classifier(&classifier, split, dataset, SHADOW_WHITEBOX, |id| {
        extract_whitebox_features(target, dataset, id)
    })
}

/// Run every enabled attack in canonical order. Each inner list holds one
/// attack's records, ascending by record id.
pub fn run_attacks(
    target: &MlpModel,
    dataset: &LabeledDataset,
    split: &AuditSplit,
    selection: &AttackSelection,
) -> Result<Vec<Vec<AttackRecord>>> {
    selection.validate()?;
    let mut out = Vec::new();
    if selection.population_loss {
        out.push(population_loss_attack(target, dataset, split)?);
    }
    if selection.shadow_blackbox {
        let cfg = selection.shadow.as_ref().unwrap();
        out.push(shadow_attack(target, dataset, split, cfg)?);
    }
    if selection.shadow_whitebox {
        let cfg = selection.shadow.as_ref().unwrap();
        out.push(whitebox_attack(target, dataset, split, cfg)?);
    }
    Ok(out)
}
