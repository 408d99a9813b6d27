//! Shared fixtures for the integration tests: a small two-class task that a
//! [4, 64, 64, 2] network memorizes completely, plus the attack
//! configuration used against it.

#![allow(dead_code)]

use privaudit::*;

pub const TARGET_LAYERS: [usize; 4] = [4, 64, 64, 2];
pub const N_MEMBERS: usize = 30;
pub const N_NONMEMBERS: usize = 90;
pub const SEPARATION: f64 = 0.5;

pub struct AuditScene {
    pub data: LabeledDataset,
    pub split: AuditSplit,
}

/// 300 records of a heavily overlapping two-blob task, split into
/// 30 members, 90 non-members and a 180-record attacker population.
pub fn scene(seed: u64) -> AuditScene {
    let data = generate_synthetic(150, 4, 2, SEPARATION, seed).unwrap();
    let split = make_audit_split(&data, N_MEMBERS, N_NONMEMBERS, seed + 100).unwrap();
    AuditScene { data, split }
}

/// Enough SGD on 30 records to drive training loss below 1e-2.
pub fn memorizing_recipe(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.4,
        epochs: 150,
        batch_size: 8,
        l2_coefficient: 0.0,
        seed,
        dp: None,
    }
}

pub fn overfit_target(sc: &AuditScene, seed: u64) -> (MlpModel, TrainHistory) {
    let m0 = init_mlp(&TARGET_LAYERS, seed + 200).unwrap();
    train_sgd(&m0, &sc.data, &sc.split.member_idx, &memorizing_recipe(seed + 300)).unwrap()
}

/// Shadows trained exactly like the target (same architecture, same
/// recipe, same train-set size of 30 out of the 180-record population).
pub fn shadow_recipe(seed: u64) -> ShadowConfig {
    ShadowConfig {
        n_shadows: 8,
        shadow_train_fraction: 30.0 / 180.0,
        shadow_model_layers: TARGET_LAYERS.to_vec(),
        shadow_train_config: memorizing_recipe((seed + 400) ^ 0x5555),
        attack_train_config: TrainConfig {
            learning_rate: 0.1,
            epochs: 300,
            batch_size: 32,
            l2_coefficient: 0.0,
            seed: (seed + 400) ^ 0xaaaa,
            dp: None,
        },
    }
}

pub fn auc_of(records: &[AttackRecord]) -> f64 {
    let members: Vec<f64> = records
        .iter()
        .filter(|r| r.is_member)
        .map(|r| r.score)
        .collect();
    let others: Vec<f64> = records
        .iter()
        .filter(|r| !r.is_member)
        .map(|r| r.score)
        .collect();
    compute_roc(&members, &others).unwrap().auc
}
