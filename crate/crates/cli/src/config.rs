//! The audit configuration file: JSON schema, validation, and resolution
//! into the library's runtime types.
//!
//! A config carries one master seed. Every seed the pipeline needs (data
//! generation, split, initialization, training, shadows, sweep) is derived
//! from it with a distinct tag, so `--seed` swaps out all randomness at
//! once and two runs with the same config are bit-identical.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use privaudit::attacks::{AttackSelection, ShadowConfig};
use privaudit::datasets::{generate_synthetic, load_csv, make_audit_split, AuditSplit, LabeledDataset};
use privaudit::models::{DpParams, TrainConfig};
use privaudit::reports::MetricsOptions;
use privaudit::rng::derive_seed;

/// Top-level audit configuration, loaded from a JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    /// Master seed; all other seeds are derived from it.
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    pub target: TargetConfig,
    pub attacks: AttackToggles,
    #[serde(default)]
    pub metrics: MetricsOptions,
    pub output_dir: PathBuf,
    /// Noise multipliers for the `sweep` subcommand; ignored by `audit`.
    #[serde(default)]
    pub sweep_sigmas: Option<Vec<f64>>,
    /// Cap on worker threads for shadow and sweep training. Results do not
    /// depend on this value.
    #[serde(default)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetConfig {
    Synthetic {
        n_per_class: usize,
        n_features: usize,
        num_classes: usize,
        class_separation: f64,
    },
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default)]
        standardize: bool,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub n_members: usize,
    pub n_nonmembers: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    /// Hidden layer widths; input and output sizes come from the data.
    pub hidden_layers: Vec<usize>,
    pub train: TrainParams,
}

/// Training hyperparameters as written in a config: like
/// [`TrainConfig`] but without a seed, which is always derived.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub l2_coefficient: f64,
    #[serde(default)]
    pub dp: Option<DpParams>,
}

impl TrainParams {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            l2_coefficient: self.l2_coefficient,
            seed,
            dp: self.dp.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackToggles {
    #[serde(default)]
    pub population_loss: bool,
    #[serde(default)]
    pub shadow_blackbox: bool,
    #[serde(default)]
    pub shadow_whitebox: bool,
    #[serde(default)]
    pub shadow: Option<ShadowParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShadowParams {
    pub n_shadows: usize,
    pub shadow_train_fraction: f64,
    /// Hidden layer widths of the shadow models. Must match the target's
    /// hidden layers for the white-box attack.
    pub shadow_hidden_layers: Vec<usize>,
    pub shadow_train: TrainParams,
    pub attack_train: TrainParams,
}

/// A config after `--seed` / `--out` overrides, checked and ready to run.
pub struct ResolvedConfig {
    pub config: AuditConfig,
    /// SHA-256 of the overridden config JSON with `output_dir` and
    /// `threads` cleared. Those two settings cannot change any result, so
    /// the digest identifies the experiment, not where it ran or how
    /// parallel it was.
    pub digest: String,
}

fn full_layers(n_features: usize, hidden: &[usize], num_classes: usize) -> Vec<usize> {
    let mut layers = Vec::with_capacity(hidden.len() + 2);
    layers.push(n_features);
    layers.extend_from_slice(hidden);
    layers.push(num_classes);
    layers
}

impl ResolvedConfig {
    /// Load, apply overrides, and validate. All failures here are config
    /// errors: the returned message has no category prefix.
    pub fn load(
        path: &Path,
        seed_override: Option<u64>,
        out_override: Option<PathBuf>,
    ) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut config: AuditConfig = serde_json::from_str(&text)
            .map_err(|e| format!("cannot parse config {}: {e}", path.display()))?;
        if let Some(seed) = seed_override {
            config.seed = seed;
        }
        if let Some(out) = out_override {
            config.output_dir = out;
        }
        config.validate()?;
        let mut digested = config.clone();
        digested.output_dir = PathBuf::new();
        digested.threads = None;
        let canonical = serde_json::to_string(&digested).map_err(|e| e.to_string())?;
        let digest: String = Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        Ok(Self { config, digest })
    }

    /// Build the dataset and audit split this config describes.
    pub fn build_world(&self) -> privaudit::Result<(LabeledDataset, AuditSplit)> {
        let config = &self.config;
        let dataset = match &config.dataset {
            DatasetConfig::Synthetic {
                n_per_class,
                n_features,
                num_classes,
                class_separation,
            } => generate_synthetic(
                *n_per_class,
                *n_features,
                *num_classes,
                *class_separation,
                derive_seed(config.seed, "data", 0),
            )?,
            DatasetConfig::Csv {
                path,
                label_column,
                standardize,
            } => {
                let mut dataset = load_csv(path, label_column)?;
                if *standardize {
                    dataset = dataset.standardize();
                }
                dataset
            }
        };
        let split = make_audit_split(
            &dataset,
            config.split.n_members,
            config.split.n_nonmembers,
            derive_seed(config.seed, "split", 0),
        )?;
        Ok((dataset, split))
    }

    /// Full layer sizes of the target model for a dataset of this shape.
    pub fn target_layers(&self, dataset: &LabeledDataset) -> Vec<usize> {
        full_layers(
            dataset.n_features(),
            &self.config.target.hidden_layers,
            dataset.num_classes,
        )
    }

    pub fn target_init_seed(&self) -> u64 {
        derive_seed(self.config.seed, "target-init", 0)
    }

    pub fn target_train_config(&self) -> TrainConfig {
        self.config
            .target
            .train
            .with_seed(derive_seed(self.config.seed, "target-train", 0))
    }

    /// The attack selection for a dataset of this shape, with derived
    /// shadow and attack-classifier seeds.
    pub fn attack_selection(&self, dataset: &LabeledDataset) -> AttackSelection {
        let config = &self.config;
        let shadow = config.attacks.shadow.as_ref().map(|s| ShadowConfig {
            n_shadows: s.n_shadows,
            shadow_train_fraction: s.shadow_train_fraction,
            shadow_model_layers: full_layers(
                dataset.n_features(),
                &s.shadow_hidden_layers,
                dataset.num_classes,
            ),
            shadow_train_config: s.shadow_train.with_seed(derive_seed(config.seed, "shadow", 0)),
            attack_train_config: s.attack_train.with_seed(derive_seed(config.seed, "attack", 0)),
        });
        AttackSelection {
            population_loss: config.attacks.population_loss,
            shadow_blackbox: config.attacks.shadow_blackbox,
            shadow_whitebox: config.attacks.shadow_whitebox,
            shadow,
        }
    }

    pub fn sweep_seed(&self) -> u64 {
        derive_seed(self.config.seed, "sweep", 0)
    }
}

impl AuditConfig {
    /// Structural validation: everything checkable without training or
    /// reading data files (except that referenced paths must exist).
    pub fn validate(&self) -> Result<(), String> {
        match &self.dataset {
            DatasetConfig::Synthetic {
                n_per_class,
                n_features,
                num_classes,
                class_separation,
            } => {
                if *n_per_class == 0 || *n_features == 0 {
                    return Err("synthetic dataset sizes must be positive".into());
                }
                if *num_classes < 2 {
                    return Err("synthetic dataset needs at least 2 classes".into());
                }
                if !class_separation.is_finite() || *class_separation < 0.0 {
                    return Err("class_separation must be finite and non-negative".into());
                }
                let n_records = n_per_class * num_classes;
                if self.split.n_members + self.split.n_nonmembers > n_records {
                    return Err(format!(
                        "split wants {} audited records but the dataset will have {n_records}",
                        self.split.n_members + self.split.n_nonmembers
                    ));
                }
            }
            DatasetConfig::Csv { path, .. } => {
                if !path.is_file() {
                    return Err(format!("dataset file {} does not exist", path.display()));
                }
            }
        }
        if self.split.n_members == 0 || self.split.n_nonmembers == 0 {
            return Err("split needs members and non-members".into());
        }

        // dummy seed: seeds are derived later and do not affect validity
        self.target.train.with_seed(0).validate().map_err(|e| e.to_string())?;
        if self.target.hidden_layers.contains(&0) {
            return Err("hidden layer widths must be positive".into());
        }

        let toggles = &self.attacks;
        if !(toggles.population_loss || toggles.shadow_blackbox || toggles.shadow_whitebox) {
            return Err("no attacks enabled".into());
        }
        if (toggles.shadow_blackbox || toggles.shadow_whitebox) && toggles.shadow.is_none() {
            return Err("shadow attacks enabled but attacks.shadow is missing".into());
        }
        if let Some(shadow) = &toggles.shadow {
            if shadow.n_shadows < 2 {
                return Err("n_shadows must be at least 2".into());
            }
            if !(shadow.shadow_train_fraction > 0.0 && shadow.shadow_train_fraction < 1.0) {
                return Err("shadow_train_fraction must be strictly between 0 and 1".into());
            }
            if shadow.shadow_hidden_layers.contains(&0) {
                return Err("shadow hidden layer widths must be positive".into());
            }
            shadow.shadow_train.with_seed(0).validate().map_err(|e| e.to_string())?;
            shadow.attack_train.with_seed(0).validate().map_err(|e| e.to_string())?;
            if self.attacks.shadow_whitebox
                && shadow.shadow_hidden_layers != self.target.hidden_layers
            {
                return Err(
                    "white-box attack needs shadow_hidden_layers equal to the target's hidden_layers"
                        .into(),
                );
            }
        }

        if self.metrics.bins == 0 {
            return Err("metrics.bins must be positive".into());
        }
        if self
            .metrics
            .fpr_targets
            .iter()
            .any(|t| !(0.0..=1.0).contains(t))
        {
            return Err("metrics.fpr_targets must lie in [0, 1]".into());
        }

        if let Some(sigmas) = &self.sweep_sigmas {
            if sigmas.is_empty() {
                return Err("sweep_sigmas must be non-empty when present".into());
            }
            if sigmas.iter().any(|s| !s.is_finite() || *s <= 0.0) {
                return Err("sweep_sigmas must all be finite and positive".into());
            }
            if !sigmas.windows(2).all(|w| w[0] < w[1]) {
                return Err("sweep_sigmas must be strictly increasing".into());
            }
        }
        if self.threads == Some(0) {
            return Err("threads must be at least 1".into());
        }
        Ok(())
    }
}
