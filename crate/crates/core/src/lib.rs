//! Privacy auditing for classification models via simulated membership
//! inference attacks.
//!
//! The pipeline: generate or load a labeled dataset ([`datasets`]), carve a
//! member / non-member / population split, train an audit target with SGD or
//! DP-SGD ([`models`]), run attackers at several access levels ([`attacks`]),
//! turn their scores into ROC curves, AUC and per-record risk scores
//! ([`metrics`]), convert DP mechanism parameters into an epsilon guarantee
//! ([`accountant`]), and assemble everything into a machine-readable report
//! ([`reports`]).
//!
//! All randomness flows through one seeded generator (see [`rng`]), so every
//! result is reproducible bit-for-bit from the seeds in a config.

pub mod accountant;
pub mod attacks;
pub mod datasets;
pub mod error;
pub mod metrics;
pub mod models;
pub mod reports;
pub mod rng;

pub use accountant::{epsilon_of, sweep_tradeoff, EpsilonReport, SweepSpec, TradeoffRow};
pub use attacks::{
    population_loss_attack, run_attacks, shadow_attack, whitebox_attack, AttackRecord,
    AttackSelection, ShadowConfig,
};
pub use datasets::{generate_synthetic, load_csv, make_audit_split, AuditSplit, LabeledDataset};
pub use error::{AuditError, Result};
pub use metrics::{
    auc, compute_roc, membership_advantage, per_class_rocs, risk_scores, risk_scores_with_bins,
    score_histograms, tpr_at_fpr, RiskScore, RocCurve, ScoreHistogram,
};
pub use models::{
    evaluate, generalization_gap, init_mlp, per_example_gradient, per_example_loss, train_dp_sgd,
    train_sgd, DpParams, MlpModel, TrainConfig, TrainHistory,
};
pub use reports::{
    build_report, emit, write_sweep_csv, AttackBlock, MetricsOptions, PrivacyReport, TargetSummary,
};

/// Version string of the library, embedded in report metadata.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
