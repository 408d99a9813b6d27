//! Assembly and emission of the machine-readable audit report: one JSON
//! document with everything, plus plot-ready CSVs (ROC points, per-record
//! risks, score histograms, sweep table). No rendering; any external
//! plotter reproduces the figures from the CSVs.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::accountant::{EpsilonReport, TradeoffRow};
use crate::attacks::{AttackRecord, CANONICAL_ORDER};
use crate::datasets::{AuditSplit, LabeledDataset};
use crate::error::{AuditError, Result};
use crate::metrics::{
    compute_roc, membership_advantage, per_class_rocs, risk_scores_with_bins, score_histograms,
    tpr_at_fpr, RiskScore, RocCurve, ScoreHistogram,
};
use crate::models::{evaluate, generalization_gap, MlpModel};
use crate::rng;

/// Metric knobs shared by every attack block: which low-FPR operating
/// points to tabulate and how many bins the risk and histogram estimators
/// use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsOptions {
    #[serde(default = "default_fpr_targets")]
    pub fpr_targets: Vec<f64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_fpr_targets() -> Vec<f64> {
    vec![0.01, 0.05, 0.1]
}

fn default_bins() -> usize {
    10
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            fpr_targets: default_fpr_targets(),
            bins: default_bins(),
        }
    }
}

/// Report provenance: versions, wall-clock time, and a digest of the
/// configuration that produced the audit. The timestamp is the only field
/// excluded from determinism comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub tool_version: String,
    pub prng_version: String,
    pub timestamp: String,
    pub config_digest: String,
}

/// What was audited: the target's shape, how much data it trained on, and
/// how far it overfits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub architecture: Vec<usize>,
    pub train_size: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub loss_gap: f64,
    pub accuracy_gap: f64,
}

impl TargetSummary {
    /// Measure a trained target against its own audit split: accuracy on
    /// members (train) and non-members (test), and the gaps between them.
    pub fn measure(
        model: &MlpModel,
        dataset: &LabeledDataset,
        split: &AuditSplit,
    ) -> Result<Self> {
        let (train_accuracy, _) = evaluate(model, dataset, &split.member_idx)?;
        let (test_accuracy, _) = evaluate(model, dataset, &split.nonmember_idx)?;
        let (loss_gap, accuracy_gap) =
            generalization_gap(model, dataset, &split.member_idx, &split.nonmember_idx)?;
        Ok(Self {
            architecture: model.layer_sizes().to_vec(),
            train_size: split.member_idx.len(),
            train_accuracy,
            test_accuracy,
            loss_gap,
            accuracy_gap,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// Everything the report says about one attack: raw per-record verdicts,
/// the ROC curve with summary numbers, per-class areas, the score
/// distributions, and per-record risk estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackBlock {
    pub attack_name: String,
    pub records: Vec<AttackRecord>,
    pub roc: RocCurve,
    pub auc: f64,
    pub tpr_at_fpr: Vec<OperatingPoint>,
    pub membership_advantage: f64,
    pub per_class_auc: BTreeMap<usize, f64>,
    /// Classes with no members or no non-members on the audit side, for
    /// which no per-class curve exists.
    pub skipped_classes: Vec<usize>,
    pub histogram: ScoreHistogram,
    pub risks: Vec<RiskScore>,
}

impl AttackBlock {
    /// Compute a full metrics block from one attack's records.
    pub fn from_records(
        records: &[AttackRecord],
        options: &MetricsOptions,
        num_classes: usize,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(AuditError::DegenerateInput("attack emitted no records".into()));
        }
        let attack_name = records[0].attack_name.clone();
        if records.iter().any(|r| r.attack_name != attack_name) {
            return Err(AuditError::InconsistentInputs(
                "attack records carry mixed attack names".into(),
            ));
        }
        let mut records: Vec<AttackRecord> = records.to_vec();
        records.sort_by_key(|r| r.record_id);

        let members: Vec<&AttackRecord> = records.iter().filter(|r| r.is_member).collect();
        let others: Vec<&AttackRecord> = records.iter().filter(|r| !r.is_member).collect();
        let member_scores: Vec<f64> = members.iter().map(|r| r.score).collect();
        let other_scores: Vec<f64> = others.iter().map(|r| r.score).collect();
        let member_labels: Vec<usize> = members.iter().map(|r| r.class_label).collect();
        let other_labels: Vec<usize> = others.iter().map(|r| r.class_label).collect();
        let member_ids: Vec<usize> = members.iter().map(|r| r.record_id).collect();
        let other_ids: Vec<usize> = others.iter().map(|r| r.record_id).collect();

        let roc = compute_roc(&member_scores, &other_scores)?;
        let tpr_points = options
            .fpr_targets
            .iter()
            .map(|&fpr| {
                Ok(OperatingPoint {
                    fpr,
                    tpr: tpr_at_fpr(&roc, fpr)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let advantage = membership_advantage(&roc);

        let class_curves = per_class_rocs(
            &member_scores,
            &member_labels,
            &other_scores,
            &other_labels,
            num_classes,
        )?;
        let mut per_class_auc = BTreeMap::new();
        let mut skipped_classes = Vec::new();
        for (class, curve) in class_curves.into_iter().enumerate() {
            match curve {
                Some(c) => {
                    per_class_auc.insert(class, c.auc);
                }
                None => skipped_classes.push(class),
            }
        }

        let histogram = score_histograms(&member_scores, &other_scores, options.bins)?;
        let risks = risk_scores_with_bins(
            &member_scores,
            &member_ids,
            &other_scores,
            &other_ids,
            options.bins,
        )?;

        let auc = roc.auc;
        Ok(Self {
            attack_name,
            records,
            roc,
            auc,
            tpr_at_fpr: tpr_points,
            membership_advantage: advantage,
            per_class_auc,
            skipped_classes,
            histogram,
            risks,
        })
    }
}

/// The complete audit result. Top-level JSON keys: `meta`, `target`,
/// `attacks`, `epsilon`, `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub meta: ReportMeta,
    pub target: TargetSummary,
    pub attacks: Vec<AttackBlock>,
    pub epsilon: Option<EpsilonReport>,
    pub sweep: Option<Vec<TradeoffRow>>,
}

fn canonical_rank(name: &str) -> Result<usize> {
    CANONICAL_ORDER
        .iter()
        .position(|&n| n == name)
        .ok_or_else(|| AuditError::InvalidArgument(format!("unknown attack name \"{name}\"")))
}

/// Assemble the report: metrics per attack, canonical attack order,
/// record-set consistency across attacks. Deterministic except for the
/// timestamp.
pub fn build_report(
    target: TargetSummary,
    attack_groups: &[Vec<AttackRecord>],
    options: &MetricsOptions,
    epsilon: Option<EpsilonReport>,
    sweep: Option<Vec<TradeoffRow>>,
    config_digest: &str,
) -> Result<PrivacyReport> {
    if attack_groups.is_empty() {
        return Err(AuditError::InvalidArgument("no attack outputs given".into()));
    }
    let num_classes = *target.architecture.last().unwrap();
    let mut blocks = attack_groups
        .iter()
        .map(|group| AttackBlock::from_records(group, options, num_classes))
        .collect::<Result<Vec<_>>>()?;
    blocks.sort_by_key(|b| canonical_rank(&b.attack_name).unwrap_or(usize::MAX));
    for block in &blocks {
        canonical_rank(&block.attack_name)?;
    }
    for pair in blocks.windows(2) {
        if pair[0].attack_name == pair[1].attack_name {
            return Err(AuditError::InconsistentInputs(format!(
                "attack \"{}\" appears twice",
                pair[0].attack_name
            )));
        }
    }

    let reference: BTreeSet<usize> = blocks[0].records.iter().map(|r| r.record_id).collect();
    for block in &blocks[1..] {
        let ids: BTreeSet<usize> = block.records.iter().map(|r| r.record_id).collect();
        if ids != reference {
            return Err(AuditError::InconsistentInputs(format!(
                "attack \"{}\" audited a different record set than \"{}\"",
                block.attack_name, blocks[0].attack_name
            )));
        }
    }

    Ok(PrivacyReport {
        meta: ReportMeta {
            tool_version: crate::TOOL_VERSION.to_string(),
            prng_version: rng::PRNG_VERSION.to_string(),
            timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
            config_digest: config_digest.to_string(),
        },
        target,
        attacks: blocks,
        epsilon,
        sweep,
    })
}

/// 17 significant digits: enough for exact f64 round-trips through text.
fn fmt(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(|e| AuditError::io(&tmp, e))?;
    let dest = dir.join(name);
    fs::rename(&tmp, &dest).map_err(|e| AuditError::io(&dest, e))
}

fn roc_csv(block: &AttackBlock) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for i in 0..block.roc.len() {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt(block.roc.thresholds[i]),
            fmt(block.roc.fpr[i]),
            fmt(block.roc.tpr[i])
        ));
    }
    out
}

fn risks_csv(block: &AttackBlock) -> Result<String> {
    let mut out = String::from("record_id,class,is_member,score,risk\n");
    if block.risks.len() != block.records.len() {
        return Err(AuditError::InconsistentInputs(format!(
            "attack \"{}\": {} risks for {} records",
            block.attack_name,
            block.risks.len(),
            block.records.len()
        )));
    }
    for (risk, record) in block.risks.iter().zip(&block.records) {
        if risk.record_id != record.record_id {
            return Err(AuditError::InconsistentInputs(format!(
                "attack \"{}\": risk list and record list disagree on ids",
                block.attack_name
            )));
        }
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            record.record_id,
            record.class_label,
            record.is_member,
            fmt(risk.score),
            fmt(risk.risk)
        ));
    }
    Ok(out)
}

fn histogram_csv(block: &AttackBlock) -> String {
    let mut out = String::from("bin_lo,bin_hi,member_count,nonmember_count\n");
    let h = &block.histogram;
    for b in 0..h.member_counts.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt(h.bin_edges[b]),
            fmt(h.bin_edges[b + 1]),
            h.member_counts[b],
            h.nonmember_counts[b]
        ));
    }
    out
}

fn sweep_csv(rows: &[TradeoffRow]) -> Result<String> {
    let attack_names: Vec<&str> = CANONICAL_ORDER
        .iter()
        .copied()
        .filter(|name| rows.iter().any(|r| r.attack_auc.contains_key(*name)))
        .collect();
    let mut out = String::from("sigma,epsilon,test_accuracy");
    for name in &attack_names {
        out.push_str(&format!(",auc_{name}"));
    }
    out.push_str(",loss_gap\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{}",
            fmt(row.sigma),
            fmt(row.epsilon),
            fmt(row.test_accuracy)
        ));
        for name in &attack_names {
            let auc = row.attack_auc.get(*name).ok_or_else(|| {
                AuditError::InconsistentInputs(format!(
                    "sweep row sigma={} lacks attack \"{name}\"",
                    row.sigma
                ))
            })?;
            out.push_str(&format!(",{}", fmt(*auc)));
        }
        out.push_str(&format!(",{}\n", fmt(row.loss_gap)));
    }
    Ok(out)
}

/// Write `report.json` and every CSV into `dir` (created if missing),
/// atomically (temp file then rename). Returns the manifest of relative
/// paths in a fixed order: the JSON report, then per-attack ROC, risks and
/// histogram files in attack order, then `sweep.csv` if present.
pub fn emit(report: &PrivacyReport, dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| AuditError::io(dir, e))?;
    let mut manifest = Vec::new();

    let json = serde_json::to_string_pretty(report)?;
    write_atomic(dir, "report.json", &format!("{json}\n"))?;
    manifest.push("report.json".to_string());

    for block in &report.attacks {
        let roc_name = format!("roc_{}.csv", block.attack_name);
        write_atomic(dir, &roc_name, &roc_csv(block))?;
        manifest.push(roc_name);

        let risks_name = format!("risks_{}.csv", block.attack_name);
        write_atomic(dir, &risks_name, &risks_csv(block)?)?;
        manifest.push(risks_name);

        let histogram_name = format!("histogram_{}.csv", block.attack_name);
        write_atomic(dir, &histogram_name, &histogram_csv(block))?;
        manifest.push(histogram_name);
    }

    if let Some(rows) = &report.sweep {
        write_atomic(dir, "sweep.csv", &sweep_csv(rows)?)?;
        manifest.push("sweep.csv".to_string());
    }
    Ok(manifest)
}

/// Write just the sweep table as `sweep.csv` into `dir` (created if
/// missing). Returns the file name.
pub fn write_sweep_csv(rows: &[TradeoffRow], dir: impl AsRef<Path>) -> Result<String> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| AuditError::io(dir, e))?;
    write_atomic(dir, "sweep.csv", &sweep_csv(rows)?)?;
    Ok("sweep.csv".to_string())
}
