//! Attack-quality metrics: ROC curves from attacker scores, areas and
//! low-FPR operating points, membership advantage, per-class breakdowns,
//! and per-record risk scores.
//!
//! Scores follow the convention "higher means more member-like" everywhere;
//! curves are therefore invariant under strictly increasing transforms of
//! the scores, which the property tests exercise.

use crate::error::{AuditError, Result};

/// A full ROC curve. `thresholds`, `fpr` and `tpr` are parallel arrays;
/// entry `i` is the operating point of the rule "score >= thresholds[i]
/// means member". The first threshold is `+inf` (nobody accused, point
/// (0, 0)); the last is the minimum score (everybody accused, point (1, 1)).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RocCurve {
    /// The leading `+inf` entry is written as the string `"inf"` in JSON,
    /// which has no infinity literal.
    #[serde(with = "inf_aware_vec")]
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

mod inf_aware_vec {
    use serde::ser::SerializeSeq;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for &x in v {
            if x == f64::INFINITY {
                seq.serialize_element("inf")?;
            } else {
                seq.serialize_element(&x)?;
            }
        }
        seq.end()
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum NumberOrInf {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        let raw = Vec::<NumberOrInf>::deserialize(d)?;
        raw.into_iter()
            .map(|e| match e {
                NumberOrInf::Number(x) => Ok(x),
                NumberOrInf::Text(t) if t == "inf" => Ok(f64::INFINITY),
                NumberOrInf::Text(t) => Err(de::Error::custom(format!(
                    "threshold must be a number or \"inf\", got \"{t}\""
                ))),
            })
            .collect()
    }
}

impl RocCurve {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }
}

fn check_scores(scores: &[f64], side: &str) -> Result<()> {
    if scores.is_empty() {
        return Err(AuditError::DegenerateInput(format!("no {side} scores")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(AuditError::DegenerateInput(format!(
            "non-finite {side} score"
        )));
    }
    Ok(())
}

fn trapezoid(fpr: &[f64], tpr: &[f64]) -> f64 {
    let mut area = 0.0;
    for i in 1..fpr.len() {
        area += (fpr[i] - fpr[i - 1]) * (tpr[i] + tpr[i - 1]) / 2.0;
    }
    area
}

/// Sweep a decision threshold over every distinct score and record the
/// (FPR, TPR) operating points. Both score sets must be non-empty and
/// finite.
pub fn compute_roc(member_scores: &[f64], nonmember_scores: &[f64]) -> Result<RocCurve> {
    check_scores(member_scores, "member")?;
    check_scores(nonmember_scores, "non-member")?;

    let mut distinct: Vec<f64> = member_scores
        .iter()
        .chain(nonmember_scores)
        .copied()
        .collect();
    distinct.sort_by(|a, b| b.partial_cmp(a).unwrap());
    distinct.dedup();

    let n_members = member_scores.len() as f64;
    let n_nonmembers = nonmember_scores.len() as f64;
    let mut thresholds = Vec::with_capacity(distinct.len() + 1);
    let mut fpr = Vec::with_capacity(distinct.len() + 1);
    let mut tpr = Vec::with_capacity(distinct.len() + 1);
    thresholds.push(f64::INFINITY);
    fpr.push(0.0);
    tpr.push(0.0);
    for &t in &distinct {
        let tp = member_scores.iter().filter(|&&s| s >= t).count() as f64;
        let fp = nonmember_scores.iter().filter(|&&s| s >= t).count() as f64;
        thresholds.push(t);
        fpr.push(fp / n_nonmembers);
        tpr.push(tp / n_members);
    }
    let auc = trapezoid(&fpr, &tpr);
    Ok(RocCurve {
        thresholds,
        fpr,
        tpr,
        auc,
    })
}

/// Area under a curve by the trapezoid rule. Matches the tie-adjusted
/// pair-counting estimate exactly for curves built by [`compute_roc`].
pub fn auc(curve: &RocCurve) -> f64 {
    trapezoid(&curve.fpr, &curve.tpr)
}

/// Highest TPR among operating points whose FPR does not exceed the target.
/// No interpolation: only points on the curve count. The (0, 0) point makes
/// the maximum well defined for every target in [0, 1].
pub fn tpr_at_fpr(curve: &RocCurve, target_fpr: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&target_fpr) {
        return Err(AuditError::InvalidArgument(format!(
            "target FPR must be in [0, 1], got {target_fpr}"
        )));
    }
    Ok(curve
        .fpr
        .iter()
        .zip(&curve.tpr)
        .filter(|(&f, _)| f <= target_fpr)
        .map(|(_, &t)| t)
        .fold(0.0, f64::max))
}

/// `max(TPR - FPR)` over the curve: how much better than chance the best
/// single threshold distinguishes members from non-members.
pub fn membership_advantage(curve: &RocCurve) -> f64 {
    curve
        .fpr
        .iter()
        .zip(&curve.tpr)
        .map(|(f, t)| t - f)
        .fold(0.0, f64::max)
}

/// ROC curves restricted to records of each true class. Classes missing
/// members or non-members on the audit side yield `None` rather than a
/// degenerate curve.
pub fn per_class_rocs(
    member_scores: &[f64],
    member_labels: &[usize],
    nonmember_scores: &[f64],
    nonmember_labels: &[usize],
    num_classes: usize,
) -> Result<Vec<Option<RocCurve>>> {
    if member_scores.len() != member_labels.len()
        || nonmember_scores.len() != nonmember_labels.len()
    {
        return Err(AuditError::ShapeMismatch(
            "score and label lists differ in length".into(),
        ));
    }
    if let Some(&l) = member_labels
        .iter()
        .chain(nonmember_labels)
        .find(|&&l| l >= num_classes)
    {
        return Err(AuditError::InvalidLabel(format!(
            "label {l} out of range for {num_classes} classes"
        )));
    }
    let mut curves = Vec::with_capacity(num_classes);
    for c in 0..num_classes {
        let m: Vec<f64> = member_scores
            .iter()
            .zip(member_labels)
            .filter(|(_, &l)| l == c)
            .map(|(&s, _)| s)
            .collect();
        let n: Vec<f64> = nonmember_scores
            .iter()
            .zip(nonmember_labels)
            .filter(|(_, &l)| l == c)
            .map(|(&s, _)| s)
            .collect();
        if m.is_empty() || n.is_empty() {
            curves.push(None);
        } else {
            curves.push(Some(compute_roc(&m, &n)?));
        }
    }
    Ok(curves)
}

/// Estimated probability that a record was a member, given its attack
/// score. One entry per audited record.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RiskScore {
    pub record_id: usize,
    pub score: f64,
    pub risk: f64,
}

pub const DEFAULT_RISK_BINS: usize = 10;

/// [`risk_scores_with_bins`] with [`DEFAULT_RISK_BINS`] equal-width bins.
pub fn risk_scores(
    member_scores: &[f64],
    member_ids: &[usize],
    nonmember_scores: &[f64],
    nonmember_ids: &[usize],
) -> Result<Vec<RiskScore>> {
    risk_scores_with_bins(
        member_scores,
        member_ids,
        nonmember_scores,
        nonmember_ids,
        DEFAULT_RISK_BINS,
    )
}

/// Per-record membership risk by binned posterior estimation: scores are
/// placed into equal-width bins over the observed range and each record is
/// assigned `(m_b + 1) / (m_b + n_b + 2)`, the add-one smoothed fraction of
/// members in its bin. When every score is identical there is a single bin,
/// so a balanced audit yields risk 0.5 for all records. Output is sorted by
/// record id.
pub fn risk_scores_with_bins(
    member_scores: &[f64],
    member_ids: &[usize],
    nonmember_scores: &[f64],
    nonmember_ids: &[usize],
    bins: usize,
) -> Result<Vec<RiskScore>> {
    if member_scores.len() != member_ids.len() || nonmember_scores.len() != nonmember_ids.len() {
        return Err(AuditError::ShapeMismatch(
            "score and id lists differ in length".into(),
        ));
    }
    if bins == 0 {
        return Err(AuditError::InvalidArgument("bins must be positive".into()));
    }
    check_scores(member_scores, "member")?;
    check_scores(nonmember_scores, "non-member")?;

    let all = member_scores.iter().chain(nonmember_scores);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let bin_of = |s: f64| -> usize {
        if width > 0.0 {
            (((s - lo) / width) as usize).min(bins - 1)
        } else {
            0
        }
    };

    let mut member_count = vec![0usize; bins];
    let mut nonmember_count = vec![0usize; bins];
    for &s in member_scores {
        member_count[bin_of(s)] += 1;
    }
    for &s in nonmember_scores {
        nonmember_count[bin_of(s)] += 1;
    }

    let mut out: Vec<RiskScore> = member_scores
        .iter()
        .zip(member_ids)
        .chain(nonmember_scores.iter().zip(nonmember_ids))
        .map(|(&score, &record_id)| {
            let b = bin_of(score);
            let m = member_count[b] as f64;
            let n = nonmember_count[b] as f64;
            RiskScore {
                record_id,
                score,
                risk: (m + 1.0) / (m + n + 2.0),
            }
        })
        .collect();
    out.sort_by_key(|r| r.record_id);
    Ok(out)
}

/// Member and non-member score counts over shared equal-width bins, for
/// side-by-side distribution plots.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScoreHistogram {
    /// `bins + 1` edges; bin `b` covers `[edges[b], edges[b+1])`, with the
    /// last bin closed on the right.
    pub bin_edges: Vec<f64>,
    pub member_counts: Vec<usize>,
    pub nonmember_counts: Vec<usize>,
}

pub fn score_histograms(
    member_scores: &[f64],
    nonmember_scores: &[f64],
    bins: usize,
) -> Result<ScoreHistogram> {
    if bins == 0 {
        return Err(AuditError::InvalidArgument("bins must be positive".into()));
    }
    check_scores(member_scores, "member")?;
    check_scores(nonmember_scores, "non-member")?;

    let all = member_scores.iter().chain(nonmember_scores);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let bin_edges: Vec<f64> = (0..=bins).map(|b| lo + width * b as f64).collect();
    let bin_of = |s: f64| -> usize {
        if width > 0.0 {
            (((s - lo) / width) as usize).min(bins - 1)
        } else {
            0
        }
    };
    let mut member_counts = vec![0usize; bins];
    let mut nonmember_counts = vec![0usize; bins];
    for &s in member_scores {
        member_counts[bin_of(s)] += 1;
    }
    for &s in nonmember_scores {
        nonmember_counts[bin_of(s)] += 1;
    }
    Ok(ScoreHistogram {
        bin_edges,
        member_counts,
        nonmember_counts,
    })
}
