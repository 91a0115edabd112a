//! Metrics, dataset splitting, cross-validation and stump training.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{
    decide, first_order_filter, FilterOutcome, Ml1Model, ModelKind, ModelParams,
};
use crate::features::FeatureExtractor;
use crate::ingest::synthesize_nonsiblings;
use crate::model::{CandidatePair, Label, Verdict};
use crate::sim::derive_rng;
use crate::Scalar;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn record(&mut self, label: Label, predicted_sibling: bool) {
        match (label, predicted_sibling) {
            (Label::Sibling, true) => self.true_pos += 1,
            (Label::Sibling, false) => self.false_neg += 1,
            (Label::NonSibling, true) => self.false_pos += 1,
            (Label::NonSibling, false) => self.true_neg += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.true_pos += other.true_pos;
        self.false_pos += other.false_pos;
        self.true_neg += other.true_neg;
        self.false_neg += other.false_neg;
    }
}

/// `tp / (tp + fp)`; undefined without positive predictions.
pub fn precision(c: &ConfusionCounts) -> Option<Scalar> {
    let denom = c.true_pos + c.false_pos;
    if denom == 0 {
        None
    } else {
        Some(c.true_pos as Scalar / denom as Scalar)
    }
}

/// Matthews correlation coefficient. Any zero factor in the denominator
/// yields 0 (the coefficient is undefined there; zero is the standard
/// reporting convention).
pub fn mcc(c: &ConfusionCounts) -> Scalar {
    let tp = c.true_pos as Scalar;
    let fp = c.false_pos as Scalar;
    let tn = c.true_neg as Scalar;
    let fn_ = c.false_neg as Scalar;
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / denom.sqrt()
}

/// Unknown/error verdicts per model, kept out of the binary counts so they
/// can be reported separately.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictTally {
    pub unknown: u64,
    pub errors: u64,
}

/// Scores verdicts against ground truth. Unknown and error verdicts map to
/// a non-sibling call for the binary counts and are tallied on the side.
pub fn score<'a>(
    outcomes: impl IntoIterator<Item = (Label, &'a Verdict)>,
) -> (ConfusionCounts, VerdictTally) {
    let mut counts = ConfusionCounts::default();
    let mut tally = VerdictTally::default();
    for (label, verdict) in outcomes {
        match verdict {
            Verdict::Unknown => tally.unknown += 1,
            Verdict::Error => tally.errors += 1,
            _ => {}
        }
        counts.record(label, matches!(verdict, Verdict::Sibling));
    }
    (counts, tally)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("k={k} invalid for {n} pairs (need 2 <= k <= n)")]
    InvalidK { k: usize, n: usize },
    #[error("stump training needs both classes after the first-order filter")]
    SingleClass,
    #[error("evaluation needs labeled pairs")]
    Unlabeled,
}

/// Index sets of one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitWarning {
    /// Fewer members than folds; some folds see none of this group.
    GroupTooSmall { group: String, size: usize },
}

impl std::fmt::Display for SplitWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitWarning::GroupTooSmall { group, size } => {
                write!(f, "group '{group}' has only {size} members for the requested folds")
            }
        }
    }
}

/// Splits pairs into `k` folds, proportionally per group. Groups are
/// shuffled independently (seeded) and dealt round-robin, so every pair
/// lands in exactly one test fold.
pub fn stratified_kfold(
    pairs: &[CandidatePair],
    k: usize,
    seed: u64,
) -> Result<(Vec<Fold>, Vec<SplitWarning>), EvalError> {
    if k < 2 || k > pairs.len() {
        return Err(EvalError::InvalidK { k, n: pairs.len() });
    }
    let mut groups: std::collections::BTreeMap<String, Vec<usize>> = Default::default();
    for (idx, pair) in pairs.iter().enumerate() {
        groups.entry(pair.group.clone().unwrap_or_default()).or_default().push(idx);
    }
    let mut warnings = Vec::new();
    let mut test_sets: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (group_idx, (name, mut members)) in groups.into_iter().enumerate() {
        if members.len() < k {
            warnings.push(SplitWarning::GroupTooSmall { group: name, size: members.len() });
        }
        let mut rng = derive_rng(seed, 0x5EED_0000 + group_idx as u64);
        // Fisher-Yates
        for i in (1..members.len()).rev() {
            let j = (rand_core::RngCore::next_u64(&mut rng) % (i as u64 + 1)) as usize;
            members.swap(i, j);
        }
        for (pos, idx) in members.into_iter().enumerate() {
            test_sets[pos % k].push(idx);
        }
    }
    let folds = test_sets
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let train = (0..pairs.len()).filter(|i| test.binary_search(i).is_err()).collect();
            Fold { train, test }
        })
        .collect();
    Ok((folds, warnings))
}

/// A pair reduced to what stump training needs: the filter outcome and,
/// when the filter passed, the raw-timestamp delta.
#[derive(Debug, Clone, Copy)]
pub struct StumpSample {
    pub label: Label,
    pub delta: Option<Scalar>,
}

/// Learns the `delta_tcpraw` threshold maximizing MCC over candidate
/// thresholds (midpoints of the sorted deltas, plus one candidate outside
/// each end). Filter-decided pairs enter as fixed counts. Ties break toward
/// the larger threshold.
pub fn train_stump(
    samples: &[(Scalar, Label)],
    base: ConfusionCounts,
) -> Result<Ml1Model, EvalError> {
    let sibling_total = samples.iter().filter(|(_, l)| *l == Label::Sibling).count() as u64;
    let nonsib_total = samples.len() as u64 - sibling_total;
    if sibling_total == 0 || nonsib_total == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut sorted: Vec<(Scalar, Label)> = samples.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("NaN delta"));

    let mut candidates: Vec<Scalar> = Vec::new();
    if sorted[0].0 > 0.0 {
        candidates.push(sorted[0].0 / 2.0);
    }
    for w in sorted.windows(2) {
        if w[1].0 > w[0].0 {
            candidates.push((w[0].0 + w[1].0) / 2.0);
        }
    }
    candidates.push(sorted[sorted.len() - 1].0 + 1.0);

    let counts_at = |threshold: Scalar| {
        let mut c = base;
        for &(delta, label) in &sorted {
            c.record(label, delta <= threshold);
        }
        c
    };
    let mut best_threshold = candidates[0];
    let mut best_mcc = Scalar::NEG_INFINITY;
    for &candidate in &candidates {
        let m = mcc(&counts_at(candidate));
        if m >= best_mcc {
            best_mcc = m;
            best_threshold = candidate;
        }
    }
    Ok(Ml1Model { tcpraw_threshold: best_threshold })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Test,
}

/// Metrics of one model on one fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub phase: Phase,
    pub counts: ConfusionCounts,
    pub precision: Option<Scalar>,
    pub mcc: Scalar,
    pub tally: VerdictTally,
    /// Learned threshold, for the trained model.
    pub threshold: Option<Scalar>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub rows: Vec<FoldMetrics>,
    /// Arithmetic means over the test folds (precision over folds where it
    /// is defined).
    pub mean_test_precision: Option<Scalar>,
    pub mean_test_mcc: Scalar,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub seed: u64,
    pub sibling_count: usize,
    pub models: Vec<ModelReport>,
    pub warnings: Vec<String>,
}

fn fold_row(
    fold: usize,
    phase: Phase,
    labeled: &[(Label, Verdict)],
    threshold: Option<Scalar>,
) -> FoldMetrics {
    let (counts, tally) = score(labeled.iter().map(|(l, v)| (*l, v)));
    FoldMetrics { fold, phase, counts, precision: precision(&counts), mcc: mcc(&counts), tally, threshold }
}

fn mean(values: impl Iterator<Item = Scalar>) -> Option<Scalar> {
    let v: Vec<Scalar> = values.collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<Scalar>() / v.len() as Scalar)
    }
}

/// Cross-validated evaluation of all three models over a labeled sibling
/// set. Non-siblings are synthesized per split, after splitting.
pub fn evaluate(
    siblings: &[CandidatePair],
    k: usize,
    seed: u64,
    params: &ModelParams,
) -> Result<EvalReport, EvalError> {
    if siblings.iter().any(|p| p.label.is_none()) {
        return Err(EvalError::Unlabeled);
    }
    let (folds, warnings) = stratified_kfold(siblings, k, seed)?;
    let extractor = FeatureExtractor::new(siblings);

    let mut ht_rows = Vec::new();
    let mut bev_rows = Vec::new();
    let mut ml1_rows = Vec::new();

    for (fold_idx, fold) in folds.iter().enumerate() {
        let train: Vec<CandidatePair> =
            fold.train.iter().map(|&i| siblings[i].clone()).collect();
        let test: Vec<CandidatePair> = fold.test.iter().map(|&i| siblings[i].clone()).collect();
        let train_all = with_nonsiblings(&train);
        let test_all = with_nonsiblings(&test);

        // train the stump on filter outcomes + deltas of the training pairs
        let shallow: Vec<(Label, FilterOutcome, Option<Scalar>)> = train_all
            .par_iter()
            .map(|pair| {
                let fv = extractor.features_shallow(pair);
                (pair.label.unwrap(), first_order_filter(&fv), fv.delta_tcpraw)
            })
            .collect();
        let mut base = ConfusionCounts::default();
        let mut passed: Vec<(Scalar, Label)> = Vec::new();
        for (label, outcome, delta) in &shallow {
            match outcome {
                FilterOutcome::Decided(_) => base.record(*label, false),
                FilterOutcome::Pass => {
                    passed.push((delta.expect("filter pass implies delta"), *label))
                }
            }
        }
        let learned = train_stump(&passed, base)?;
        let fold_params = ModelParams { ml1: learned, ..*params };

        // ML1 train metrics from the shallow pass
        let ml1_train: Vec<(Label, Verdict)> = shallow
            .iter()
            .map(|(label, outcome, delta)| {
                let verdict = match outcome {
                    FilterOutcome::Decided(d) => d.verdict,
                    FilterOutcome::Pass => {
                        if delta.expect("pass implies delta") > learned.tcpraw_threshold {
                            Verdict::NonSibling
                        } else {
                            Verdict::Sibling
                        }
                    }
                };
                (*label, verdict)
            })
            .collect();
        ml1_rows.push(fold_row(
            fold_idx,
            Phase::Train,
            &ml1_train,
            Some(learned.tcpraw_threshold),
        ));

        // test metrics for every model on the full feature vectors
        let test_verdicts: Vec<(Label, [Verdict; 3])> = test_all
            .par_iter()
            .map(|pair| {
                let fv = extractor.features(pair);
                (
                    pair.label.unwrap(),
                    [
                        decide(ModelKind::Ht, &fv, &fold_params).verdict,
                        decide(ModelKind::Beverly, &fv, &fold_params).verdict,
                        decide(ModelKind::Ml1, &fv, &fold_params).verdict,
                    ],
                )
            })
            .collect();
        let column = |c: usize| -> Vec<(Label, Verdict)> {
            test_verdicts.iter().map(|(l, v)| (*l, v[c])).collect()
        };
        ht_rows.push(fold_row(fold_idx, Phase::Test, &column(0), None));
        bev_rows.push(fold_row(fold_idx, Phase::Test, &column(1), None));
        ml1_rows.push(fold_row(
            fold_idx,
            Phase::Test,
            &column(2),
            Some(learned.tcpraw_threshold),
        ));
    }

    let report_for = |model: ModelKind, rows: Vec<FoldMetrics>| {
        let tests = rows.iter().filter(|r| r.phase == Phase::Test);
        let mean_test_precision = mean(tests.clone().filter_map(|r| r.precision));
        let mean_test_mcc = mean(tests.map(|r| r.mcc)).unwrap_or(0.0);
        ModelReport { model: model.name().to_string(), rows, mean_test_precision, mean_test_mcc }
    };
    Ok(EvalReport {
        k,
        seed,
        sibling_count: siblings.len(),
        models: vec![
            report_for(ModelKind::Ht, ht_rows),
            report_for(ModelKind::Beverly, bev_rows),
            report_for(ModelKind::Ml1, ml1_rows),
        ],
        warnings: warnings.iter().map(|w| w.to_string()).collect(),
    })
}

/// The evaluation universe of a sibling set: the siblings plus all
/// synthesized non-siblings.
pub fn with_nonsiblings(siblings: &[CandidatePair]) -> Vec<CandidatePair> {
    let mut all = siblings.to_vec();
    all.extend(synthesize_nonsiblings(siblings));
    all
}
