//! The three decision models: first-order filters plus the hand-tuned
//! algorithm, the single-threshold raw-timestamp model, and a constant-skew
//! angle baseline.
//!
//! All classifiers are pure functions of a feature vector and their
//! parameters.

use serde::{Deserialize, Serialize};

use crate::features::{FeatureVector, HZ_R2_GATE};
use crate::model::{Decision, DecisionReason, Verdict};
use crate::Scalar;

/// Thresholds of the hand-tuned decision algorithm.
///
/// Units: `z1` seconds; `z4` ms/s; `z5`, `z6`, `z7`, `y1`, `y2`, `y3`
/// milliseconds; `z2`, `z3` are R² quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HtThresholds {
    pub z1: Scalar,
    pub z2: Scalar,
    pub z3: Scalar,
    pub z4: Scalar,
    pub z5: Scalar,
    pub z6: Scalar,
    pub z7: Scalar,
    pub y1: Scalar,
    pub y2: Scalar,
    pub y3: Scalar,
}

impl Default for HtThresholds {
    fn default() -> Self {
        Self {
            z1: 1.0,
            z2: 0.81,
            z3: 0.2,
            z4: 0.00005,
            z5: 1.5,
            z6: 0.47,
            z7: 14.0,
            y1: 2.3,
            y2: 0.6,
            y3: 4.0,
        }
    }
}

/// The learned single-threshold model on `delta_tcpraw`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ml1Model {
    /// Seconds; strictly above is a non-sibling.
    pub tcpraw_threshold: Scalar,
}

impl Default for Ml1Model {
    fn default() -> Self {
        Self { tcpraw_threshold: 0.2557 }
    }
}

/// Parameters of the constant-skew baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeverlyParams {
    /// Maximum |atan(α4) − atan(α6)| (radians) for a sibling call.
    pub angle_tolerance_rad: Scalar,
}

impl Default for BeverlyParams {
    fn default() -> Self {
        Self { angle_tolerance_rad: 1e-4 }
    }
}

/// Full model parameter set; deserializable from a config file so every
/// threshold can be retuned without a rebuild.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub ht: HtThresholds,
    pub ml1: Ml1Model,
    pub beverly: BeverlyParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ht,
    Ml1,
    Beverly,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Ht, ModelKind::Beverly, ModelKind::Ml1];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Ht => "ht",
            ModelKind::Ml1 => "ml1",
            ModelKind::Beverly => "bev",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ht" => Ok(ModelKind::Ht),
            "ml1" => Ok(ModelKind::Ml1),
            "bev" | "beverly" => Ok(ModelKind::Beverly),
            other => Err(format!("unknown model '{other}' (expected ht, ml1 or bev)")),
        }
    }
}

/// Outcome of the shared sanity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterOutcome {
    Decided(Decision),
    Pass,
}

/// First-order filters applied before any model: differing options, failed
/// or sub-gate frequency fits, differing frequencies, sub-1Hz clocks.
pub fn first_order_filter(fv: &FeatureVector) -> FilterOutcome {
    use FilterOutcome::*;
    if fv.opts_diff {
        return Decided(Decision::non_sibling(DecisionReason::OptionsDiffer));
    }
    let hz_failed = !fv.status.hz4.is_computed()
        || !fv.status.hz6.is_computed()
        || fv.r2_hz4.is_none_or(|r| r < HZ_R2_GATE)
        || fv.r2_hz6.is_none_or(|r| r < HZ_R2_GATE);
    if hz_failed {
        return Decided(Decision::non_sibling(DecisionReason::HzFitFailed));
    }
    let (Some(hz4), Some(hz6)) = (fv.hz4, fv.hz6) else {
        return Decided(Decision::non_sibling(DecisionReason::HzFitFailed));
    };
    if hz4 != hz6 {
        return Decided(Decision::non_sibling(DecisionReason::HzDiffer));
    }
    if hz4 < 1 || hz6 < 1 {
        return Decided(Decision::non_sibling(DecisionReason::HzTooSmall));
    }
    Pass
}

fn sign(v: Scalar) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

macro_rules! require {
    ($opt:expr) => {
        match $opt {
            Some(v) => v,
            None => return Decision::error(DecisionReason::MissingFeature),
        }
    };
}

/// The hand-tuned decision algorithm (assumes the first-order filter
/// passed): raw-delta cut, then linear testing on the robust skews, then
/// nonlinear testing on ranges and the spline gap.
pub fn classify_ht(fv: &FeatureVector, th: &HtThresholds) -> Decision {
    let delta = require!(fv.delta_tcpraw);
    if delta > th.z1 {
        return Decision::non_sibling(DecisionReason::RawTsDelta);
    }

    let r2_skew4 = require!(fv.r2_skew4);
    let r2_skew6 = require!(fv.r2_skew6);
    let linear4 = r2_skew4 >= th.z2;
    let linear6 = r2_skew6 >= th.z2;
    if linear4 && linear6 {
        let alpha4 = require!(fv.alpha4);
        let alpha6 = require!(fv.alpha6);
        if sign(alpha4) != sign(alpha6) {
            return Decision::non_sibling(DecisionReason::LinearSkew);
        }
        if require!(fv.alpha_diff).abs() <= th.z4 {
            return Decision::sibling(DecisionReason::LinearSkew);
        }
    } else if linear4 != linear6 {
        if require!(fv.r2_skew_diff).abs() >= th.z3 {
            return Decision::non_sibling(DecisionReason::LinearSkew);
        }
    }

    let rng4 = require!(fv.rng4);
    let rng6 = require!(fv.rng6);
    if rng4 <= th.z5 && rng6 <= th.z5 {
        return Decision::unknown(DecisionReason::GuardInterval);
    }
    if (rng4 >= th.z5) != (rng6 >= th.z5) {
        if require!(fv.rng_diff) >= th.z6 {
            return Decision::non_sibling(DecisionReason::DynamicRange);
        }
    }
    if rng4 >= th.z7 && rng6 >= th.z7 {
        return if require!(fv.spl_diff) <= th.y1 {
            Decision::sibling(DecisionReason::SplineArea)
        } else {
            Decision::non_sibling(DecisionReason::SplineArea)
        };
    }
    let spl_diff = require!(fv.spl_diff);
    if spl_diff <= th.y2 {
        return Decision::sibling(DecisionReason::SplineArea);
    }
    if spl_diff > th.y3 {
        return Decision::non_sibling(DecisionReason::SplineArea);
    }
    Decision::unknown(DecisionReason::GuardInterval)
}

/// The learned model: strictly above the threshold is a non-sibling.
/// Assumes the first-order filter passed.
pub fn classify_ml1(fv: &FeatureVector, model: &Ml1Model) -> Decision {
    let delta = require!(fv.delta_tcpraw);
    if delta > model.tcpraw_threshold {
        Decision::non_sibling(DecisionReason::RawTsDelta)
    } else {
        Decision::sibling(DecisionReason::RawTsDelta)
    }
}

/// Constant-skew baseline: (1) options must match, (2) both sides must show
/// monotone clock behavior (frequency fit at the R² gate), (3) the two skew
/// angles must agree within a fixed tolerance.
pub fn classify_beverly(fv: &FeatureVector, params: &BeverlyParams) -> Decision {
    if fv.opts_diff {
        return Decision::non_sibling(DecisionReason::OptionsDiffer);
    }
    let behaved = fv.status.hz4.is_computed()
        && fv.status.hz6.is_computed()
        && fv.r2_hz4.is_some_and(|r| r >= HZ_R2_GATE)
        && fv.r2_hz6.is_some_and(|r| r >= HZ_R2_GATE);
    if !behaved {
        return Decision::non_sibling(DecisionReason::HzFitFailed);
    }
    let alpha4 = require!(fv.alpha4);
    let alpha6 = require!(fv.alpha6);
    if (alpha4.atan() - alpha6.atan()).abs() <= params.angle_tolerance_rad {
        Decision::sibling(DecisionReason::SkewAngle)
    } else {
        Decision::non_sibling(DecisionReason::SkewAngle)
    }
}

/// Runs one model end to end, applying the first-order filter where the
/// model is defined to sit behind it.
pub fn decide(model: ModelKind, fv: &FeatureVector, params: &ModelParams) -> Decision {
    match model {
        ModelKind::Ht => match first_order_filter(fv) {
            FilterOutcome::Decided(d) => d,
            FilterOutcome::Pass => classify_ht(fv, &params.ht),
        },
        ModelKind::Ml1 => match first_order_filter(fv) {
            FilterOutcome::Decided(d) => d,
            FilterOutcome::Pass => classify_ml1(fv, &params.ml1),
        },
        // the baseline carries its own (smaller) filter stages
        ModelKind::Beverly => classify_beverly(fv, &params.beverly),
    }
}

/// Binary mapping used when scoring against ground truth: unknown and
/// error verdicts count as non-sibling calls.
pub fn verdict_as_binary_sibling(verdict: Verdict) -> bool {
    matches!(verdict, Verdict::Sibling)
}
