//! Per-pair clock features: frequency estimation, raw-timestamp delta,
//! offset arrays, robust skew, trimmed dynamic range and spline gap.
//!
//! Computation order follows the dependency chain: a side whose frequency
//! fit fails (or whose series is erratic) has all downstream features
//! skipped, and pair-level features are only formed when both sides carry
//! the same rounded frequency. Failures never abort extraction; they are
//! recorded per feature in the status flags.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::math::{self, CubicSpline, SplineError};
use crate::model::{options_diff, CandidatePair, IpFamily, OptionsFingerprint, TimestampSeries};
use crate::Scalar;

/// Minimum R² of the frequency regression for a usable clock.
pub const HZ_R2_GATE: Scalar = 0.9;
/// Knot count of the offset-curve approximation.
pub const SPLINE_KNOTS: usize = 13;
/// Grid resolution for comparing two fitted offset curves.
pub const SPLINE_GRID: usize = 1000;
/// Fraction pruned off each tail before taking the offset spread.
pub const RANGE_TRIM: Scalar = 0.025;
/// More wraps than this in one measurement window marks a series erratic
/// (a legitimate 1000 Hz clock wraps once per ~49.7 days).
pub const MAX_WRAPS: usize = 3;
/// Below this range difference (ms) the scaled spline gap is undefined.
pub const RNG_DIFF_EPSILON: Scalar = 1e-6;

const TWO_32: i64 = 1 << 32;
const HALF_RANGE: i64 = 1 << 31;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureError {
    #[error("too few samples: got {got}, need {need}")]
    TooFewSamples { got: usize, need: usize },
    #[error("receive times are degenerate")]
    DegenerateX,
    #[error("offset arrays share no x range")]
    NoOverlap,
    #[error("spline fit failed: {0}")]
    SplineFit(SplineError),
}

/// Why a feature could not be computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFailure {
    TooFewSamples,
    /// Too many wraps; timestamps do not behave like a monotone clock.
    Erratic,
    DegenerateX,
    NoOverlap,
    FitFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureStatus {
    Computed,
    Failed(FeatureFailure),
    Skipped,
}

impl FeatureStatus {
    pub fn is_computed(&self) -> bool {
        matches!(self, FeatureStatus::Computed)
    }

    fn label(&self) -> String {
        match self {
            FeatureStatus::Computed => "computed".into(),
            FeatureStatus::Skipped => "skipped".into(),
            FeatureStatus::Failed(f) => format!(
                "failed:{}",
                match f {
                    FeatureFailure::TooFewSamples => "too_few_samples",
                    FeatureFailure::Erratic => "erratic",
                    FeatureFailure::DegenerateX => "degenerate_x",
                    FeatureFailure::NoOverlap => "no_overlap",
                    FeatureFailure::FitFailed => "fit_failed",
                }
            ),
        }
    }
}

impl From<FeatureError> for FeatureFailure {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::TooFewSamples { .. } => FeatureFailure::TooFewSamples,
            FeatureError::DegenerateX => FeatureFailure::DegenerateX,
            FeatureError::NoOverlap => FeatureFailure::NoOverlap,
            FeatureError::SplineFit(_) => FeatureFailure::FitFailed,
        }
    }
}

/// Relative receive times and wrap-corrected relative ticks of one series.
#[derive(Debug, Clone)]
pub struct UnwrappedSeries {
    /// Seconds since the first packet.
    pub x: Vec<Scalar>,
    /// Ticks since the first packet, wrap-corrected.
    pub v: Vec<Scalar>,
    pub wrap_count: usize,
    /// More than [`MAX_WRAPS`] wraps observed.
    pub erratic: bool,
    pub first_tsval: u32,
    pub first_recv: Scalar,
}

/// Computes `x_i = t_i − t_1` and `v_i = T_i − T_1`, adding 2³² at each
/// wrap. A descent counts as a wrap only when it exceeds half the counter
/// range; smaller descents are clock steps (ntpd corrections, leap-second
/// adjustments) and pass through so the offset array can show them.
pub fn unwrap_and_relativize(series: &TimestampSeries) -> Result<UnwrappedSeries, FeatureError> {
    let samples = series.samples();
    if samples.len() < 2 {
        return Err(FeatureError::TooFewSamples { got: samples.len(), need: 2 });
    }
    let first = samples[0];
    let mut x = Vec::with_capacity(samples.len());
    let mut v = Vec::with_capacity(samples.len());
    let mut correction: i64 = 0;
    let mut wrap_count = 0usize;
    let mut prev = first.tsval as i64;
    let base = first.tsval as i64;
    for sample in samples {
        let raw = sample.tsval as i64;
        if prev - raw > HALF_RANGE {
            correction += TWO_32;
            wrap_count += 1;
        }
        prev = raw;
        x.push(sample.recv_time - first.recv_time);
        v.push((raw + correction - base) as Scalar);
    }
    Ok(UnwrappedSeries {
        x,
        v,
        wrap_count,
        erratic: wrap_count > MAX_WRAPS,
        first_tsval: first.tsval,
        first_recv: first.recv_time,
    })
}

/// Frequency estimate from the `[x, v]` regression.
#[derive(Debug, Clone, Copy)]
pub struct HzEstimate {
    /// Raw regression slope in ticks per second.
    pub raw_slope: Scalar,
    /// Slope rounded to the nearest integer; the clock's nominal frequency.
    pub hz: i64,
    pub r_squared: Scalar,
}

/// Least-squares slope of ticks against seconds plus its R².
pub fn estimate_hz(x: &[Scalar], v: &[Scalar]) -> Result<HzEstimate, FeatureError> {
    let fit = math::ols(x, v).map_err(|e| match e {
        math::RegressionError::DegenerateX => FeatureError::DegenerateX,
        math::RegressionError::TooFewSamples { got, need } => {
            FeatureError::TooFewSamples { got, need }
        }
        math::RegressionError::LengthMismatch { x, y } => {
            FeatureError::TooFewSamples { got: x.min(y), need: x.max(y) }
        }
    })?;
    Ok(HzEstimate {
        raw_slope: fit.slope,
        hz: fit.slope.round() as i64,
        r_squared: fit.r_squared,
    })
}

/// Absolute difference between the two counters' origins (seconds):
/// `|(T₁⁴/hz4 − T₁⁶/hz6) − (t₁⁴ − t₁⁶)|`, from the first sample of each
/// series. Interpretable as the gap between the two counter resets.
pub fn delta_tcpraw(
    series4: &TimestampSeries,
    series6: &TimestampSeries,
    hz4: Scalar,
    hz6: Scalar,
) -> Result<Scalar, FeatureError> {
    let f4 = series4.first().ok_or(FeatureError::TooFewSamples { got: 0, need: 1 })?;
    let f6 = series6.first().ok_or(FeatureError::TooFewSamples { got: 0, need: 1 })?;
    Ok(delta_tcpraw_from_firsts(f4.tsval, f4.recv_time, hz4, f6.tsval, f6.recv_time, hz6))
}

fn delta_tcpraw_from_firsts(
    tsval4: u32,
    recv4: Scalar,
    hz4: Scalar,
    tsval6: u32,
    recv6: Scalar,
    hz6: Scalar,
) -> Scalar {
    let delta_tcp = tsval4 as Scalar / hz4 - tsval6 as Scalar / hz6;
    let delta_rec = recv4 - recv6;
    (delta_tcp - delta_rec).abs()
}

/// Offset of the remote clock from its expected value per packet.
#[derive(Debug, Clone, Serialize)]
pub struct OffsetArray {
    /// Seconds since the first packet.
    pub xs: Vec<Scalar>,
    /// Offset in milliseconds: `(v_i/hz − x_i)·1000`.
    pub ys: Vec<Scalar>,
    /// Frequency used for the expectation (the rounded estimate).
    pub hz: Scalar,
    pub r2_hz: Scalar,
}

/// Builds the offset array `y_i = (v_i/hz − x_i)·1000` (milliseconds).
pub fn offsets(x: &[Scalar], v: &[Scalar], hz: Scalar, r2_hz: Scalar) -> OffsetArray {
    let ys = x
        .iter()
        .zip(v)
        .map(|(&xi, &vi)| (vi / hz - xi) * 1000.0)
        .collect();
    OffsetArray { xs: x.to_vec(), ys, hz, r2_hz }
}

#[derive(Debug, Clone, Copy)]
pub struct SkewEstimate {
    /// Theil-Sen slope in ms/s.
    pub alpha: Scalar,
    /// Coefficient of determination of that line; can be negative when the
    /// offsets are strongly non-linear.
    pub r2_skew: Scalar,
}

/// Robust (Theil-Sen) skew of an offset array.
pub fn robust_skew(offsets: &OffsetArray) -> Result<SkewEstimate, FeatureError> {
    if offsets.xs.len() < 3 {
        return Err(FeatureError::TooFewSamples { got: offsets.xs.len(), need: 3 });
    }
    let fit = math::theil_sen(&offsets.xs, &offsets.ys).map_err(|e| match e {
        math::RegressionError::DegenerateX => FeatureError::DegenerateX,
        _ => FeatureError::TooFewSamples { got: offsets.xs.len(), need: 3 },
    })?;
    Ok(SkewEstimate { alpha: fit.slope, r2_skew: fit.r_squared })
}

/// Offset spread after pruning 2.5% of the points off each tail (ms).
pub fn dynamic_range(offsets: &OffsetArray) -> Result<Scalar, FeatureError> {
    if offsets.ys.len() < 2 {
        return Err(FeatureError::TooFewSamples { got: offsets.ys.len(), need: 2 });
    }
    math::trimmed_spread(&offsets.ys, RANGE_TRIM)
        .ok_or(FeatureError::TooFewSamples { got: offsets.ys.len(), need: 2 })
}

#[derive(Debug, Clone, Copy)]
pub struct SplineGap {
    /// Mean absolute gap between the two fitted offset curves after the
    /// L1-optimal constant shift (ms).
    pub spl_diff: Scalar,
    /// `spl_diff / rng_diff`; undefined when the range difference is below
    /// [`RNG_DIFF_EPSILON`].
    pub spl_diff_scaled: Option<Scalar>,
}

/// Fits a 13-knot least-squares cubic spline to each offset array over the
/// common x window, samples both on a dense grid and reports the minimal
/// mean absolute gap over all constant vertical shifts (attained at the
/// median of the pointwise differences).
pub fn spline_pair(off4: &OffsetArray, off6: &OffsetArray) -> Result<SplineGap, FeatureError> {
    let lo = off4.xs.first().zip(off6.xs.first()).map(|(a, b)| a.max(*b));
    let hi = off4.xs.last().zip(off6.xs.last()).map(|(a, b)| a.min(*b));
    let (Some(lo), Some(hi)) = (lo, hi) else {
        return Err(FeatureError::TooFewSamples { got: 0, need: SPLINE_KNOTS + 2 });
    };
    if !(hi > lo) {
        return Err(FeatureError::NoOverlap);
    }
    let fit_side = |off: &OffsetArray| -> Result<CubicSpline<Scalar>, FeatureError> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (&x, &y) in off.xs.iter().zip(&off.ys) {
            if x >= lo && x <= hi {
                xs.push(x);
                ys.push(y);
            }
        }
        // 13 knots span 15 cubic basis functions; fewer points cannot pin them
        if xs.len() < SPLINE_KNOTS + 2 {
            return Err(FeatureError::TooFewSamples { got: xs.len(), need: SPLINE_KNOTS + 2 });
        }
        CubicSpline::fit_least_squares(&xs, &ys, SPLINE_KNOTS).map_err(FeatureError::SplineFit)
    };
    let s4 = fit_side(off4)?;
    let s6 = fit_side(off6)?;

    let grid = math::linspace(lo, hi, SPLINE_GRID);
    let diffs: Vec<Scalar> = grid.iter().map(|&g| s4.eval(g) - s6.eval(g)).collect();
    let mut sorted = diffs.clone();
    let shift = math::median_in_place(&mut sorted).expect("grid is nonempty");
    let spl_diff =
        diffs.iter().map(|d| (d - shift).abs()).sum::<Scalar>() / diffs.len() as Scalar;

    let rng_diff = (dynamic_range(off4)? - dynamic_range(off6)?).abs();
    let spl_diff_scaled =
        if rng_diff > RNG_DIFF_EPSILON { Some(spl_diff / rng_diff) } else { None };
    Ok(SplineGap { spl_diff, spl_diff_scaled })
}

/// Everything derivable from a single side's series.
#[derive(Debug, Clone)]
pub struct SideFeatures {
    pub ip: String,
    pub family: IpFamily,
    pub first_tsval: Option<u32>,
    pub first_recv: Option<Scalar>,
    pub wrap_count: usize,
    pub erratic: bool,
    pub hz_raw: Option<Scalar>,
    pub hz: Option<i64>,
    pub r2_hz: Option<Scalar>,
    pub offsets: Option<OffsetArray>,
    pub alpha: Option<Scalar>,
    pub r2_skew: Option<Scalar>,
    pub rng: Option<Scalar>,
    pub hz_status: FeatureStatus,
    pub skew_status: FeatureStatus,
    pub rng_status: FeatureStatus,
}

impl SideFeatures {
    /// A side is usable downstream when its clock fit is sound: not
    /// erratic, R² at the gate, nominal frequency at least 1 Hz.
    pub fn usable(&self) -> bool {
        self.hz_status.is_computed()
            && self.hz.is_some_and(|hz| hz >= 1)
            && self.r2_hz.is_some_and(|r2| r2 >= HZ_R2_GATE)
    }
}

/// Runs the per-side pipeline: unwrap, frequency fit, offsets, skew, range.
pub fn side_features(series: &TimestampSeries) -> SideFeatures {
    let mut out = SideFeatures {
        ip: series.ip.clone(),
        family: series.family,
        first_tsval: series.first().map(|s| s.tsval),
        first_recv: series.first().map(|s| s.recv_time),
        wrap_count: 0,
        erratic: false,
        hz_raw: None,
        hz: None,
        r2_hz: None,
        offsets: None,
        alpha: None,
        r2_skew: None,
        rng: None,
        hz_status: FeatureStatus::Skipped,
        skew_status: FeatureStatus::Skipped,
        rng_status: FeatureStatus::Skipped,
    };
    let unwrapped = match unwrap_and_relativize(series) {
        Ok(u) => u,
        Err(e) => {
            out.hz_status = FeatureStatus::Failed(e.into());
            return out;
        }
    };
    out.wrap_count = unwrapped.wrap_count;
    out.erratic = unwrapped.erratic;
    if unwrapped.erratic {
        // No valid frequency fit exists for a non-clock; report zero
        // explanatory power rather than the artifact R² of a force-unwrapped
        // random walk.
        out.hz_status = FeatureStatus::Failed(FeatureFailure::Erratic);
        out.r2_hz = Some(0.0);
        return out;
    }
    let est = match estimate_hz(&unwrapped.x, &unwrapped.v) {
        Ok(e) => e,
        Err(e) => {
            out.hz_status = FeatureStatus::Failed(e.into());
            return out;
        }
    };
    out.hz_raw = Some(est.raw_slope);
    out.hz = Some(est.hz);
    out.r2_hz = Some(est.r_squared);
    out.hz_status = FeatureStatus::Computed;
    if !out.usable() {
        // frequency fit too poor or sub-1Hz: dependent features stay skipped
        return out;
    }

    let off = offsets(&unwrapped.x, &unwrapped.v, est.hz as Scalar, est.r_squared);
    match robust_skew(&off) {
        Ok(skew) => {
            out.alpha = Some(skew.alpha);
            out.r2_skew = Some(skew.r2_skew);
            out.skew_status = FeatureStatus::Computed;
        }
        Err(e) => out.skew_status = FeatureStatus::Failed(e.into()),
    }
    match dynamic_range(&off) {
        Ok(rng) => {
            out.rng = Some(rng);
            out.rng_status = FeatureStatus::Computed;
        }
        Err(e) => out.rng_status = FeatureStatus::Failed(e.into()),
    }
    out.offsets = Some(off);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FeatureStatusFlags {
    pub hz4: FeatureStatus,
    pub hz6: FeatureStatus,
    pub skew4: FeatureStatus,
    pub skew6: FeatureStatus,
    pub rng4: FeatureStatus,
    pub rng6: FeatureStatus,
    pub delta_tcpraw: FeatureStatus,
    pub spline: FeatureStatus,
}

/// All pair-level features plus the per-side intermediates.
#[derive(Debug, Clone, Serialize)]
pub struct FeatureVector {
    pub opts_diff: bool,
    pub hz4: Option<i64>,
    pub hz6: Option<i64>,
    /// `|hz4 − hz6|` of the rounded frequencies.
    pub hz_diff: Option<i64>,
    pub r2_hz4: Option<Scalar>,
    pub r2_hz6: Option<Scalar>,
    /// Seconds.
    pub delta_tcpraw: Option<Scalar>,
    pub alpha4: Option<Scalar>,
    pub alpha6: Option<Scalar>,
    /// Signed `alpha4 − alpha6` (ms/s).
    pub alpha_diff: Option<Scalar>,
    pub r2_skew4: Option<Scalar>,
    pub r2_skew6: Option<Scalar>,
    /// Signed `r2_skew4 − r2_skew6`.
    pub r2_skew_diff: Option<Scalar>,
    pub rng4: Option<Scalar>,
    pub rng6: Option<Scalar>,
    /// `|rng4 − rng6|` (ms).
    pub rng_diff: Option<Scalar>,
    pub rng_avg: Option<Scalar>,
    pub rng_diff_rel: Option<Scalar>,
    pub spl_diff: Option<Scalar>,
    pub spl_diff_scaled: Option<Scalar>,
    pub status: FeatureStatusFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Depth {
    /// Skip the spline comparison; enough for the first-order filter and
    /// the raw-timestamp models.
    Shallow,
    Full,
}

fn skipped_vector(opts_diff: bool) -> FeatureVector {
    let s = FeatureStatus::Skipped;
    FeatureVector {
        opts_diff,
        hz4: None,
        hz6: None,
        hz_diff: None,
        r2_hz4: None,
        r2_hz6: None,
        delta_tcpraw: None,
        alpha4: None,
        alpha6: None,
        alpha_diff: None,
        r2_skew4: None,
        r2_skew6: None,
        r2_skew_diff: None,
        rng4: None,
        rng6: None,
        rng_diff: None,
        rng_avg: None,
        rng_diff_rel: None,
        spl_diff: None,
        spl_diff_scaled: None,
        status: FeatureStatusFlags {
            hz4: s,
            hz6: s,
            skew4: s,
            skew6: s,
            rng4: s,
            rng6: s,
            delta_tcpraw: s,
            spline: s,
        },
    }
}

fn combine(
    fp4: &OptionsFingerprint,
    fp6: &OptionsFingerprint,
    s4: &SideFeatures,
    s6: &SideFeatures,
    depth: Depth,
) -> FeatureVector {
    // Differing TCP options falsify the pair before any clock work.
    if options_diff(fp4, fp6) {
        return skipped_vector(true);
    }
    let mut fv = skipped_vector(false);
    fv.hz4 = s4.hz;
    fv.hz6 = s6.hz;
    fv.r2_hz4 = s4.r2_hz;
    fv.r2_hz6 = s6.r2_hz;
    fv.status.hz4 = s4.hz_status;
    fv.status.hz6 = s6.hz_status;
    fv.hz_diff = match (s4.hz, s6.hz) {
        (Some(a), Some(b)) => Some((a - b).abs()),
        _ => None,
    };

    fv.alpha4 = s4.alpha;
    fv.alpha6 = s6.alpha;
    fv.r2_skew4 = s4.r2_skew;
    fv.r2_skew6 = s6.r2_skew;
    fv.status.skew4 = s4.skew_status;
    fv.status.skew6 = s6.skew_status;
    if let (Some(a4), Some(a6)) = (s4.alpha, s6.alpha) {
        fv.alpha_diff = Some(a4 - a6);
    }
    if let (Some(r4), Some(r6)) = (s4.r2_skew, s6.r2_skew) {
        fv.r2_skew_diff = Some(r4 - r6);
    }

    fv.rng4 = s4.rng;
    fv.rng6 = s6.rng;
    fv.status.rng4 = s4.rng_status;
    fv.status.rng6 = s6.rng_status;
    if let (Some(r4), Some(r6)) = (s4.rng, s6.rng) {
        fv.rng_diff = Some((r4 - r6).abs());
        let avg = (r4 + r6) / 2.0;
        fv.rng_avg = Some(avg);
        fv.rng_diff_rel = if avg > 0.0 { Some((r4 - r6).abs() / avg) } else { None };
    }

    // Pair-level features only make sense for two sound clocks ticking at
    // the same nominal frequency.
    let comparable = s4.usable() && s6.usable() && s4.hz == s6.hz;
    if comparable {
        let (t4, r4) = (s4.first_tsval.unwrap(), s4.first_recv.unwrap());
        let (t6, r6) = (s6.first_tsval.unwrap(), s6.first_recv.unwrap());
        let hz = s4.hz.unwrap() as Scalar;
        fv.delta_tcpraw = Some(delta_tcpraw_from_firsts(t4, r4, hz, t6, r6, hz));
        fv.status.delta_tcpraw = FeatureStatus::Computed;

        if depth == Depth::Full {
            match (s4.offsets.as_ref(), s6.offsets.as_ref()) {
                (Some(o4), Some(o6)) => match spline_pair(o4, o6) {
                    Ok(gap) => {
                        fv.spl_diff = Some(gap.spl_diff);
                        fv.spl_diff_scaled = gap.spl_diff_scaled;
                        fv.status.spline = FeatureStatus::Computed;
                    }
                    Err(e) => fv.status.spline = FeatureStatus::Failed(e.into()),
                },
                _ => fv.status.spline = FeatureStatus::Skipped,
            }
        }
    }
    fv
}

/// Computes the full feature vector for one pair.
pub fn extract_features(pair: &CandidatePair) -> FeatureVector {
    let s4 = side_features(&pair.series4);
    let s6 = side_features(&pair.series6);
    combine(&pair.fp4, &pair.fp6, &s4, &s6, Depth::Full)
}

/// Feature extraction with per-side memoization.
///
/// Synthesized non-sibling pairs reuse the sides of the siblings they were
/// mixed from, so per-side work (frequency fit, Theil-Sen, range) is done
/// once per host and family rather than once per pair.
pub struct FeatureExtractor {
    sides: HashMap<(IpFamily, String), Arc<SideFeatures>>,
}

impl FeatureExtractor {
    pub fn new(pairs: &[CandidatePair]) -> Self {
        let mut unique: HashMap<(IpFamily, String), Arc<TimestampSeries>> = HashMap::new();
        for pair in pairs {
            for series in [&pair.series4, &pair.series6] {
                unique
                    .entry((series.family, series.ip.clone()))
                    .or_insert_with(|| Arc::clone(series));
            }
        }
        let entries: Vec<_> = unique.into_iter().collect();
        let sides = entries
            .into_par_iter()
            .map(|(key, series)| (key, Arc::new(side_features(&series))))
            .collect();
        Self { sides }
    }

    fn side(&self, series: &TimestampSeries) -> Arc<SideFeatures> {
        match self.sides.get(&(series.family, series.ip.clone())) {
            Some(s) => Arc::clone(s),
            None => Arc::new(side_features(series)),
        }
    }

    pub fn features(&self, pair: &CandidatePair) -> FeatureVector {
        combine(
            &pair.fp4,
            &pair.fp6,
            &self.side(&pair.series4),
            &self.side(&pair.series6),
            Depth::Full,
        )
    }

    /// Filter-level features only (no spline); used where the consumer is
    /// known to need at most `delta_tcpraw`, e.g. stump training.
    pub fn features_shallow(&self, pair: &CandidatePair) -> FeatureVector {
        combine(
            &pair.fp4,
            &pair.fp6,
            &self.side(&pair.series4),
            &self.side(&pair.series6),
            Depth::Shallow,
        )
    }

    pub fn side_features_of(&self, series: &TimestampSeries) -> Arc<SideFeatures> {
        self.side(series)
    }
}

fn fmt_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => String::new(),
    }
}

/// Writes one CSV row per pair with every feature and its status, for
/// offline analysis and plotting.
pub fn dump_csv<W: Write>(
    mut out: W,
    items: impl IntoIterator<Item = (CandidatePair, FeatureVector)>,
) -> std::io::Result<()> {
    writeln!(
        out,
        "id,ip4,ip6,label,group,opts_diff,hz4,hz6,hz_diff,r2_hz4,r2_hz6,delta_tcpraw,\
         alpha4,alpha6,alpha_diff,r2_skew4,r2_skew6,r2_skew_diff,rng4,rng6,rng_diff,rng_avg,\
         rng_diff_rel,spl_diff,spl_diff_scaled,status_hz4,status_hz6,status_skew4,status_skew6,\
         status_rng4,status_rng6,status_delta,status_spline"
    )?;
    for (pair, fv) in items {
        let label = match pair.label {
            Some(crate::model::Label::Sibling) => "sibling",
            Some(crate::model::Label::NonSibling) => "nonsibling",
            None => "",
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            pair.id,
            pair.ip4(),
            pair.ip6(),
            label,
            pair.group.as_deref().unwrap_or(""),
            fv.opts_diff,
            fmt_opt(&fv.hz4),
            fmt_opt(&fv.hz6),
            fmt_opt(&fv.hz_diff),
            fmt_opt(&fv.r2_hz4),
            fmt_opt(&fv.r2_hz6),
            fmt_opt(&fv.delta_tcpraw),
            fmt_opt(&fv.alpha4),
            fmt_opt(&fv.alpha6),
            fmt_opt(&fv.alpha_diff),
            fmt_opt(&fv.r2_skew4),
            fmt_opt(&fv.r2_skew6),
            fmt_opt(&fv.r2_skew_diff),
            fmt_opt(&fv.rng4),
            fmt_opt(&fv.rng6),
            fmt_opt(&fv.rng_diff),
            fmt_opt(&fv.rng_avg),
            fmt_opt(&fv.rng_diff_rel),
            fmt_opt(&fv.spl_diff),
            fmt_opt(&fv.spl_diff_scaled),
            fv.status.hz4.label(),
            fv.status.hz6.label(),
            fv.status.skew4.label(),
            fv.status.skew6.label(),
            fv.status.rng4.label(),
            fv.status.rng6.label(),
            fv.status.delta_tcpraw.label(),
            fv.status.spline.label(),
        )?;
    }
    Ok(())
}
