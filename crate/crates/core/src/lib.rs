//! Measurement of TCP timestamp behavior for IPv6/IPv4 address pairs and
//! their classification as dual-stack siblings.
//!
//! The pipeline: a prober (or the [`sim`] module) produces timestamp traces
//! and handshake fingerprints in the [`ingest`] formats; [`features`] turns
//! each candidate pair into clock features (frequency, raw-timestamp delta,
//! robust skew, offset dynamics, spline gap); [`classify`] holds the three
//! decision models; [`eval`] scores them under cross-validation.
//!
//! The numeric kernels in [`math`] are generic over the scalar type; the
//! pipeline itself runs on [`Scalar`].

pub mod classify;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod math;
pub mod model;
pub mod num;
pub mod sim;

/// Scalar type of the measurement pipeline.
///
/// Receive times are epoch seconds at microsecond resolution (~51
/// significant bits), so the pipeline is pinned to f64 even though the
/// kernels underneath are generic.
pub type Scalar = f64;

/// Line fit over pipeline scalars.
pub type LineFit = math::LineFit<Scalar>;
/// Fitted offset-curve spline over pipeline scalars.
pub type CubicSpline = math::CubicSpline<Scalar>;

pub use classify::{
    classify_beverly, classify_ht, classify_ml1, decide, first_order_filter, BeverlyParams,
    FilterOutcome, HtThresholds, Ml1Model, ModelKind, ModelParams,
};
pub use eval::{evaluate, mcc, precision, stratified_kfold, train_stump, ConfusionCounts, EvalReport};
pub use features::{
    delta_tcpraw, dynamic_range, estimate_hz, extract_features, offsets, robust_skew,
    spline_pair, unwrap_and_relativize, FeatureExtractor, FeatureVector, OffsetArray,
    SideFeatures,
};
pub use ingest::{load_batch, save_batch, synthesize_nonsiblings};
pub use model::{
    canonicalize_options, options_diff, CandidatePair, Decision, DecisionReason, IpFamily, Label,
    OptionsFingerprint, RawTcpOption, TimestampSample, TimestampSeries, Verdict,
};
pub use sim::{generate_population, simulate_host, simulate_sibling, ClockSpec, JitterSpec,
    PopulationConfig, VariableComponent};
