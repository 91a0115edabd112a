//! Shared domain types: timestamp series, TCP options fingerprints,
//! candidate pairs and classifier decisions.
//!
//! Everything here is an immutable value after construction and safe to
//! share across threads.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// One observed (receive time, remote TSval) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimestampSample {
    /// Local receive time, seconds since the epoch (microsecond resolution).
    pub recv_time: f64,
    /// Remote 32-bit TCP timestamp value.
    pub tsval: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IpFamily {
    #[serde(rename = "4")]
    V4,
    #[serde(rename = "6")]
    V6,
}

impl fmt::Display for IpFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IpFamily::V4 => "4",
            IpFamily::V6 => "6",
        })
    }
}

/// Ordered timestamp observations for one IP address.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestampSeries {
    pub ip: String,
    pub family: IpFamily,
    samples: Vec<TimestampSample>,
}

impl TimestampSeries {
    /// Builds a series, sorting by receive time and dropping samples that
    /// share an identical receive time with an earlier one (the invariant
    /// is strictly ascending `recv_time`).
    pub fn new(ip: impl Into<String>, family: IpFamily, mut samples: Vec<TimestampSample>) -> Self {
        samples.sort_by(|a, b| a.recv_time.partial_cmp(&b.recv_time).expect("NaN recv_time"));
        samples.dedup_by_key(|s| s.recv_time);
        Self { ip: ip.into(), family, samples }
    }

    pub fn samples(&self) -> &[TimestampSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> Option<&TimestampSample> {
        self.samples.first()
    }
}

/// Canonical TCP options signature.
///
/// Option names in wire order joined by `-`, NOP bytes explicit, the
/// window-scale value appended as a two-digit decimal (`WS07`), MSS value
/// excluded. Example: `MSS-SACK-TS-NOP-WS07`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OptionsFingerprint(String);

impl OptionsFingerprint {
    /// Wraps an already-canonical string (trusted input, e.g. a file we wrote).
    pub fn from_canonical(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for OptionsFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A TCP option as parsed from the header, in wire order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTcpOption {
    pub kind: u8,
    pub data: Vec<u8>,
}

impl RawTcpOption {
    pub fn new(kind: u8, data: impl Into<Vec<u8>>) -> Self {
        Self { kind, data: data.into() }
    }
}

/// Canonicalizes a parsed option list into a fingerprint string.
///
/// Presence and order are fingerprinted; of the option values only the
/// window-scale shift is, since values like MSS differ between families
/// even on genuine dual-stack hosts. Unknown or reserved kinds render as
/// `UNK` so mirrored junk options stay comparable.
pub fn canonicalize_options(options: &[RawTcpOption]) -> OptionsFingerprint {
    let mut parts = Vec::with_capacity(options.len());
    for opt in options {
        let part = match opt.kind {
            0 => "EOL".to_string(),
            1 => "NOP".to_string(),
            2 => "MSS".to_string(),
            3 => match opt.data.first() {
                Some(&shift) => format!("WS{shift:02}"),
                None => "WS".to_string(),
            },
            4 => "SACK".to_string(),
            5 => "SACKB".to_string(),
            8 => "TS".to_string(),
            30 => "MPTCP".to_string(),
            34 => "TFO".to_string(),
            _ => "UNK".to_string(),
        };
        parts.push(part);
    }
    OptionsFingerprint(parts.join("-"))
}

/// True iff the canonical fingerprints differ.
pub fn options_diff(fp4: &OptionsFingerprint, fp6: &OptionsFingerprint) -> bool {
    fp4 != fp6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Sibling,
    NonSibling,
}

/// An IPv4/IPv6 address pair under test, with its measured series and
/// handshake fingerprints. Series are shared: synthesizing n·(n−1)
/// non-sibling pairs must not copy sample data.
#[derive(Debug, Clone)]
pub struct CandidatePair {
    pub id: String,
    pub series4: Arc<TimestampSeries>,
    pub series6: Arc<TimestampSeries>,
    pub fp4: OptionsFingerprint,
    pub fp6: OptionsFingerprint,
    pub label: Option<Label>,
    pub group: Option<String>,
}

impl CandidatePair {
    pub fn ip4(&self) -> &str {
        &self.series4.ip
    }

    pub fn ip6(&self) -> &str {
        &self.series6.ip
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Sibling,
    NonSibling,
    Unknown,
    Error,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Sibling => "sibling",
            Verdict::NonSibling => "non-sibling",
            Verdict::Unknown => "unknown",
            Verdict::Error => "error",
        })
    }
}

/// Which check produced a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionReason {
    OptionsDiffer,
    HzFitFailed,
    HzDiffer,
    HzTooSmall,
    RawTsDelta,
    LinearSkew,
    DynamicRange,
    SplineArea,
    SkewAngle,
    GuardInterval,
    MissingFeature,
}

/// Classifier output: a verdict plus the check that caused it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub verdict: Verdict,
    pub reason: DecisionReason,
}

impl Decision {
    pub fn sibling(reason: DecisionReason) -> Self {
        Self { verdict: Verdict::Sibling, reason }
    }

    pub fn non_sibling(reason: DecisionReason) -> Self {
        Self { verdict: Verdict::NonSibling, reason }
    }

    pub fn unknown(reason: DecisionReason) -> Self {
        Self { verdict: Verdict::Unknown, reason }
    }

    pub fn error(reason: DecisionReason) -> Self {
        Self { verdict: Verdict::Error, reason }
    }
}
