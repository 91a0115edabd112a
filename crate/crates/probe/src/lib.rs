//! Active measurement engine: repeatedly elicits TCP timestamps from
//! candidate addresses over a configurable duration and records each
//! target's handshake options fingerprint.

mod capture;
mod drift;
mod engine;
pub mod packet;
mod transport;

use std::collections::HashSet;
use std::net::IpAddr;
use std::path::Path;

use thiserror::Error;

pub use capture::{CapturedSegment, SegmentSource};
#[cfg(target_os = "linux")]
pub use capture::AfPacketSource;
pub use drift::{ClockDriftMonitor, DRIFT_WARN_THRESHOLD_S};
pub use engine::{probe_batch, BatchReport, ProbeTarget, TargetReport};
pub use transport::{Connection, TcpConnection, TcpTransport, Transport};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProbeError {
    #[error("{ip}: connect failed: {message}")]
    Connect { ip: String, message: String },
    #[error("{ip}: no TCP timestamp option offered")]
    NoTimestampOption { ip: String },
    #[error("{ip}: connection repeatedly reset by peer")]
    ResetByPeer { ip: String },
    #[error("batch of {got} pairs exceeds the configured batch size {max}")]
    BatchTooLarge { got: usize, max: usize },
    #[error("invalid probe config: {0}")]
    InvalidConfig(String),
    #[error("capture unavailable: {0}")]
    CaptureUnavailable(String),
    #[error("capture source closed")]
    CaptureClosed,
    #[error("i/o: {0}")]
    Io(String),
}

/// Probe parameters; defaults follow the measurement contract of one
/// ten-hour batch with at least one timestamp per minute.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub duration_s: f64,
    pub min_sample_interval_s: f64,
    pub batch_size: usize,
    pub request_path: String,
    pub user_agent: String,
    pub port: u16,
    pub max_parallel: usize,
    pub connect_timeout_s: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            duration_s: 36_000.0,
            min_sample_interval_s: 60.0,
            batch_size: 10_000,
            request_path: "/research_scan".into(),
            user_agent: "siblink-prober/0.1 (active measurement research; opt out via abuse contact)"
                .into(),
            port: 80,
            max_parallel: 512,
            connect_timeout_s: 10.0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<(), ProbeError> {
        if self.duration_s < 2.0 * self.min_sample_interval_s {
            return Err(ProbeError::InvalidConfig(format!(
                "duration {}s must be at least twice the sample interval {}s",
                self.duration_s, self.min_sample_interval_s
            )));
        }
        if self.batch_size == 0 {
            return Err(ProbeError::InvalidConfig("batch size must be positive".into()));
        }
        if self.min_sample_interval_s <= 0.0 {
            return Err(ProbeError::InvalidConfig("sample interval must be positive".into()));
        }
        Ok(())
    }
}

/// Loads a blacklist of addresses never to contact: one IP per line,
/// `#` comments and blank lines ignored.
pub fn load_blacklist(path: &Path) -> std::io::Result<HashSet<IpAddr>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let ip: IpAddr = line.parse().map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{}:{}: bad address: {e}", path.display(), idx + 1),
            )
        })?;
        out.insert(ip);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ProbeConfig::default().validate().is_ok());
        let bad = ProbeConfig { duration_s: 30.0, min_sample_interval_s: 60.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ProbeConfig { batch_size: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn blacklist_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blacklist.txt");
        std::fs::write(&path, "# comment\n192.0.2.1\n\n2001:db8::5 # inline\n").unwrap();
        let set = load_blacklist(&path).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.contains(&"192.0.2.1".parse::<IpAddr>().unwrap()));
        assert!(set.contains(&"2001:db8::5".parse::<IpAddr>().unwrap()));
    }
}
