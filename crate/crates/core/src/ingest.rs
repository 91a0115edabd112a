//! File formats and batch assembly.
//!
//! Traces and fingerprints are line-delimited JSON (append-friendly while a
//! probe run is in flight), labels are CSV. All writers emit a canonical
//! byte representation so that identical inputs produce identical files.
//!
//! Formats:
//! ```text
//! traces.jsonl   {"id":"host0001","family":"4","ip":"192.0.2.7","tsval":123456,"recv_time":1480000000.123456}
//! options.jsonl  {"id":"host0001","family":"6","fingerprint":"MSS-SACK-TS-NOP-WS07"}
//! labels.csv     ip4,ip6,label,group
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    CandidatePair, IpFamily, Label, OptionsFingerprint, TimestampSample, TimestampSeries,
};

/// One observed packet, as stored in `traces.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub id: String,
    pub family: IpFamily,
    pub ip: String,
    pub tsval: u32,
    pub recv_time: f64,
}

impl TraceRecord {
    /// Canonical line form; `recv_time` always carries six fractional digits.
    pub fn canonical_line(&self) -> String {
        format!(
            "{{\"id\":{},\"family\":\"{}\",\"ip\":{},\"tsval\":{},\"recv_time\":{:.6}}}",
            serde_json::to_string(&self.id).expect("string serializes"),
            self.family,
            serde_json::to_string(&self.ip).expect("string serializes"),
            self.tsval,
            self.recv_time,
        )
    }
}

/// One fingerprint, as stored in `options.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionsRecord {
    pub id: String,
    pub family: IpFamily,
    pub fingerprint: OptionsFingerprint,
}

impl OptionsRecord {
    pub fn canonical_line(&self) -> String {
        format!(
            "{{\"id\":{},\"family\":\"{}\",\"fingerprint\":{}}}",
            serde_json::to_string(&self.id).expect("string serializes"),
            self.family,
            serde_json::to_string(self.fingerprint.as_str()).expect("string serializes"),
        )
    }
}

/// One ground-truth row of `labels.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub ip4: String,
    pub ip6: String,
    pub label: Label,
    pub group: Option<String>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord { path: PathBuf, line: usize, message: String },
    #[error("duplicate label for pair ({ip4}, {ip6})")]
    DuplicateLabel { ip4: String, ip6: String },
    #[error("duplicate fingerprint for ({id}, v{family})")]
    DuplicateOptions { id: String, family: IpFamily },
    #[error("records for ({id}, v{family}) name both {first} and {second}")]
    InconsistentIp { id: String, family: IpFamily, first: String, second: String },
}

fn io_err(path: &Path, source: std::io::Error) -> IngestError {
    IngestError::Io { path: path.to_path_buf(), source }
}

/// Non-fatal observations made while assembling a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoadWarning {
    /// A candidate has traces for only one family and was skipped.
    MissingSeries { id: String },
    /// A candidate lacks a fingerprint for one or both families.
    MissingFingerprint { id: String },
}

impl std::fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadWarning::MissingSeries { id } => write!(f, "{id}: missing one family's series"),
            LoadWarning::MissingFingerprint { id } => write!(f, "{id}: missing fingerprint"),
        }
    }
}

#[derive(Debug)]
pub struct LoadedBatch {
    pub pairs: Vec<CandidatePair>,
    pub warnings: Vec<LoadWarning>,
}

/// Streaming appender for trace records; the prober funnels all samples of a
/// batch through exactly one of these.
pub struct TraceWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self, IngestError> {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        Ok(Self { out: BufWriter::new(file), path: path.to_path_buf() })
    }

    pub fn append(&mut self, rec: &TraceRecord) -> Result<(), IngestError> {
        writeln!(self.out, "{}", rec.canonical_line()).map_err(|e| io_err(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<(), IngestError> {
        self.out.flush().map_err(|e| io_err(&self.path, e))
    }
}

/// Streaming appender for fingerprint records.
pub struct OptionsWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl OptionsWriter {
    pub fn create(path: &Path) -> Result<Self, IngestError> {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        Ok(Self { out: BufWriter::new(file), path: path.to_path_buf() })
    }

    pub fn append(&mut self, rec: &OptionsRecord) -> Result<(), IngestError> {
        writeln!(self.out, "{}", rec.canonical_line()).map_err(|e| io_err(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<(), IngestError> {
        self.out.flush().map_err(|e| io_err(&self.path, e))
    }
}

fn read_jsonl<T, F>(path: &Path, mut sink: F) -> Result<(), IngestError>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(usize, T) -> Result<(), IngestError>,
{
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(&line).map_err(|e| IngestError::MalformedRecord {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        sink(idx + 1, rec)?;
    }
    Ok(())
}

pub fn read_traces(path: &Path) -> Result<Vec<TraceRecord>, IngestError> {
    let mut out = Vec::new();
    read_jsonl(path, |_, rec: TraceRecord| {
        out.push(rec);
        Ok(())
    })?;
    Ok(out)
}

pub fn read_options(path: &Path) -> Result<Vec<OptionsRecord>, IngestError> {
    let mut out = Vec::new();
    read_jsonl(path, |_, rec: OptionsRecord| {
        out.push(rec);
        Ok(())
    })?;
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                io_err(path, std::io::Error::other(e.to_string()))
            }
            _ => IngestError::MalformedRecord {
                path: path.to_path_buf(),
                line: 0,
                message: e.to_string(),
            },
        })?;
    let mut out = Vec::new();
    for (idx, row) in reader.deserialize::<LabelRecord>().enumerate() {
        let rec = row.map_err(|e| IngestError::MalformedRecord {
            path: path.to_path_buf(),
            line: idx + 2, // header is line 1
            message: e.to_string(),
        })?;
        // normalize empty group cells to None
        let rec = LabelRecord {
            group: rec.group.filter(|g| !g.is_empty()),
            ..rec
        };
        out.push(rec);
    }
    Ok(out)
}

/// Assembles candidate pairs from a trace file, an options file and an
/// optional label file. Candidates missing either family are reported in
/// the warnings and skipped.
pub fn load_batch(
    traces_path: &Path,
    options_path: &Path,
    labels_path: Option<&Path>,
) -> Result<LoadedBatch, IngestError> {
    let mut series: BTreeMap<(String, IpFamily), (String, Vec<TimestampSample>)> = BTreeMap::new();
    read_jsonl(traces_path, |line, rec: TraceRecord| {
        let key = (rec.id.clone(), rec.family);
        let entry = series.entry(key).or_insert_with(|| (rec.ip.clone(), Vec::new()));
        if entry.0 != rec.ip {
            return Err(IngestError::InconsistentIp {
                id: rec.id,
                family: rec.family,
                first: entry.0.clone(),
                second: rec.ip,
            });
        }
        let _ = line;
        entry.1.push(TimestampSample { recv_time: rec.recv_time, tsval: rec.tsval });
        Ok(())
    })?;

    let mut fingerprints: BTreeMap<(String, IpFamily), OptionsFingerprint> = BTreeMap::new();
    read_jsonl(options_path, |_, rec: OptionsRecord| {
        if fingerprints.insert((rec.id.clone(), rec.family), rec.fingerprint).is_some() {
            return Err(IngestError::DuplicateOptions { id: rec.id, family: rec.family });
        }
        Ok(())
    })?;

    let mut labels: BTreeMap<(String, String), (Label, Option<String>)> = BTreeMap::new();
    if let Some(path) = labels_path {
        for rec in read_labels(path)? {
            if labels
                .insert((rec.ip4.clone(), rec.ip6.clone()), (rec.label, rec.group))
                .is_some()
            {
                return Err(IngestError::DuplicateLabel { ip4: rec.ip4, ip6: rec.ip6 });
            }
        }
    }

    let ids: Vec<String> = {
        let mut v: Vec<String> = series.keys().map(|(id, _)| id.clone()).collect();
        v.dedup();
        v
    };

    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for id in ids {
        let v4 = series.remove(&(id.clone(), IpFamily::V4));
        let v6 = series.remove(&(id.clone(), IpFamily::V6));
        let (Some((ip4, samples4)), Some((ip6, samples6))) = (v4, v6) else {
            warnings.push(LoadWarning::MissingSeries { id });
            continue;
        };
        let fp4 = fingerprints.get(&(id.clone(), IpFamily::V4));
        let fp6 = fingerprints.get(&(id.clone(), IpFamily::V6));
        let (Some(fp4), Some(fp6)) = (fp4, fp6) else {
            warnings.push(LoadWarning::MissingFingerprint { id });
            continue;
        };
        let (label, group) = match labels.get(&(ip4.clone(), ip6.clone())) {
            Some((l, g)) => (Some(*l), g.clone()),
            None => (None, None),
        };
        pairs.push(CandidatePair {
            id,
            series4: Arc::new(TimestampSeries::new(ip4, IpFamily::V4, samples4)),
            series6: Arc::new(TimestampSeries::new(ip6, IpFamily::V6, samples6)),
            fp4: fp4.clone(),
            fp6: fp6.clone(),
            label,
            group,
        });
    }
    Ok(LoadedBatch { pairs, warnings })
}

/// Writes a batch back out in canonical form. The inverse of [`load_batch`]
/// for files this module wrote itself.
pub fn save_batch(
    pairs: &[CandidatePair],
    traces_path: &Path,
    options_path: &Path,
    labels_path: Option<&Path>,
) -> Result<(), IngestError> {
    let mut traces = TraceWriter::create(traces_path)?;
    let mut options = OptionsWriter::create(options_path)?;
    for pair in pairs {
        for (series, fp) in [(&pair.series4, &pair.fp4), (&pair.series6, &pair.fp6)] {
            for sample in series.samples() {
                traces.append(&TraceRecord {
                    id: pair.id.clone(),
                    family: series.family,
                    ip: series.ip.clone(),
                    tsval: sample.tsval,
                    recv_time: sample.recv_time,
                })?;
            }
            options.append(&OptionsRecord {
                id: pair.id.clone(),
                family: series.family,
                fingerprint: fp.clone(),
            })?;
        }
    }
    traces.flush()?;
    options.flush()?;

    if let Some(path) = labels_path {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| io_err(path, std::io::Error::other(e.to_string())))?;
        for pair in pairs {
            if let Some(label) = pair.label {
                w.serialize(LabelRecord {
                    ip4: pair.ip4().to_string(),
                    ip6: pair.ip6().to_string(),
                    label,
                    group: pair.group.clone(),
                })
                .map_err(|e| io_err(path, std::io::Error::other(e.to_string())))?;
            }
        }
        w.flush().map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

/// Forms all n·(n−1) ordered non-sibling pairs by combining the IPv4 side of
/// one sibling with the IPv6 side of every other. Series are shared, not
/// copied; measurement windows already overlap within a batch.
pub fn synthesize_nonsiblings(siblings: &[CandidatePair]) -> Vec<CandidatePair> {
    let n = siblings.len();
    let mut out = Vec::with_capacity(n.saturating_mul(n.saturating_sub(1)));
    for a in siblings {
        for b in siblings {
            if std::ptr::eq(a, b) {
                continue;
            }
            out.push(CandidatePair {
                id: format!("{}x{}", a.id, b.id),
                series4: Arc::clone(&a.series4),
                series6: Arc::clone(&b.series6),
                fp4: a.fp4.clone(),
                fp6: b.fp6.clone(),
                label: Some(Label::NonSibling),
                group: None,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sib(id: &str, ip4: &str, ip6: &str) -> CandidatePair {
        let mk = |ip: &str, fam| {
            Arc::new(TimestampSeries::new(
                ip,
                fam,
                vec![
                    TimestampSample { recv_time: 1.0, tsval: 100 },
                    TimestampSample { recv_time: 2.0, tsval: 200 },
                ],
            ))
        };
        CandidatePair {
            id: id.to_string(),
            series4: mk(ip4, IpFamily::V4),
            series6: mk(ip6, IpFamily::V6),
            fp4: OptionsFingerprint::from_canonical("MSS-SACK-TS-NOP-WS07"),
            fp6: OptionsFingerprint::from_canonical("MSS-SACK-TS-NOP-WS07"),
            label: Some(Label::Sibling),
            group: Some("servers".into()),
        }
    }

    #[test]
    fn nonsibling_counts_are_n_times_n_minus_one() {
        let sibs: Vec<_> =
            (0..5).map(|i| sib(&format!("h{i}"), &format!("10.0.0.{i}"), &format!("2001:db8::{i}"))).collect();
        assert_eq!(synthesize_nonsiblings(&sibs).len(), 20);
        assert_eq!(synthesize_nonsiblings(&sibs[..2]).len(), 2);
        assert_eq!(synthesize_nonsiblings(&sibs[..1]).len(), 0);
        let ns = synthesize_nonsiblings(&sibs[..2]);
        assert_eq!((ns[0].ip4(), ns[0].ip6()), ("10.0.0.0", "2001:db8::1"));
        assert_eq!((ns[1].ip4(), ns[1].ip6()), ("10.0.0.1", "2001:db8::0"));
        assert!(ns.iter().all(|p| p.label == Some(Label::NonSibling)));
    }

    #[test]
    fn trace_line_has_six_fraction_digits() {
        let rec = TraceRecord {
            id: "a".into(),
            family: IpFamily::V4,
            ip: "192.0.2.1".into(),
            tsval: 42,
            recv_time: 1480000000.1,
        };
        assert_eq!(
            rec.canonical_line(),
            "{\"id\":\"a\",\"family\":\"4\",\"ip\":\"192.0.2.1\",\"tsval\":42,\"recv_time\":1480000000.100000}"
        );
        let parsed: TraceRecord = serde_json::from_str(&rec.canonical_line()).unwrap();
        assert_eq!(parsed, rec);
    }

    #[test]
    fn round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let traces = dir.path().join("traces.jsonl");
        let options = dir.path().join("options.jsonl");
        let labels = dir.path().join("labels.csv");
        let pairs = vec![sib("h0", "10.0.0.1", "2001:db8::1"), sib("h1", "10.0.0.2", "2001:db8::2")];
        save_batch(&pairs, &traces, &options, Some(&labels)).unwrap();

        let loaded = load_batch(&traces, &options, Some(&labels)).unwrap();
        assert!(loaded.warnings.is_empty());
        assert_eq!(loaded.pairs.len(), 2);
        assert_eq!(loaded.pairs[0].id, "h0");
        assert_eq!(loaded.pairs[0].label, Some(Label::Sibling));
        assert_eq!(loaded.pairs[0].group.as_deref(), Some("servers"));
        assert_eq!(loaded.pairs[0].series4.len(), 2);

        // byte-identical on re-save
        let traces2 = dir.path().join("t2.jsonl");
        let options2 = dir.path().join("o2.jsonl");
        let labels2 = dir.path().join("l2.csv");
        save_batch(&loaded.pairs, &traces2, &options2, Some(&labels2)).unwrap();
        assert_eq!(std::fs::read(&traces).unwrap(), std::fs::read(&traces2).unwrap());
        assert_eq!(std::fs::read(&options).unwrap(), std::fs::read(&options2).unwrap());
        assert_eq!(std::fs::read(&labels).unwrap(), std::fs::read(&labels2).unwrap());
    }

    #[test]
    fn missing_family_is_reported_and_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let traces = dir.path().join("traces.jsonl");
        let options = dir.path().join("options.jsonl");
        std::fs::write(
            &traces,
            "{\"id\":\"x\",\"family\":\"4\",\"ip\":\"10.0.0.1\",\"tsval\":1,\"recv_time\":1.000000}\n",
        )
        .unwrap();
        std::fs::write(&options, "{\"id\":\"x\",\"family\":\"4\",\"fingerprint\":\"MSS\"}\n").unwrap();
        let loaded = load_batch(&traces, &options, None).unwrap();
        assert!(loaded.pairs.is_empty());
        assert_eq!(loaded.warnings, vec![LoadWarning::MissingSeries { id: "x".into() }]);
    }

    #[test]
    fn malformed_line_carries_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let traces = dir.path().join("traces.jsonl");
        std::fs::write(&traces, "{\"id\":\"x\"}\n").unwrap();
        let err = read_traces(&traces).unwrap_err();
        match err {
            IngestError::MalformedRecord { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_label_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let traces = dir.path().join("traces.jsonl");
        let options = dir.path().join("options.jsonl");
        let labels = dir.path().join("labels.csv");
        std::fs::write(&traces, "").unwrap();
        std::fs::write(&options, "").unwrap();
        std::fs::write(
            &labels,
            "ip4,ip6,label,group\n10.0.0.1,2001:db8::1,sibling,\n10.0.0.1,2001:db8::1,sibling,\n",
        )
        .unwrap();
        assert!(matches!(
            load_batch(&traces, &options, Some(&labels)),
            Err(IngestError::DuplicateLabel { .. })
        ));
    }
}
