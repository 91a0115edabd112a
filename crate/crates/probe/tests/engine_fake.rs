//! Engine contract tests against a scripted in-memory network: sample
//! pacing, fingerprint capture, per-target error bookkeeping, reconnect
//! behavior and anomaly recording.

use std::collections::HashMap;
use std::net::IpAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use siblink_core::ingest::{OptionsWriter, TraceWriter};
use siblink_core::{IpFamily, RawTcpOption};
use siblink_probe::packet::TcpSegment;
use siblink_probe::{
    probe_batch, CapturedSegment, Connection, ProbeConfig, ProbeError, ProbeTarget,
    SegmentSource, Transport,
};

fn now_epoch() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).unwrap().as_secs_f64()
}

fn linux_options() -> Vec<RawTcpOption> {
    vec![
        RawTcpOption::new(2, vec![5, 0xb4]),
        RawTcpOption::new(4, vec![]),
        RawTcpOption::new(8, vec![0; 8]),
        RawTcpOption::new(1, vec![]),
        RawTcpOption::new(3, vec![7]),
    ]
}

fn stripped_options() -> Vec<RawTcpOption> {
    vec![RawTcpOption::new(2, vec![5, 0xb4])]
}

#[derive(Clone)]
struct PeerBehavior {
    refuse: bool,
    offer_ts: bool,
    options: Vec<RawTcpOption>,
    /// Options presented from the second connection on.
    reconnect_options: Option<Vec<RawTcpOption>>,
    /// Peer closes the connection after this many responses.
    close_after_sends: Option<usize>,
}

impl Default for PeerBehavior {
    fn default() -> Self {
        Self {
            refuse: false,
            offer_ts: true,
            options: linux_options(),
            reconnect_options: None,
            close_after_sends: None,
        }
    }
}

#[derive(Default)]
struct NetState {
    peers: HashMap<IpAddr, PeerBehavior>,
    queue: std::collections::VecDeque<CapturedSegment>,
    next_port: u16,
    connect_counts: HashMap<IpAddr, usize>,
    tick: u32,
    /// open keepalive emitters: local_port -> (peer, due, interval)
    keepalive: HashMap<u16, (IpAddr, Instant, Duration)>,
}

struct FakeNet {
    state: Mutex<NetState>,
}

impl FakeNet {
    fn new(peers: HashMap<IpAddr, PeerBehavior>) -> Arc<Self> {
        Arc::new(Self {
            state: Mutex::new(NetState { peers, next_port: 40_000, ..Default::default() }),
        })
    }

    fn push_segment(state: &mut NetState, peer: IpAddr, local_port: u16, seg_kind: SegKind) {
        let tsval = match seg_kind {
            SegKind::SynAck { offer_ts: true } | SegKind::Data => {
                state.tick = state.tick.wrapping_add(100);
                Some(state.tick)
            }
            _ => None,
        };
        let (syn, ack, fin) = match seg_kind {
            SegKind::SynAck { .. } => (true, true, false),
            SegKind::Data => (false, true, false),
            SegKind::Fin => (false, true, true),
        };
        let options = match seg_kind {
            SegKind::SynAck { .. } => {
                let count = state.connect_counts.get(&peer).copied().unwrap_or(1);
                let behavior = &state.peers[&peer];
                if count > 1 {
                    behavior.reconnect_options.clone().unwrap_or_else(|| behavior.options.clone())
                } else {
                    behavior.options.clone()
                }
            }
            _ => vec![],
        };
        state.queue.push_back(CapturedSegment {
            recv_time: now_epoch(),
            segment: TcpSegment {
                src: peer,
                dst: "10.99.99.99".parse().unwrap(),
                src_port: 80,
                dst_port: local_port,
                syn,
                ack,
                rst: false,
                fin,
                tsval,
                options,
            },
        });
    }
}

#[derive(Clone, Copy)]
enum SegKind {
    SynAck { offer_ts: bool },
    Data,
    Fin,
}

struct FakeTransport {
    net: Arc<FakeNet>,
}

struct FakeConn {
    net: Arc<FakeNet>,
    peer: IpAddr,
    local_port: u16,
    sends: usize,
    closed: bool,
    close_after_sends: Option<usize>,
}

impl Transport for FakeTransport {
    type Conn = FakeConn;

    fn connect(&self, addr: IpAddr, _port: u16, _timeout: Duration) -> Result<FakeConn, ProbeError> {
        let mut state = self.net.state.lock().unwrap();
        let behavior = state
            .peers
            .get(&addr)
            .cloned()
            .unwrap_or(PeerBehavior { refuse: true, ..Default::default() });
        if behavior.refuse {
            return Err(ProbeError::Connect { ip: addr.to_string(), message: "refused".into() });
        }
        *state.connect_counts.entry(addr).or_insert(0) += 1;
        state.next_port += 1;
        let local_port = state.next_port;
        FakeNet::push_segment(&mut state, addr, local_port, SegKind::SynAck {
            offer_ts: behavior.offer_ts,
        });
        Ok(FakeConn {
            net: Arc::clone(&self.net),
            peer: addr,
            local_port,
            sends: 0,
            closed: false,
            close_after_sends: behavior.close_after_sends,
        })
    }
}

impl Connection for FakeConn {
    fn local_port(&self) -> u16 {
        self.local_port
    }

    fn send(&mut self, _bytes: &[u8]) -> Result<(), ProbeError> {
        if self.closed {
            return Ok(());
        }
        self.sends += 1;
        let mut state = self.net.state.lock().unwrap();
        FakeNet::push_segment(&mut state, self.peer, self.local_port, SegKind::Data);
        if self.close_after_sends.is_some_and(|n| self.sends >= n) {
            FakeNet::push_segment(&mut state, self.peer, self.local_port, SegKind::Fin);
            state.keepalive.remove(&self.local_port);
            self.closed = true;
        }
        Ok(())
    }

    fn set_keepalive(&mut self, idle: Duration) -> Result<(), ProbeError> {
        let mut state = self.net.state.lock().unwrap();
        state
            .keepalive
            .insert(self.local_port, (self.peer, Instant::now() + idle, idle));
        Ok(())
    }

    fn is_closed(&mut self) -> bool {
        self.closed
    }
}

impl Drop for FakeConn {
    fn drop(&mut self) {
        self.net.state.lock().unwrap().keepalive.remove(&self.local_port);
    }
}

struct FakeSource {
    net: Arc<FakeNet>,
}

impl SegmentSource for FakeSource {
    fn recv(&mut self, timeout: Duration) -> Result<Option<CapturedSegment>, ProbeError> {
        let deadline = Instant::now() + timeout;
        loop {
            {
                let mut state = self.net.state.lock().unwrap();
                if let Some(seg) = state.queue.pop_front() {
                    return Ok(Some(seg));
                }
                // emit due keepalive replies
                let now = Instant::now();
                let due: Vec<(u16, IpAddr)> = state
                    .keepalive
                    .iter()
                    .filter(|(_, (_, due, _))| *due <= now)
                    .map(|(&port, &(peer, _, _))| (port, peer))
                    .collect();
                for (port, peer) in due {
                    FakeNet::push_segment(&mut state, peer, port, SegKind::Data);
                    if let Some(entry) = state.keepalive.get_mut(&port) {
                        entry.1 = now + entry.2;
                    }
                }
            }
            if Instant::now() >= deadline {
                return Ok(None);
            }
            std::thread::sleep(Duration::from_millis(2));
        }
    }
}

fn quick_config() -> ProbeConfig {
    ProbeConfig {
        duration_s: 3.0,
        min_sample_interval_s: 1.0,
        connect_timeout_s: 1.0,
        max_parallel: 4,
        ..Default::default()
    }
}

struct Run {
    report: siblink_probe::BatchReport,
    traces_path: std::path::PathBuf,
    options_path: std::path::PathBuf,
    _dir: tempfile::TempDir,
}

fn run_batch(
    peers: HashMap<IpAddr, PeerBehavior>,
    targets: &[ProbeTarget],
    config: &ProbeConfig,
) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let traces_path = dir.path().join("traces.jsonl");
    let options_path = dir.path().join("options.jsonl");
    let net = FakeNet::new(peers);
    let report = probe_batch(
        targets,
        config,
        &FakeTransport { net: Arc::clone(&net) },
        Box::new(FakeSource { net }),
        TraceWriter::create(&traces_path).unwrap(),
        OptionsWriter::create(&options_path).unwrap(),
    )
    .unwrap();
    Run { report, traces_path, options_path, _dir: dir }
}

fn target(id: &str, ip4: &str, ip6: &str) -> ProbeTarget {
    ProbeTarget { id: id.into(), ip4: ip4.parse().unwrap(), ip6: ip6.parse().unwrap() }
}

#[test]
fn responsive_target_is_sampled_and_fingerprinted() {
    let mut peers = HashMap::new();
    peers.insert("192.0.2.1".parse().unwrap(), PeerBehavior::default());
    peers.insert("2001:db8::1".parse().unwrap(), PeerBehavior::default());
    let run = run_batch(peers, &[target("t0", "192.0.2.1", "2001:db8::1")], &quick_config());

    assert_eq!(run.report.targets.len(), 2);
    for t in &run.report.targets {
        assert!(t.error.is_none(), "{:?}", t.error);
        assert_eq!(t.fingerprint.as_ref().unwrap().as_str(), "MSS-SACK-TS-NOP-WS07");
        // 3 s at >= 1 sample/s keepalive pacing, minus startup tolerance
        assert!(t.samples >= 2, "only {} samples", t.samples);
    }

    // files assemble into a loadable pair with ascending samples
    let batch =
        siblink_core::load_batch(&run.traces_path, &run.options_path, None).unwrap();
    assert_eq!(batch.pairs.len(), 1);
    for series in [&batch.pairs[0].series4, &batch.pairs[0].series6] {
        let times: Vec<f64> = series.samples().iter().map(|s| s.recv_time).collect();
        assert!(times.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn target_without_timestamps_is_flagged() {
    let mut peers = HashMap::new();
    peers.insert(
        "192.0.2.2".parse().unwrap(),
        PeerBehavior { offer_ts: false, options: stripped_options(), ..Default::default() },
    );
    peers.insert("2001:db8::2".parse().unwrap(), PeerBehavior::default());
    let run = run_batch(peers, &[target("t1", "192.0.2.2", "2001:db8::2")], &quick_config());

    let v4 = run.report.targets.iter().find(|t| t.family == IpFamily::V4).unwrap();
    assert!(matches!(v4.error, Some(ProbeError::NoTimestampOption { .. })));
    assert_eq!(v4.samples, 0);
    let v6 = run.report.targets.iter().find(|t| t.family == IpFamily::V6).unwrap();
    assert!(v6.error.is_none());
    assert!(v6.samples >= 2);
}

#[test]
fn unreachable_target_does_not_abort_batch() {
    let mut peers = HashMap::new();
    peers.insert(
        "192.0.2.3".parse().unwrap(),
        PeerBehavior { refuse: true, ..Default::default() },
    );
    peers.insert("2001:db8::3".parse().unwrap(), PeerBehavior::default());
    peers.insert("192.0.2.4".parse().unwrap(), PeerBehavior::default());
    peers.insert("2001:db8::4".parse().unwrap(), PeerBehavior::default());
    let run = run_batch(
        peers,
        &[target("dead", "192.0.2.3", "2001:db8::3"), target("live", "192.0.2.4", "2001:db8::4")],
        &quick_config(),
    );
    assert_eq!(run.report.failed_targets(), 1);
    let ok = run.report.targets.iter().filter(|t| t.error.is_none()).count();
    assert_eq!(ok, 3);
}

#[test]
fn quick_closing_peer_forces_reconnects() {
    let mut peers = HashMap::new();
    peers.insert(
        "192.0.2.5".parse().unwrap(),
        PeerBehavior { close_after_sends: Some(1), ..Default::default() },
    );
    peers.insert("2001:db8::5".parse().unwrap(), PeerBehavior::default());
    let run = run_batch(peers, &[target("t2", "192.0.2.5", "2001:db8::5")], &quick_config());

    let v4 = run.report.targets.iter().find(|t| t.family == IpFamily::V4).unwrap();
    assert!(v4.error.is_none(), "{:?}", v4.error);
    assert!(v4.reconnects >= 1, "no reconnect happened");
    assert!(v4.samples >= 2);
    // reconnect pacing: a closing peer must not trigger a connect storm
    assert!(v4.reconnects <= 8, "{} reconnects in 3 s", v4.reconnects);
}

#[test]
fn fingerprint_change_is_an_anomaly_not_an_overwrite() {
    let mut peers = HashMap::new();
    peers.insert(
        "192.0.2.6".parse().unwrap(),
        PeerBehavior {
            close_after_sends: Some(1),
            reconnect_options: Some(stripped_options()),
            ..Default::default()
        },
    );
    peers.insert("2001:db8::6".parse().unwrap(), PeerBehavior::default());
    let run = run_batch(peers, &[target("t3", "192.0.2.6", "2001:db8::6")], &quick_config());

    let v4 = run.report.targets.iter().find(|t| t.family == IpFamily::V4).unwrap();
    assert_eq!(v4.fingerprint.as_ref().unwrap().as_str(), "MSS-SACK-TS-NOP-WS07");
    assert!(
        v4.anomalies.iter().any(|a| a.contains("MSS-SACK-TS-NOP-WS07 -> MSS")),
        "anomalies: {:?}",
        v4.anomalies
    );

    // the options file holds exactly one fingerprint per target
    let recs = siblink_core::ingest::read_options(&run.options_path).unwrap();
    assert_eq!(recs.iter().filter(|r| r.id == "t3" && r.family == IpFamily::V4).count(), 1);
}

#[test]
fn oversized_batch_is_rejected() {
    let config = ProbeConfig { batch_size: 1, ..quick_config() };
    let targets = vec![
        target("a", "192.0.2.7", "2001:db8::7"),
        target("b", "192.0.2.8", "2001:db8::8"),
    ];
    let net = FakeNet::new(HashMap::new());
    let dir = tempfile::tempdir().unwrap();
    let err = probe_batch(
        &targets,
        &config,
        &FakeTransport { net: Arc::clone(&net) },
        Box::new(FakeSource { net }),
        TraceWriter::create(&dir.path().join("t.jsonl")).unwrap(),
        OptionsWriter::create(&dir.path().join("o.jsonl")).unwrap(),
    )
    .unwrap_err();
    assert!(matches!(err, ProbeError::BatchTooLarge { got: 2, max: 1 }));
}
