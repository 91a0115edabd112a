//! The probe engine: connects to every target address of a batch in
//! parallel, elicits timestamped segments for the configured duration and
//! appends them to the trace files.
//!
//! Concurrency contract: a bounded worker pool (one in-flight connection
//! per target address, at most `max_parallel` workers), a single capture
//! thread fanning segments out by flow, and one serialized appender per
//! output file.

use std::collections::{HashMap, VecDeque};
use std::net::IpAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use siblink_core::ingest::{OptionsRecord, OptionsWriter, TraceRecord, TraceWriter};
use siblink_core::{canonicalize_options, IpFamily, OptionsFingerprint};

use crate::capture::{CapturedSegment, SegmentSource};
use crate::drift::ClockDriftMonitor;
use crate::transport::{Connection, Transport};
use crate::{ProbeConfig, ProbeError};

/// One candidate pair to measure; both addresses go into the same batch.
#[derive(Debug, Clone)]
pub struct ProbeTarget {
    pub id: String,
    pub ip4: IpAddr,
    pub ip6: IpAddr,
}

/// Per-address outcome of a batch.
#[derive(Debug, Clone)]
pub struct TargetReport {
    pub id: String,
    pub ip: String,
    pub family: IpFamily,
    pub samples: usize,
    pub fingerprint: Option<OptionsFingerprint>,
    pub reconnects: usize,
    /// Observations that do not abort the target, e.g. a fingerprint that
    /// changed between connections.
    pub anomalies: Vec<String>,
    pub error: Option<ProbeError>,
}

#[derive(Debug)]
pub struct BatchReport {
    pub targets: Vec<TargetReport>,
    /// Local clock adjustment observed across the run, when concerning.
    pub clock_warning: Option<String>,
}

impl BatchReport {
    pub fn failed_targets(&self) -> usize {
        self.targets.iter().filter(|t| t.error.is_some()).count()
    }
}

/// Segments are matched to connections by (remote address, local port).
type FlowKey = (IpAddr, u16);

struct Dispatcher {
    flows: Mutex<HashMap<FlowKey, Sender<CapturedSegment>>>,
    /// Short replay buffer: a SYN-ACK can hit the capture socket before the
    /// worker has registered its flow.
    recent: Mutex<VecDeque<CapturedSegment>>,
}

const REPLAY_DEPTH: usize = 4096;

impl Dispatcher {
    fn new() -> Self {
        Self { flows: Mutex::new(HashMap::new()), recent: Mutex::new(VecDeque::new()) }
    }

    fn register(&self, key: FlowKey) -> Receiver<CapturedSegment> {
        let (tx, rx) = std::sync::mpsc::channel();
        for seg in self.recent.lock().unwrap().iter() {
            if (seg.segment.src, seg.segment.dst_port) == key {
                let _ = tx.send(seg.clone());
            }
        }
        self.flows.lock().unwrap().insert(key, tx);
        rx
    }

    fn unregister(&self, key: FlowKey) {
        self.flows.lock().unwrap().remove(&key);
    }

    fn dispatch(&self, seg: CapturedSegment) {
        {
            let mut recent = self.recent.lock().unwrap();
            if recent.len() == REPLAY_DEPTH {
                recent.pop_front();
            }
            recent.push_back(seg.clone());
        }
        let key = (seg.segment.src, seg.segment.dst_port);
        if let Some(tx) = self.flows.lock().unwrap().get(&key) {
            let _ = tx.send(seg);
        }
    }
}

struct Sinks {
    traces: Mutex<TraceWriter>,
    options: Mutex<OptionsWriter>,
}

struct WorkItem {
    id: String,
    ip: IpAddr,
    family: IpFamily,
}

/// Probes every address of `targets` for `config.duration_s`, writing
/// samples and handshake fingerprints through the given writers.
///
/// Per-target failures (timeouts, missing timestamp options, resets) are
/// recorded in the report and never abort the batch.
pub fn probe_batch<T: Transport>(
    targets: &[ProbeTarget],
    config: &ProbeConfig,
    transport: &T,
    source: Box<dyn SegmentSource>,
    traces: TraceWriter,
    options: OptionsWriter,
) -> Result<BatchReport, ProbeError> {
    config.validate()?;
    if targets.len() > config.batch_size {
        return Err(ProbeError::BatchTooLarge { got: targets.len(), max: config.batch_size });
    }

    let monitor = ClockDriftMonitor::start();
    let dispatcher = Arc::new(Dispatcher::new());
    let stop = Arc::new(AtomicBool::new(false));
    let sinks = Sinks { traces: Mutex::new(traces), options: Mutex::new(options) };

    let queue: Mutex<VecDeque<WorkItem>> = Mutex::new(
        targets
            .iter()
            .flat_map(|t| {
                [
                    WorkItem { id: t.id.clone(), ip: t.ip4, family: IpFamily::V4 },
                    WorkItem { id: t.id.clone(), ip: t.ip6, family: IpFamily::V6 },
                ]
            })
            .collect(),
    );
    let reports: Mutex<Vec<TargetReport>> = Mutex::new(Vec::new());

    std::thread::scope(|scope| {
        let capture_dispatcher = Arc::clone(&dispatcher);
        let capture_stop = Arc::clone(&stop);
        let mut source = source;
        scope.spawn(move || {
            while !capture_stop.load(Ordering::Relaxed) {
                match source.recv(Duration::from_millis(200)) {
                    Ok(Some(seg)) => capture_dispatcher.dispatch(seg),
                    Ok(None) => {}
                    Err(e) => {
                        debug!("capture ended: {e}");
                        break;
                    }
                }
            }
        });

        let worker_count = config.max_parallel.max(1).min(targets.len() * 2).max(1);
        for _ in 0..worker_count {
            scope.spawn(|| loop {
                let item = match queue.lock().unwrap().pop_front() {
                    Some(item) => item,
                    None => break,
                };
                let report = probe_one(&item, config, transport, &dispatcher, &sinks);
                reports.lock().unwrap().push(report);
            });
        }
        // worker scope ends when the queue drains
    });
    stop.store(true, Ordering::Relaxed);

    sinks.traces.lock().unwrap().flush().map_err(|e| ProbeError::Io(e.to_string()))?;
    sinks.options.lock().unwrap().flush().map_err(|e| ProbeError::Io(e.to_string()))?;

    let mut targets_out = reports.into_inner().unwrap();
    targets_out.sort_by(|a, b| (&a.id, a.family).cmp(&(&b.id, b.family)));
    let clock_warning = monitor.warning();
    if let Some(w) = &clock_warning {
        warn!("{w}");
    }
    Ok(BatchReport { targets: targets_out, clock_warning })
}

fn http_request(config: &ProbeConfig, ip: IpAddr) -> Vec<u8> {
    let host = match ip {
        IpAddr::V4(v4) => v4.to_string(),
        IpAddr::V6(v6) => format!("[{v6}]"),
    };
    format!(
        "GET {} HTTP/1.1\r\nHost: {}\r\nUser-Agent: {}\r\nAccept: */*\r\nConnection: keep-alive\r\n\r\n",
        config.request_path, host, config.user_agent
    )
    .into_bytes()
}

fn probe_one<T: Transport>(
    item: &WorkItem,
    config: &ProbeConfig,
    transport: &T,
    dispatcher: &Dispatcher,
    sinks: &Sinks,
) -> TargetReport {
    let mut report = TargetReport {
        id: item.id.clone(),
        ip: item.ip.to_string(),
        family: item.family,
        samples: 0,
        fingerprint: None,
        reconnects: 0,
        anomalies: Vec::new(),
        error: None,
    };
    let connect_timeout = Duration::from_secs_f64(config.connect_timeout_s);
    let keepalive_idle = Duration::from_secs_f64(config.min_sample_interval_s.max(1.0));
    let request = http_request(config, item.ip);
    let deadline = Instant::now() + Duration::from_secs_f64(config.duration_s);
    // a target is abandoned after this many consecutive failed connects
    const MAX_CONNECT_FAILURES: usize = 3;

    let mut conn = match transport.connect(item.ip, config.port, connect_timeout) {
        Ok(c) => c,
        Err(e) => {
            report.error = Some(e);
            return report;
        }
    };
    let mut key: FlowKey = (item.ip, conn.local_port());
    let mut rx = dispatcher.register(key);
    if conn.set_keepalive(keepalive_idle).is_err() {
        debug!("{}: keepalive not available", item.ip);
    }
    if let Err(e) = conn.send(&request) {
        dispatcher.unregister(key);
        report.error = Some(e);
        return report;
    }

    let quiet_limit = Duration::from_secs_f64(config.min_sample_interval_s * 2.0);
    // paces reconnects so an instantly-closing peer cannot trigger a
    // connect storm
    let reconnect_gap = Duration::from_secs_f64(config.min_sample_interval_s / 2.0);
    let mut last_reconnect: Option<Instant> = None;
    let mut connect_failures = 0usize;
    loop {
        let now = Instant::now();
        if now >= deadline {
            break;
        }
        let timeout = quiet_limit.min(deadline - now);
        match rx.recv_timeout(timeout) {
            Ok(captured) => {
                let seg = &captured.segment;
                if seg.syn && seg.ack {
                    let fp = canonicalize_options(&seg.options);
                    match &report.fingerprint {
                        None => {
                            if seg.tsval.is_none() {
                                report.error =
                                    Some(ProbeError::NoTimestampOption { ip: report.ip.clone() });
                                break;
                            }
                            let _ = sinks.options.lock().unwrap().append(&OptionsRecord {
                                id: item.id.clone(),
                                family: item.family,
                                fingerprint: fp.clone(),
                            });
                            report.fingerprint = Some(fp);
                        }
                        Some(existing) if *existing != fp => {
                            // never silently overwritten; varying options are
                            // exactly what middleboxes produce
                            report.anomalies.push(format!(
                                "fingerprint changed on reconnect: {existing} -> {fp}"
                            ));
                        }
                        Some(_) => {}
                    }
                }
                if let Some(tsval) = seg.tsval {
                    let record = TraceRecord {
                        id: item.id.clone(),
                        family: item.family,
                        ip: report.ip.clone(),
                        tsval,
                        recv_time: captured.recv_time,
                    };
                    if sinks.traces.lock().unwrap().append(&record).is_ok() {
                        report.samples += 1;
                    }
                }
                if seg.rst || seg.fin {
                    pace_reconnect(&mut last_reconnect, reconnect_gap, deadline);
                    if Instant::now() >= deadline {
                        break;
                    }
                    match reconnect(item, config, transport, dispatcher, &mut key, &request) {
                        Ok(new_conn) => {
                            conn = new_conn;
                            rx = dispatcher.register(key);
                            let _ = conn.set_keepalive(keepalive_idle);
                            report.reconnects += 1;
                            connect_failures = 0;
                        }
                        Err(e) => {
                            connect_failures += 1;
                            if connect_failures >= MAX_CONNECT_FAILURES {
                                report.error = Some(if seg.rst {
                                    ProbeError::ResetByPeer { ip: report.ip.clone() }
                                } else {
                                    e
                                });
                                break;
                            }
                        }
                    }
                }
            }
            Err(RecvTimeoutError::Timeout) => {
                if conn.is_closed() {
                    pace_reconnect(&mut last_reconnect, reconnect_gap, deadline);
                    if Instant::now() >= deadline {
                        break;
                    }
                    match reconnect(item, config, transport, dispatcher, &mut key, &request) {
                        Ok(new_conn) => {
                            conn = new_conn;
                            rx = dispatcher.register(key);
                            let _ = conn.set_keepalive(keepalive_idle);
                            report.reconnects += 1;
                            connect_failures = 0;
                        }
                        Err(e) => {
                            connect_failures += 1;
                            if connect_failures >= MAX_CONNECT_FAILURES {
                                report.error = Some(e);
                                break;
                            }
                        }
                    }
                } else {
                    // quiet connection; one fresh request per quiet period
                    let _ = conn.send(&request);
                }
            }
            Err(RecvTimeoutError::Disconnected) => break,
        }
    }
    dispatcher.unregister(key);
    info!(
        "{} v{}: {} samples, {} reconnects",
        report.ip,
        report.family,
        report.samples,
        report.reconnects
    );
    report
}

fn pace_reconnect(last: &mut Option<Instant>, gap: Duration, deadline: Instant) {
    let now = Instant::now();
    if let Some(prev) = *last {
        let since = now.duration_since(prev);
        if since < gap {
            let wait = (gap - since).min(deadline.saturating_duration_since(now));
            std::thread::sleep(wait);
        }
    }
    *last = Some(Instant::now());
}

fn reconnect<T: Transport>(
    item: &WorkItem,
    config: &ProbeConfig,
    transport: &T,
    dispatcher: &Dispatcher,
    key: &mut FlowKey,
    request: &[u8],
) -> Result<T::Conn, ProbeError> {
    dispatcher.unregister(*key);
    let mut conn = transport.connect(
        item.ip,
        config.port,
        Duration::from_secs_f64(config.connect_timeout_s),
    )?;
    *key = (item.ip, conn.local_port());
    conn.send(request)?;
    Ok(conn)
}
