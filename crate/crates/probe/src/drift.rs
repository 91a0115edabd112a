//! Detection of local clock discipline activity during a measurement.
//!
//! The offset features are relative to the probe machine's own clock; a
//! stepping or slewing local clock (ntpd) injects non-linear offsets into
//! every target at once. CLOCK_MONOTONIC_RAW is immune to NTP, so the gap
//! between it and CLOCK_REALTIME exposes adjustments made while a batch
//! was running.

#[cfg(target_os = "linux")]
fn clock_seconds(clock: libc::clockid_t) -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    let rc = unsafe { libc::clock_gettime(clock, &mut ts) };
    assert_eq!(rc, 0, "clock_gettime failed");
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

pub struct ClockDriftMonitor {
    realtime_start: f64,
    raw_start: f64,
}

/// Adjustments smaller than this are indistinguishable from scheduling
/// noise over a multi-hour run.
pub const DRIFT_WARN_THRESHOLD_S: f64 = 0.05;

impl ClockDriftMonitor {
    #[cfg(target_os = "linux")]
    pub fn start() -> Self {
        Self {
            realtime_start: clock_seconds(libc::CLOCK_REALTIME),
            raw_start: clock_seconds(libc::CLOCK_MONOTONIC_RAW),
        }
    }

    /// Net wall-clock adjustment since `start()`, seconds.
    #[cfg(target_os = "linux")]
    pub fn drift(&self) -> f64 {
        let realtime = clock_seconds(libc::CLOCK_REALTIME) - self.realtime_start;
        let raw = clock_seconds(libc::CLOCK_MONOTONIC_RAW) - self.raw_start;
        realtime - raw
    }

    pub fn warning(&self) -> Option<String> {
        #[cfg(target_os = "linux")]
        {
            let drift = self.drift();
            if drift.abs() > DRIFT_WARN_THRESHOLD_S {
                return Some(format!(
                    "local clock was adjusted by {drift:.3}s during the run; \
                     disable the time-sync daemon for measurements"
                ));
            }
        }
        None
    }
}
