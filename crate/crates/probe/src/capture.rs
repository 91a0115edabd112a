//! Passive capture of the probe machine's own flows.
//!
//! TSvals are not exposed by portable socket APIs, so the engine reads its
//! own traffic off the wire: an `AF_PACKET` socket sees every frame, the
//! parser reduces them to TCP segments, and the engine matches them to
//! its connections by ephemeral port.

use std::io;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use crate::packet::{parse_ethernet, TcpSegment};
use crate::ProbeError;

/// A captured segment with its receive timestamp (epoch seconds).
///
/// The timestamp is taken in userland when the frame leaves the capture
/// socket; expect scheduling jitter in the tens of microseconds, well below
/// the path jitter the features already tolerate.
#[derive(Debug, Clone)]
pub struct CapturedSegment {
    pub recv_time: f64,
    pub segment: TcpSegment,
}

/// Source of captured segments. `recv` returns `Ok(None)` on timeout and
/// `Err(ProbeError::CaptureClosed)` when the source is exhausted.
pub trait SegmentSource: Send {
    fn recv(&mut self, timeout: Duration) -> Result<Option<CapturedSegment>, ProbeError>;
}

pub fn now_epoch() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("system clock before epoch")
        .as_secs_f64()
}

/// Live capture on all interfaces via `AF_PACKET`. Requires CAP_NET_RAW.
#[cfg(target_os = "linux")]
pub struct AfPacketSource {
    fd: libc::c_int,
    buf: Vec<u8>,
}

#[cfg(target_os = "linux")]
impl AfPacketSource {
    pub fn open() -> Result<Self, ProbeError> {
        let fd = unsafe {
            libc::socket(
                libc::AF_PACKET,
                libc::SOCK_RAW,
                (libc::ETH_P_ALL as u16).to_be() as libc::c_int,
            )
        };
        if fd < 0 {
            let err = io::Error::last_os_error();
            return Err(ProbeError::CaptureUnavailable(err.to_string()));
        }
        Ok(Self { fd, buf: vec![0u8; 65_536] })
    }

    fn set_timeout(&self, timeout: Duration) -> io::Result<()> {
        let tv = libc::timeval {
            tv_sec: timeout.as_secs() as libc::time_t,
            tv_usec: timeout.subsec_micros() as libc::suseconds_t,
        };
        let rc = unsafe {
            libc::setsockopt(
                self.fd,
                libc::SOL_SOCKET,
                libc::SO_RCVTIMEO,
                &tv as *const _ as *const libc::c_void,
                std::mem::size_of::<libc::timeval>() as libc::socklen_t,
            )
        };
        if rc < 0 {
            Err(io::Error::last_os_error())
        } else {
            Ok(())
        }
    }
}

#[cfg(target_os = "linux")]
impl SegmentSource for AfPacketSource {
    fn recv(&mut self, timeout: Duration) -> Result<Option<CapturedSegment>, ProbeError> {
        self.set_timeout(timeout.max(Duration::from_millis(1)))
            .map_err(|e| ProbeError::CaptureUnavailable(e.to_string()))?;
        loop {
            let mut addr: libc::sockaddr_ll = unsafe { std::mem::zeroed() };
            let mut addr_len = std::mem::size_of::<libc::sockaddr_ll>() as libc::socklen_t;
            let n = unsafe {
                libc::recvfrom(
                    self.fd,
                    self.buf.as_mut_ptr() as *mut libc::c_void,
                    self.buf.len(),
                    0,
                    &mut addr as *mut _ as *mut libc::sockaddr,
                    &mut addr_len,
                )
            };
            let recv_time = now_epoch();
            if n < 0 {
                let err = io::Error::last_os_error();
                return match err.kind() {
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => Ok(None),
                    io::ErrorKind::Interrupted => continue,
                    _ => Err(ProbeError::CaptureUnavailable(err.to_string())),
                };
            }
            // skip our own transmitted copies; loopback delivers each
            // segment again as a received frame
            if addr.sll_pkttype == libc::PACKET_OUTGOING as u8 {
                continue;
            }
            if let Some(segment) = parse_ethernet(&self.buf[..n as usize]) {
                return Ok(Some(CapturedSegment { recv_time, segment }));
            }
        }
    }
}

#[cfg(target_os = "linux")]
impl Drop for AfPacketSource {
    fn drop(&mut self) {
        unsafe { libc::close(self.fd) };
    }
}
