//! Connection plumbing behind the probe engine, abstracted so the engine
//! can run against a scripted fake in tests.

use std::io::{self, Read, Write};
use std::net::{IpAddr, SocketAddr, TcpStream};
use std::time::Duration;

use crate::ProbeError;

pub trait Connection: Send {
    fn local_port(&self) -> u16;
    fn send(&mut self, bytes: &[u8]) -> Result<(), ProbeError>;
    /// Enables TCP keepalive with the given idle time so the peer keeps
    /// producing timestamped segments without new requests.
    fn set_keepalive(&mut self, idle: Duration) -> Result<(), ProbeError>;
    /// True once the peer has closed or reset the connection.
    fn is_closed(&mut self) -> bool;
}

pub trait Transport: Send + Sync {
    type Conn: Connection;

    fn connect(&self, addr: IpAddr, port: u16, timeout: Duration) -> Result<Self::Conn, ProbeError>;
}

/// Real sockets.
pub struct TcpTransport;

pub struct TcpConnection {
    stream: TcpStream,
    local_port: u16,
}

impl Transport for TcpTransport {
    type Conn = TcpConnection;

    fn connect(
        &self,
        addr: IpAddr,
        port: u16,
        timeout: Duration,
    ) -> Result<TcpConnection, ProbeError> {
        let sockaddr = SocketAddr::new(addr, port);
        let stream = TcpStream::connect_timeout(&sockaddr, timeout)
            .map_err(|e| ProbeError::Connect { ip: addr.to_string(), message: e.to_string() })?;
        let local_port = stream
            .local_addr()
            .map_err(|e| ProbeError::Connect { ip: addr.to_string(), message: e.to_string() })?
            .port();
        stream.set_nonblocking(true).ok();
        Ok(TcpConnection { stream, local_port })
    }
}

impl Connection for TcpConnection {
    fn local_port(&self) -> u16 {
        self.local_port
    }

    fn send(&mut self, bytes: &[u8]) -> Result<(), ProbeError> {
        // the stream is non-blocking; tiny request payloads fit the send
        // buffer, so a WouldBlock here means something is genuinely wrong
        match self.stream.write_all(bytes) {
            Ok(()) => Ok(()),
            Err(e) => Err(ProbeError::Io(e.to_string())),
        }
    }

    fn set_keepalive(&mut self, idle: Duration) -> Result<(), ProbeError> {
        use std::os::fd::AsRawFd;
        let fd = self.stream.as_raw_fd();
        let idle_secs = idle.as_secs().max(1) as libc::c_int;
        let on: libc::c_int = 1;
        let set = |level: libc::c_int, name: libc::c_int, value: libc::c_int| -> io::Result<()> {
            let rc = unsafe {
                libc::setsockopt(
                    fd,
                    level,
                    name,
                    &value as *const _ as *const libc::c_void,
                    std::mem::size_of::<libc::c_int>() as libc::socklen_t,
                )
            };
            if rc < 0 {
                Err(io::Error::last_os_error())
            } else {
                Ok(())
            }
        };
        set(libc::SOL_SOCKET, libc::SO_KEEPALIVE, on)
            .and_then(|_| set(libc::IPPROTO_TCP, libc::TCP_KEEPIDLE, idle_secs))
            .and_then(|_| set(libc::IPPROTO_TCP, libc::TCP_KEEPINTVL, idle_secs))
            .and_then(|_| set(libc::IPPROTO_TCP, libc::TCP_KEEPCNT, 3))
            .map_err(|e| ProbeError::Io(e.to_string()))
    }

    fn is_closed(&mut self) -> bool {
        let mut buf = [0u8; 512];
        loop {
            match self.stream.read(&mut buf) {
                Ok(0) => return true, // orderly close
                Ok(_) => continue,    // drain response bytes
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => return false,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(_) => return true, // reset
            }
        }
    }
}
