//! Two-process transport over a Unix `SOCK_SEQPACKET` socket.
//!
//! Each frame is one packet. Sends never block: when the peer's queue is
//! full the frame is dropped and counted. Receivers drain every queued
//! packet and keep only the newest report or policy.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::os::fd::{AsRawFd, RawFd};
use std::os::unix::fs::FileTypeExt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use socket2::{Domain, SockAddr, Socket, Type};

use super::link::{LinkError, RanEndpoint, RicEndpoint};
use super::mailbox::Received;
use super::msg::{AppStateMsg, PolicyMsg, ReportMsg, Rnti};
use super::wire::{self, Frame};

const MAX_PACKET: usize = 1 << 20;

/// Waits until `fd` is readable or hung up. `None` waits forever.
fn wait_readable(fd: RawFd, deadline: Option<Instant>) -> io::Result<bool> {
    let mut pfd = libc::pollfd {
        fd,
        events: libc::POLLIN,
        revents: 0,
    };
    loop {
        let ts = deadline.map(|d| {
            let rem = d.saturating_duration_since(Instant::now());
            libc::timespec {
                tv_sec: rem.as_secs() as libc::time_t,
                tv_nsec: rem.subsec_nanos() as libc::c_long,
            }
        });
        let tsp = ts
            .as_ref()
            .map_or(std::ptr::null(), |t| t as *const libc::timespec);
        // SAFETY: pfd and ts outlive the call; a null sigmask keeps the
        // current mask.
        let r = unsafe { libc::ppoll(&mut pfd, 1, tsp, std::ptr::null()) };
        if r < 0 {
            let e = io::Error::last_os_error();
            if e.kind() == io::ErrorKind::Interrupted {
                continue;
            }
            return Err(e);
        }
        return Ok(r > 0);
    }
}

fn is_disconnect(e: &io::Error) -> bool {
    matches!(
        e.raw_os_error(),
        Some(libc::EPIPE) | Some(libc::ECONNRESET) | Some(libc::ENOTCONN)
    )
}

/// One connected seqpacket socket with reusable buffers.
struct Channel {
    sock: Socket,
    tx: Vec<u8>,
    rx: Vec<u8>,
    dropped_sends: u64,
}

impl Channel {
    fn new(sock: Socket) -> Self {
        Channel {
            sock,
            tx: Vec::with_capacity(4096),
            rx: vec![0; MAX_PACKET],
            dropped_sends: 0,
        }
    }

    fn fd(&self) -> RawFd {
        self.sock.as_raw_fd()
    }

    /// Sends the frame in `self.tx`.
    fn send_tx(&mut self) -> Result<(), LinkError> {
        // SAFETY: the pointer and length describe the live tx buffer.
        let n = unsafe {
            libc::send(
                self.fd(),
                self.tx.as_ptr().cast(),
                self.tx.len(),
                libc::MSG_DONTWAIT | libc::MSG_NOSIGNAL,
            )
        };
        if n >= 0 {
            return Ok(());
        }
        let e = io::Error::last_os_error();
        if e.kind() == io::ErrorKind::WouldBlock {
            self.dropped_sends += 1;
            Ok(())
        } else if is_disconnect(&e) {
            Err(LinkError::Closed)
        } else {
            Err(e.into())
        }
    }

    /// Reads one packet. `Ok(None)` means nothing is queued (only possible
    /// with `MSG_DONTWAIT`); end of stream is `Err(Closed)`.
    fn recv(&mut self, flags: libc::c_int) -> Result<Option<Frame>, LinkError> {
        loop {
            // SAFETY: the pointer and length describe the live rx buffer.
            let n = unsafe {
                libc::recv(
                    self.fd(),
                    self.rx.as_mut_ptr().cast(),
                    self.rx.len(),
                    flags | libc::MSG_TRUNC,
                )
            };
            if n < 0 {
                let e = io::Error::last_os_error();
                return match e.kind() {
                    io::ErrorKind::Interrupted => continue,
                    io::ErrorKind::WouldBlock => Ok(None),
                    _ if is_disconnect(&e) => Err(LinkError::Closed),
                    _ => Err(e.into()),
                };
            }
            let n = n as usize;
            if n == 0 {
                return Err(LinkError::Closed);
            }
            if n > self.rx.len() {
                return Err(LinkError::Io(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("packet of {n} bytes exceeds {MAX_PACKET}"),
                )));
            }
            return Ok(Some(wire::decode(&self.rx[..n])?));
        }
    }

    fn try_recv(&mut self) -> Result<Option<Frame>, LinkError> {
        self.recv(libc::MSG_DONTWAIT)
    }

    fn recv_blocking(&mut self) -> Result<Frame, LinkError> {
        loop {
            if let Some(f) = self.recv(0)? {
                return Ok(f);
            }
        }
    }

    fn send_close(&mut self) {
        self.tx.clear();
        wire::encode_close_into(&mut self.tx);
        let _ = self.send_tx();
        let _ = self.sock.shutdown(std::net::Shutdown::Write);
    }
}

/// Listening socket owned by the RAN. The socket file is removed on drop.
pub struct SeqPacketListener {
    sock: Socket,
    path: PathBuf,
}

impl SeqPacketListener {
    /// Binds `path`. A stale socket file left by an earlier run is replaced;
    /// any other existing file is an error.
    pub fn bind(path: &Path) -> io::Result<Self> {
        if let Ok(meta) = fs::symlink_metadata(path) {
            if meta.file_type().is_socket() {
                fs::remove_file(path)?;
            } else {
                return Err(io::Error::new(
                    io::ErrorKind::AlreadyExists,
                    format!("{} exists and is not a socket", path.display()),
                ));
            }
        }
        let sock = Socket::new(Domain::UNIX, Type::SEQPACKET, None)?;
        sock.bind(&SockAddr::unix(path)?)?;
        sock.listen(1)?;
        Ok(SeqPacketListener {
            sock,
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Accepts the RIC connection, giving up after `timeout`.
    pub fn accept_ran(&self, timeout: Duration) -> Result<SocketRan, LinkError> {
        let deadline = Instant::now() + timeout;
        if !wait_readable(self.sock.as_raw_fd(), Some(deadline))? {
            return Err(LinkError::Io(io::Error::new(
                io::ErrorKind::TimedOut,
                "no RIC connected before the accept timeout",
            )));
        }
        let (sock, _) = self.sock.accept()?;
        Ok(SocketRan::new(sock))
    }
}

impl Drop for SeqPacketListener {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Connects the RIC side, retrying until `timeout` while the RAN is not yet
/// listening.
pub fn connect_ric(path: &Path, timeout: Duration) -> Result<SocketRic, LinkError> {
    let deadline = Instant::now() + timeout;
    let addr = SockAddr::unix(path)?;
    loop {
        let sock = Socket::new(Domain::UNIX, Type::SEQPACKET, None)?;
        match sock.connect(&addr) {
            Ok(()) => return Ok(SocketRic::new(sock)),
            Err(e) if Instant::now() < deadline => {
                tracing::debug!("connect {}: {e}; retrying", path.display());
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

pub struct SocketRan {
    chan: Channel,
    stash: Option<Received<PolicyMsg>>,
    closed: bool,
}

impl SocketRan {
    fn new(sock: Socket) -> Self {
        SocketRan {
            chan: Channel::new(sock),
            stash: None,
            closed: false,
        }
    }

    pub fn dropped_sends(&self) -> u64 {
        self.chan.dropped_sends
    }

    fn drain(&mut self) -> Result<(), LinkError> {
        while !self.closed {
            match self.chan.try_recv() {
                Ok(Some(Frame::Policy(msg))) => {
                    self.stash = Some(Received {
                        msg,
                        at: Instant::now(),
                    })
                }
                Ok(Some(Frame::Close)) | Err(LinkError::Closed) => self.closed = true,
                Ok(Some(Frame::Report(_))) => return Err(LinkError::Unexpected("report")),
                Ok(Some(Frame::AppState(_))) => return Err(LinkError::Unexpected("app state")),
                Ok(None) => break,
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    fn send(&mut self) -> Result<(), LinkError> {
        if self.closed {
            return Err(LinkError::Closed);
        }
        self.chan.send_tx().inspect_err(|e| {
            if matches!(e, LinkError::Closed) {
                self.closed = true;
            }
        })
    }
}

impl RanEndpoint for SocketRan {
    fn publish_report(&mut self, msg: ReportMsg) -> Result<(), LinkError> {
        self.chan.tx.clear();
        wire::encode_report_into(&msg, &mut self.chan.tx);
        self.send()
    }

    fn publish_app_state(&mut self, msg: AppStateMsg) -> Result<(), LinkError> {
        self.chan.tx.clear();
        wire::encode_app_state_into(&msg, &mut self.chan.tx);
        self.send()
    }

    fn poll_policy(&mut self) -> Result<Option<Received<PolicyMsg>>, LinkError> {
        self.drain()?;
        match self.stash.take() {
            Some(r) => Ok(Some(r)),
            None if self.closed => Err(LinkError::Closed),
            None => Ok(None),
        }
    }

    fn wait_until(&mut self, deadline: Instant) -> Result<(), LinkError> {
        loop {
            if self.closed {
                let now = Instant::now();
                if deadline > now {
                    std::thread::sleep(deadline - now);
                }
                return Ok(());
            }
            if !wait_readable(self.chan.fd(), Some(deadline))? {
                return Ok(());
            }
            self.drain()?;
        }
    }

    fn close(&mut self) {
        if !self.closed {
            self.chan.send_close();
            self.closed = true;
        }
    }
}

pub struct SocketRic {
    chan: Channel,
    report: Option<ReportMsg>,
    app_states: BTreeMap<Rnti, AppStateMsg>,
    closed: bool,
}

impl SocketRic {
    fn new(sock: Socket) -> Self {
        SocketRic {
            chan: Channel::new(sock),
            report: None,
            app_states: BTreeMap::new(),
            closed: false,
        }
    }

    pub fn dropped_sends(&self) -> u64 {
        self.chan.dropped_sends
    }

    fn absorb(&mut self, frame: Frame) -> Result<(), LinkError> {
        match frame {
            Frame::Report(r) => self.report = Some(r),
            Frame::AppState(a) => {
                self.app_states.insert(a.rnti, a);
            }
            Frame::Close => self.closed = true,
            Frame::Policy(_) => return Err(LinkError::Unexpected("policy")),
        }
        Ok(())
    }

    fn drain(&mut self) -> Result<(), LinkError> {
        while !self.closed {
            match self.chan.try_recv() {
                Ok(Some(f)) => self.absorb(f)?,
                Ok(None) => break,
                Err(LinkError::Closed) => self.closed = true,
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }
}

impl RicEndpoint for SocketRic {
    fn recv_report(&mut self) -> Result<ReportMsg, LinkError> {
        loop {
            self.drain()?;
            if let Some(r) = self.report.take() {
                return Ok(r);
            }
            if self.closed {
                return Err(LinkError::Closed);
            }
            match self.chan.recv_blocking() {
                Ok(f) => self.absorb(f)?,
                Err(LinkError::Closed) => self.closed = true,
                Err(e) => return Err(e),
            }
        }
    }

    fn try_recv_report(&mut self) -> Result<Option<ReportMsg>, LinkError> {
        self.drain()?;
        match self.report.take() {
            Some(r) => Ok(Some(r)),
            None if self.closed => Err(LinkError::Closed),
            None => Ok(None),
        }
    }

    fn poll_app_states(&mut self, out: &mut Vec<AppStateMsg>) -> Result<(), LinkError> {
        self.drain()?;
        out.extend(std::mem::take(&mut self.app_states).into_values());
        Ok(())
    }

    fn publish_policy(&mut self, msg: PolicyMsg) -> Result<(), LinkError> {
        if self.closed {
            return Err(LinkError::Closed);
        }
        self.chan.tx.clear();
        wire::encode_policy_into(&msg, &mut self.chan.tx);
        self.chan.send_tx().inspect_err(|e| {
            if matches!(e, LinkError::Closed) {
                self.closed = true;
            }
        })
    }
}
