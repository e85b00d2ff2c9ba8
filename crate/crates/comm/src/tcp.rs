//! Full-mesh TCP backend.
//!
//! Bring-up: rank 0 listens on the coordinator address. Every other rank
//! binds its own listener, connects to the coordinator, sends a hello frame
//! followed by an [`ADDRESS_TAG`] frame with its listen address, and waits
//! for the address table. Rank `j` then connects to every rank `0 < i < j`
//! and accepts connections from every rank `k > j`. Each connection starts
//! with a hello frame naming the connecting rank.

use std::io::{self, BufReader, ErrorKind, Write};
use std::net::{IpAddr, Ipv4Addr, Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{CommError, Result};
use crate::frame::{encode_header, read_frame, write_frame, Frame, ADDRESS_TAG, HELLO_TAG};
use crate::mailbox::Mailbox;
use crate::transport::{AbortHandle, Transport};
use crate::DEFAULT_BUFFER_CAP;

/// Payloads up to this size are written together with their header.
const COALESCE_LIMIT: usize = 64 * 1024;

#[derive(Debug, Clone)]
pub struct TcpConfig {
    pub rank: usize,
    pub size: usize,
    /// Address rank 0 listens on and every other rank connects to first.
    pub coordinator: SocketAddr,
    /// Interface the per-rank listeners bind to (ranks other than 0).
    pub bind_host: IpAddr,
    pub timeout: Duration,
    pub buffer_cap: usize,
}

impl TcpConfig {
    pub fn new(rank: usize, size: usize, coordinator: SocketAddr) -> Self {
        TcpConfig {
            rank,
            size,
            coordinator,
            bind_host: IpAddr::V4(Ipv4Addr::UNSPECIFIED),
            timeout: Duration::from_secs(30),
            buffer_cap: DEFAULT_BUFFER_CAP,
        }
    }
}

#[derive(Debug)]
pub(crate) struct TcpEndpoint {
    rank: usize,
    mailbox: Arc<Mailbox>,
    peers: Vec<Option<Mutex<TcpStream>>>,
}

impl TcpEndpoint {
    /// Runs the bring-up protocol. `listener` overrides binding the
    /// coordinator address on rank 0.
    pub(crate) fn connect(cfg: &TcpConfig, listener: Option<TcpListener>) -> Result<TcpEndpoint> {
        if cfg.size == 0 || cfg.rank >= cfg.size {
            return Err(CommError::RankOutOfRange { rank: cfg.rank, size: cfg.size });
        }
        let deadline = Instant::now() + cfg.timeout;
        let streams = if cfg.rank == 0 {
            let listener = match listener {
                Some(l) => l,
                None => TcpListener::bind(cfg.coordinator)?,
            };
            bootstrap_coordinator(cfg, &listener, deadline)?
        } else {
            bootstrap_worker(cfg, deadline)?
        };

        let mailbox = Arc::new(Mailbox::new(cfg.size, cfg.buffer_cap));
        let mut peers = Vec::with_capacity(cfg.size);
        for (peer, stream) in streams.into_iter().enumerate() {
            let Some(stream) = stream else {
                peers.push(None);
                continue;
            };
            stream.set_nodelay(true)?;
            stream.set_read_timeout(None)?;
            let reader = stream.try_clone()?;
            let mb = Arc::clone(&mailbox);
            let rank = cfg.rank;
            thread::Builder::new()
                .name(format!("mhb-rx-{rank}-{peer}"))
                .spawn(move || reader_loop(reader, peer, &mb))?;
            peers.push(Some(Mutex::new(stream)));
        }
        Ok(TcpEndpoint { rank: cfg.rank, mailbox, peers })
    }
}

fn reader_loop(stream: TcpStream, peer: usize, mailbox: &Mailbox) {
    let mut reader = BufReader::with_capacity(256 * 1024, stream);
    loop {
        match read_frame(&mut reader) {
            Ok(Some(frame)) => {
                if frame.source as usize != peer {
                    mailbox.abort(&format!(
                        "frame from connection to rank {peer} claims source {}",
                        frame.source
                    ));
                    return;
                }
                if mailbox.deliver(peer, frame.tag, frame.payload).is_err() {
                    return;
                }
            }
            Ok(None) => break,
            Err(e) => {
                log::warn!("connection to rank {peer} failed: {e}");
                break;
            }
        }
    }
    mailbox.close_source(peer);
}

fn bootstrap_coordinator(
    cfg: &TcpConfig,
    listener: &TcpListener,
    deadline: Instant,
) -> Result<Vec<Option<TcpStream>>> {
    let mut streams: Vec<Option<TcpStream>> = (0..cfg.size).map(|_| None).collect();
    let mut addrs = vec![String::new(); cfg.size];
    addrs[0] = listener.local_addr()?.to_string();
    for _ in 1..cfg.size {
        let mut s = accept_until(listener, deadline, cfg.timeout)?;
        let peer = read_hello(&mut s, deadline, cfg.timeout, 1..cfg.size)?;
        if streams[peer].is_some() {
            return Err(CommError::Bootstrap(format!("rank {peer} connected twice")));
        }
        let frame = expect_frame(&mut s, deadline, cfg.timeout)?;
        if frame.tag != ADDRESS_TAG || frame.source as usize != peer {
            return Err(CommError::Bootstrap(format!("rank {peer} did not register an address")));
        }
        addrs[peer] = String::from_utf8(frame.payload)
            .map_err(|_| CommError::Bootstrap(format!("rank {peer} sent a non-UTF-8 address")))?;
        streams[peer] = Some(s);
    }
    let table = addrs.join("\n");
    for s in streams.iter_mut().flatten() {
        write_frame(s, 0, ADDRESS_TAG, table.as_bytes())?;
    }
    Ok(streams)
}

fn bootstrap_worker(cfg: &TcpConfig, deadline: Instant) -> Result<Vec<Option<TcpStream>>> {
    let listener = TcpListener::bind((cfg.bind_host, 0))?;
    let port = listener.local_addr()?.port();
    let mut streams: Vec<Option<TcpStream>> = (0..cfg.size).map(|_| None).collect();

    let mut coord = connect_until(cfg.coordinator, deadline, cfg.timeout)?;
    let advertised = SocketAddr::new(coord.local_addr()?.ip(), port);
    write_frame(&mut coord, cfg.rank as u32, HELLO_TAG, &[])?;
    write_frame(&mut coord, cfg.rank as u32, ADDRESS_TAG, advertised.to_string().as_bytes())?;
    let table = expect_frame(&mut coord, deadline, cfg.timeout)?;
    if table.tag != ADDRESS_TAG || table.source != 0 {
        return Err(CommError::Bootstrap("expected address table from rank 0".into()));
    }
    let table = String::from_utf8(table.payload)
        .map_err(|_| CommError::Bootstrap("address table is not UTF-8".into()))?;
    let addrs = table
        .lines()
        .map(|l| l.parse::<SocketAddr>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| CommError::Bootstrap(format!("bad address table: {e}")))?;
    if addrs.len() != cfg.size {
        return Err(CommError::Bootstrap(format!(
            "address table has {} entries, expected {}",
            addrs.len(),
            cfg.size
        )));
    }
    streams[0] = Some(coord);

    for (peer, addr) in addrs.iter().enumerate().take(cfg.rank).skip(1) {
        let mut s = connect_until(*addr, deadline, cfg.timeout)?;
        write_frame(&mut s, cfg.rank as u32, HELLO_TAG, &[])?;
        streams[peer] = Some(s);
    }
    for _ in cfg.rank + 1..cfg.size {
        let mut s = accept_until(&listener, deadline, cfg.timeout)?;
        let peer = read_hello(&mut s, deadline, cfg.timeout, cfg.rank + 1..cfg.size)?;
        if streams[peer].is_some() {
            return Err(CommError::Bootstrap(format!("rank {peer} connected twice")));
        }
        streams[peer] = Some(s);
    }
    Ok(streams)
}

fn remaining(deadline: Instant, timeout: Duration) -> Result<Duration> {
    deadline
        .checked_duration_since(Instant::now())
        .filter(|d| !d.is_zero())
        .ok_or(CommError::Timeout(timeout))
}

fn accept_until(listener: &TcpListener, deadline: Instant, timeout: Duration) -> Result<TcpStream> {
    listener.set_nonblocking(true)?;
    let accepted: Result<TcpStream> = loop {
        match listener.accept() {
            Ok((s, _)) => break Ok(s),
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                remaining(deadline, timeout)?;
                thread::sleep(Duration::from_millis(1));
            }
            Err(e) => break Err(e.into()),
        }
    };
    listener.set_nonblocking(false)?;
    let s = accepted?;
    s.set_nonblocking(false)?;
    Ok(s)
}

fn connect_until(addr: SocketAddr, deadline: Instant, timeout: Duration) -> Result<TcpStream> {
    loop {
        let left = remaining(deadline, timeout)?;
        match TcpStream::connect_timeout(&addr, left.min(Duration::from_secs(1))) {
            Ok(s) => return Ok(s),
            Err(e)
                if matches!(
                    e.kind(),
                    ErrorKind::ConnectionRefused | ErrorKind::TimedOut | ErrorKind::WouldBlock
                ) =>
            {
                thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

fn expect_frame(s: &mut TcpStream, deadline: Instant, timeout: Duration) -> Result<Frame> {
    s.set_read_timeout(Some(remaining(deadline, timeout)?))?;
    match read_frame(s) {
        Ok(Some(f)) => Ok(f),
        Ok(None) => Err(CommError::Bootstrap("peer closed during bring-up".into())),
        Err(CommError::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
            Err(CommError::Timeout(timeout))
        }
        Err(e) => Err(e),
    }
}

fn read_hello(
    s: &mut TcpStream,
    deadline: Instant,
    timeout: Duration,
    expected: std::ops::Range<usize>,
) -> Result<usize> {
    let frame = expect_frame(s, deadline, timeout)?;
    let peer = frame.source as usize;
    if frame.tag != HELLO_TAG || !frame.payload.is_empty() {
        return Err(CommError::Bootstrap(format!("expected hello frame, got tag {:#x}", frame.tag)));
    }
    if !expected.contains(&peer) {
        return Err(CommError::Bootstrap(format!(
            "unexpected hello from rank {peer} (expected {expected:?})"
        )));
    }
    Ok(peer)
}

impl Transport for TcpEndpoint {
    fn send(&self, dest: usize, tag: u32, payload: Vec<u8>) -> Result<()> {
        if dest == self.rank {
            return self.mailbox.deliver(dest, tag, payload);
        }
        let stream = self.peers[dest].as_ref().expect("mesh connection to every other rank");
        let mut s = stream.lock().unwrap_or_else(|e| e.into_inner());
        let header = encode_header(self.rank as u32, tag, payload.len() as u64);
        let written: io::Result<()> = if payload.len() <= COALESCE_LIMIT {
            let mut buf = Vec::with_capacity(header.len() + payload.len());
            buf.extend_from_slice(&header);
            buf.extend_from_slice(&payload);
            s.write_all(&buf)
        } else {
            s.write_all(&header).and_then(|_| s.write_all(&payload))
        };
        written.map_err(|e| match e.kind() {
            ErrorKind::BrokenPipe | ErrorKind::ConnectionReset => {
                CommError::Aborted(format!("connection to rank {dest} lost: {e}"))
            }
            _ => e.into(),
        })
    }

    fn recv(&self, source: usize, tag: u32) -> Result<Vec<u8>> {
        self.mailbox.take(source, tag)
    }

    fn abort_handle(&self) -> AbortHandle {
        let mb = Arc::clone(&self.mailbox);
        AbortHandle::new(move |reason| mb.abort(reason))
    }
}

impl Drop for TcpEndpoint {
    fn drop(&mut self) {
        for s in self.peers.iter().flatten() {
            let s = s.lock().unwrap_or_else(|e| e.into_inner());
            let _ = s.shutdown(Shutdown::Write);
        }
        self.mailbox.abort("endpoint closed");
    }
}
