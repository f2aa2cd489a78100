//! TCP fabric: one full-duplex connection per pair of ranks, framed with
//! [`crate::frame`]. A reader thread per link routes frames either to the
//! link's FIFO queue or, between `ASYNC_BEGIN` and `ASYNC_END` control frames,
//! to the coalescing mailbox.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use crate::endpoint::{check_peer, Endpoint, NetError};
use crate::envelope::{control, Envelope, Kind};
use crate::frame::{encode, read_frame, ReadError};
use crate::stats::{payload_bytes, FabricStats};

#[derive(Default)]
struct Mailbox {
    slots: BTreeMap<(u16, Kind), (Envelope, u64)>,
    coalesced: u64,
}

pub struct TcpEndpoint {
    rank: usize,
    size: usize,
    links: Vec<Option<TcpStream>>,
    fifo: Vec<Option<Receiver<Result<Envelope, NetError>>>>,
    mailbox: Arc<Mutex<Mailbox>>,
    clock: Arc<AtomicU64>,
    readers: Vec<JoinHandle<()>>,
    timeout: Duration,
    stats: FabricStats,
}

fn is_control(env: &Envelope, code: u32) -> bool {
    env.kind == Kind::S && env.payload.is_empty() && env.block_index == code
}

fn reader_loop(
    peer: usize,
    mut stream: TcpStream,
    fifo: Sender<Result<Envelope, NetError>>,
    mailbox: Arc<Mutex<Mailbox>>,
    clock: Arc<AtomicU64>,
) {
    let mut to_mailbox = false;
    loop {
        let env = match read_frame(&mut stream) {
            Ok(env) => env,
            Err(ReadError::Io(_)) => {
                let _ = fifo.send(Err(NetError::PeerLost { peer }));
                return;
            }
            Err(ReadError::Frame(e)) => {
                let _ = fifo.send(Err(NetError::Frame(e)));
                return;
            }
        };
        if is_control(&env, control::ASYNC_BEGIN) {
            to_mailbox = true;
        } else if is_control(&env, control::ASYNC_END) {
            to_mailbox = false;
        } else if to_mailbox {
            let now = clock.load(Ordering::SeqCst);
            let mut mb = mailbox.lock().expect("mailbox poisoned");
            if mb.slots.insert((env.sender, env.kind), (env, now)).is_some() {
                mb.coalesced += 1;
            }
        } else if fifo.send(Ok(env)).is_err() {
            return;
        }
    }
}

fn deadline_error(peer: usize) -> NetError {
    NetError::Timeout { peer }
}

fn connect_with_retry(addr: SocketAddr, deadline: Instant, peer: usize) -> Result<TcpStream, NetError> {
    loop {
        match TcpStream::connect_timeout(&addr, Duration::from_millis(200)) {
            Ok(s) => return Ok(s),
            Err(_) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
            Err(_) => return Err(deadline_error(peer)),
        }
    }
}

impl TcpEndpoint {
    /// Binds `addrs[rank]` and connects to every other rank.
    pub fn connect(rank: usize, addrs: &[SocketAddr], timeout: Duration) -> Result<TcpEndpoint, NetError> {
        check_peer(rank, addrs.len())?;
        let listener = TcpListener::bind(addrs[rank])?;
        TcpEndpoint::establish(rank, listener, addrs, timeout)
    }

    /// Lower ranks are dialled, higher ranks are accepted; each dialler
    /// introduces itself with a `HELLO` control frame.
    pub fn establish(rank: usize, listener: TcpListener, addrs: &[SocketAddr], timeout: Duration) -> Result<TcpEndpoint, NetError> {
        let size = addrs.len();
        check_peer(rank, size)?;
        let deadline = Instant::now() + timeout;
        let mut links: Vec<Option<TcpStream>> = (0..size).map(|_| None).collect();
        for (peer, addr) in addrs.iter().enumerate().take(rank) {
            let mut s = connect_with_retry(*addr, deadline, peer)?;
            s.write_all(&encode(&Envelope::control(rank, control::HELLO))?)?;
            links[peer] = Some(s);
        }
        listener.set_nonblocking(true)?;
        let mut expected = size - 1 - rank;
        while expected > 0 {
            match listener.accept() {
                Ok((mut s, _)) => {
                    s.set_nonblocking(false)?;
                    s.set_read_timeout(Some(timeout))?;
                    let hello = read_frame(&mut s).map_err(|e| NetError::Io(e.to_string()))?;
                    s.set_read_timeout(None)?;
                    let peer = hello.sender as usize;
                    if !is_control(&hello, control::HELLO) || peer <= rank || peer >= size || links[peer].is_some() {
                        return Err(NetError::Io(format!("unexpected handshake from rank {peer}")));
                    }
                    links[peer] = Some(s);
                    expected -= 1;
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        let missing = (rank + 1..size).find(|&p| links[p].is_none()).unwrap_or(rank);
                        return Err(deadline_error(missing));
                    }
                    thread::sleep(Duration::from_millis(2));
                }
                Err(e) => return Err(e.into()),
            }
        }

        let mailbox = Arc::new(Mutex::new(Mailbox::default()));
        let clock = Arc::new(AtomicU64::new(0));
        let mut fifo = Vec::with_capacity(size);
        let mut readers = Vec::new();
        for (peer, link) in links.iter().enumerate() {
            match link {
                Some(s) => {
                    s.set_nodelay(true)?;
                    let (tx, rx) = unbounded();
                    let stream = s.try_clone()?;
                    let (mb, ck) = (Arc::clone(&mailbox), Arc::clone(&clock));
                    readers.push(thread::spawn(move || reader_loop(peer, stream, tx, mb, ck)));
                    fifo.push(Some(rx));
                }
                None => fifo.push(None),
            }
        }
        Ok(TcpEndpoint {
            rank,
            size,
            links,
            fifo,
            mailbox,
            clock,
            readers,
            timeout,
            stats: FabricStats::default(),
        })
    }

    fn write_to(&mut self, to: usize, env: &Envelope) -> Result<(), NetError> {
        let bytes = encode(env)?;
        let link = self.links[to].as_mut().ok_or(NetError::BadRank { rank: to, size: self.size })?;
        link.write_all(&bytes).map_err(|_| NetError::PeerLost { peer: to })
    }

    fn control_all(&mut self, code: u32) -> Result<(), NetError> {
        let (rank, size) = (self.rank, self.size);
        let env = Envelope::control(rank, code);
        for to in (0..size).filter(|&p| p != rank) {
            self.write_to(to, &env)?;
        }
        Ok(())
    }
}

/// Binds ephemeral loopback ports and connects a full mesh of `size` ranks.
pub fn tcp_loopback(size: usize, timeout: Duration) -> Result<Vec<TcpEndpoint>, NetError> {
    let listeners = (0..size)
        .map(|_| TcpListener::bind("127.0.0.1:0"))
        .collect::<Result<Vec<_>, _>>()?;
    let addrs = listeners.iter().map(|l| l.local_addr()).collect::<Result<Vec<_>, _>>()?;
    let handles: Vec<_> = listeners
        .into_iter()
        .enumerate()
        .map(|(rank, l)| {
            let addrs = addrs.clone();
            thread::spawn(move || TcpEndpoint::establish(rank, l, &addrs, timeout))
        })
        .collect();
    handles
        .into_iter()
        .map(|h| h.join().unwrap_or_else(|_| Err(NetError::Io("handshake thread panicked".into()))))
        .collect()
}

impl Endpoint for TcpEndpoint {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.size
    }

    fn send(&mut self, to: usize, env: Envelope) -> Result<(), NetError> {
        check_peer(to, self.size)?;
        let started = Instant::now();
        let res = self.write_to(to, &env);
        self.stats.comm_seconds += started.elapsed().as_secs_f64();
        res?;
        self.stats.messages_sent += 1;
        self.stats.bytes_sent += payload_bytes(&env.payload);
        Ok(())
    }

    fn recv(&mut self, from: usize) -> Result<Envelope, NetError> {
        check_peer(from, self.size)?;
        let started = Instant::now();
        let rx = self.fifo[from].as_ref().ok_or(NetError::BadRank { rank: from, size: self.size })?;
        let res = rx.recv_timeout(self.timeout);
        self.stats.comm_seconds += started.elapsed().as_secs_f64();
        let env = match res {
            Ok(r) => r?,
            Err(RecvTimeoutError::Timeout) => return Err(NetError::Timeout { peer: from }),
            Err(RecvTimeoutError::Disconnected) => return Err(NetError::PeerLost { peer: from }),
        };
        self.stats.messages_received += 1;
        self.stats.bytes_received += payload_bytes(&env.payload);
        Ok(env)
    }

    fn post_broadcast(&mut self, env: Envelope) -> Result<(), NetError> {
        let started = Instant::now();
        let (rank, size) = (self.rank, self.size);
        for to in (0..size).filter(|&p| p != rank) {
            self.write_to(to, &env)?;
            self.stats.messages_sent += 1;
            self.stats.bytes_sent += payload_bytes(&env.payload);
        }
        self.stats.comm_seconds += started.elapsed().as_secs_f64();
        Ok(())
    }

    fn drain_mailbox(&mut self) -> Result<Vec<Envelope>, NetError> {
        let now = self.clock.load(Ordering::SeqCst);
        let (slots, coalesced) = {
            let mut mb = self.mailbox.lock().expect("mailbox poisoned");
            (std::mem::take(&mut mb.slots), std::mem::take(&mut mb.coalesced))
        };
        self.stats.coalesced += coalesced;
        let mut out = Vec::with_capacity(slots.len());
        for ((sender, kind), (env, enqueued)) in slots {
            self.stats.record_tau(sender, kind, now.saturating_sub(enqueued) + 1);
            self.stats.messages_received += 1;
            self.stats.bytes_received += payload_bytes(&env.payload);
            out.push(env);
        }
        Ok(out)
    }

    fn iteration(&self) -> u64 {
        self.clock.load(Ordering::SeqCst)
    }

    fn advance_iteration(&mut self) {
        self.clock.fetch_add(1, Ordering::SeqCst);
    }

    fn begin_async(&mut self) -> Result<(), NetError> {
        self.control_all(control::ASYNC_BEGIN)
    }

    fn end_async(&mut self) -> Result<(), NetError> {
        self.control_all(control::ASYNC_END)
    }

    fn stats(&self) -> &FabricStats {
        &self.stats
    }
}

impl Drop for TcpEndpoint {
    fn drop(&mut self) {
        for s in self.links.iter().flatten() {
            let _ = s.shutdown(Shutdown::Both);
        }
        for h in self.readers.drain(..) {
            let _ = h.join();
        }
    }
}
