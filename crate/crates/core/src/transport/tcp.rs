//! TCP transport.
//!
//! One connection per ordered pair, opened lazily by the sender. The receiving
//! side runs an acceptor thread plus one reader thread per connection; readers
//! learn the peer from the first envelope and push bodies onto per-sender
//! queues, which `recv` drains.

use std::collections::{BTreeMap, VecDeque};
use std::cell::RefCell;
use std::io::Write;
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::wire::{read_frame, Envelope, FrameError};
use super::{Transport, TransportError};
use crate::location::Location;

/// Maps location names to `host:port`.
pub type AddressBook = BTreeMap<String, String>;

#[derive(Default)]
struct Queues {
    bodies: BTreeMap<String, VecDeque<Vec<u8>>>,
    expected: BTreeMap<String, u64>,
    faults: BTreeMap<String, TransportError>,
    closed: BTreeMap<String, bool>,
    /// A fault on a connection whose sender never identified itself.
    anonymous: Option<TransportError>,
}

#[derive(Default)]
struct Inbox {
    queues: Mutex<Queues>,
    ready: Condvar,
}

impl Inbox {
    fn push(&self, env: Envelope) -> Result<(), TransportError> {
        let mut q = self.queues.lock().expect("inbox lock");
        let expected = q.expected.entry(env.sender.clone()).or_insert(0);
        if env.seq != *expected {
            let err = TransportError::SequenceGap {
                peer: env.sender.clone(),
                expected: *expected,
                found: env.seq,
            };
            q.faults.insert(env.sender, err.clone());
            self.ready.notify_all();
            return Err(err);
        }
        *expected += 1;
        q.bodies.entry(env.sender).or_default().push_back(env.body);
        self.ready.notify_all();
        Ok(())
    }

    fn fault(&self, peer: Option<&str>, err: TransportError) {
        let mut q = self.queues.lock().expect("inbox lock");
        match peer {
            Some(p) => {
                q.faults.insert(p.to_owned(), err);
            }
            None => q.anonymous = Some(err),
        }
        self.ready.notify_all();
    }

    fn close(&self, peer: &str) {
        let mut q = self.queues.lock().expect("inbox lock");
        q.closed.insert(peer.to_owned(), true);
        self.ready.notify_all();
    }

    fn pop(&self, peer: &str, timeout: Duration) -> Result<Vec<u8>, TransportError> {
        let deadline = Instant::now() + timeout;
        let mut q = self.queues.lock().expect("inbox lock");
        loop {
            if let Some(body) = q.bodies.get_mut(peer).and_then(VecDeque::pop_front) {
                return Ok(body);
            }
            if let Some(e) = q.faults.get(peer) {
                return Err(e.clone());
            }
            if let Some(e) = &q.anonymous {
                return Err(e.clone());
            }
            if q.closed.get(peer).copied().unwrap_or(false) {
                return Err(TransportError::Closed(peer.to_owned()));
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(TransportError::Timeout(peer.to_owned()));
            }
            q = self
                .ready
                .wait_timeout(q, deadline - now)
                .expect("inbox lock")
                .0;
        }
    }
}

fn read_loop(mut stream: TcpStream, inbox: Arc<Inbox>) {
    let mut peer: Option<String> = None;
    loop {
        match read_frame(&mut stream) {
            Ok(Some(env)) => {
                if peer.is_none() {
                    peer = Some(env.sender.clone());
                }
                if inbox.push(env).is_err() {
                    return;
                }
            }
            Ok(None) => {
                if let Some(p) = &peer {
                    inbox.close(p);
                }
                return;
            }
            Err(e) => {
                let name = peer.clone().unwrap_or_else(|| "?".to_owned());
                let err = match e {
                    FrameError::Io(e) => TransportError::Io {
                        peer: name,
                        reason: e.to_string(),
                    },
                    FrameError::Decode(source) => TransportError::Frame { peer: name, source },
                };
                inbox.fault(peer.as_deref(), err);
                return;
            }
        }
    }
}

struct Outgoing {
    stream: TcpStream,
    seq: u64,
}

pub struct TcpTransport {
    me: Location,
    book: AddressBook,
    outgoing: RefCell<BTreeMap<String, Outgoing>>,
    inbox: Arc<Inbox>,
    stop: Arc<AtomicBool>,
    local_addr: std::net::SocketAddr,
    connect_timeout: Duration,
    recv_timeout: Duration,
}

/// Binds `self`'s address from the book and starts accepting connections.
pub fn tcp_make(me: &Location, book: &AddressBook) -> Result<TcpTransport, TransportError> {
    let addr = book
        .get(me.name())
        .ok_or_else(|| TransportError::UnknownPeer(me.to_string()))?;
    let listener = TcpListener::bind(addr.as_str()).map_err(|e| TransportError::Io {
        peer: me.to_string(),
        reason: format!("bind {addr}: {e}"),
    })?;
    TcpTransport::with_listener(me, listener, book)
}

impl TcpTransport {
    /// Uses an already bound listener, e.g. one bound to port 0 in tests.
    pub fn with_listener(
        me: &Location,
        listener: TcpListener,
        book: &AddressBook,
    ) -> Result<TcpTransport, TransportError> {
        let io_err = |e: std::io::Error| TransportError::Io {
            peer: me.to_string(),
            reason: e.to_string(),
        };
        let local_addr = listener.local_addr().map_err(io_err)?;
        let inbox = Arc::new(Inbox::default());
        let stop = Arc::new(AtomicBool::new(false));
        {
            let inbox = inbox.clone();
            let stop = stop.clone();
            thread::Builder::new()
                .name(format!("accept-{me}"))
                .spawn(move || {
                    for stream in listener.incoming() {
                        if stop.load(Ordering::SeqCst) {
                            break;
                        }
                        let Ok(stream) = stream else { continue };
                        let inbox = inbox.clone();
                        let _ = thread::Builder::new()
                            .name("tcp-reader".into())
                            .spawn(move || read_loop(stream, inbox));
                    }
                })
                .map_err(io_err)?;
        }
        Ok(TcpTransport {
            me: me.clone(),
            book: book.clone(),
            outgoing: RefCell::new(BTreeMap::new()),
            inbox,
            stop,
            local_addr,
            connect_timeout: Duration::from_secs(10),
            recv_timeout: Duration::from_secs(60),
        })
    }

    pub fn local_addr(&self) -> std::net::SocketAddr {
        self.local_addr
    }

    /// How long a sender keeps retrying while its peer is not yet listening.
    pub fn set_connect_timeout(&mut self, d: Duration) {
        self.connect_timeout = d;
    }

    pub fn set_recv_timeout(&mut self, d: Duration) {
        self.recv_timeout = d;
    }

    fn connect(&self, to: &str) -> Result<TcpStream, TransportError> {
        let addr = self
            .book
            .get(to)
            .ok_or_else(|| TransportError::UnknownPeer(to.to_owned()))?;
        let io_err = |reason: String| TransportError::Io {
            peer: to.to_owned(),
            reason,
        };
        let deadline = Instant::now() + self.connect_timeout;
        loop {
            let attempt = addr
                .to_socket_addrs()
                .map_err(|e| io_err(format!("resolve {addr}: {e}")))?
                .find_map(|a| TcpStream::connect(a).ok());
            match attempt {
                Some(s) => {
                    let _ = s.set_nodelay(true);
                    return Ok(s);
                }
                None if Instant::now() < deadline => thread::sleep(Duration::from_millis(25)),
                None => return Err(io_err(format!("connect {addr}: no listener"))),
            }
        }
    }
}

impl Transport for TcpTransport {
    fn local(&self) -> &Location {
        &self.me
    }

    fn send(&self, to: &Location, body: Vec<u8>) -> Result<(), TransportError> {
        if to == &self.me {
            return Err(TransportError::UnknownPeer(to.to_string()));
        }
        let mut out = self.outgoing.borrow_mut();
        if !out.contains_key(to.name()) {
            let stream = self.connect(to.name())?;
            out.insert(to.name().to_owned(), Outgoing { stream, seq: 0 });
        }
        let conn = out.get_mut(to.name()).expect("connection just opened");
        let frame = Envelope {
            sender: self.me.name().to_owned(),
            seq: conn.seq,
            body,
        }
        .to_frame();
        conn.stream.write_all(&frame).map_err(|e| TransportError::Io {
            peer: to.to_string(),
            reason: e.to_string(),
        })?;
        conn.seq += 1;
        Ok(())
    }

    fn recv(&self, from: &Location) -> Result<Vec<u8>, TransportError> {
        if from == &self.me || !self.book.contains_key(from.name()) {
            return Err(TransportError::UnknownPeer(from.to_string()));
        }
        self.inbox.pop(from.name(), self.recv_timeout)
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        for conn in self.outgoing.borrow().values() {
            let _ = conn.stream.shutdown(Shutdown::Write);
        }
        self.stop.store(true, Ordering::SeqCst);
        // Wake the acceptor so it sees the flag.
        let _ = TcpStream::connect(self.local_addr);
    }
}
