//! Deterministic network simulator.
//!
//! Every endpoint runs as a stackful coroutine on the calling thread. Whenever an
//! endpoint sends or receives, it suspends and hands the request to the
//! scheduler. At each step the scheduler picks one enabled action uniformly with
//! a seeded PRNG:
//!
//! - perform a pending send (the message enters the pair's in-flight queue),
//! - deliver the head of some pair's in-flight queue to the receiver's inbox,
//! - complete a pending receive whose inbox from the named sender is non-empty.
//!
//! The step counter doubles as the logical clock in the message log. Because
//! queues are per ordered pair, FIFO holds under every schedule while messages
//! of different pairs reorder freely.

use std::collections::VecDeque;

use corosensei::{CoroutineResult, ScopedCoroutine, ScopedCoroutineRef, Yielder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Transport, TransportError};
use crate::location::{Census, Location};
use crate::runtime::report::MessageRecord;

enum Request {
    Send { to: usize, body: Vec<u8> },
    Recv { from: usize },
}

enum Reply {
    Start,
    Sent,
    Received(Vec<u8>),
    Failed(TransportError),
}

type Co<'a, R> = ScopedCoroutine<'a, Reply, Request, R>;
type CoRef<'s, R> = ScopedCoroutineRef<'s, Reply, Request, R, corosensei::stack::DefaultStack>;

/// An endpoint's handle into the simulator. Only valid inside [`SimNet::run`].
struct SimHandle<'y> {
    me: Location,
    index: usize,
    census: Census,
    yielder: &'y Yielder<Reply, Request>,
}

impl SimHandle<'_> {
    fn peer(&self, loc: &Location) -> Result<usize, TransportError> {
        match self.census.position(loc) {
            Some(i) if i != self.index => Ok(i),
            _ => Err(TransportError::UnknownPeer(loc.to_string())),
        }
    }
}

impl Transport for SimHandle<'_> {
    fn local(&self) -> &Location {
        &self.me
    }

    fn send(&self, to: &Location, body: Vec<u8>) -> Result<(), TransportError> {
        let to = self.peer(to)?;
        match self.yielder.suspend(Request::Send { to, body }) {
            Reply::Sent => Ok(()),
            Reply::Failed(e) => Err(e),
            _ => Err(TransportError::Aborted),
        }
    }

    fn recv(&self, from: &Location) -> Result<Vec<u8>, TransportError> {
        let from = self.peer(from)?;
        match self.yielder.suspend(Request::Recv { from }) {
            Reply::Received(body) => Ok(body),
            Reply::Failed(e) => Err(e),
            _ => Err(TransportError::Aborted),
        }
    }
}

/// Why a simulated run stopped before every endpoint finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Halt {
    /// The step budget ran out.
    Budget,
    /// Some endpoints were still waiting but no action was enabled.
    Stalled,
}

/// Outcome of [`SimNet::run`].
pub struct SimRun<R> {
    /// One entry per census member; `None` if the endpoint never returned.
    pub results: Vec<Option<R>>,
    /// Endpoints that were still blocked when the run halted. Their results, if
    /// any, come from unwinding with [`TransportError::Aborted`].
    pub aborted: Vec<bool>,
    pub halt: Option<Halt>,
    pub steps: u64,
}

enum Slot<R> {
    Waiting(Request),
    Done(R),
    Taken,
}

#[derive(Clone, Copy)]
enum Action {
    Exec(usize),
    Deliver(usize),
}

struct Pending {
    record: usize,
    body: Vec<u8>,
}

/// Simulated network for one census.
pub struct SimNet {
    census: Census,
    rng: ChaCha8Rng,
    in_flight: Vec<VecDeque<Pending>>,
    inbox: Vec<VecDeque<Pending>>,
    next_seq: Vec<u64>,
    log: Vec<MessageRecord>,
    step: u64,
}

/// Builds a simulator over `census` whose schedule is a pure function of `seed`
/// and the endpoints' behavior.
pub fn sim_make(census: &Census, seed: u64) -> SimNet {
    let n = census.len();
    SimNet {
        census: census.clone(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        in_flight: (0..n * n).map(|_| VecDeque::new()).collect(),
        inbox: (0..n * n).map(|_| VecDeque::new()).collect(),
        next_seq: vec![0; n * n],
        log: Vec::new(),
        step: 0,
    }
}

impl SimNet {
    pub fn census(&self) -> &Census {
        &self.census
    }

    /// Ordered pairs of distinct endpoints that can exchange messages.
    pub fn pairs(&self) -> Vec<(Location, Location)> {
        let mut out = Vec::new();
        for s in self.census.iter() {
            for r in self.census.iter() {
                if s != r {
                    out.push((s.clone(), r.clone()));
                }
            }
        }
        out
    }

    /// Every message sent so far, in send order.
    pub fn log(&self) -> &[MessageRecord] {
        &self.log
    }

    pub fn into_log(self) -> Vec<MessageRecord> {
        self.log
    }

    /// Runs one task per census member (in census order) to completion, or until
    /// `budget` scheduler steps have been taken.
    pub fn run<'a, R: 'a>(
        &mut self,
        tasks: Vec<Box<dyn FnOnce(&dyn Transport) -> R + 'a>>,
        budget: u64,
    ) -> SimRun<R> {
        assert_eq!(tasks.len(), self.census.len(), "one task per endpoint");
        let coroutines: Vec<Co<'a, R>> = tasks
            .into_iter()
            .enumerate()
            .map(|(index, task)| {
                let census = self.census.clone();
                let me = census.get(index).expect("index in census").clone();
                ScopedCoroutine::new(move |yielder: &Yielder<Reply, Request>, _: Reply| {
                    let handle = SimHandle {
                        me,
                        index,
                        census,
                        yielder,
                    };
                    task(&handle)
                })
            })
            .collect();
        let mut outcome = None;
        nest(coroutines.into_iter(), Vec::new(), &mut |refs| {
            outcome = Some(self.schedule(refs, budget));
        });
        outcome.expect("scheduler ran")
    }

    fn schedule<R>(&mut self, cos: &mut [CoRef<'_, R>], budget: u64) -> SimRun<R> {
        let n = cos.len();
        let mut slots: Vec<Slot<R>> = Vec::with_capacity(n);
        for co in cos.iter_mut() {
            slots.push(match co.resume(Reply::Start) {
                CoroutineResult::Yield(req) => Slot::Waiting(req),
                CoroutineResult::Return(r) => Slot::Done(r),
            });
        }
        let mut halt = None;
        let mut actions = Vec::with_capacity(n * n + n);
        loop {
            actions.clear();
            for (i, slot) in slots.iter().enumerate() {
                match slot {
                    Slot::Waiting(Request::Send { .. }) => actions.push(Action::Exec(i)),
                    Slot::Waiting(Request::Recv { from }) if !self.inbox[from * n + i].is_empty() => {
                        actions.push(Action::Exec(i))
                    }
                    _ => {}
                }
            }
            for (p, q) in self.in_flight.iter().enumerate() {
                if !q.is_empty() {
                    actions.push(Action::Deliver(p));
                }
            }
            if actions.is_empty() {
                if slots.iter().any(|s| matches!(s, Slot::Waiting(_))) {
                    halt = Some(Halt::Stalled);
                }
                break;
            }
            if self.step >= budget {
                halt = Some(Halt::Budget);
                break;
            }
            let pick = actions[self.rng.random_range(0..actions.len())];
            self.step += 1;
            match pick {
                Action::Deliver(p) => {
                    let m = self.in_flight[p].pop_front().expect("non-empty queue");
                    self.inbox[p].push_back(m);
                }
                Action::Exec(i) => {
                    let Slot::Waiting(req) = std::mem::replace(&mut slots[i], Slot::Taken) else {
                        unreachable!("only waiting endpoints are enabled")
                    };
                    let reply = match req {
                        Request::Send { to, body } => {
                            let p = i * n + to;
                            let seq = self.next_seq[p];
                            self.next_seq[p] += 1;
                            self.log.push(MessageRecord {
                                sender: self.census.get(i).expect("sender").clone(),
                                receiver: self.census.get(to).expect("receiver").clone(),
                                seq,
                                bytes: body.len(),
                                sent_at: self.step,
                                received_at: None,
                            });
                            self.in_flight[p].push_back(Pending {
                                record: self.log.len() - 1,
                                body,
                            });
                            Reply::Sent
                        }
                        Request::Recv { from } => {
                            let m = self.inbox[from * n + i].pop_front().expect("enabled receive");
                            self.log[m.record].received_at = Some(self.step);
                            Reply::Received(m.body)
                        }
                    };
                    slots[i] = match cos[i].resume(reply) {
                        CoroutineResult::Yield(req) => Slot::Waiting(req),
                        CoroutineResult::Return(r) => Slot::Done(r),
                    };
                }
            }
        }
        let mut aborted = vec![false; n];
        for (i, slot) in slots.iter_mut().enumerate() {
            if !matches!(slot, Slot::Waiting(_)) {
                continue;
            }
            aborted[i] = true;
            // Let the endpoint unwind through its own error paths.
            let mut next = Slot::Taken;
            for _ in 0..64 {
                match cos[i].resume(Reply::Failed(TransportError::Aborted)) {
                    CoroutineResult::Yield(_) => continue,
                    CoroutineResult::Return(r) => {
                        next = Slot::Done(r);
                        break;
                    }
                }
            }
            if matches!(next, Slot::Taken) {
                cos[i].force_unwind();
            }
            *slot = next;
        }
        SimRun {
            results: slots
                .into_iter()
                .map(|s| match s {
                    Slot::Done(r) => Some(r),
                    _ => None,
                })
                .collect(),
            aborted,
            halt,
            steps: self.step,
        }
    }
}

/// Enters one coroutine scope per task, then runs `body` over all of them.
fn nest<'a, R>(
    mut rest: std::vec::IntoIter<Co<'a, R>>,
    refs: Vec<CoRef<'_, R>>,
    body: &mut dyn FnMut(&mut [CoRef<'_, R>]),
) {
    match rest.next() {
        None => {
            let mut refs = refs;
            body(&mut refs)
        }
        Some(co) => co.scope(move |r| {
            let mut refs: Vec<CoRef<'_, R>> = refs;
            refs.push(r);
            nest(rest, refs, body)
        }),
    }
}
