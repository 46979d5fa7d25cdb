use std::cell::{RefCell, RefMut};

use rand_chacha::ChaCha8Rng;

use super::endpoint_rng;
use super::report::{BranchRecord, EndpointOutcome, EndpointReport, MessageRecord, OwnedRecord, RunReport};
use crate::choreo::{ChoreoError, ChoreoOp, Choreography, Projection, Result};
use crate::located::Observe;
use crate::location::{Census, Location, LocationError};
use crate::transport::Transport;

struct EndpointProjection<'t> {
    me: Location,
    transport: &'t dyn Transport,
    rng: RefCell<ChaCha8Rng>,
    branches: RefCell<Vec<BranchRecord>>,
    owned: RefCell<Vec<OwnedRecord>>,
    sent: RefCell<Vec<MessageRecord>>,
    seqs: RefCell<std::collections::BTreeMap<Location, u64>>,
    clock: std::cell::Cell<u64>,
}

impl EndpointProjection<'_> {
    fn tick(&self) -> u64 {
        let t = self.clock.get();
        self.clock.set(t + 1);
        t
    }
}

impl Projection for EndpointProjection<'_> {
    fn is_here(&self, loc: &Location) -> bool {
        *loc == self.me
    }

    fn transfer(
        &self,
        sender: &Location,
        recipients: &[Location],
        payload: Option<&[u8]>,
    ) -> Result<Option<Vec<u8>>> {
        if *sender == self.me {
            let body = payload.expect("the sender holds the payload");
            for r in recipients {
                self.transport.send(r, body.to_vec())?;
                let mut seqs = self.seqs.borrow_mut();
                let seq = seqs.entry(r.clone()).or_insert(0);
                self.sent.borrow_mut().push(MessageRecord {
                    sender: self.me.clone(),
                    receiver: r.clone(),
                    seq: *seq,
                    bytes: body.len(),
                    sent_at: self.tick(),
                    received_at: None,
                });
                *seq += 1;
            }
            Ok(None)
        } else if recipients.contains(&self.me) {
            let body = self.transport.recv(sender)?;
            self.tick();
            Ok(Some(body))
        } else {
            Ok(None)
        }
    }

    fn rng(&self, loc: &Location) -> RefMut<'_, ChaCha8Rng> {
        assert_eq!(*loc, self.me, "randomness of another endpoint");
        self.rng.borrow_mut()
    }

    fn record_branch(&self, path: &[u32], census: &Census, site: &str, outcome: &str) {
        self.branches.borrow_mut().push(BranchRecord {
            path: path.to_vec(),
            census: census.clone(),
            site: site.to_owned(),
            outcome: outcome.to_owned(),
        });
    }

    fn record_owned(&self, path: &[u32], owners: &Census, bytes: &[u8]) {
        if owners.contains(&self.me) {
            self.owned.borrow_mut().push(OwnedRecord {
                path: path.to_vec(),
                owners: owners.clone(),
                bytes: bytes.to_vec(),
            });
        }
    }
}

/// What one endpoint produced.
pub struct EndpointRun<R> {
    pub output: Result<R>,
    pub report: EndpointReport,
    /// Messages this endpoint sent, timestamped by its local event counter.
    pub sent: Vec<MessageRecord>,
}

impl<R> EndpointRun<R> {
    /// A report covering this endpoint alone.
    pub fn fragment(&self, census: &Census) -> RunReport {
        RunReport {
            census: census.clone(),
            endpoints: vec![self.report.clone()],
            messages: self.sent.clone(),
            enclaves: Vec::new(),
        }
    }
}

/// Runs `c` as endpoint `me`, communicating through `transport`.
pub fn project_and_run<C: Choreography + ?Sized>(
    c: &C,
    me: &Location,
    transport: &dyn Transport,
    seed: u64,
) -> EndpointRun<C::Output> {
    let census = c.census();
    let proj = EndpointProjection {
        me: me.clone(),
        transport,
        rng: RefCell::new(endpoint_rng(seed, me)),
        branches: RefCell::new(Vec::new()),
        owned: RefCell::new(Vec::new()),
        sent: RefCell::new(Vec::new()),
        seqs: RefCell::new(Default::default()),
        clock: std::cell::Cell::new(0),
    };
    let output = if census.contains(me) {
        let op = ChoreoOp::new(census.clone(), &proj);
        c.run(&op)
    } else {
        Err(ChoreoError::Location(LocationError::NotAMember {
            location: me.to_string(),
            census: census.to_string(),
        }))
    };
    let outcome = match &output {
        Ok(out) => EndpointOutcome::Completed(out.observe(me)),
        Err(e) => EndpointOutcome::Failed(e.clone()),
    };
    EndpointRun {
        output,
        report: EndpointReport {
            location: me.clone(),
            outcome,
            branches: proj.branches.into_inner(),
            owned: proj.owned.into_inner(),
        },
        sent: proj.sent.into_inner(),
    }
}
