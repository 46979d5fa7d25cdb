use std::cell::{Cell, RefCell, RefMut};
use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use super::endpoint_rng;
use super::report::{
    BranchRecord, EnclaveSpan, EndpointOutcome, EndpointReport, MessageRecord, OwnedRecord,
    RunReport,
};
use crate::choreo::{ChoreoOp, Choreography, Projection, Result};
use crate::located::Observe;
use crate::location::{Census, Location};

struct CentralProjection {
    census: Census,
    rngs: Vec<RefCell<ChaCha8Rng>>,
    messages: RefCell<Vec<MessageRecord>>,
    seqs: RefCell<BTreeMap<(Location, Location), u64>>,
    branches: RefCell<Vec<Vec<BranchRecord>>>,
    owned: RefCell<Vec<Vec<OwnedRecord>>>,
    open: RefCell<Vec<(Vec<u32>, Census, usize)>>,
    enclaves: RefCell<Vec<EnclaveSpan>>,
    clock: Cell<u64>,
}

impl Projection for CentralProjection {
    fn is_here(&self, _loc: &Location) -> bool {
        true
    }

    fn transfer(
        &self,
        sender: &Location,
        recipients: &[Location],
        payload: Option<&[u8]>,
    ) -> Result<Option<Vec<u8>>> {
        let body = payload.expect("the centralized runtime holds every payload");
        if recipients.is_empty() {
            return Ok(None);
        }
        let mut seqs = self.seqs.borrow_mut();
        let mut log = self.messages.borrow_mut();
        for r in recipients {
            let seq = seqs.entry((sender.clone(), r.clone())).or_insert(0);
            let t = self.clock.get();
            self.clock.set(t + 1);
            log.push(MessageRecord {
                sender: sender.clone(),
                receiver: r.clone(),
                seq: *seq,
                bytes: body.len(),
                sent_at: t,
                received_at: Some(t),
            });
            *seq += 1;
        }
        Ok(Some(body.to_vec()))
    }

    fn rng(&self, loc: &Location) -> RefMut<'_, ChaCha8Rng> {
        let i = self.census.position(loc).expect("location in census");
        self.rngs[i].borrow_mut()
    }

    fn record_branch(&self, path: &[u32], census: &Census, site: &str, outcome: &str) {
        let mut logs = self.branches.borrow_mut();
        for m in census.iter() {
            let i = self.census.position(m).expect("location in census");
            logs[i].push(BranchRecord {
                path: path.to_vec(),
                census: census.clone(),
                site: site.to_owned(),
                outcome: outcome.to_owned(),
            });
        }
    }

    fn record_owned(&self, path: &[u32], owners: &Census, bytes: &[u8]) {
        let mut logs = self.owned.borrow_mut();
        for m in owners.iter() {
            let i = self.census.position(m).expect("location in census");
            logs[i].push(OwnedRecord {
                path: path.to_vec(),
                owners: owners.clone(),
                bytes: bytes.to_vec(),
            });
        }
    }

    fn enter_enclave(&self, path: &[u32], members: &Census) {
        let start = self.messages.borrow().len();
        self.open
            .borrow_mut()
            .push((path.to_vec(), members.clone(), start));
    }

    fn exit_enclave(&self, path: &[u32]) {
        let (p, members, start) = self.open.borrow_mut().pop().expect("enclave entered");
        debug_assert_eq!(p, path);
        self.enclaves.borrow_mut().push(EnclaveSpan {
            path: p,
            members,
            start,
            end: self.messages.borrow().len(),
        });
    }
}

/// Runs every endpoint's view of `c` in one process.
///
/// Messages are logged as if sent and received instantly, one per logical tick.
/// An error anywhere stops the whole run, so every endpoint reports it.
pub fn run_centralized<C: Choreography + ?Sized>(c: &C, seed: u64) -> RunReport {
    let census = c.census();
    let n = census.len();
    let proj = CentralProjection {
        census: census.clone(),
        rngs: census
            .iter()
            .map(|l| RefCell::new(endpoint_rng(seed, l)))
            .collect(),
        messages: RefCell::new(Vec::new()),
        seqs: RefCell::new(BTreeMap::new()),
        branches: RefCell::new(vec![Vec::new(); n]),
        owned: RefCell::new(vec![Vec::new(); n]),
        open: RefCell::new(Vec::new()),
        enclaves: RefCell::new(Vec::new()),
        clock: Cell::new(0),
    };
    let output = {
        let op = ChoreoOp::new(census.clone(), &proj);
        c.run(&op)
    };
    let branches = proj.branches.into_inner();
    let owned = proj.owned.into_inner();
    let endpoints = census
        .iter()
        .zip(branches)
        .zip(owned)
        .map(|((l, branches), owned)| EndpointReport {
            location: l.clone(),
            outcome: match &output {
                Ok(out) => EndpointOutcome::Completed(out.observe(l)),
                Err(e) => EndpointOutcome::Failed(e.clone()),
            },
            branches,
            owned,
        })
        .collect();
    RunReport {
        census,
        endpoints,
        messages: proj.messages.into_inner(),
        enclaves: proj.enclaves.into_inner(),
    }
}
