//! Interpreters for choreographies.
//!
//! - [`project_and_run`] plays one endpoint over a [`Transport`].
//! - [`run_centralized`] plays every endpoint at once in one process with no
//!   transport. It is the reference the other modes are checked against.
//! - [`run_simulated`] projects every endpoint onto the simulator and lets the
//!   seeded scheduler interleave them.
//!
//! All three draw each location's randomness from [`endpoint_rng`], so their
//! results can be compared value for value.

mod central;
mod endpoint;
pub mod report;
mod simulated;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::location::Location;

pub use central::run_centralized;
pub use endpoint::{project_and_run, EndpointRun};
pub use report::{
    parse_report_text, sim_message_count, BranchRecord, EnclaveSpan, EndpointOutcome,
    EndpointReport, MessageFilter, MessageRecord, OwnedRecord, RunReport, TextRecord,
};
pub use simulated::{run_simulated, SimError};

/// Scheduler steps allowed per endpoint in simulated runs.
pub const DEFAULT_STEP_BUDGET: u64 = 10_000;

/// The randomness stream of `loc` for a run seeded with `seed`.
pub fn endpoint_rng(seed: u64, loc: &Location) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update(loc.name().as_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}
