//! Choreographic programming with enclaves, multiply-located values and census
//! polymorphism.
//!
//! A choreography is a single program over a [`Census`] of locations. Running it
//! through [`runtime::project_and_run`] at one location yields that location's
//! behavior: sends and receives over a [`transport::Transport`], with everything
//! that concerns other locations skipped.
//!
//! ```
//! use choreo_core::{census_of, run_centralized, FnChoreography};
//!
//! let census = census_of(&["alice", "bob"]).unwrap();
//! let c = FnChoreography::new(census, |op| {
//!     let alice = op.member("alice")?;
//!     let bob = op.member("bob")?;
//!     let x = op.locally(&alice, |_| Ok(20i64))?;
//!     let y = op.comm(&alice, &bob, &x)?;
//!     op.locally(&bob, |un| Ok(un.unwrap(&y)? + 1))
//! });
//! let report = run_centralized(&c, 0);
//! assert_eq!(report.message_count(), 1);
//! ```

pub mod choreo;
pub mod located;
pub mod location;
pub mod portable;
pub mod protocols;
pub mod runtime;
pub mod transport;

pub use choreo::{
    CensusUnwrapper, ChoreoError, ChoreoOp, Choreography, FnChoreography, Unwrapper,
};
pub use located::{Faceted, Located, MultiplyLocated, Observe, Quire};
pub use location::{
    census_of, compose, member, subset, Census, Location, LocationError, MembershipWitness,
    SubsetWitness,
};
pub use portable::{decode, encode, DecodeError, Portable, Value};
pub use runtime::{
    project_and_run, run_centralized, run_simulated, RunReport, SimError, DEFAULT_STEP_BUDGET,
};
