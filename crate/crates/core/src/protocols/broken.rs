//! A deliberately ill-formed choreography, used as a negative control.
//!
//! It smuggles endpoint identity out of a `locally` body and branches on it,
//! which the operator API is meant to rule out. Under projection the waiting
//! endpoint expects a message its peer never sends. The centralized runtime
//! plays both sides at once and so does not notice.

use std::cell::Cell;

use crate::choreo::{ChoreoOp, Choreography, Result};
use crate::located::MultiplyLocated;
use crate::location::{census_of, Census};

pub struct UnmatchedReceive;

impl Choreography for UnmatchedReceive {
    type Output = MultiplyLocated<i64>;

    fn census(&self) -> Census {
        census_of(&["waiter", "idler"]).expect("static census")
    }

    fn run(&self, op: &ChoreoOp<'_>) -> Result<MultiplyLocated<i64>> {
        let waiter = op.member("waiter")?;
        let idler = op.member("idler")?;
        let here = Cell::new(false);
        op.locally(&waiter, |_| {
            here.set(true);
            Ok(())
        })?;
        let x = op.locally(&idler, |_| Ok(1i64))?;
        if here.get() {
            // Only the waiter takes this branch.
            op.comm(&idler, &waiter, &x)
        } else {
            Ok(x)
        }
    }
}
