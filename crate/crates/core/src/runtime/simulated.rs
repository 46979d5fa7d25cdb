use thiserror::Error;

use super::endpoint::project_and_run;
use super::report::{EndpointOutcome, EndpointReport, RunReport};
use crate::choreo::Choreography;
use crate::transport::sim::{sim_make, Halt};
use crate::transport::Transport;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    /// The run did not finish in time, or stopped with endpoints blocked on
    /// receives nobody will satisfy. Either way it is treated as a deadlock.
    #[error("step budget exceeded after {steps} steps{}", if *.stalled { " (no enabled action)" } else { "" })]
    StepBudgetExceeded {
        steps: u64,
        stalled: bool,
        report: Box<RunReport>,
    },
}

/// Runs every endpoint of `c` over the simulator.
///
/// `budget_per_endpoint` scheduler steps are allowed per census member.
pub fn run_simulated<C: Choreography + ?Sized>(
    c: &C,
    seed: u64,
    budget_per_endpoint: u64,
) -> Result<RunReport, SimError> {
    let census = c.census();
    let mut net = sim_make(&census, seed);
    type Task<'a> = Box<dyn FnOnce(&dyn Transport) -> EndpointReport + 'a>;
    let tasks: Vec<Task<'_>> = census
        .iter()
        .map(|me| {
            let me = me.clone();
            Box::new(move |t: &dyn Transport| project_and_run(c, &me, t, seed).report) as Task<'_>
        })
        .collect();
    let budget = budget_per_endpoint.saturating_mul(census.len() as u64);
    let run = net.run(tasks, budget);
    let endpoints = census
        .iter()
        .zip(run.results)
        .zip(run.aborted)
        .map(|((l, r), aborted)| match r {
            Some(mut rep) if aborted => {
                rep.outcome = EndpointOutcome::Unfinished;
                rep
            }
            Some(rep) => rep,
            None => EndpointReport {
                location: l.clone(),
                outcome: EndpointOutcome::Unfinished,
                branches: Vec::new(),
                owned: Vec::new(),
            },
        })
        .collect();
    let report = RunReport {
        census,
        endpoints,
        messages: net.into_log(),
        enclaves: Vec::new(),
    };
    match run.halt {
        None => Ok(report),
        Some(h) => Err(SimError::StepBudgetExceeded {
            steps: run.steps,
            stalled: h == Halt::Stalled,
            report: Box::new(report),
        }),
    }
}
