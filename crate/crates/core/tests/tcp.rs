mod common;

use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use choreo_core::protocols::kvs::{parse_script, Kvs, KvsVariant};
use choreo_core::protocols::lottery::Lottery;
use choreo_core::runtime::EndpointOutcome;
use choreo_core::transport::{AddressBook, TcpTransport};
use choreo_core::{project_and_run, run_simulated, Choreography, DEFAULT_STEP_BUDGET};

/// Runs every endpoint on its own thread over loopback TCP.
fn run_tcp<C: Choreography + Sync>(c: &C, seed: u64) -> Vec<(String, EndpointOutcome)> {
    let census = c.census();
    let listeners: Vec<TcpListener> = census.iter().map(|_| TcpListener::bind("127.0.0.1:0").unwrap()).collect();
    let book: AddressBook = census
        .iter()
        .zip(&listeners)
        .map(|(l, s)| (l.to_string(), s.local_addr().unwrap().to_string()))
        .collect();
    thread::scope(|scope| {
        let handles: Vec<_> = census
            .iter()
            .cloned()
            .zip(listeners)
            .map(|(me, listener)| {
                let book = book.clone();
                scope.spawn(move || {
                    let mut t = TcpTransport::with_listener(&me, listener, &book).unwrap();
                    t.set_recv_timeout(Duration::from_secs(20));
                    let run = project_and_run(c, &me, &t, seed);
                    (me.to_string(), run.report.outcome)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

fn sim_outcomes<C: Choreography>(c: &C, seed: u64) -> Vec<(String, EndpointOutcome)> {
    run_simulated(c, seed, DEFAULT_STEP_BUDGET)
        .unwrap()
        .endpoints
        .into_iter()
        .map(|e| (e.location.to_string(), e.outcome))
        .collect()
}

#[test]
fn kvs_enclave_over_tcp_matches_the_simulator() {
    let kvs = Kvs::new(KvsVariant::Enclave, parse_script("PUT k 5\nGET k\nGET j").unwrap());
    assert_eq!(run_tcp(&kvs, 7), sim_outcomes(&kvs, 7));
}

#[test]
fn lottery_over_tcp_matches_the_simulator() {
    let l = Lottery::new(3, 4, vec![10, 20, 30, 40]);
    assert_eq!(run_tcp(&l, 3), sim_outcomes(&l, 3));
}
