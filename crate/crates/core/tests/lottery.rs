mod common;

use choreo_core::protocols::field::{FieldElement, PRIME};
use choreo_core::protocols::lottery::{
    commit, commitments_precede_openings, expected_omega, verify, Lottery, RhoSource, Tamper,
    TamperTarget, MAX_SALT, MIN_SALT,
};
use choreo_core::protocols::ProtocolError;
use choreo_core::{
    run_centralized, run_simulated, ChoreoError, Choreography, Portable, SimError, DEFAULT_STEP_BUDGET,
};
use common::*;

fn analyst_output(r: &choreo_core::RunReport) -> i64 {
    let v = r.result("analyst").expect("analyst completed");
    let (revealed, _) = v.as_pair().unwrap();
    FieldElement::from_value(present(revealed).unwrap()).unwrap().value() as i64
}

fn opened_rhos(r: &choreo_core::RunReport, server: &str) -> Vec<i64> {
    let v = r.result(server).unwrap();
    let (_, rest) = v.as_pair().unwrap();
    let (_, rhos) = rest.as_pair().unwrap();
    present(rhos)
        .unwrap()
        .as_seq()
        .unwrap()
        .iter()
        .map(|e| e.as_pair().unwrap().1.as_int().unwrap())
        .collect()
}

fn lottery() -> Lottery {
    Lottery::new(3, 4, vec![11, 22, 33, 44])
}

#[test]
fn commitment_is_a_digest_of_the_encoded_pair() {
    let a = commit(3, MIN_SALT);
    assert!(verify(&a, 3, MIN_SALT));
    assert!(!verify(&a, 4, MIN_SALT));
    assert!(!verify(&a, 3, MIN_SALT + 1));
    assert_eq!(a.to_value().as_text().unwrap().len(), 64);
}

#[test]
fn zero_rhos_pick_the_first_client() {
    let mut l = lottery();
    l.rho = RhoSource::Fixed(vec![0, 0, 0]);
    let r = run_simulated(&l, 0, DEFAULT_STEP_BUDGET).unwrap();
    assert_eq!(analyst_output(&r), 11);
}

#[test]
fn one_two_three_pick_client_index_two() {
    let mut l = lottery();
    l.rho = RhoSource::Fixed(vec![1, 2, 3]);
    assert_eq!(expected_omega(&[1, 2, 3], 4), 2);
    let r = run_simulated(&l, 4, DEFAULT_STEP_BUDGET).unwrap();
    assert_eq!(analyst_output(&r), 33);
}

#[test]
fn negative_secrets_come_back_as_field_elements() {
    let mut l = Lottery::new(2, 1, vec![-1]);
    l.rho = RhoSource::Fixed(vec![5, 6]);
    let r = run_centralized(&l, 0);
    assert_eq!(analyst_output(&r), PRIME as i64 - 1);
}

#[test]
fn seeded_runs_reveal_the_chosen_secret() {
    let l = lottery();
    for seed in 0..100 {
        let r = run_simulated(&l, seed, DEFAULT_STEP_BUDGET).unwrap();
        let rhos = opened_rhos(&r, "server1");
        assert_eq!(rhos.len(), 3);
        for s in ["server2", "server3"] {
            assert_eq!(opened_rhos(&r, s), rhos);
        }
        assert!(rhos.iter().all(|&x| (0..32).contains(&x)));
        let w = expected_omega(&rhos, 4);
        assert_eq!(analyst_output(&r), l.secrets[w], "seed {seed}");
        commitments_precede_openings(&r, &[loc("server1"), loc("server2"), loc("server3")]).unwrap();
        assert_well_formed(&r);
    }
}

#[test]
fn salt_bounds() {
    assert_eq!(MIN_SALT, 262_144);
    assert_eq!(MAX_SALT, 1_048_576);
}

#[test]
fn centralized_and_simulated_agree() {
    let l = lottery();
    for seed in 0..10 {
        let c = run_centralized(&l, seed);
        let s = run_simulated(&l, seed, DEFAULT_STEP_BUDGET).unwrap();
        assert_eq!(c.observations(), s.observations());
        assert_eq!(c.message_count(), s.message_count());
    }
}

#[test]
fn message_count_by_phase() {
    // Shares: S*C. Three openings: 3*S*(S-1). Chosen shares: S.
    for (servers, clients) in [(1usize, 1usize), (3, 4), (2, 5)] {
        let l = Lottery::new(servers, clients, vec![1; clients]);
        let r = run_centralized(&l, 0);
        assert_eq!(r.message_count(), servers * clients + 3 * servers * (servers - 1) + servers);
    }
}

#[test]
fn tampering_is_caught_by_every_honest_server() {
    for target in [TamperTarget::Rho, TamperTarget::Psi] {
        for cheat in 0..3 {
            let mut l = lottery();
            l.tamper = Some(Tamper { server: cheat, target });
            for seed in 0..5 {
                // The analyst waits for shares that never come.
                let r = match run_simulated(&l, seed, DEFAULT_STEP_BUDGET) {
                    Err(SimError::StepBudgetExceeded { stalled: true, report, .. }) => *report,
                    other => panic!("expected a stall, got {other:?}"),
                };
                let culprit = format!("server{}", cheat + 1);
                for s in 1..=3 {
                    let name = format!("server{s}");
                    if name == culprit {
                        continue;
                    }
                    let err = r.endpoint(&name).unwrap().error().cloned();
                    assert_eq!(
                        err,
                        Some(ChoreoError::Protocol(ProtocolError::CommitmentFailed {
                            at: name.clone(),
                            culprit: culprit.clone(),
                        })),
                        "{target:?} by {culprit} seen at {name}"
                    );
                }
                assert!(r.result("analyst").is_none());
            }
        }
    }
}

#[test]
fn secrets_must_match_clients() {
    let l = Lottery::new(2, 3, vec![1, 2]);
    assert!(run_centralized(&l, 0).first_error().is_some());
}

#[test]
fn census_layout() {
    assert_eq!(
        names(&lottery().census()),
        ["analyst", "server1", "server2", "server3", "client1", "client2", "client3", "client4"]
    );
}
