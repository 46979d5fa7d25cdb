mod common;

use choreo_core::location::LocationError;
use choreo_core::{
    census_of, run_centralized, run_simulated, ChoreoError, ChoreoOp, FnChoreography, Observe,
    Quire, RunReport, Value, DEFAULT_STEP_BUDGET,
};
use choreo_core::choreo::Result;
use common::*;

/// Runs `body` over `census` centrally and on the simulator and checks that
/// the two agree.
fn run<R, F>(census: &[&str], body: F) -> RunReport
where
    R: Observe,
    F: Fn(&ChoreoOp<'_>) -> Result<R>,
{
    let c = FnChoreography::new(census_of(census).unwrap(), body);
    let central = run_centralized(&c, 0);
    let sim = match run_simulated(&c, 0, DEFAULT_STEP_BUDGET) {
        Ok(r) => r,
        Err(e) => panic!("simulated run halted: {e}"),
    };
    assert_eq!(central.observations(), sim.observations());
    assert_eq!(central.message_count(), sim.message_count());
    assert_well_formed(&sim);
    sim
}

fn int(v: i64) -> Value {
    Value::union(1, Value::Int(v))
}

fn absent() -> Value {
    Value::union(0, Value::Unit)
}

fn error_of(r: &RunReport, at: &str) -> ChoreoError {
    r.endpoint(at).unwrap().error().cloned().expect("endpoint failed")
}

#[test]
fn locally_runs_only_at_its_owner() {
    let r = run(&["p", "q"], |op| {
        let p = op.member("p")?;
        op.locally(&p, |_| Ok(7i64))
    });
    assert_eq!(r.message_count(), 0);
    assert_eq!(r.result("p"), Some(&int(7)));
    assert_eq!(r.result("q"), Some(&absent()));
}

#[test]
fn locally_cannot_read_foreign_values() {
    let c = FnChoreography::new(census_of(&["primary", "backup"]).unwrap(), |op| {
        let primary = op.member("primary")?;
        let backup = op.member("backup")?;
        let secret = op.locally(&backup, |_| Ok(1i64))?;
        op.locally(&primary, |un| Ok(*un.unwrap(&secret)?))
    });
    let r = run_centralized(&c, 0);
    assert!(matches!(error_of(&r, "primary"), ChoreoError::UnwrapAbsent { .. }));
}

#[test]
fn multicast_elides_the_self_send() {
    let r = run(&["a", "b", "c", "d"], |op| {
        let a = op.member("a")?;
        let v = op.locally(&a, |_| Ok(3i64))?;
        op.multicast(&a, &op.subset(&["a", "b", "c"])?, &v)
    });
    assert_eq!(r.message_count(), 2);
    for p in ["a", "b", "c"] {
        assert_eq!(r.result(p), Some(&int(3)));
    }
    assert_eq!(r.result("d"), Some(&absent()));

    let r = run(&["a", "b"], |op| {
        let a = op.member("a")?;
        let v = op.locally(&a, |_| Ok(3i64))?;
        op.multicast(&a, &a.alone(), &v)
    });
    assert_eq!(r.message_count(), 0);
    assert_eq!(r.result("a"), Some(&int(3)));
}

#[test]
fn multicast_requires_an_owner() {
    let c = FnChoreography::new(census_of(&["a", "b"]).unwrap(), |op| {
        let a = op.member("a")?;
        let b = op.member("b")?;
        let v = op.locally(&a, |_| Ok(3i64))?;
        op.comm(&b, &a, &v)
    });
    let r = run_centralized(&c, 0);
    assert!(matches!(error_of(&r, "a"), ChoreoError::NotAnOwner { .. }));
}

#[test]
fn comm_is_one_message() {
    let r = run(&["client", "primary"], |op| {
        let client = op.member("client")?;
        let primary = op.member("primary")?;
        let v = op.locally(&client, |_| Ok("GET k".to_owned()))?;
        op.comm(&client, &primary, &v)
    });
    assert_eq!(r.message_count(), 1);
    assert_eq!(r.result("primary"), Some(&Value::union(1, Value::text("GET k"))));
    assert_eq!(r.result("client"), Some(&absent()));
}

#[test]
fn broadcast_costs_census_minus_one() {
    for census in [&["a"][..], &["a", "b"], &["a", "b", "c"]] {
        let r = run(census, |op| {
            let a = op.member("a")?;
            let v = op.locally(&a, |_| Ok(true))?;
            op.broadcast(&a, &v)
        });
        assert_eq!(r.message_count(), census.len() - 1);
        for p in census {
            assert_eq!(r.result(p), Some(&Value::Bool(true)));
        }
    }
}

#[test]
fn naked_needs_the_whole_census() {
    let r = run(&["p", "q"], |op| {
        let v = op.replicated(|_| Ok(5i64))?;
        op.naked(&v)
    });
    assert_eq!(r.result("q"), Some(&Value::Int(5)));

    let c = FnChoreography::new(census_of(&["p", "q"]).unwrap(), |op| {
        let p = op.member("p")?;
        let v = op.locally(&p, |_| Ok(5i64))?;
        op.naked(&v)
    });
    let r = run_centralized(&c, 0);
    assert!(matches!(error_of(&r, "q"), ChoreoError::CensusNotOwned { .. }));
}

#[test]
fn outsiders_skip_enclaves() {
    let r = run(&["client", "primary", "backup"], |op| {
        let servers = op.subset(&["primary", "backup"])?;
        op.enclave(&servers, |op| {
            let primary = op.member("primary")?;
            let v = op.locally(&primary, |_| Ok(1i64))?;
            op.broadcast(&primary, &v)
        })
    });
    assert_eq!(r.message_count(), 1);
    assert_eq!(r.result("client"), Some(&absent()));
    assert_eq!(r.result("backup"), Some(&int(1)));
    let central = run_centralized(
        &FnChoreography::new(census_of(&["client", "primary", "backup"]).unwrap(), |op| {
            let servers = op.subset(&["primary", "backup"])?;
            op.enclave(&servers, |op| op.replicated(|_| Ok(())))
        }),
        0,
    );
    assert_eq!(central.enclaves.len(), 1);
    assert_eq!(names(&central.enclaves[0].members), ["primary", "backup"]);
}

#[test]
fn enclave_over_everyone_is_transparent() {
    let r = run(&["a", "b"], |op| {
        let inner = op.enclave(&op.everyone(), |op| {
            let a = op.member("a")?;
            let v = op.locally(&a, |_| Ok(2i64))?;
            op.broadcast(&a, &v)
        })?;
        op.naked(&inner)
    });
    assert_eq!(r.result("b"), Some(&Value::Int(2)));
}

#[test]
fn second_enclave_reuses_the_first_result_silently() {
    let r = run(&["client", "primary", "backup"], |op| {
        let servers = op.subset(&["primary", "backup"])?;
        let flag = op.enclave(&servers, |op| {
            let primary = op.member("primary")?;
            let v = op.locally(&primary, |_| Ok(true))?;
            op.broadcast(&primary, &v)
        })?;
        let again = op.enclave(&servers, |op| {
            let f = op.naked(&flag)?;
            op.branch("again", f);
            Ok(f)
        })?;
        Ok(again)
    });
    assert_eq!(r.message_count(), 1);
    for s in ["primary", "backup"] {
        let b = &r.endpoint(s).unwrap().branches;
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].outcome, "true");
    }
}

#[test]
fn enclave_rejects_foreign_witnesses() {
    let c = FnChoreography::new(census_of(&["a", "b", "c"]).unwrap(), |op| {
        let ab = op.subset(&["a", "b"])?;
        let c_outside = op.member("c")?;
        op.enclave(&ab, |op| op.locally(&c_outside, |_| Ok(())))
    });
    let r = run_centralized(&c, 0);
    assert!(matches!(
        error_of(&r, "a"),
        ChoreoError::Location(LocationError::WitnessMismatch { .. })
    ));
}

#[test]
fn replicated_agrees_everywhere() {
    let r = run(&["a", "b", "c"], |op| op.replicated(|_| Ok(42i64)));
    for p in ["a", "b", "c"] {
        assert_eq!(r.result(p), Some(&int(42)));
    }
    assert!(r.check_agreement().unwrap() >= 1);
}

#[test]
fn replicated_cannot_read_partial_values() {
    let c = FnChoreography::new(census_of(&["a", "b"]).unwrap(), |op| {
        let a = op.member("a")?;
        let v = op.locally(&a, |_| Ok(1i64))?;
        op.replicated(|un| Ok(*un.unwrap(&v)?))
    });
    let r = run_centralized(&c, 0);
    assert!(matches!(error_of(&r, "a"), ChoreoError::UnwrapAbsent { .. }));
}

#[test]
fn fanout_collects_one_facet_per_member() {
    let r = run(&["a", "b", "c"], |op| {
        op.fanout(&op.everyone(), |op, q| op.locally(q, |_| Ok(9i64)))
    });
    for p in ["a", "b", "c"] {
        assert_eq!(r.result(p), Some(&int(9)));
    }
    let r = run(&["a", "b"], |op| {
        op.fanout(&op.subset(&[])?, |op, q| op.locally(q, |_| Ok(9i64)))
    });
    assert_eq!(r.result("a"), Some(&absent()));
}

#[test]
fn fanout_iterations_can_communicate() {
    // Each member learns a value from `src`.
    let r = run(&["src", "x", "y"], |op| {
        let src = op.member("src")?;
        let v = op.locally(&src, |_| Ok(4i64))?;
        op.fanout(&op.subset(&["x", "y"])?, |op, q| op.comm(&src, q, &v))
    });
    assert_eq!(r.message_count(), 2);
    assert_eq!(r.result("y"), Some(&int(4)));
    assert_eq!(r.result("src"), Some(&absent()));
}

#[test]
fn fanin_builds_a_quire_in_loop_order() {
    let r = run(&["z", "a", "m", "sink"], |op| {
        let sink = op.member("sink")?;
        let qs = op.subset(&["z", "a", "m"])?;
        op.fanin(&qs, &sink.alone(), |op, q| {
            let name = q.location().name().to_owned();
            let v = op.locally(q, move |_| Ok(name))?;
            op.comm(q, &sink, &v)
        })
    });
    assert_eq!(r.message_count(), 3);
    let v = present(r.result("sink").unwrap()).unwrap();
    let keys: Vec<_> = v.as_seq().unwrap().iter().map(|e| e.as_pair().unwrap().0.as_text().unwrap().to_owned()).collect();
    assert_eq!(keys, ["z", "a", "m"]);

    let r = run(&["a", "b"], |op| {
        let a = op.member("a")?;
        op.fanin(&op.subset(&[])?, &a.alone(), |op, q| op.locally(q, |_| Ok(0i64)))
    });
    assert_eq!(r.result("a"), Some(&Value::union(1, Value::Seq(vec![]))));
}

#[test]
fn parallel_draws_independent_values_without_messages() {
    let r = run(&["s1", "s2", "s3"], |op| {
        op.parallel(&op.everyone(), |_, un| {
            use rand::Rng;
            Ok(un.rng().random::<i64>())
        })
    });
    assert_eq!(r.message_count(), 0);
    let vals: std::collections::BTreeSet<_> = ["s1", "s2", "s3"].iter().map(|p| r.result(p).unwrap().clone()).collect();
    assert_eq!(vals.len(), 3);
}

#[test]
fn scatter_sends_each_recipient_its_leaf() {
    let r = run(&["a", "b", "c", "d"], |op| {
        let a = op.member("a")?;
        let census = op.census().clone();
        let q = op.locally(&a, |_| {
            Ok(Quire::from_fn(&census, |l| l.name().len() as i64 * 10 + census.position(l).unwrap() as i64))
        })?;
        op.scatter(&a, &op.everyone(), &q)
    });
    assert_eq!(r.message_count(), 3);
    assert_eq!(r.result("c"), Some(&int(12)));
    assert_eq!(r.result("a"), Some(&int(10)));

    let r = run(&["a", "b"], |op| {
        let a = op.member("a")?;
        let q = op.locally(&a, |_| Ok(Quire::from_fn(a.alone().sub(), |_| 1i64)))?;
        op.scatter(&a, &a.alone(), &q)
    });
    assert_eq!(r.message_count(), 0);
}

#[test]
fn gather_to_one_outsider() {
    let r = run(&["a", "b", "c", "sink"], |op| {
        let sink = op.member("sink")?;
        let qs = op.subset(&["a", "b", "c"])?;
        let f = op.parallel(&qs, |q, _| Ok(q.index() as i64))?;
        op.gather(&qs, &sink.alone(), &f)
    });
    assert_eq!(r.message_count(), 3);
    let v = present(r.result("sink").unwrap()).unwrap();
    let vals: Vec<_> = v.as_seq().unwrap().iter().map(|e| e.as_pair().unwrap().1.as_int().unwrap()).collect();
    assert_eq!(vals, [0, 1, 2]);
}

#[test]
fn gather_everyone_to_everyone() {
    let r = run(&["a", "b", "c"], |op| {
        let f = op.parallel(&op.everyone(), |q, _| Ok(q.index() as i64))?;
        op.gather(&op.everyone(), &op.everyone(), &f)
    });
    assert_eq!(r.message_count(), 6);
    assert_eq!(r.result("a"), r.result("c"));
}

#[test]
fn flatten_unnests_an_enclave_result() {
    let r = run(&["client", "p", "b"], |op| {
        let pb = op.subset(&["p", "b"])?;
        let nested = op.enclave(&pb, |op| {
            let p = op.member("p")?;
            op.locally(&p, |_| Ok(8i64))
        })?;
        let only_p = pb.sub().select(&["p"])?;
        op.flatten(&only_p, &only_p.sub().everyone(), nested)
    });
    assert_eq!(r.result("p"), Some(&int(8)));
    assert_eq!(r.result("b"), Some(&absent()));
    assert_eq!(r.result("client"), Some(&absent()));
}

#[test]
fn flatten_identity() {
    let r = run(&["a", "b"], |op| {
        let nested = op.enclave(&op.everyone(), |op| op.replicated(|_| Ok(1i64)))?;
        op.flatten(&op.everyone(), &op.everyone(), nested)
    });
    assert_eq!(r.result("b"), Some(&int(1)));
}

#[test]
fn flatten_rejects_mismatched_witnesses() {
    let c = FnChoreography::new(census_of(&["a", "b", "c"]).unwrap(), |op| {
        let ab = op.subset(&["a", "b"])?;
        let nested = op.enclave(&ab, |op| op.replicated(|_| Ok(1i64)))?;
        // The outer witness is over the wrong owner set.
        let wrong = op.subset(&["a"])?;
        op.flatten(&wrong, &wrong, nested)
    });
    let r = run_centralized(&c, 0);
    assert!(r.first_error().is_some());
}

#[test]
fn others_forget_shrinks_ownership() {
    let r = run(&["p", "q", "r"], |op| {
        let v = op.replicated(|_| Ok(6i64))?;
        let q_only = op.subset(&["q"])?;
        op.others_forget(&q_only, v)
    });
    assert_eq!(r.result("q"), Some(&int(6)));
    assert_eq!(r.result("p"), Some(&absent()));
    assert_eq!(r.result("r"), Some(&absent()));

    let r = run(&["p", "q"], |op| {
        let v = op.replicated(|_| Ok(6i64))?;
        op.others_forget(&op.everyone(), v)
    });
    assert_eq!(r.result("p"), Some(&int(6)));
}

#[test]
fn branch_outcomes_are_logged_per_endpoint() {
    let r = run(&["a", "b"], |op| {
        let a = op.member("a")?;
        let v = op.locally(&a, |_| Ok(true))?;
        let x = op.broadcast(&a, &v)?;
        op.branch("choice", if x { "left" } else { "right" });
        Ok(x)
    });
    for p in ["a", "b"] {
        let b = &r.endpoint(p).unwrap().branches;
        assert_eq!((b[0].site.as_str(), b[0].outcome.as_str()), ("choice", "left"));
    }
    let text = r.to_text();
    assert!(text.contains("MSG a b 2 "), "{text}");
    assert!(text.contains("BRANCH b choice left"), "{text}");
}
