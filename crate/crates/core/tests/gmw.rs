mod common;

use choreo_core::protocols::gmw::{
    circuits_up_to_depth, eval_circuit, input_assignments, ot2, parse_inputs, Circuit, Gmw,
};
use choreo_core::{
    census_of, run_centralized, run_simulated, FnChoreography, Value,
    DEFAULT_STEP_BUDGET,
};
use common::*;

fn ot_run(b1: bool, b2: bool, s: bool, seed: u64) -> (Option<bool>, usize) {
    let c = FnChoreography::new(census_of(&["sender", "receiver"]).unwrap(), move |op| {
        let sender = op.member("sender")?;
        let receiver = op.member("receiver")?;
        let pair = op.locally(&sender, |_| Ok((b1, b2)))?;
        let select = op.locally(&receiver, |_| Ok(s))?;
        ot2(op, &sender, &receiver, &pair, &select)
    });
    let r = run_simulated(&c, seed, DEFAULT_STEP_BUDGET).unwrap();
    let got = present(r.result("receiver").unwrap()).map(|v| v.as_bool().unwrap());
    assert!(present(r.result("sender").unwrap()).is_none());
    (got, r.message_count())
}

#[test]
fn ot2_truth_table() {
    for bits in 0..8u8 {
        let (b1, b2, s) = (bits & 4 != 0, bits & 2 != 0, bits & 1 != 0);
        for seed in 0..4 {
            let (got, messages) = ot_run(b1, b2, s, seed);
            assert_eq!(got, Some(if s { b2 } else { b1 }), "b1={b1} b2={b2} s={s}");
            assert_eq!(messages, 2);
        }
    }
}

#[test]
fn ot2_sender_view_does_not_depend_on_the_selection() {
    // What the sender receives is a pair of fresh key digests. With the same
    // seed the receiver draws the same keys for either choice, so the sender's
    // incoming bytes have the same length and shape.
    let view = |s: bool| {
        let c = FnChoreography::new(census_of(&["sender", "receiver"]).unwrap(), move |op| {
            let sender = op.member("sender")?;
            let receiver = op.member("receiver")?;
            let pair = op.locally(&sender, |_| Ok((true, false)))?;
            let select = op.locally(&receiver, |_| Ok(s))?;
            ot2(op, &sender, &receiver, &pair, &select)
        });
        let r = run_centralized(&c, 5);
        r.messages
            .iter()
            .filter(|m| m.receiver == "sender")
            .map(|m| m.bytes)
            .collect::<Vec<_>>()
    };
    assert_eq!(view(false), view(true));
}

#[test]
fn ot2_needs_a_two_party_census() {
    let c = FnChoreography::new(census_of(&["a", "b", "c"]).unwrap(), |op| {
        let a = op.member("a")?;
        let b = op.member("b")?;
        let pair = op.locally(&a, |_| Ok((true, false)))?;
        let select = op.locally(&b, |_| Ok(true))?;
        ot2(op, &a, &b, &pair, &select)
    });
    assert!(run_centralized(&c, 0).first_error().is_some());
}

fn gmw_case(n: usize, circuit: &str, inputs: &str) -> Gmw {
    let census = Gmw::parties(n);
    Gmw {
        circuit: Circuit::parse(circuit, &census).unwrap(),
        census,
        inputs: parse_inputs(inputs).unwrap(),
    }
}

#[test]
fn worked_examples() {
    let cases = [
        (2, "(xor (and (in p1) (lit 1)) (in p2))", "p1=1,p2=0", true),
        (2, "(and (in p1) (in p2))", "p1=1,p2=1", true),
        (2, "(and (in p1) (in p2))", "p1=1,p2=0", false),
        (3, "(and (in p3) (xor (in p1) (in p2)))", "p1=1,p2=0,p3=1", true),
        (3, "(lit 0)", "", false),
        (3, "(lit 1)", "", true),
        (2, "(and (in p1) (in p1))", "p1=10", false),
    ];
    for (n, c, i, want) in cases {
        let g = gmw_case(n, c, i);
        assert_eq!(eval_circuit(&g.circuit, &g.inputs).unwrap(), want, "{c}");
        for seed in 0..3 {
            let r = run_simulated(&g, seed, DEFAULT_STEP_BUDGET).unwrap();
            for p in g.census.iter() {
                assert_eq!(r.result(p.name()), Some(&Value::Bool(want)), "{c} at {p}");
            }
            assert_well_formed(&r);
        }
    }
}

#[test]
fn missing_input_is_an_error_at_its_owner() {
    let g = gmw_case(2, "(xor (in p1) (in p1))", "p1=1");
    let r = run_centralized(&g, 0);
    assert!(r.first_error().is_some());
}

#[test]
fn shares_seen_by_one_party_are_independent_of_other_inputs() {
    // p2's incoming bytes do not depend on p1's input.
    let transcript = |bit: &str| {
        let g = gmw_case(2, "(in p1)", &format!("p1={bit}"));
        let r = run_centralized(&g, 9);
        r.messages
            .iter()
            .filter(|m| m.receiver == "p2" && m.sender == "p1")
            .map(|m| m.bytes)
            .collect::<Vec<_>>()
    };
    assert_eq!(transcript("0"), transcript("1"));
}

#[test]
fn exhaustive_depth_two() {
    for n in [2, 3] {
        let census = Gmw::parties(n);
        for c in circuits_up_to_depth(&census, 2) {
            for inputs in input_assignments(&c) {
                let want = eval_circuit(&c, &inputs).unwrap();
                let g = Gmw { census: census.clone(), circuit: c.clone(), inputs };
                let r = run_centralized(&g, 0);
                assert_eq!(r.result("p1"), Some(&Value::Bool(want)), "{c}");
                let s = run_simulated(&g, 1, DEFAULT_STEP_BUDGET).unwrap();
                assert_eq!(s.observations(), r.observations(), "{c}");
            }
        }
    }
}
