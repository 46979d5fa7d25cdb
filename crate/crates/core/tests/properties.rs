mod common;

use choreo_core::protocols::gmw::{circuits_up_to_depth, eval_circuit, input_assignments, Gmw};
use choreo_core::protocols::lottery::{Lottery, RhoSource};
use choreo_core::{
    census_of, compose, decode, encode, member, run_centralized, run_simulated, subset, Value,
    DEFAULT_STEP_BUDGET,
};
use common::*;
use proptest::prelude::*;

fn arb_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Unit),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::Int),
        "[a-z]{0,6}".prop_map(Value::text),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Value::pair(a, b)),
            (any::<u8>(), inner.clone()).prop_map(|(t, v)| Value::union(t, v)),
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Seq),
            prop::collection::btree_map(inner.clone(), inner, 0..4).prop_map(Value::Map),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encoding_round_trips(v in arb_value()) {
        let bytes = encode(&v);
        prop_assert_eq!(decode(&bytes).unwrap(), v.clone());
        prop_assert_eq!(encode(&v), bytes);
    }

    #[test]
    fn composition_law(n in 1usize..7, picks in prop::collection::vec(any::<bool>(), 7), p in 0usize..7) {
        let all: Vec<String> = (0..n).map(|i| format!("l{i}")).collect();
        let b = census_of(&all).unwrap();
        let a_names: Vec<&String> = all.iter().zip(&picks).filter(|(_, k)| **k).map(|(x, _)| x).collect();
        prop_assume!(!a_names.is_empty());
        let a = census_of(&a_names).unwrap();
        let p = a.get(p % a.len()).unwrap();
        let composed = compose(&member(p.name(), &a).unwrap(), &subset(&a, &b).unwrap()).unwrap();
        prop_assert_eq!(composed, member(p.name(), &b).unwrap());
    }

    #[test]
    fn message_count_is_seed_independent(s1 in any::<u64>(), s2 in any::<u64>()) {
        let l = Lottery::new(2, 3, vec![1, 2, 3]);
        let a = run_simulated(&l, s1, DEFAULT_STEP_BUDGET).unwrap();
        let b = run_simulated(&l, s2, DEFAULT_STEP_BUDGET).unwrap();
        prop_assert_eq!(a.message_count(), b.message_count());
        prop_assert_eq!(a.message_count(), run_centralized(&l, s1).message_count());
    }

    #[test]
    fn lottery_reveals_the_indexed_secret(
        rhos in prop::collection::vec(0i64..1000, 1..4),
        secrets in prop::collection::vec(-5000i64..5000, 1..5),
        seed in any::<u64>(),
    ) {
        let mut l = Lottery::new(rhos.len(), secrets.len(), secrets.clone());
        l.rho = RhoSource::Fixed(rhos.clone());
        let r = run_simulated(&l, seed, DEFAULT_STEP_BUDGET).unwrap();
        let w = (rhos.iter().sum::<i64>() as usize) % secrets.len();
        let (revealed, _) = r.result("analyst").unwrap().as_pair().unwrap();
        let got = present(revealed).unwrap().as_int().unwrap();
        prop_assert_eq!(got, secrets[w].rem_euclid(999_983));
        assert_well_formed(&r);
    }

    #[test]
    fn gmw_owners_agree(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let census = Gmw::parties(3);
        let circuits = circuits_up_to_depth(&census, 2);
        let c = pick.get(&circuits).clone();
        let inputs = pick.get(&input_assignments(&c)).clone();
        let want = eval_circuit(&c, &inputs).unwrap();
        let r = run_simulated(&Gmw { census, circuit: c, inputs }, seed, DEFAULT_STEP_BUDGET).unwrap();
        prop_assert_eq!(r.result("p2"), Some(&Value::Bool(want)));
        prop_assert!(r.check_agreement().unwrap() > 0);
    }
}
