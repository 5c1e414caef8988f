use actorparse::features::{parse_fs, render_fs, subsumes, unify, FeatureStructure, Value};
use proptest::prelude::*;

const ATTRS: [&str; 6] = ["case", "num", "gen", "pers", "agr", "cat"];
const ATOMS: [&str; 4] = ["a", "b", "c", "d"];

fn atom_set() -> impl Strategy<Value = Value> {
    proptest::sample::subsequence(ATOMS.to_vec(), 1..=ATOMS.len()).prop_map(Value::atoms)
}

fn structure(depth: u32) -> BoxedStrategy<FeatureStructure> {
    let value: BoxedStrategy<Value> = if depth == 0 {
        atom_set().boxed()
    } else {
        prop_oneof![
            3 => atom_set(),
            1 => structure(depth - 1).prop_map(Value::Nested),
        ]
        .boxed()
    };
    proptest::collection::btree_map(proptest::sample::select(ATTRS.to_vec()), value, 0..=6)
        .prop_map(|m| {
            let mut fs = FeatureStructure::new();
            for (k, v) in m {
                fs.insert(k, v).unwrap();
            }
            fs
        })
        .boxed()
}

fn fs3() -> BoxedStrategy<FeatureStructure> {
    structure(2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn idempotent(a in fs3()) {
        prop_assert_eq!(unify(&a, &a), Some(a.clone()));
    }

    #[test]
    fn commutative(a in fs3(), b in fs3()) {
        prop_assert_eq!(unify(&a, &b), unify(&b, &a));
    }

    #[test]
    fn associative(a in fs3(), b in fs3(), c in fs3()) {
        let left = unify(&b, &c).and_then(|bc| unify(&a, &bc));
        let right = unify(&a, &b).and_then(|ab| unify(&ab, &c));
        prop_assert_eq!(left, right);
    }

    #[test]
    fn monotone(a in fs3(), b in fs3()) {
        if let Some(c) = unify(&a, &b) {
            prop_assert!(subsumes(&a, &c));
            prop_assert!(subsumes(&b, &c));
        }
    }

    #[test]
    fn render_round_trips(a in fs3()) {
        prop_assert_eq!(parse_fs(&render_fs(&a)).unwrap(), a);
    }
}
