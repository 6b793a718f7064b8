mod support;

use proptest::prelude::*;
use siat_core::knowledge::{execute_query, parse_query, render_query, TripleStore};

#[test]
fn indexed_evaluation_matches_scan() {
    for seed in 1..=100 {
        let mut r = support::rng(seed);
        let triples = support::random_triples(&mut r, 1000);
        let store = TripleStore::new();
        store.insert_triples(triples.clone());
        let all = store.triples();
        for _ in 0..5 {
            let q = support::random_query(&mut r, 3);
            assert_eq!(execute_query(&store, &q), support::brute_force_query(&all, &q), "seed {seed}: {q}");
        }
    }
}

#[test]
fn dump_load_preserves_store() {
    let mut r = support::rng(3);
    let store = TripleStore::new();
    store.insert_triples(support::random_triples(&mut r, 300));
    let copy = TripleStore::new();
    copy.load(&store.dump()).unwrap();
    assert_eq!(copy.triples(), store.triples());
}

proptest! {
    #[test]
    fn render_then_parse_is_identity(seed in any::<u64>()) {
        let q = support::random_query(&mut support::rng(seed), 4);
        let text = render_query(&q);
        prop_assert_eq!(parse_query(&text).unwrap(), q);
        prop_assert_eq!(render_query(&parse_query(&text).unwrap()), text);
    }

    #[test]
    fn insert_is_idempotent(seed in any::<u64>()) {
        let triples = support::random_triples(&mut support::rng(seed), 200);
        let store = TripleStore::new();
        let first = store.insert_triples(triples.clone());
        prop_assert_eq!(store.insert_triples(triples), 0);
        prop_assert_eq!(store.len(), first);
    }
}
