mod support;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sidekick_core::kg::{
    build_graph, parse_turtle, serialize_turtle, DatasetMetadata, Namespaces, METADATA_TRIPLES, SCHEMA_TRIPLES,
};

use support::criteria;

#[test]
fn round_trips_clean_builds_and_injected_faults() {
    println!("{}", criteria::kg_roundtrip_and_shapes().unwrap());
}

#[test]
fn empty_input_is_schema_and_metadata_only() {
    let g = build_graph(&Default::default(), &DatasetMetadata::default(), &Namespaces::default()).unwrap();
    assert_eq!(g.len(), SCHEMA_TRIPLES + METADATA_TRIPLES);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn turtle_round_trip(seed in any::<u64>()) {
        let triples = criteria::random_triples(&mut ChaCha8Rng::seed_from_u64(seed));
        let text = serialize_turtle(&triples);
        prop_assert_eq!(parse_turtle(&text).unwrap(), triples);
    }

    #[test]
    fn serialization_is_deterministic(seed in any::<u64>()) {
        let input = criteria::random_input(&mut ChaCha8Rng::seed_from_u64(seed));
        let meta = DatasetMetadata::default();
        let a = serialize_turtle(&build_graph(&input, &meta, &Namespaces::default()).unwrap());
        let b = serialize_turtle(&build_graph(&input.clone(), &meta, &Namespaces::default()).unwrap());
        prop_assert_eq!(a, b);
    }
}
