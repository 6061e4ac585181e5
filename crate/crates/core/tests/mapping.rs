mod support;

use support::criteria;

#[test]
fn exact_semantic_and_fallback_routes() {
    println!("{}", criteria::mapping_routing().unwrap());
}
