mod support;

use proptest::prelude::*;
use sidekick_core::spl_corpus::{matched_characters, ratcliff_ratio};

use support::{criteria, oracles};

#[test]
fn planted_duplicate_clusters_are_recovered() {
    println!("{}", criteria::dedup_oracle().unwrap());
}

#[test]
fn ratio_reference_values() {
    assert_eq!(ratcliff_ratio("abcd", "bcde"), 0.75);
    assert_eq!(ratcliff_ratio("", ""), 1.0);
    assert_eq!(ratcliff_ratio("abc", ""), 0.0);
    assert_eq!(matched_characters("the cat", "a cat"), 4);
}

proptest! {
    #[test]
    fn ratio_equals_exhaustive_block_search(a in "[ab c]{0,30}", b in "[ab c]{0,30}") {
        prop_assert_eq!(ratcliff_ratio(&a, &b), oracles::ratcliff(&a, &b));
    }

    #[test]
    fn ratio_handles_multibyte_text(a in "[aé✓ ]{0,12}", b in "[aé✓ ]{0,12}") {
        prop_assert_eq!(ratcliff_ratio(&a, &b), oracles::ratcliff(&a, &b));
    }
}
