mod support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sidekick_core::embeddings::{cosine, load_matrix, load_matrix_file, EmbeddingMatrix, EmbeddingRow};
use sidekick_core::ontology::TermId;

use support::criteria::mini_dir;
use support::oracles;

fn random_matrix(rng: &mut ChaCha8Rng) -> EmbeddingMatrix {
    let rows = (0..rng.gen_range(1..40))
        .map(|i| EmbeddingRow {
            surface: format!("label {i}"),
            term_id: TermId::new(format!("T:{:04}", rng.gen_range(0..12))).unwrap(),
            // Coarse values so that tied scores really happen.
            vector: (0..3).map(|_| f64::from(rng.gen_range(-2i8..=2))).collect(),
        })
        .filter(|r| r.vector.iter().any(|&x| x != 0.0))
        .collect();
    EmbeddingMatrix::new(3, "test", rows).unwrap()
}

#[test]
fn cosine_matches_the_textbook_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let u: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert!((cosine(&u, &v).unwrap() - oracles::cosine(&u, &v)).abs() < 1e-12);
    }
    assert!(cosine(&[1.0, 0.0], &[1.0]).is_err());
}

#[test]
fn top_k_is_the_best_row_per_term_in_rank_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let m = random_matrix(&mut rng);
        if m.is_empty() {
            continue;
        }
        let query: Vec<f64> = (0..3).map(|_| f64::from(rng.gen_range(-2i8..=2))).collect();
        if query.iter().all(|&x| x == 0.0) {
            continue;
        }
        let k = rng.gen_range(1..15);

        // Brute force: best (score, smallest surface) per term, then sort by
        // score descending and id ascending.
        let mut best: std::collections::BTreeMap<TermId, (f64, String)> = Default::default();
        for r in m.rows() {
            let s = oracles::cosine(&query, &r.vector);
            let e = best
                .entry(r.term_id.clone())
                .or_insert((f64::NEG_INFINITY, String::new()));
            if s > e.0 || (s == e.0 && r.surface < e.1) {
                *e = (s, r.surface.clone());
            }
        }
        let mut want: Vec<(TermId, f64)> = best.into_iter().map(|(t, (s, _))| (t, s)).collect();
        want.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        want.truncate(k);

        let got = m.top_k_dedup(&query, k).unwrap();
        assert_eq!(got.len(), want.len());
        for (g, (id, s)) in got.iter().zip(&want) {
            assert_eq!(&g.term_id, id);
            assert!((g.score - s).abs() < 1e-12);
        }
    }
}

#[test]
fn matrix_round_trips_through_json_lines() {
    let m = load_matrix_file(mini_dir().join("hpo_embeddings.jsonl")).unwrap();
    let mut buf = Vec::new();
    m.write_to(&mut buf).unwrap();
    let back = load_matrix(buf.as_slice()).unwrap();
    assert_eq!(back.dimension(), m.dimension());
    assert_eq!(back.rows(), m.rows());
}
