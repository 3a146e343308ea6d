mod common;

use common::{entropy_bits, simplex, spearman_no_ties};
use profiling_core::dataspace::facet_entropy;
use profiling_core::evaluation::{js_divergence, spearman, DivergenceMetric};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn js_properties_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let n = rng.gen_range(2..=12);
        let p = simplex(&mut rng, n);
        let q = simplex(&mut rng, n);
        let pq = js_divergence(&p, &q).unwrap();
        let qp = js_divergence(&q, &p).unwrap();
        assert!((pq - qp).abs() <= 1e-9);
        assert!(pq >= 0.0 && pq <= 1.0 + 1e-9);
        assert!(js_divergence(&p, &p).unwrap().abs() <= 1e-9);
        if p.iter().zip(&q).any(|(a, b)| (a - b).abs() > 1e-6) {
            assert!(pq > 0.0);
        }
    }
}

fn dist(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter_map("all zero", |v| {
        let s: f64 = v.iter().sum();
        (s > 1e-6).then(|| v.iter().map(|x| x / s).collect())
    })
}

proptest! {
    #[test]
    fn js_bounded_and_symmetric((p, q) in (2usize..10).prop_flat_map(|n| (dist(n), dist(n)))) {
        let a = js_divergence(&p, &q).unwrap();
        prop_assert!((a - js_divergence(&q, &p).unwrap()).abs() <= 1e-9);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}

#[test]
fn entropy_matches_hand_values() {
    let h = facet_entropy(&[3, 1]).unwrap();
    assert!((h.bits - entropy_bits(&[3, 1])).abs() <= 1e-4);
    assert!((h.bits - 0.8113).abs() <= 1e-4);
    // normalized by log2 of the 4 exemplars
    assert!((h.normalized - 0.4056).abs() <= 1e-4);
    let h = facet_entropy(&[5, 5, 5, 5]).unwrap();
    assert!((h.bits - 2.0).abs() <= 1e-12);
}

#[test]
fn alternative_metrics_agree_with_js() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..1000).map(|_| (simplex(&mut rng, 11), simplex(&mut rng, 11))).collect();
    let js: Vec<f64> = pairs.iter().map(|(p, q)| js_divergence(p, q).unwrap()).collect();
    for m in DivergenceMetric::ALL {
        let other: Vec<f64> = pairs.iter().map(|(p, q)| m.compute(p, q).unwrap()).collect();
        let rho = spearman(&js, &other).unwrap();
        // continuous samples have no ties, so the closed form applies
        assert!((rho - spearman_no_ties(&js, &other)).abs() <= 1e-9);
        assert!(rho >= 0.85, "{m}: {rho}");
    }
}
