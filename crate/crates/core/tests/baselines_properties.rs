use ndarray::Array1;
use proptest::prelude::*;
use sinkmatch_core::synthetic::{random_fragment_set, rng};
use sinkmatch_core::{cam_similarity, pem_wasserstein, vse_similarity, CamConfig, FragmentSet, GaussianEmbedding};

fn set_strategy(id: u32) -> impl Strategy<Value = FragmentSet> {
    (1usize..6, any::<u64>()).prop_map(move |(k, seed)| random_fragment_set(&mut rng(seed), k, 4, id))
}

fn gaussian_strategy() -> impl Strategy<Value = GaussianEmbedding> {
    (
        prop::collection::vec(-3.0..3.0f64, 4),
        prop::collection::vec(0.0..2.0f64, 4),
    )
        .prop_map(|(m, c)| GaussianEmbedding::new(Array1::from(m), Array1::from(c)).unwrap())
}

fn reorder(set: &FragmentSet, shift: usize) -> FragmentSet {
    let k = set.len();
    let perm: Vec<usize> = (0..k).map(|i| (i + shift) % k).collect();
    FragmentSet::ingest(set.raw().select(ndarray::Axis(0), &perm), None, set.sample_id()).unwrap()
}

proptest! {
    #[test]
    fn vse_is_symmetric(a in set_strategy(0), b in set_strategy(1)) {
        let ab = vse_similarity(&a, &b).unwrap();
        let ba = vse_similarity(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&ab));
    }

    #[test]
    fn pem_is_a_symmetric_distance(a in gaussian_strategy(), b in gaussian_strategy()) {
        prop_assert_eq!(pem_wasserstein(&a, &a).unwrap(), 0.0);
        let ab = pem_wasserstein(&a, &b).unwrap();
        prop_assert!((ab - pem_wasserstein(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(ab >= 0.0);
    }

    #[test]
    fn cam_ignores_fragment_order(q in set_strategy(0), t in set_strategy(1), sq in 0usize..5, st in 0usize..5) {
        let cfg = CamConfig::default();
        let base = cam_similarity(&q, &t, &cfg).unwrap();
        prop_assert!((cam_similarity(&q, &reorder(&t, st), &cfg).unwrap() - base).abs() < 1e-12);
        prop_assert!((cam_similarity(&reorder(&q, sq), &t, &cfg).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn cam_against_a_single_target_sums_the_query_cosines(q in set_strategy(0), seed in any::<u64>()) {
        // with one target v every attended vector is v / L, so each weight is 1
        let t = random_fragment_set(&mut rng(seed), 1, 4, 1);
        // a negative cosine empties the candidate set, which falls back to the single target
        let cfg = CamConfig::default();
        let v = t.unit().row(0).to_owned();
        let expected: f64 = q.unit().rows().into_iter().map(|r| r.dot(&v)).sum();
        prop_assert!((cam_similarity(&q, &t, &cfg).unwrap() - expected).abs() < 1e-12);
    }
}

#[test]
fn cam_with_one_fragment_each_is_the_cosine() {
    let q = FragmentSet::from_rows(&[vec![1.0, 0.0]], None, 0).unwrap();
    let t = FragmentSet::from_rows(&[vec![0.6, 0.8]], None, 1).unwrap();
    assert!((cam_similarity(&q, &t, &CamConfig::default()).unwrap() - 0.6).abs() < 1e-12);
}
