mod common;

use common::*;
use homogcl::augment::{mask_features, sample_view, AugmentConfig, MaskMode};
use homogcl::encoder::{gcn_forward, identity_adjacency, normalize_adjacency, EncoderParams};
use homogcl::graph::Graph;
use homogcl::numerics::{DenseMatrix, Seed};
use proptest::prelude::*;

fn permuted(g: &Graph, perm: &[usize]) -> Graph {
    // Node i of the original becomes node perm[i].
    let edges = g.edges().iter().map(|&(a, b)| (perm[a], perm[b])).collect();
    let mut x = DenseMatrix::zeros(g.num_nodes(), g.feature_dim());
    for i in 0..g.num_nodes() {
        x.row_mut(perm[i]).copy_from_slice(g.features().row(i));
    }
    Graph::new(g.num_nodes(), edges, x, None).unwrap()
}

fn spectral_radius(a: &DenseMatrix, stream: &mut homogcl::numerics::Stream) -> f64 {
    let n = a.rows();
    let mut v = DenseMatrix::from_fn(n, 1, |_, _| stream.normal());
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = a.matmul(&v).unwrap();
        let norm = w.frobenius_norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm / v.frobenius_norm();
        v = w.scale(1.0 / norm);
    }
    lambda
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normalized_adjacency_is_symmetric_with_unit_radius(seed in any::<u64>(), n in 1usize..20, p in 0.0f64..0.8) {
        let mut s = Seed(seed).stream();
        let g = random_graph(n, p, 1, &mut s);
        let a = normalize_adjacency(&g);
        prop_assert!(a.is_symmetric(1e-15));
        prop_assert!(spectral_radius(&a.to_dense(), &mut s) <= 1.0 + 1e-9);
    }

    #[test]
    fn gcn_output_is_permutation_equivariant(seed in any::<u64>(), n in 2usize..16) {
        let mut s = Seed(seed).stream();
        let g = random_graph(n, 0.4, 4, &mut s);
        let perm = s.permutation(n);
        let pg = permuted(&g, &perm);
        let params = EncoderParams::init(&[4, 6, 3], false, Seed(seed)).unwrap();
        let h = gcn_forward(&normalize_adjacency(&g), g.features(), &params).unwrap();
        let ph = gcn_forward(&normalize_adjacency(&pg), pg.features(), &params).unwrap();
        for i in 0..n {
            for c in 0..3 {
                prop_assert!((h.get(i, c) - ph.get(perm[i], c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_propagation_is_row_local(seed in any::<u64>(), n in 2usize..12, row in 0usize..12) {
        prop_assume!(row < n);
        let mut s = Seed(seed).stream();
        let x = random_matrix(n, 4, &mut s);
        let params = EncoderParams::init(&[4, 5, 3], false, Seed(seed)).unwrap();
        let adj = identity_adjacency(n);
        let h = gcn_forward(&adj, &x, &params).unwrap();
        let mut x2 = x.clone();
        x2.row_mut(row).iter_mut().for_each(|v| *v += 1.0 + s.uniform());
        let h2 = gcn_forward(&adj, &x2, &params).unwrap();
        for i in (0..n).filter(|&i| i != row) {
            prop_assert_eq!(h.row(i), h2.row(i));
        }
    }

    #[test]
    fn views_are_deterministic_and_subsets(seed in any::<u64>(), n in 2usize..20, pe in 0.0f64..1.0, pf in 0.0f64..1.0) {
        let mut s = Seed(seed).stream();
        let g = random_graph(n, 0.4, 3, &mut s);
        let cfg = AugmentConfig { p_e: pe, p_f: pf, mask_mode: MaskMode::Column };
        let a = sample_view(&g, &cfg, &mut Seed(seed).child("v").stream()).unwrap();
        let b = sample_view(&g, &cfg, &mut Seed(seed).child("v").stream()).unwrap();
        prop_assert_eq!(a.edges(), b.edges());
        prop_assert_eq!(a.features(), b.features());
        for (e, &orig) in a.edge_origin().iter().enumerate() {
            prop_assert_eq!(a.edges()[e], g.edges()[orig]);
        }
        for c in 0..3 {
            let zeroed = (0..n).all(|i| a.features().get(i, c) == 0.0);
            let kept = (0..n).all(|i| a.features().get(i, c) == g.features().get(i, c));
            prop_assert!(zeroed || kept);
        }
    }

    #[test]
    fn entry_mask_only_zeroes(seed in any::<u64>(), pf in 0.0f64..1.0) {
        let mut s = Seed(seed).stream();
        let x = random_matrix(8, 5, &mut s);
        let m = mask_features(&x, pf, MaskMode::Entry, &mut s);
        for (a, b) in x.data().iter().zip(m.data()) {
            prop_assert!(*b == 0.0 || a == b);
        }
    }
}

#[test]
fn extreme_drop_rates() {
    let mut s = Seed(3).stream();
    let g = random_graph(10, 0.5, 2, &mut s);
    let keep = AugmentConfig { p_e: 0.0, p_f: 0.0, mask_mode: MaskMode::Column };
    let drop = AugmentConfig { p_e: 1.0, p_f: 1.0, mask_mode: MaskMode::Column };
    let a = sample_view(&g, &keep, &mut s).unwrap();
    assert_eq!(a.edges(), g.edges());
    assert_eq!(a.features(), g.features());
    let b = sample_view(&g, &drop, &mut s).unwrap();
    assert_eq!(b.num_edges(), 0);
    assert!(b.features().data().iter().all(|&v| v == 0.0));
}
