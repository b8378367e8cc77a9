mod common;

use common::*;
use homogcl::cluster::EdgeSaliency;
use homogcl::graph::Graph;
use homogcl::loss::{grace_loss, homogcl_contrastive};
use homogcl::numerics::{DenseMatrix, Seed};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn neighbor_expansion_never_lowers_the_loss(
        seed in any::<u64>(),
        n in prop::sample::select(vec![4usize, 8, 16]),
        d in 1usize..8,
        tau in prop::sample::select(vec![0.2, 0.5, 1.0]),
    ) {
        let mut s = Seed(seed).stream();
        let c = contrast_instance(n, d, &mut s);
        let grace = grace_loss(&c.u, &c.v, tau).unwrap();
        let homo = homogcl_contrastive(&c.u, &c.v, &c.saliency, &c.views[0], &c.views[1], tau).unwrap();
        prop_assert!(homo - grace >= -1e-9, "grace {} homogcl {}", grace, homo);
    }

    #[test]
    fn contrastive_values_are_nonpositive(seed in any::<u64>(), n in 2usize..10, tau in 0.1f64..10.0) {
        let mut s = Seed(seed).stream();
        let c = contrast_instance(n, 3, &mut s);
        let grace = grace_loss(&c.u, &c.v, tau).unwrap();
        let homo = homogcl_contrastive(&c.u, &c.v, &c.saliency, &c.views[0], &c.views[1], tau).unwrap();
        prop_assert!(grace.is_finite() && grace <= 0.0);
        prop_assert!(homo.is_finite() && homo <= 0.0);
    }

    #[test]
    fn zero_saliency_on_edgeless_views_is_grace(seed in any::<u64>(), n in 2usize..10, tau in 0.1f64..2.0) {
        let mut s = Seed(seed).stream();
        let u = random_matrix(n, 3, &mut s);
        let v = random_matrix(n, 3, &mut s);
        let empty = Graph::new(n, vec![], DenseMatrix::zeros(n, 1), None).unwrap();
        let homo = homogcl_contrastive(&u, &v, &EdgeSaliency(vec![]), &empty, &empty, tau).unwrap();
        prop_assert_eq!(homo, grace_loss(&u, &v, tau).unwrap());
    }

    #[test]
    fn grace_is_symmetric_in_views(seed in any::<u64>(), n in 2usize..10) {
        let mut s = Seed(seed).stream();
        let u = random_matrix(n, 3, &mut s);
        let v = random_matrix(n, 3, &mut s);
        let a = grace_loss(&u, &v, 0.5).unwrap();
        let b = grace_loss(&v, &u, 0.5).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn strict_when_a_neighbor_term_is_positive() {
    let mut s = Seed(11).stream();
    let mut c = contrast_instance(8, 3, &mut s);
    assert!(c.views[0].num_edges() > 0);
    c.saliency = EdgeSaliency::constant(c.graph.num_edges(), 0.5);
    let grace = grace_loss(&c.u, &c.v, 0.5).unwrap();
    let homo = homogcl_contrastive(&c.u, &c.v, &c.saliency, &c.views[0], &c.views[1], 0.5).unwrap();
    assert!(homo > grace);
}
