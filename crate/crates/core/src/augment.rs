//! Stochastic view generation: edge dropping followed by feature masking.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numerics::{DenseMatrix, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskMode {
    /// One mask over feature dimensions, shared by every node.
    #[default]
    Column,
    /// An independent draw per matrix entry.
    Entry,
}

impl MaskMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskMode::Column => "column",
            MaskMode::Entry => "entry",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "column" => Ok(MaskMode::Column),
            "entry" => Ok(MaskMode::Entry),
            other => Err(Error::config(format!("unknown mask mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub p_e: f64,
    pub p_f: f64,
    pub mask_mode: MaskMode,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            p_e: 0.4,
            p_f: 0.2,
            mask_mode: MaskMode::Column,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("aug.p_e", self.p_e), ("aug.p_f", self.p_f)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name}={p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Keeps each edge independently with probability `1 − p_e`.
pub fn drop_edges(graph: &Graph, p_e: f64, stream: &mut Stream) -> Result<Graph> {
    let keep: Vec<usize> = (0..graph.num_edges())
        .filter(|_| !stream.bernoulli(p_e))
        .collect();
    graph.subgraph_edges(&keep, graph.features().clone())
}

/// Zeroes features with probability `p_f`, per column or per entry.
pub fn mask_features(x: &DenseMatrix, p_f: f64, mode: MaskMode, stream: &mut Stream) -> DenseMatrix {
    match mode {
        MaskMode::Column => {
            let masked: Vec<bool> = (0..x.cols()).map(|_| stream.bernoulli(p_f)).collect();
            DenseMatrix::from_fn(x.rows(), x.cols(), |r, c| {
                if masked[c] {
                    0.0
                } else {
                    x.get(r, c)
                }
            })
        }
        MaskMode::Entry => DenseMatrix::from_fn(x.rows(), x.cols(), |r, c| {
            if stream.bernoulli(p_f) {
                0.0
            } else {
                x.get(r, c)
            }
        }),
    }
}

pub fn sample_view(graph: &Graph, cfg: &AugmentConfig, stream: &mut Stream) -> Result<Graph> {
    cfg.validate()?;
    let dropped = drop_edges(graph, cfg.p_e, stream)?;
    let features = mask_features(dropped.features(), cfg.p_f, cfg.mask_mode, stream);
    dropped.with_features(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmConfig};
    use crate::numerics::Seed;

    fn sbm() -> Graph {
        generate_sbm(&SbmConfig {
            n: 60,
            num_classes: 3,
            p_in: 0.3,
            p_out: 0.05,
            feat_dim: 12,
            flip_prob: 0.1,
            seed: 2,
        })
        .unwrap()
    }

    fn within_three_sigma(count: usize, trials: usize, p: f64) -> bool {
        let mean = trials as f64 * p;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        (count as f64 - mean).abs() <= 3.0 * sd
    }

    #[test]
    fn drop_extremes() {
        let g = sbm();
        let mut s = Seed(1).stream();
        assert_eq!(drop_edges(&g, 0.0, &mut s).unwrap().edges(), g.edges());
        assert_eq!(drop_edges(&g, 1.0, &mut s).unwrap().num_edges(), 0);
    }

    #[test]
    fn drop_rate_is_binomial() {
        let n = 10_000;
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, i + 1)).collect();
        let g = Graph::new(n + 1, edges, DenseMatrix::zeros(n + 1, 1), None).unwrap();
        let kept = drop_edges(&g, 0.5, &mut Seed(4).stream()).unwrap().num_edges();
        assert!(within_three_sigma(kept, n, 0.5), "kept {kept}");
    }

    #[test]
    fn surviving_edges_remember_their_origin() {
        let g = sbm();
        let v = drop_edges(&g, 0.5, &mut Seed(8).stream()).unwrap();
        for (k, &e) in v.edge_origin().iter().enumerate() {
            assert_eq!(v.edges()[k], g.edges()[e]);
        }
        assert_eq!(v.num_nodes(), g.num_nodes());
        assert_eq!(v.labels(), g.labels());
    }

    #[test]
    fn mask_extremes_and_rate() {
        let x = DenseMatrix::filled(3, 1000, 1.0);
        let mut s = Seed(5).stream();
        assert_eq!(mask_features(&x, 0.0, MaskMode::Column, &mut s), x);
        assert_eq!(
            mask_features(&x, 1.0, MaskMode::Column, &mut s),
            DenseMatrix::zeros(3, 1000)
        );
        let m = mask_features(&x, 0.3, MaskMode::Column, &mut s);
        let masked_cols = (0..1000).filter(|&c| m.get(0, c) == 0.0).count();
        assert!(within_three_sigma(masked_cols, 1000, 0.3), "{masked_cols}");
        for c in 0..1000 {
            assert_eq!(m.get(0, c), m.get(2, c));
        }
        let e = mask_features(&x, 0.3, MaskMode::Entry, &mut s);
        let zeros = e.data().iter().filter(|&&v| v == 0.0).count();
        assert!(within_three_sigma(zeros, 3000, 0.3), "{zeros}");
    }

    #[test]
    fn view_without_augmentation_is_identity() {
        let g = sbm();
        let cfg = AugmentConfig {
            p_e: 0.0,
            p_f: 0.0,
            mask_mode: MaskMode::Column,
        };
        assert_eq!(sample_view(&g, &cfg, &mut Seed(0).stream()).unwrap(), g);
    }

    #[test]
    fn full_augmentation_empties_the_view() {
        let g = sbm();
        let cfg = AugmentConfig {
            p_e: 1.0,
            p_f: 1.0,
            mask_mode: MaskMode::Column,
        };
        let v = sample_view(&g, &cfg, &mut Seed(0).stream()).unwrap();
        assert_eq!(v.num_edges(), 0);
        assert_eq!(v.features(), &DenseMatrix::zeros(60, 12));
    }

    #[test]
    fn replayed_stream_gives_same_view() {
        let g = sbm();
        let cfg = AugmentConfig::default();
        let a = sample_view(&g, &cfg, &mut Seed(42).stream()).unwrap();
        let b = sample_view(&g, &cfg, &mut Seed(42).stream()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_probabilities_are_rejected() {
        let cfg = AugmentConfig {
            p_e: -0.1,
            ..AugmentConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
