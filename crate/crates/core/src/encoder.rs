//! GCN encoder: symmetric adjacency normalization, the layered forward pass,
//! and the optional two-layer head used for projection (GRACE) or prediction
//! (BGRL).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numerics::{DenseMatrix, ParamSet, Seed, SparseMatrix, Tape, Var};

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
pub fn normalize_adjacency(graph: &Graph) -> SparseMatrix {
    let n = graph.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / ((graph.adjacency().degree(i) + 1) as f64).sqrt())
        .collect();
    let mut triplets = Vec::with_capacity(n + 2 * graph.num_edges());
    for (i, &d) in inv_sqrt.iter().enumerate() {
        triplets.push((i, i, d * d));
    }
    for &(a, b) in graph.edges() {
        let w = inv_sqrt[a] * inv_sqrt[b];
        triplets.push((a, b, w));
        triplets.push((b, a, w));
    }
    SparseMatrix::from_triplets(n, n, triplets).expect("edges are in range")
}

/// `I_n`, the propagation matrix with message passing disabled.
pub fn identity_adjacency(n: usize) -> SparseMatrix {
    SparseMatrix::identity(n)
}

/// Weights of an `L`-layer GCN plus an optional two-layer `d′ → d′` head.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub params: ParamSet,
    num_layers: usize,
    has_head: bool,
}

fn glorot(rows: usize, cols: usize, seed: Seed) -> DenseMatrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let mut s = seed.stream();
    DenseMatrix::from_fn(rows, cols, |_, _| s.uniform_range(-bound, bound))
}

impl EncoderParams {
    /// `dims = [d_in, d_1, …, d_L]`; requires `L ≥ 1`.
    pub fn init(dims: &[usize], head: bool, seed: Seed) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::config(format!("invalid encoder dimensions {dims:?}")));
        }
        let mut params = ParamSet::new();
        for (l, w) in dims.windows(2).enumerate() {
            params.push(
                format!("gcn.w{}", l + 1),
                glorot(w[0], w[1], seed.child("gcn").index(l as u64)),
            );
        }
        let out = *dims.last().expect("non-empty");
        if head {
            for l in 0..2 {
                params.push(
                    format!("head.w{}", l + 1),
                    glorot(out, out, seed.child("head").index(l as u64)),
                );
            }
        }
        Ok(Self {
            params,
            num_layers: dims.len() - 1,
            has_head: head,
        })
    }

    /// Builds from explicit weights; the head, if given, is `[first, second]`.
    pub fn from_weights(layers: Vec<DenseMatrix>, head: Option<[DenseMatrix; 2]>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("encoder needs at least one layer"));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].cols() != pair[1].rows() {
                return Err(Error::shape(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    l + 1,
                    pair[0].cols(),
                    l + 2,
                    pair[1].rows()
                )));
            }
        }
        let num_layers = layers.len();
        let out = layers[num_layers - 1].cols();
        let mut params = ParamSet::new();
        for (l, w) in layers.into_iter().enumerate() {
            params.push(format!("gcn.w{}", l + 1), w);
        }
        let has_head = head.is_some();
        if let Some(ws) = head {
            for (l, w) in ws.into_iter().enumerate() {
                if w.shape() != (out, out) {
                    return Err(Error::shape(format!(
                        "head layer {} must be {out}x{out}, got {:?}",
                        l + 1,
                        w.shape()
                    )));
                }
                params.push(format!("head.w{}", l + 1), w);
            }
        }
        Ok(Self {
            params,
            num_layers,
            has_head,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn has_head(&self) -> bool {
        self.has_head
    }

    pub fn output_dim(&self) -> usize {
        self.params.get(self.num_layers - 1).cols()
    }

    pub fn input_dim(&self) -> usize {
        self.params.get(0).rows()
    }

    pub fn layer_weights(&self) -> &[DenseMatrix] {
        &self.params.values()[..self.num_layers]
    }

    pub fn head_weights(&self) -> Option<&[DenseMatrix]> {
        self.has_head
            .then(|| &self.params.values()[self.num_layers..self.num_layers + 2])
    }

    /// Parameter set holding only the GCN layers (what an EMA target tracks).
    pub fn encoder_only(&self) -> ParamSet {
        let mut p = ParamSet::new();
        for (name, w) in self.params.iter().take(self.num_layers) {
            p.push(name, w.clone());
        }
        p
    }
}

/// Tape handles for a bound [`EncoderParams`].
#[derive(Debug, Clone)]
pub struct BoundEncoder {
    pub layers: Vec<Var>,
    pub head: Option<[Var; 2]>,
}

impl BoundEncoder {
    /// Splits the parameter handles from [`ParamSet::bind`] into layers and head.
    pub fn from_vars(enc: &EncoderParams, vars: &[Var]) -> Self {
        let layers = vars[..enc.num_layers].to_vec();
        let head = enc
            .has_head
            .then(|| [vars[enc.num_layers], vars[enc.num_layers + 1]]);
        Self { layers, head }
    }
}

/// Recorded GCN forward pass: `Â σ(… σ(Â X W¹) …) Wᴸ`, ReLU between layers, none after the last.
pub fn gcn_forward_tape(tape: &mut Tape, adj: &Arc<SparseMatrix>, x: Var, layers: &[Var]) -> Var {
    let mut h = x;
    for (l, &w) in layers.iter().enumerate() {
        let hw = tape.matmul(h, w);
        h = tape.spmm(adj, hw);
        if l + 1 < layers.len() {
            h = tape.relu(h);
        }
    }
    h
}

/// Recorded two-layer head: `relu(H W₁) W₂`.
pub fn head_tape(tape: &mut Tape, h: Var, head: [Var; 2]) -> Var {
    let z = tape.matmul(h, head[0]);
    let z = tape.relu(z);
    tape.matmul(z, head[1])
}

/// Evaluates the GCN layers of `params` on `x` without recording gradients.
pub fn gcn_forward(adj: &SparseMatrix, x: &DenseMatrix, params: &EncoderParams) -> Result<DenseMatrix> {
    gcn_forward_weights(adj, x, params.layer_weights())
}

pub fn gcn_forward_weights(adj: &SparseMatrix, x: &DenseMatrix, layers: &[DenseMatrix]) -> Result<DenseMatrix> {
    if adj.rows() != x.rows() || adj.cols() != x.rows() {
        return Err(Error::shape(format!(
            "{}x{} adjacency for {} feature rows",
            adj.rows(),
            adj.cols(),
            x.rows()
        )));
    }
    let mut h = x.clone();
    for (l, w) in layers.iter().enumerate() {
        h = adj.spmm(&h.matmul(w)?)?;
        if l + 1 < layers.len() {
            h = h.map(relu);
        }
    }
    Ok(h)
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Applies the head of `params` to `h`.
pub fn project(h: &DenseMatrix, params: &EncoderParams) -> Result<DenseMatrix> {
    let head = params
        .head_weights()
        .ok_or_else(|| Error::config("projection head is disabled"))?;
    let z = h.matmul(&head[0])?.map(relu);
    z.matmul(&head[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: Vec<(usize, usize)>) -> Graph {
        Graph::new(n, edges, DenseMatrix::zeros(n, 1), None).unwrap()
    }

    #[test]
    fn isolated_node_normalizes_to_one() {
        let a = normalize_adjacency(&graph(1, vec![]));
        assert_eq!(a.to_dense(), DenseMatrix::identity(1));
    }

    #[test]
    fn two_connected_nodes() {
        let a = normalize_adjacency(&graph(2, vec![(0, 1)])).to_dense();
        for v in a.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn path_graph_entries() {
        let a = normalize_adjacency(&graph(3, vec![(0, 1), (1, 2)]));
        assert!((a.get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!((a.get(0, 1) - 0.40825).abs() < 1e-5);
        assert!((a.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!(a.is_symmetric(1e-12));
    }

    #[test]
    fn edgeless_normalization_is_identity() {
        assert_eq!(normalize_adjacency(&graph(4, vec![])), identity_adjacency(4));
    }

    #[test]
    fn zero_features_give_zero_embeddings() {
        let enc = EncoderParams::init(&[3, 5, 2], false, Seed(1)).unwrap();
        let adj = normalize_adjacency(&graph(4, vec![(0, 1), (2, 3)]));
        let h = gcn_forward(&adj, &DenseMatrix::zeros(4, 3), &enc).unwrap();
        assert_eq!(h, DenseMatrix::zeros(4, 2));
    }

    #[test]
    fn identity_weights_single_node() {
        let enc =
            EncoderParams::from_weights(vec![DenseMatrix::identity(3), DenseMatrix::identity(3)], None)
                .unwrap();
        let x = DenseMatrix::from_rows(&[[0.5, 2.0, 0.0]]).unwrap();
        let h = gcn_forward(&identity_adjacency(1), &x, &enc).unwrap();
        assert_eq!(h, x);
    }

    #[test]
    fn two_node_hand_computation() {
        // Â = ½·ones, W¹ = 2, W² = -1.
        // x = [1, 3]:  Â x W¹ = [4, 4], Â·[4, 4]·(-1) = [-4, -4]
        // x = [1, -3]: Â x W¹ = [-2, -2], cut by the ReLU
        let enc = EncoderParams::from_weights(
            vec![DenseMatrix::scalar(2.0), DenseMatrix::scalar(-1.0)],
            None,
        )
        .unwrap();
        let adj = normalize_adjacency(&graph(2, vec![(0, 1)]));
        let x = DenseMatrix::from_rows(&[[1.0], [3.0]]).unwrap();
        let h = gcn_forward(&adj, &x, &enc).unwrap();
        assert!(h.max_abs_diff(&DenseMatrix::filled(2, 1, -4.0)) < 1e-12);
        let x = DenseMatrix::from_rows(&[[1.0], [-3.0]]).unwrap();
        assert!(gcn_forward(&adj, &x, &enc).unwrap().max_abs_diff(&DenseMatrix::zeros(2, 1)) < 1e-12);
    }

    #[test]
    fn head_requires_enabled_config() {
        let enc = EncoderParams::init(&[2, 3], false, Seed(0)).unwrap();
        assert!(matches!(project(&DenseMatrix::zeros(1, 3), &enc), Err(Error::Config(_))));
    }

    #[test]
    fn head_identity_and_zero() {
        let enc = EncoderParams::from_weights(
            vec![DenseMatrix::identity(2)],
            Some([DenseMatrix::identity(2), DenseMatrix::identity(2)]),
        )
        .unwrap();
        let h = DenseMatrix::from_rows(&[[1.0, 0.5], [0.0, 3.0]]).unwrap();
        assert_eq!(project(&h, &enc).unwrap(), h);
        let enc = EncoderParams::from_weights(
            vec![DenseMatrix::identity(2)],
            Some([DenseMatrix::identity(2), DenseMatrix::zeros(2, 2)]),
        )
        .unwrap();
        assert_eq!(project(&h, &enc).unwrap(), DenseMatrix::zeros(2, 2));
    }

    #[test]
    fn head_matches_hand_chain() {
        let w1 = DenseMatrix::from_rows(&[[1.0, -1.0, 0.0], [0.5, 0.5, 0.5], [0.0, 2.0, -1.0]]).unwrap();
        let w2 = DenseMatrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 1.0, 1.0]]).unwrap();
        let enc = EncoderParams::from_weights(vec![DenseMatrix::identity(3)], Some([w1.clone(), w2.clone()]))
            .unwrap();
        let h = DenseMatrix::from_fn(4, 3, |i, j| (i as f64) - (j as f64) * 0.7);
        let got = project(&h, &enc).unwrap();
        for i in 0..4 {
            let z: Vec<f64> = (0..3)
                .map(|c| (0..3).map(|k| h.get(i, k) * w1.get(k, c)).sum::<f64>().max(0.0))
                .collect();
            for c in 0..3 {
                let want: f64 = (0..3).map(|k| z[k] * w2.get(k, c)).sum();
                assert!((got.get(i, c) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tape_forward_matches_plain_forward() {
        let enc = EncoderParams::init(&[3, 4, 2], true, Seed(9)).unwrap();
        let g = graph(5, vec![(0, 1), (1, 2), (3, 4)]);
        let adj = Arc::new(normalize_adjacency(&g));
        let x = DenseMatrix::from_fn(5, 3, |i, j| ((i * 3 + j) as f64).sin());
        let mut tape = Tape::new();
        let vars = enc.params.bind(&mut tape);
        let bound = BoundEncoder::from_vars(&enc, &vars);
        let xv = tape.constant(x.clone());
        let h = gcn_forward_tape(&mut tape, &adj, xv, &bound.layers);
        let z = head_tape(&mut tape, h, bound.head.unwrap());
        let plain = gcn_forward(&adj, &x, &enc).unwrap();
        assert_eq!(tape.value(h), &plain);
        assert_eq!(tape.value(z), &project(&plain, &enc).unwrap());
    }
}
