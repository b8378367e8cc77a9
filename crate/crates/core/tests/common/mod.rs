//! Literal loop implementations used as independent references, and random
//! instance builders shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use homogcl::augment::drop_edges;
use homogcl::cluster::EdgeSaliency;
use homogcl::graph::Graph;
use homogcl::numerics::{DenseMatrix, Stream};

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for k in 0..a.len() {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

pub fn grace_oracle(u: &DenseMatrix, v: &DenseMatrix, tau: f64) -> f64 {
    let n = u.rows();
    let th = |a: &[f64], b: &[f64]| (cos(a, b) / tau).exp();
    let l = |x: &DenseMatrix, y: &DenseMatrix, i: usize| {
        let pos = th(x.row(i), y.row(i));
        let mut den = pos;
        for j in 0..n {
            if j != i {
                den += th(x.row(i), y.row(j));
                den += th(x.row(i), x.row(j));
            }
        }
        (pos / den).ln()
    };
    let mut total = 0.0;
    for i in 0..n {
        total += l(u, v, i) + l(v, u, i);
    }
    total / (2 * n) as f64
}

pub fn neighbor_sets(g: &Graph) -> Vec<HashSet<usize>> {
    let mut sets = vec![HashSet::new(); g.num_nodes()];
    for &(a, b) in g.edges() {
        sets[a].insert(b);
        sets[b].insert(a);
    }
    sets
}

/// Saliency keyed by the unordered endpoint pair.
pub fn saliency_map(g: &Graph, s: &EdgeSaliency) -> HashMap<(usize, usize), f64> {
    g.edges()
        .iter()
        .enumerate()
        .map(|(e, &(a, b))| ((a.min(b), a.max(b)), s.get(e)))
        .collect()
}

pub fn homogcl_oracle(
    u: &DenseMatrix,
    v: &DenseMatrix,
    s: &HashMap<(usize, usize), f64>,
    view_u: &Graph,
    view_v: &Graph,
    tau: f64,
) -> f64 {
    let n = u.rows();
    let nu = neighbor_sets(view_u);
    let nv = neighbor_sets(view_v);
    let th = |a: &[f64], b: &[f64]| (cos(a, b) / tau).exp();
    let l = |x: &DenseMatrix, y: &DenseMatrix, nx: &[HashSet<usize>], ny: &[HashSet<usize>], i: usize| {
        let mut pos = th(x.row(i), y.row(i));
        for &j in &nx[i] {
            pos += th(x.row(i), x.row(j)) * s[&(i.min(j), i.max(j))];
        }
        let mut neg = 0.0;
        for j in 0..n {
            if j != i && !ny[i].contains(&j) {
                neg += th(x.row(i), y.row(j));
            }
            if j != i && !nx[i].contains(&j) {
                neg += th(x.row(i), x.row(j));
            }
        }
        (pos / (pos + neg)).ln()
    };
    let mut total = 0.0;
    for i in 0..n {
        total += l(u, v, &nu, &nv, i) + l(v, u, &nv, &nu, i);
    }
    total / (2 * n) as f64
}

pub fn homophily_oracle(r: &DenseMatrix, g: &Graph) -> f64 {
    let k = r.cols();
    let mut total = 0.0;
    for &(i, j) in g.edges() {
        for c in 0..k {
            let d = r.get(i, c) - r.get(j, c);
            total += d * d;
        }
    }
    total / (k * g.num_edges()) as f64
}

pub fn bgrl_oracle(z: &DenseMatrix, h: &DenseMatrix) -> f64 {
    let mut total = 0.0;
    for i in 0..z.rows() {
        total += cos(z.row(i), h.row(i));
    }
    total / z.rows() as f64
}

pub fn expanded_oracle(z: &DenseMatrix, h: &DenseMatrix, s: &EdgeSaliency, g: &Graph) -> f64 {
    let mut total = 0.0;
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        total += s.get(e) * (cos(z.row(i), h.row(j)) + cos(z.row(j), h.row(i))) / 2.0;
    }
    total / g.num_edges() as f64
}

fn distinct(x: &[usize]) -> Vec<usize> {
    let mut d: Vec<usize> = x.to_vec();
    d.sort_unstable();
    d.dedup();
    d
}

pub fn nmi_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let (cp, ct) = (distinct(pred), distinct(truth));
    match (cp.len() == 1, ct.len() == 1) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let count = |f: &dyn Fn(usize) -> bool| (0..pred.len()).filter(|&i| f(i)).count() as f64;
    let mut mi = 0.0;
    let mut hp = 0.0;
    let mut ht = 0.0;
    for &a in &cp {
        let pa = count(&|i| pred[i] == a) / n;
        hp -= pa * pa.ln();
        for &b in &ct {
            let pb = count(&|i| truth[i] == b) / n;
            let pab = count(&|i| pred[i] == a && truth[i] == b) / n;
            if pab > 0.0 {
                mi += pab * (pab / (pa * pb)).ln();
            }
        }
    }
    for &b in &ct {
        let pb = count(&|i| truth[i] == b) / n;
        ht -= pb * pb.ln();
    }
    2.0 * mi / (hp + ht)
}

/// Pair-counting form `2(ad − bc) / ((a+b)(b+d) + (a+c)(c+d))` over all pairs.
pub fn ari_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..pred.len() {
        for j in (i + 1)..pred.len() {
            match (pred[i] == pred[j], truth[i] == truth[j]) {
                (true, true) => a += 1.0,
                (true, false) => b += 1.0,
                (false, true) => c += 1.0,
                (false, false) => d += 1.0,
            }
        }
    }
    let den = (a + b) * (b + d) + (a + c) * (c + d);
    if den == 0.0 {
        1.0
    } else {
        2.0 * (a * d - b * c) / den
    }
}

pub fn random_matrix(rows: usize, cols: usize, stream: &mut Stream) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| stream.normal())
}

/// Erdős–Rényi graph with random features of width `d`.
pub fn random_graph(n: usize, p: f64, d: usize, stream: &mut Stream) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if stream.bernoulli(p) {
                edges.push((i, j));
            }
        }
    }
    let x = random_matrix(n, d, stream);
    Graph::new(n, edges, x, None).unwrap()
}

pub fn random_saliency(g: &Graph, stream: &mut Stream) -> EdgeSaliency {
    EdgeSaliency((0..g.num_edges()).map(|_| stream.uniform()).collect())
}

/// Random row-stochastic `n × k` matrix.
pub fn random_stochastic(n: usize, k: usize, stream: &mut Stream) -> DenseMatrix {
    let mut m = DenseMatrix::from_fn(n, k, |_, _| stream.uniform() + 1e-3);
    for i in 0..n {
        let s: f64 = m.row(i).iter().sum();
        m.row_mut(i).iter_mut().for_each(|v| *v /= s);
    }
    m
}

/// A graph, two edge-dropped views, embeddings for both views and saliency.
pub struct ContrastInstance {
    pub graph: Graph,
    pub views: [Graph; 2],
    pub u: DenseMatrix,
    pub v: DenseMatrix,
    pub saliency: EdgeSaliency,
}

pub fn contrast_instance(n: usize, d: usize, stream: &mut Stream) -> ContrastInstance {
    let graph = random_graph(n, 0.5, 2, stream);
    let views = [
        drop_edges(&graph, 0.3, stream).unwrap(),
        drop_edges(&graph, 0.3, stream).unwrap(),
    ];
    ContrastInstance {
        u: random_matrix(n, d, stream),
        v: random_matrix(n, d, stream),
        saliency: random_saliency(&graph, stream),
        graph,
        views,
    }
}

pub fn random_labels(n: usize, k: usize, stream: &mut Stream) -> Vec<usize> {
    (0..n).map(|_| stream.below(k)).collect()
}
