//! Hard k-means, Gaussian-mixture soft assignments over the k-means
//! centroids, and per-edge saliency.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numerics::{DenseMatrix, Stream, Tape, Var};

/// `k` centroids as the rows of a `k × d′` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids(pub DenseMatrix);

impl Centroids {
    pub fn k(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }
}

/// `N × k` row-stochastic posterior `p(c_j | h_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix(pub DenseMatrix);

impl AssignmentMatrix {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }
}

/// One weight in `[0, 1]` per stored edge of the graph it was computed on,
/// in edge-list order.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSaliency(pub Vec<f64>);

impl EdgeSaliency {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, edge: usize) -> f64 {
        self.0[edge]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn constant(num_edges: usize, value: f64) -> Self {
        Self(vec![value; num_edges])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Centroids,
    /// Sum of squared distances to the assigned mean, after every update step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `(index, squared distance)` of the nearest centroid, ties to the lowest index.
fn nearest(point: &[f64], centroids: &DenseMatrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for j in 0..centroids.rows() {
        let d = sq_dist(point, centroids.row(j));
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init(h: &DenseMatrix, k: usize, stream: &mut Stream) -> DenseMatrix {
    let n = h.rows();
    let mut centroids = DenseMatrix::zeros(k, h.cols());
    let first = stream.below(n);
    centroids.row_mut(0).copy_from_slice(h.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(h.row(i), h.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = stream.uniform() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            stream.below(n)
        };
        centroids.row_mut(c).copy_from_slice(h.row(pick));
        for (i, slot) in d2.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(h.row(i), h.row(pick)));
        }
    }
    centroids
}

/// Lloyd's algorithm from k-means++ seeds, or from `warm_start` when given.
/// Stops at an assignment fixpoint or after `max_iters` assignment steps.
pub fn kmeans(
    h: &DenseMatrix,
    k: usize,
    max_iters: usize,
    stream: &mut Stream,
    warm_start: Option<&Centroids>,
) -> Result<KMeansResult> {
    let n = h.rows();
    if k == 0 || k > n {
        return Err(Error::config(format!("k-means with k={k} on {n} points")));
    }
    if !h.is_finite() {
        return Err(Error::Numeric { op: "kmeans input" });
    }
    let mut centroids = match warm_start {
        Some(c) if c.0.shape() == (k, h.cols()) => c.0.clone(),
        Some(c) => {
            return Err(Error::shape(format!(
                "warm-start centroids {:?}, expected {k}x{}",
                c.0.shape(),
                h.cols()
            )))
        }
        None => plus_plus_init(h, k, stream),
    };
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters.max(1) {
        iterations += 1;
        let mut changed = false;
        for i in 0..n {
            let (j, _) = nearest(h.row(i), &centroids);
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let (means, counts) = cluster_means(h, &labels, k);
        centroids = means;
        history.push(inertia_of(h, &labels, &centroids));
        // Reseed empty clusters at the points farthest from their centroids.
        let mut taken = vec![false; n];
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| !taken[i])
                .map(|i| (i, sq_dist(h.row(i), centroids.row(labels[i]))))
                .fold((usize::MAX, f64::NEG_INFINITY), |best, cur| {
                    if cur.1 > best.1 {
                        cur
                    } else {
                        best
                    }
                })
                .0;
            taken[far] = true;
            centroids.row_mut(j).copy_from_slice(h.row(far));
        }
    }
    let (means, counts) = cluster_means(h, &labels, k);
    // Clusters left empty after the final step keep their reseeded position.
    for j in 0..k {
        if counts[j] > 0 {
            centroids.row_mut(j).copy_from_slice(means.row(j));
        }
    }
    if history.is_empty() {
        history.push(inertia_of(h, &labels, &centroids));
    }
    Ok(KMeansResult {
        labels,
        centroids: Centroids(centroids),
        inertia_history: history,
        iterations,
    })
}

fn cluster_means(h: &DenseMatrix, labels: &[usize], k: usize) -> (DenseMatrix, Vec<usize>) {
    let mut sums = DenseMatrix::zeros(k, h.cols());
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, &v) in sums.row_mut(l).iter_mut().zip(h.row(i)) {
            *s += v;
        }
    }
    for (j, &c) in counts.iter().enumerate() {
        if c > 0 {
            let inv = 1.0 / c as f64;
            sums.row_mut(j).iter_mut().for_each(|v| *v *= inv);
        }
    }
    (sums, counts)
}

fn inertia_of(h: &DenseMatrix, labels: &[usize], centroids: &DenseMatrix) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(h.row(i), centroids.row(l)))
        .sum()
}

/// Smallest variance the automatic rule will return.
pub const MIN_AUTO_SIGMA2: f64 = 1e-12;

/// Mean squared distance from each point to its assigned centroid.
pub fn auto_sigma2(h: &DenseMatrix, result: &KMeansResult) -> f64 {
    let total = inertia_of(h, &result.labels, result.centroids.matrix());
    (total / h.rows().max(1) as f64).max(MIN_AUTO_SIGMA2)
}

/// Posterior of an equal-prior isotropic Gaussian mixture with means at
/// `centroids` and shared variance `sigma2`, using squared Euclidean distance.
pub fn gmm_posterior(h: &DenseMatrix, centroids: &Centroids, sigma2: f64) -> Result<AssignmentMatrix> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::config(format!("sigma2={sigma2} must be positive")));
    }
    let c = centroids.matrix();
    if c.cols() != h.cols() {
        return Err(Error::shape(format!(
            "{}-dim centroids for {}-dim embeddings",
            c.cols(),
            h.cols()
        )));
    }
    let k = c.rows();
    let mut r = DenseMatrix::zeros(h.rows(), k);
    let mut logits = vec![0.0; k];
    for i in 0..h.rows() {
        for (j, l) in logits.iter_mut().enumerate() {
            *l = -sq_dist(h.row(i), c.row(j)) / (2.0 * sigma2);
        }
        softmax_into(&logits, r.row_mut(i));
    }
    Ok(AssignmentMatrix(r))
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Recorded posterior, differentiable with respect to `h`; centroids and
/// variance are constants. The per-row `‖h_i‖²` term is dropped because
/// softmax is invariant to per-row shifts.
pub fn gmm_posterior_tape(tape: &mut Tape, h: Var, centroids: &Centroids, sigma2: f64) -> Result<Var> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::config(format!("sigma2={sigma2} must be positive")));
    }
    let c = centroids.matrix();
    let n = tape.shape(h).0;
    let cv = tape.constant(c.clone());
    let cross = tape.matmul_bt(h, cv);
    let cross = tape.scale(cross, 1.0 / sigma2);
    let c_sq: Vec<f64> = (0..c.rows())
        .map(|j| c.row(j).iter().map(|v| v * v).sum::<f64>() / (2.0 * sigma2))
        .collect();
    let bias = tape.constant(DenseMatrix::from_fn(n, c.rows(), |_, j| -c_sq[j]));
    let logits = tape.add(cross, bias);
    // Max-shift as a constant: the softmax value and gradient do not change.
    let lv = tape.value(logits);
    let shift: Vec<f64> = (0..lv.rows())
        .map(|i| -lv.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let shift = tape.constant(DenseMatrix::from_vec(n, 1, shift)?);
    let shifted = tape.add_col(logits, shift);
    let e = tape.exp(shifted);
    let total = tape.row_sum(e);
    let log_total = tape.log(total);
    let log_r = tape.sub_col(shifted, log_total);
    Ok(tape.exp(log_r))
}

/// `S_ij = ⟨R_i/‖R_i‖, R_j/‖R_j‖⟩` for every stored edge `(i, j)` of `graph`.
pub fn saliency(r: &AssignmentMatrix, graph: &Graph) -> Result<EdgeSaliency> {
    let m = r.matrix();
    if m.rows() != graph.num_nodes() {
        return Err(Error::shape(format!(
            "{} assignment rows for {} nodes",
            m.rows(),
            graph.num_nodes()
        )));
    }
    let normed = m.row_l2_normalized();
    let values = graph
        .edges()
        .iter()
        .map(|&(i, j)| {
            let dot: f64 = normed.row(i).iter().zip(normed.row(j)).map(|(a, b)| a * b).sum();
            dot.clamp(0.0, 1.0)
        })
        .collect();
    Ok(EdgeSaliency(values))
}
