//! Contrastive, homophily and bootstrapped objectives.
//!
//! Every loss is built on a [`Tape`] so the trainer can differentiate it; the
//! plain functions record the same graph over constants and read the value.
//! Contrastive and similarity losses are returned as quantities to maximize,
//! the homophily loss as a quantity to minimize.

use std::sync::Arc;

use crate::cluster::{AssignmentMatrix, EdgeSaliency};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numerics::{DenseMatrix, Tape, Var};

/// Values of every objective component for one step. Components not used by
/// the active mode are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub contrastive: f64,
    pub homophily: f64,
    pub bgrl_l1: f64,
    pub bgrl_l2: f64,
    /// The minimized objective.
    pub objective: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.contrastive, self.homophily, self.bgrl_l1, self.bgrl_l2, self.objective]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// `⟨u, v⟩ / (‖u‖‖v‖)`, or 0 when either vector is zero.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        dot / (nu * nv)
    }
}

/// Constant masks for the two-view contrastive loss.
///
/// `pos_*` weights same-view pairs promoted to positives for anchors in that
/// view, `neg_*` selects the pairs counted as negatives against that view's
/// nodes (`1 − I − A`, so promoted neighbors leave the negative set).
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastMasks {
    pub pos_u: DenseMatrix,
    pub pos_v: DenseMatrix,
    pub neg_u: DenseMatrix,
    pub neg_v: DenseMatrix,
}

impl ContrastMasks {
    /// No positives beyond the anchor pair; every other node is a negative.
    pub fn grace(n: usize) -> Self {
        let neg = DenseMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
        Self {
            pos_u: DenseMatrix::zeros(n, n),
            pos_v: DenseMatrix::zeros(n, n),
            neg_u: neg.clone(),
            neg_v: neg,
        }
    }

    /// Neighbors in each augmented view become positives weighted by the
    /// saliency of their original edge.
    pub fn homogcl(saliency: &EdgeSaliency, view_u: &Graph, view_v: &Graph) -> Result<Self> {
        if view_u.num_nodes() != view_v.num_nodes() {
            return Err(Error::shape(format!(
                "views with {} and {} nodes",
                view_u.num_nodes(),
                view_v.num_nodes()
            )));
        }
        let (pos_u, neg_u) = view_masks(saliency, view_u)?;
        let (pos_v, neg_v) = view_masks(saliency, view_v)?;
        Ok(Self {
            pos_u,
            pos_v,
            neg_u,
            neg_v,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.pos_u.rows()
    }
}

fn view_masks(saliency: &EdgeSaliency, view: &Graph) -> Result<(DenseMatrix, DenseMatrix)> {
    let n = view.num_nodes();
    let mut pos = DenseMatrix::zeros(n, n);
    let mut neg = DenseMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
    for (&(i, j), &origin) in view.edges().iter().zip(view.edge_origin()) {
        if origin >= saliency.len() {
            return Err(Error::Internal(format!(
                "view edge ({i}, {j}) has no saliency (origin {origin}, {} known)",
                saliency.len()
            )));
        }
        let s = saliency.get(origin);
        pos.set(i, j, s);
        pos.set(j, i, s);
        neg.set(i, j, 0.0);
        neg.set(j, i, 0.0);
    }
    Ok((pos, neg))
}

/// Records the symmetric two-view contrastive objective
/// `(1/2N) Σ_i [ℓ(u_i, v_i) + ℓ(v_i, u_i)]` on the tape.
pub fn contrastive_tape(tape: &mut Tape, u: Var, v: Var, masks: &ContrastMasks, tau: f64) -> Result<Var> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::config(format!("loss.tau={tau} must be positive")));
    }
    let (n, d) = tape.shape(u);
    if tape.shape(v) != (n, d) {
        return Err(Error::shape(format!("views {:?} and {:?}", (n, d), tape.shape(v))));
    }
    if masks.num_nodes() != n {
        return Err(Error::shape(format!("{}-node masks for {n} rows", masks.num_nodes())));
    }
    if n < 2 {
        log::warn!("contrastive loss over {n} node(s) has no negatives");
    }
    let un = tape.row_normalize(u);
    let vn = tape.row_normalize(v);
    let inv_tau = 1.0 / tau;

    let anchor = tape.row_dot(un, vn);
    let anchor = tape.scale(anchor, inv_tau);
    let anchor = tape.exp(anchor);

    let sims = |tape: &mut Tape, a: Var, b: Var| {
        let s = tape.matmul_bt(a, b);
        let s = tape.scale(s, inv_tau);
        tape.exp(s)
    };
    let e_uu = sims(tape, un, un);
    let e_vv = sims(tape, vn, vn);
    let e_uv = sims(tape, un, vn);
    let e_vu = sims(tape, vn, un);

    let pos_u = tape.constant(masks.pos_u.clone());
    let pos_v = tape.constant(masks.pos_v.clone());
    let neg_u = tape.constant(masks.neg_u.clone());
    let neg_v = tape.constant(masks.neg_v.clone());

    let side = |tape: &mut Tape, e_same: Var, e_cross: Var, pos_w: Var, neg_same: Var, neg_cross: Var| {
        let promoted = tape.mul(e_same, pos_w);
        let promoted = tape.row_sum(promoted);
        let pos = tape.add(anchor, promoted);
        let inter = tape.mul(e_cross, neg_cross);
        let inter = tape.row_sum(inter);
        let intra = tape.mul(e_same, neg_same);
        let intra = tape.row_sum(intra);
        let neg = tape.add(inter, intra);
        let total = tape.add(pos, neg);
        let log_pos = tape.log(pos);
        let log_total = tape.log(total);
        let l = tape.sub(log_pos, log_total);
        tape.sum(l)
    };
    // Anchor in u: intra-view pairs use u's neighbors, inter-view pairs v's.
    let l_u = side(tape, e_uu, e_uv, pos_u, neg_u, neg_v);
    let l_v = side(tape, e_vv, e_vu, pos_v, neg_v, neg_u);
    let both = tape.add(l_u, l_v);
    let out = tape.scale(both, 1.0 / (2 * n.max(1)) as f64);
    tape.check()?;
    Ok(out)
}

fn eval_on_tape(build: impl FnOnce(&mut Tape) -> Result<Var>) -> Result<f64> {
    let mut tape = Tape::new();
    let out = build(&mut tape)?;
    tape.check()?;
    Ok(tape.scalar(out))
}

/// GRACE InfoNCE over two views of the same nodes, to be maximized.
pub fn grace_loss(u: &DenseMatrix, v: &DenseMatrix, tau: f64) -> Result<f64> {
    eval_on_tape(|tape| {
        let uv = tape.constant(u.clone());
        let vv = tape.constant(v.clone());
        contrastive_tape(tape, uv, vv, &ContrastMasks::grace(u.rows()), tau)
    })
}

/// Contrastive loss with saliency-weighted same-view neighbors promoted to
/// positives, to be maximized.
pub fn homogcl_contrastive(
    u: &DenseMatrix,
    v: &DenseMatrix,
    saliency: &EdgeSaliency,
    view_u: &Graph,
    view_v: &Graph,
    tau: f64,
) -> Result<f64> {
    let masks = ContrastMasks::homogcl(saliency, view_u, view_v)?;
    eval_on_tape(|tape| {
        let uv = tape.constant(u.clone());
        let vv = tape.constant(v.clone());
        contrastive_tape(tape, uv, vv, &masks, tau)
    })
}

struct EdgeEnds {
    lo: Arc<Vec<usize>>,
    hi: Arc<Vec<usize>>,
}

fn edge_ends(graph: &Graph) -> EdgeEnds {
    EdgeEnds {
        lo: Arc::new(graph.edges().iter().map(|e| e.0).collect()),
        hi: Arc::new(graph.edges().iter().map(|e| e.1).collect()),
    }
}

/// `(1/(k|E|)) Σ_r Σ_(i,j) (R_ir − R_jr)²` recorded on the tape, with
/// gradients flowing into `r`.
pub fn homophily_loss_tape(tape: &mut Tape, r: Var, graph: &Graph) -> Result<Var> {
    let (n, k) = tape.shape(r);
    if n != graph.num_nodes() {
        return Err(Error::shape(format!("{n} posterior rows for {} nodes", graph.num_nodes())));
    }
    if graph.num_edges() == 0 {
        log::warn!("homophily loss on an edgeless graph is zero");
        return Ok(tape.constant(DenseMatrix::scalar(0.0)));
    }
    let ends = edge_ends(graph);
    let a = tape.gather_rows(r, &ends.lo);
    let b = tape.gather_rows(r, &ends.hi);
    let diff = tape.sub(a, b);
    let sq = tape.mul(diff, diff);
    let total = tape.sum(sq);
    let out = tape.scale(total, 1.0 / (k * graph.num_edges()) as f64);
    tape.check()?;
    Ok(out)
}

pub fn homophily_loss(r: &AssignmentMatrix, graph: &Graph) -> Result<f64> {
    eval_on_tape(|tape| {
        let rv = tape.constant(r.matrix().clone());
        homophily_loss_tape(tape, rv, graph)
    })
}

/// `(1/N) Σ_i cos(z_i, h_i)`; `h` should be a constant (target branch).
pub fn bgrl_loss_tape(tape: &mut Tape, z: Var, h: Var) -> Result<Var> {
    if tape.shape(z) != tape.shape(h) {
        return Err(Error::shape(format!("{:?} vs {:?}", tape.shape(z), tape.shape(h))));
    }
    let zn = tape.row_normalize(z);
    let hn = tape.row_normalize(h);
    let cos = tape.row_dot(zn, hn);
    let out = tape.mean(cos);
    tape.check()?;
    Ok(out)
}

pub fn bgrl_loss(z: &DenseMatrix, h: &DenseMatrix) -> Result<f64> {
    eval_on_tape(|tape| {
        let zv = tape.constant(z.clone());
        let hv = tape.constant(h.clone());
        bgrl_loss_tape(tape, zv, hv)
    })
}

/// Saliency-weighted cross-node similarity over the edges of `graph`.
/// Each undirected edge contributes the mean of its two orientations,
/// `S_ij · (cos(z_i, h_j) + cos(z_j, h_i)) / 2`, and the sum is divided by `|E|`.
pub fn bgrl_expanded_loss_tape(
    tape: &mut Tape,
    z: Var,
    h: Var,
    saliency: &EdgeSaliency,
    graph: &Graph,
) -> Result<Var> {
    let shape = tape.shape(z);
    if tape.shape(h) != shape || shape.0 != graph.num_nodes() {
        return Err(Error::shape(format!(
            "{:?} and {:?} for {} nodes",
            shape,
            tape.shape(h),
            graph.num_nodes()
        )));
    }
    if saliency.len() != graph.num_edges() {
        return Err(Error::Internal(format!(
            "{} saliency values for {} edges",
            saliency.len(),
            graph.num_edges()
        )));
    }
    if graph.num_edges() == 0 {
        log::warn!("expanded bootstrap loss on an edgeless graph is zero");
        return Ok(tape.constant(DenseMatrix::scalar(0.0)));
    }
    let ends = edge_ends(graph);
    let zn = tape.row_normalize(z);
    let hn = tape.row_normalize(h);
    let z_lo = tape.gather_rows(zn, &ends.lo);
    let z_hi = tape.gather_rows(zn, &ends.hi);
    let h_lo = tape.gather_rows(hn, &ends.lo);
    let h_hi = tape.gather_rows(hn, &ends.hi);
    let forward = tape.row_dot(z_lo, h_hi);
    let backward = tape.row_dot(z_hi, h_lo);
    let both = tape.add(forward, backward);
    let s = tape.constant(DenseMatrix::from_vec(graph.num_edges(), 1, saliency.values().to_vec())?);
    let weighted = tape.mul(both, s);
    let total = tape.sum(weighted);
    let out = tape.scale(total, 0.5 / graph.num_edges() as f64);
    tape.check()?;
    Ok(out)
}

pub fn bgrl_expanded_loss(
    z: &DenseMatrix,
    h: &DenseMatrix,
    saliency: &EdgeSaliency,
    graph: &Graph,
) -> Result<f64> {
    eval_on_tape(|tape| {
        let zv = tape.constant(z.clone());
        let hv = tape.constant(h.clone());
        bgrl_expanded_loss_tape(tape, zv, hv, saliency, graph)
    })
}

/// Minimized form `−ℒ_cont + α·ℒ_homo`.
pub fn combined_objective(l_cont: f64, l_homo: f64, alpha: f64) -> f64 {
    -l_cont + alpha * l_homo
}

/// Minimized form `−ℒ₁ + α·ℒ_homo − β·ℒ₂`.
pub fn bgrl_objective(l1: f64, l_homo: f64, l2: f64, alpha: f64, beta: f64) -> f64 {
    -l1 + alpha * l_homo - beta * l2
}
