//! Training loop for the contrastive and bootstrapped modes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use crate::augment::sample_view;
use crate::cluster::{
    auto_sigma2, gmm_posterior, gmm_posterior_tape, kmeans, saliency, Centroids, EdgeSaliency,
};
use crate::config::{ClusterConfig, LossConfig, LossMode, Sigma2, TrainConfig};
use crate::encoder::{
    gcn_forward, gcn_forward_tape, gcn_forward_weights, head_tape, identity_adjacency,
    normalize_adjacency, project, BoundEncoder, EncoderParams,
};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::loss::{
    bgrl_expanded_loss_tape, bgrl_loss_tape, contrastive_tape, homophily_loss_tape, ContrastMasks,
    LossBreakdown,
};
use crate::numerics::{AdamConfig, AdamState, DenseMatrix, ParamSet, Seed, SparseMatrix, Stream, Tape, Var};

/// Seconds spent in each phase of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpochTiming {
    pub encode: f64,
    pub cluster: f64,
    pub loss: f64,
    pub update: f64,
}

/// Un-augmented embeddings plus mean cosine of positive (same node) and
/// negative (different node) pairs across two fresh views, on head outputs
/// for contrastive modes with a head and on encoder outputs otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub embeddings: DenseMatrix,
    pub positive_similarity: f64,
    pub negative_similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<LossBreakdown>,
    pub timings: Vec<EpochTiming>,
    /// Encoder output on the un-augmented graph after the last update.
    pub embeddings: DenseMatrix,
    pub snapshots: BTreeMap<usize, Snapshot>,
    pub params: EncoderParams,
}

/// Stored embeddings after `epoch` updates.
pub fn snapshot_embeddings(report: &TrainReport, epoch: usize) -> Result<&DenseMatrix> {
    report
        .snapshots
        .get(&epoch)
        .map(|s| &s.embeddings)
        .ok_or_else(|| Error::Lookup(format!("no snapshot at epoch {epoch}")))
}

/// Everything one objective evaluation needs beyond the parameters. All
/// random and clustering-derived pieces are fixed here, so the objective is
/// a deterministic function of the online weights.
#[derive(Debug, Clone)]
pub struct EpochInputs {
    pub adjacency: Arc<SparseMatrix>,
    pub features: DenseMatrix,
    pub view_adjacency: [Arc<SparseMatrix>; 2],
    pub view_features: [DenseMatrix; 2],
    /// Contrastive masks (contrastive modes).
    pub masks: Option<ContrastMasks>,
    /// Saliency on the original edges (expanded bootstrap loss).
    pub saliency: Option<EdgeSaliency>,
    /// Centroids and variance for the differentiable posterior.
    pub clusters: Option<(Centroids, f64)>,
    /// Target-encoder outputs on the two views (bootstrap modes).
    pub targets: Option<[DenseMatrix; 2]>,
}

/// Tape handles of the objective's components.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveVars {
    pub objective: Var,
    pub contrastive: Option<Var>,
    pub homophily: Option<Var>,
    pub bgrl_l1: Option<Var>,
    pub bgrl_l2: Option<Var>,
}

impl ObjectiveVars {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        let get = |v: Option<Var>| v.map_or(0.0, |v| tape.scalar(v));
        LossBreakdown {
            contrastive: get(self.contrastive),
            homophily: get(self.homophily),
            bgrl_l1: get(self.bgrl_l1),
            bgrl_l2: get(self.bgrl_l2),
            objective: tape.scalar(self.objective),
        }
    }
}

/// Records the minimized objective of `loss.mode` on `tape`, with `vars`
/// bound to `enc`'s parameters.
pub fn build_objective(
    tape: &mut Tape,
    enc: &EncoderParams,
    vars: &[Var],
    graph: &Graph,
    inputs: &EpochInputs,
    loss: &LossConfig,
) -> Result<ObjectiveVars> {
    let bound = BoundEncoder::from_vars(enc, vars);
    let encode = |tape: &mut Tape, adj: &Arc<SparseMatrix>, x: &DenseMatrix| {
        let xv = tape.constant(x.clone());
        gcn_forward_tape(tape, adj, xv, &bound.layers)
    };
    let h1 = encode(tape, &inputs.view_adjacency[0], &inputs.view_features[0]);
    let h2 = encode(tape, &inputs.view_adjacency[1], &inputs.view_features[1]);

    let homophily = if loss.homophily_active() {
        let (centroids, sigma2) = inputs
            .clusters
            .as_ref()
            .ok_or_else(|| Error::Internal("homophily loss without clusters".into()))?;
        let h = encode(tape, &inputs.adjacency, &inputs.features);
        let r = gmm_posterior_tape(tape, h, centroids, *sigma2)?;
        Some(homophily_loss_tape(tape, r, graph)?)
    } else {
        None
    };

    let mut out = ObjectiveVars {
        objective: h1,
        contrastive: None,
        homophily,
        bgrl_l1: None,
        bgrl_l2: None,
    };
    let objective = if loss.mode.is_bgrl() {
        let head = bound
            .head
            .ok_or_else(|| Error::config("bootstrap modes need the predictor head"))?;
        let targets = inputs
            .targets
            .as_ref()
            .ok_or_else(|| Error::Internal("bootstrap objective without targets".into()))?;
        let z1 = head_tape(tape, h1, head);
        let z2 = head_tape(tape, h2, head);
        let t1 = tape.constant(targets[0].clone());
        let t2 = tape.constant(targets[1].clone());
        let a = bgrl_loss_tape(tape, z1, t2)?;
        let b = bgrl_loss_tape(tape, z2, t1)?;
        let l1 = tape.add(a, b);
        out.bgrl_l1 = Some(l1);
        let mut obj = tape.scale(l1, -1.0);
        if loss.mode == LossMode::BgrlHomogcl {
            let s = inputs
                .saliency
                .as_ref()
                .ok_or_else(|| Error::Internal("expanded loss without saliency".into()))?;
            let a = bgrl_expanded_loss_tape(tape, z1, t2, s, graph)?;
            let b = bgrl_expanded_loss_tape(tape, z2, t1, s, graph)?;
            let l2 = tape.add(a, b);
            out.bgrl_l2 = Some(l2);
            let scaled = tape.scale(l2, -loss.beta());
            obj = tape.add(obj, scaled);
        }
        obj
    } else {
        let masks = inputs
            .masks
            .as_ref()
            .ok_or_else(|| Error::Internal("contrastive objective without masks".into()))?;
        let (u, v) = match bound.head {
            Some(head) => (head_tape(tape, h1, head), head_tape(tape, h2, head)),
            None => (h1, h2),
        };
        let cont = contrastive_tape(tape, u, v, masks, loss.tau)?;
        out.contrastive = Some(cont);
        tape.scale(cont, -1.0)
    };
    out.objective = match homophily {
        Some(homo) => {
            let scaled = tape.scale(homo, loss.alpha);
            tape.add(objective, scaled)
        }
        None => objective,
    };
    tape.check()?;
    Ok(out)
}

fn propagation(graph: &Graph, mp_ablation: bool) -> Arc<SparseMatrix> {
    Arc::new(if mp_ablation {
        identity_adjacency(graph.num_nodes())
    } else {
        normalize_adjacency(graph)
    })
}

/// Hard clusters of `h` and the variance the posterior should use.
pub fn cluster_embeddings(
    h: &DenseMatrix,
    cfg: &ClusterConfig,
    stream: &mut Stream,
    warm_start: Option<&Centroids>,
) -> Result<(Centroids, f64)> {
    let res = kmeans(h, cfg.k, cfg.max_iters, stream, warm_start)?;
    let sigma2 = match cfg.sigma2 {
        Sigma2::Auto => auto_sigma2(h, &res),
        Sigma2::Fixed(s) => s,
    };
    Ok((res.centroids, sigma2))
}

/// Saliency of every edge of `graph` under a fresh clustering of `h`.
pub fn embedding_saliency(h: &DenseMatrix, graph: &Graph, cfg: &ClusterConfig, seed: Seed) -> Result<EdgeSaliency> {
    let (c, sigma2) = cluster_embeddings(h, cfg, &mut seed.stream(), None)?;
    saliency(&gmm_posterior(h, &c, sigma2)?, graph)
}

fn pair_similarities(a: &DenseMatrix, b: &DenseMatrix) -> (f64, f64) {
    let an = a.row_l2_normalized();
    let bn = b.row_l2_normalized();
    let n = a.rows();
    let diag: f64 = (0..n)
        .map(|i| an.row(i).iter().zip(bn.row(i)).map(|(x, y)| x * y).sum::<f64>())
        .sum();
    let sa = an.col_means();
    let sb = bn.col_means();
    let all: f64 = sa.iter().zip(&sb).map(|(x, y)| x * y).sum::<f64>() * (n * n) as f64;
    let pos = diag / n as f64;
    let neg = if n > 1 {
        (all - diag) / (n * (n - 1)) as f64
    } else {
        0.0
    };
    (pos, neg)
}

struct Trainer<'a> {
    graph: &'a Graph,
    cfg: &'a TrainConfig,
    root: Seed,
    adjacency: Arc<SparseMatrix>,
    online: EncoderParams,
    target: Option<ParamSet>,
    adam: AdamState,
    adam_cfg: AdamConfig,
    clusters: Option<(Centroids, f64)>,
}

impl Trainer<'_> {
    fn views(&self, seed: Seed) -> Result<[Graph; 2]> {
        let a = sample_view(self.graph, &self.cfg.aug, &mut seed.child("u").stream())?;
        let b = sample_view(self.graph, &self.cfg.aug, &mut seed.child("v").stream())?;
        Ok([a, b])
    }

    fn snapshot(&self, epoch: usize) -> Result<Snapshot> {
        let embeddings = gcn_forward(&self.adjacency, self.graph.features(), &self.online)?;
        let [a, b] = self.views(self.root.child("snapshot").index(epoch as u64))?;
        let mp = self.cfg.encoder.mp_ablation;
        let mut ha = gcn_forward(&propagation(&a, mp), a.features(), &self.online)?;
        let mut hb = gcn_forward(&propagation(&b, mp), b.features(), &self.online)?;
        // Contrastive modes compare head outputs, the space the loss scores.
        if self.online.has_head() && !self.cfg.loss.mode.is_bgrl() {
            ha = project(&ha, &self.online)?;
            hb = project(&hb, &self.online)?;
        }
        let (positive_similarity, negative_similarity) = pair_similarities(&ha, &hb);
        Ok(Snapshot {
            embeddings,
            positive_similarity,
            negative_similarity,
        })
    }

    fn epoch(&mut self, epoch: usize) -> Result<(LossBreakdown, EpochTiming)> {
        let cfg = self.cfg;
        let loss_cfg = &cfg.loss;
        let mut timing = EpochTiming::default();
        let mp = cfg.encoder.mp_ablation;
        let views = self.views(self.root.child("views").index(epoch as u64))?;

        let t = Instant::now();
        let view_adjacency = [propagation(&views[0], mp), propagation(&views[1], mp)];
        let h = if loss_cfg.needs_clustering() {
            Some(gcn_forward(&self.adjacency, self.graph.features(), &self.online)?)
        } else {
            None
        };
        let targets = match &self.target {
            Some(target) => Some([
                gcn_forward_weights(&view_adjacency[0], views[0].features(), target.values())?,
                gcn_forward_weights(&view_adjacency[1], views[1].features(), target.values())?,
            ]),
            None => None,
        };
        timing.encode = t.elapsed().as_secs_f64();

        let t = Instant::now();
        if let Some(h) = &h {
            if epoch % cfg.cluster.refresh_every == 0 || self.clusters.is_none() {
                let warm = if cfg.cluster.warm_start {
                    self.clusters.as_ref().map(|c| &c.0)
                } else {
                    None
                };
                let mut stream = self.root.child("kmeans").index(epoch as u64).stream();
                self.clusters = Some(cluster_embeddings(h, &cfg.cluster, &mut stream, warm)?);
            }
        }
        let edge_saliency = match loss_cfg.mode {
            LossMode::HomogclHd => Some(EdgeSaliency::constant(self.graph.num_edges(), 1.0)),
            LossMode::Homogcl | LossMode::BgrlHomogcl => {
                let (c, sigma2) = self.clusters.as_ref().expect("clustered above");
                let r = gmm_posterior(h.as_ref().expect("encoded above"), c, *sigma2)?;
                Some(saliency(&r, self.graph)?)
            }
            LossMode::Grace | LossMode::Bgrl => None,
        };
        let masks = match (loss_cfg.mode, &edge_saliency) {
            (LossMode::Grace, _) => Some(ContrastMasks::grace(self.graph.num_nodes())),
            (LossMode::Homogcl | LossMode::HomogclHd, Some(s)) => {
                Some(ContrastMasks::homogcl(s, &views[0], &views[1])?)
            }
            _ => None,
        };
        timing.cluster = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let [v0, v1] = views;
        let inputs = EpochInputs {
            adjacency: self.adjacency.clone(),
            features: self.graph.features().clone(),
            view_adjacency,
            view_features: [v0.features().clone(), v1.features().clone()],
            masks,
            saliency: edge_saliency,
            clusters: if loss_cfg.homophily_active() {
                self.clusters.clone()
            } else {
                None
            },
            targets,
        };
        let mut tape = Tape::new();
        let vars = self.online.params.bind(&mut tape);
        let diverged = |detail: String| Error::Diverged { epoch, detail };
        let obj = build_objective(&mut tape, &self.online, &vars, self.graph, &inputs, loss_cfg)
            .map_err(|e| match e {
                Error::Numeric { op } => diverged(format!("non-finite value in `{op}`")),
                other => other,
            })?;
        let breakdown = obj.breakdown(&tape);
        if !breakdown.is_finite() {
            return Err(diverged(format!("{breakdown:?}")));
        }
        let grads = tape
            .backward(obj.objective)
            .map_err(|e| diverged(e.to_string()))?;
        let grads: Vec<DenseMatrix> = vars.iter().map(|&v| grads.wrt(&tape, v)).collect();
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(diverged("non-finite gradient".into()));
        }
        timing.loss = t.elapsed().as_secs_f64();

        let t = Instant::now();
        self.adam.step(&mut self.online.params, &grads, &self.adam_cfg)?;
        if let Some(target) = &mut self.target {
            crate::numerics::ema_update(&self.online.encoder_only(), target, loss_cfg.ema_tau)?;
        }
        timing.update = t.elapsed().as_secs_f64();
        Ok((breakdown, timing))
    }
}

pub fn train(graph: &Graph, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if cfg.loss.needs_clustering() && cfg.cluster.k > graph.num_nodes() {
        return Err(Error::config(format!(
            "cluster.k={} exceeds {} nodes",
            cfg.cluster.k,
            graph.num_nodes()
        )));
    }
    let root = Seed(cfg.seed);
    let online = EncoderParams::init(
        &cfg.encoder.dims(graph.feature_dim()),
        cfg.encoder.head,
        root.child("init"),
    )?;
    let target = cfg.loss.mode.is_bgrl().then(|| online.encoder_only());
    let mut trainer = Trainer {
        graph,
        cfg,
        root,
        adjacency: propagation(graph, cfg.encoder.mp_ablation),
        adam: AdamState::new(&online.params),
        adam_cfg: AdamConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        },
        online,
        target,
        clusters: None,
    };
    let mut snapshots = BTreeMap::new();
    snapshots.insert(0, trainer.snapshot(0)?);
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut timings = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (breakdown, timing) = trainer.epoch(epoch)?;
        log::debug!("epoch {epoch}: objective {}", breakdown.objective);
        losses.push(breakdown);
        timings.push(timing);
        let done = epoch + 1;
        if done == cfg.epochs || cfg.snapshot_every > 0 && done % cfg.snapshot_every == 0 {
            snapshots.insert(done, trainer.snapshot(done)?);
        }
    }
    let embeddings = snapshots[&cfg.epochs].embeddings.clone();
    Ok(TrainReport {
        losses,
        timings,
        embeddings,
        snapshots,
        params: trainer.online,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Per-epoch loss components as CSV. Contains no timing data, so equal runs
/// give identical files.
pub fn write_metrics(report: &TrainReport, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "epoch,contrastive,homophily,bgrl_l1,bgrl_l2,objective").map_err(io)?;
    for (e, l) in report.losses.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            e, l.contrastive, l.homophily, l.bgrl_l1, l.bgrl_l2, l.objective
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Per-epoch wall-clock seconds by phase as CSV.
pub fn write_timings(report: &TrainReport, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "epoch,encode_s,cluster_s,loss_s,update_s").map_err(io)?;
    for (e, t) in report.timings.iter().enumerate() {
        writeln!(w, "{},{},{},{},{}", e, t.encode, t.cluster, t.loss, t.update).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Snapshot pair similarities as CSV (`epoch,positive,negative`).
pub fn write_similarity_trace(report: &TrainReport, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "epoch,positive,negative").map_err(io)?;
    for (e, s) in &report.snapshots {
        writeln!(w, "{},{},{}", e, s.positive_similarity, s.negative_similarity).map_err(io)?;
    }
    w.flush().map_err(io)
}
