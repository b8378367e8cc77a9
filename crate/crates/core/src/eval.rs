//! Downstream evaluation: linear probe, clustering scores, and saliency bins.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::cluster::{kmeans, EdgeSaliency};
use crate::error::{Error, Result};
use crate::graph::{Graph, Split};
use crate::numerics::{AdamConfig, AdamState, DenseMatrix, ParamSet, Seed, Stream};

/// Mean and sample standard deviation of repeated runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl Stats {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std, values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Coefficient `λ` of the penalty `(λ/2)‖W‖²` on the weights (not the bias).
    pub l2: f64,
    pub runs: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            epochs: 300,
            l2: 1e-4,
            runs: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRun {
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    /// Number of updates at the selected point.
    pub best_epoch: usize,
}

fn check_labels(h: &DenseMatrix, labels: &[usize]) -> Result<usize> {
    if labels.len() != h.rows() {
        return Err(Error::shape(format!(
            "{} labels for {} embedding rows",
            labels.len(),
            h.rows()
        )));
    }
    Ok(labels.iter().max().map_or(0, |m| m + 1))
}

fn accuracy(logits: &DenseMatrix, labels: &[usize], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let correct = idx
        .iter()
        .filter(|&&i| {
            let row = logits.row(i);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best == labels[i]
        })
        .count();
    correct as f64 / idx.len() as f64
}

fn logits(h: &DenseMatrix, w: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let mut z = h.matmul(w)?;
    for i in 0..z.rows() {
        for (v, bias) in z.row_mut(i).iter_mut().zip(b.row(0)) {
            *v += bias;
        }
    }
    Ok(z)
}

/// Trains one softmax probe from the weight initialization `w0` (bias starts
/// at zero) and returns the test accuracy at the best validation epoch.
pub fn train_probe(
    h: &DenseMatrix,
    labels: &[usize],
    split: &Split,
    cfg: &ProbeConfig,
    w0: DenseMatrix,
) -> Result<ProbeRun> {
    let num_classes = check_labels(h, labels)?;
    if w0.shape() != (h.cols(), num_classes) {
        return Err(Error::shape(format!(
            "probe init {:?}, expected {}x{num_classes}",
            w0.shape(),
            h.cols()
        )));
    }
    let mut seen = split.train.iter().map(|&i| labels[i]);
    let first = seen
        .next()
        .ok_or_else(|| Error::DegenerateProbe("empty training set".into()))?;
    if seen.all(|l| l == first) {
        return Err(Error::DegenerateProbe(format!(
            "every training label is {first}"
        )));
    }
    let mut params = ParamSet::new();
    params.push("probe.w", w0);
    params.push("probe.b", DenseMatrix::zeros(1, num_classes));
    let mut adam = AdamState::new(&params);
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let train_x = h.select_rows(&split.train);
    let inv_n = 1.0 / split.train.len() as f64;
    let mut best = ProbeRun {
        test_accuracy: 0.0,
        val_accuracy: f64::NEG_INFINITY,
        best_epoch: 0,
    };
    for epoch in 1..=cfg.epochs {
        let z = logits(&train_x, params.get(0), params.get(1))?;
        // Softmax cross-entropy gradient: (P − Y) / n.
        let mut dz = DenseMatrix::zeros(z.rows(), num_classes);
        for (r, &i) in split.train.iter().enumerate() {
            let row = z.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
            for (c, out) in dz.row_mut(r).iter_mut().enumerate() {
                let p = (row[c] - max).exp() / total;
                *out = (p - if labels[i] == c { 1.0 } else { 0.0 }) * inv_n;
            }
        }
        let mut gw = train_x.matmul_at(&dz)?;
        gw.axpy(cfg.l2, params.get(0))?;
        let mut gb = DenseMatrix::zeros(1, num_classes);
        for r in 0..dz.rows() {
            for (g, &v) in gb.row_mut(0).iter_mut().zip(dz.row(r)) {
                *g += v;
            }
        }
        adam.step(&mut params, &[gw, gb], &adam_cfg)?;
        if !params.get(0).is_finite() {
            return Err(Error::Numeric { op: "linear probe" });
        }
        let all = logits(h, params.get(0), params.get(1))?;
        let val = accuracy(&all, labels, &split.val);
        if val > best.val_accuracy {
            best = ProbeRun {
                test_accuracy: accuracy(&all, labels, &split.test),
                val_accuracy: val,
                best_epoch: epoch,
            };
        }
    }
    Ok(best)
}

fn probe_init(rows: usize, cols: usize, stream: &mut Stream) -> DenseMatrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| stream.uniform_range(-bound, bound))
}

/// `cfg.runs` probes from fresh initializations; test accuracy statistics.
pub fn linear_probe(h: &DenseMatrix, labels: &[usize], split: &Split, cfg: &ProbeConfig, seed: Seed) -> Result<Stats> {
    let num_classes = check_labels(h, labels)?;
    if cfg.runs == 0 {
        return Err(Error::config("probe needs at least one run"));
    }
    let mut accs = Vec::with_capacity(cfg.runs);
    for run in 0..cfg.runs {
        let mut stream = seed.child("probe").index(run as u64).stream();
        let w0 = probe_init(h.cols(), num_classes, &mut stream);
        accs.push(train_probe(h, labels, split, cfg, w0)?.test_accuracy);
    }
    Ok(Stats::from_values(accs))
}

fn relabel(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

struct Contingency {
    table: Vec<Vec<usize>>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    n: usize,
}

fn contingency(pred: &[usize], truth: &[usize]) -> Result<Contingency> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::UndefinedMetric("no samples".into()));
    }
    let (p, kp) = relabel(pred);
    let (t, kt) = relabel(truth);
    let mut table = vec![vec![0usize; kt]; kp];
    for (&a, &b) in p.iter().zip(&t) {
        table[a][b] += 1;
    }
    let rows = table.iter().map(|r| r.iter().sum()).collect();
    let cols = (0..kt).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    Ok(Contingency {
        table,
        rows,
        cols,
        n: pred.len(),
    })
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}

/// `2 I(pred; truth) / (H(pred) + H(truth))` with natural logs. Two
/// single-cluster partitions score 1, exactly one single-cluster partition 0.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = contingency(pred, truth)?;
    match (c.rows.len() == 1, c.cols.len() == 1) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let n = c.n as f64;
    let mut mi = 0.0;
    for (i, row) in c.table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (c.rows[i] as f64 * c.cols[j] as f64)).ln();
            }
        }
    }
    let denom = entropy(&c.rows, c.n) + entropy(&c.cols, c.n);
    Ok((2.0 * mi / denom).clamp(0.0, 1.0))
}

fn pairs(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Pair-counting adjusted Rand index `(RI − E[RI]) / (max RI − E[RI])`.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = contingency(pred, truth)?;
    let index: f64 = c.table.iter().flatten().map(|&v| pairs(v)).sum();
    let a: f64 = c.rows.iter().map(|&v| pairs(v)).sum();
    let b: f64 = c.cols.iter().map(|&v| pairs(v)).sum();
    let total = pairs(c.n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = a * b / total;
    let max = (a + b) / 2.0;
    if max == expected {
        // Both partitions trivial in the same way (one cluster or all singletons).
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringScores {
    pub nmi: Stats,
    pub ari: Stats,
}

/// k-means on `h` `runs` times with distinct seeds, scored against `labels`.
pub fn clustering_eval(
    h: &DenseMatrix,
    labels: &[usize],
    k: usize,
    runs: usize,
    max_iters: usize,
    seed: Seed,
) -> Result<ClusteringScores> {
    check_labels(h, labels)?;
    if runs == 0 {
        return Err(Error::config("clustering needs at least one run"));
    }
    let mut n = Vec::with_capacity(runs);
    let mut a = Vec::with_capacity(runs);
    for run in 0..runs {
        let mut stream = seed.child("clustering").index(run as u64).stream();
        let res = kmeans(h, k, max_iters, &mut stream, None)?;
        n.push(nmi(&res.labels, labels)?);
        a.push(ari(&res.labels, labels)?);
    }
    Ok(ClusteringScores {
        nmi: Stats::from_values(n),
        ari: Stats::from_values(a),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaliencyBin {
    /// Rank (0-based, by descending saliency) of the first edge in the bin.
    pub start_rank: usize,
    pub homophily: f64,
}

/// Sorts edges by descending saliency (ties by edge order) and reports the
/// intra-class fraction of each consecutive `bin_size` block.
pub fn saliency_homophily_bins(
    s: &EdgeSaliency,
    graph: &Graph,
    labels: &[usize],
    bin_size: usize,
) -> Result<Vec<SaliencyBin>> {
    if bin_size == 0 {
        return Err(Error::config("bin size must be positive"));
    }
    if graph.num_edges() == 0 {
        return Err(Error::UndefinedMetric("saliency bins of an edgeless graph".into()));
    }
    if s.len() != graph.num_edges() || labels.len() != graph.num_nodes() {
        return Err(Error::shape(format!(
            "{} saliency values and {} labels for {} edges, {} nodes",
            s.len(),
            labels.len(),
            graph.num_edges(),
            graph.num_nodes()
        )));
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s.get(b).total_cmp(&s.get(a)).then(a.cmp(&b)));
    let edges = graph.edges();
    Ok(order
        .chunks(bin_size)
        .enumerate()
        .map(|(b, chunk)| {
            let same = chunk
                .iter()
                .filter(|&&e| labels[edges[e].0] == labels[edges[e].1])
                .count();
            SaliencyBin {
                start_rank: b * bin_size,
                homophily: same as f64 / chunk.len() as f64,
            }
        })
        .collect())
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties; 0 when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("{} vs {} values", x.len(), y.len())));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub accuracy: Option<Stats>,
    pub clustering: Option<ClusteringScores>,
    pub bins: Option<Vec<SaliencyBin>>,
}

fn stats_lines(out: &mut String, name: &str, s: &Stats) {
    let values: Vec<String> = s.values.iter().map(|v| v.to_string()).collect();
    out.push_str(&format!("{name}.mean = {}\n", s.mean));
    out.push_str(&format!("{name}.std = {}\n", s.std));
    out.push_str(&format!("{name}.runs = {}\n", values.join(",")));
}

impl EvalReport {
    /// `key = value` lines for every populated result.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(acc) = &self.accuracy {
            stats_lines(&mut out, "accuracy", acc);
        }
        if let Some(c) = &self.clustering {
            stats_lines(&mut out, "nmi", &c.nmi);
            stats_lines(&mut out, "ari", &c.ari);
        }
        if let Some(bins) = &self.bins {
            out.push_str(&format!("bins.count = {}\n", bins.len()));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Bin curve as CSV (`bin_start_rank,homophily`).
pub fn write_bins(bins: &[SaliencyBin], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "bin_start_rank,homophily").map_err(io)?;
    for b in bins {
        writeln!(w, "{},{}", b.start_rank, b.homophily).map_err(io)?;
    }
    w.flush().map_err(io)
}
