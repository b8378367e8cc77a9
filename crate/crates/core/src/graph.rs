//! Undirected node-attributed graphs: construction, text I/O, homophily,
//! stochastic-block-model generation, and train/val/test splits.
//!
//! Every undirected edge is stored once as `(lo, hi)` with `lo < hi`, and
//! `|E|` always means the number of unordered pairs. The CSR neighbor view
//! materializes both directions.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, Seed};

/// CSR neighbor lists. Each half-edge remembers which stored edge it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    edge_ids: Vec<usize>,
}

impl Adjacency {
    fn build(num_nodes: usize, edges: &[(usize, usize)]) -> Self {
        let mut degree = vec![0usize; num_nodes];
        for &(a, b) in edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = vec![0usize; num_nodes + 1];
        for i in 0..num_nodes {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut half: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_nodes];
        for (e, &(a, b)) in edges.iter().enumerate() {
            half[a].push((b, e));
            half[b].push((a, e));
        }
        let mut targets = Vec::with_capacity(offsets[num_nodes]);
        let mut edge_ids = Vec::with_capacity(offsets[num_nodes]);
        for mut list in half {
            list.sort_unstable();
            for (t, e) in list {
                targets.push(t);
                edge_ids.push(e);
            }
        }
        Self {
            offsets,
            targets,
            edge_ids,
        }
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Indices (into the owning graph's edge list) of the edges incident to `i`,
    /// aligned with [`Adjacency::neighbors`].
    pub fn incident_edges(&self, i: usize) -> &[usize] {
        &self.edge_ids[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    /// For every stored edge, its index in the graph this one was derived
    /// from. Identity for graphs that were not produced by augmentation.
    edge_origin: Vec<usize>,
    features: DenseMatrix,
    labels: Option<Vec<usize>>,
    adjacency: Adjacency,
}

impl Graph {
    /// Validates and builds a graph. Edges may be given in either orientation
    /// but must not contain self-loops or repeated unordered pairs.
    pub fn new(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        features: DenseMatrix,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let origin = (0..edges.len()).collect();
        Self::with_origin(num_nodes, edges, origin, features, labels)
    }

    pub(crate) fn with_origin(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        edge_origin: Vec<usize>,
        features: DenseMatrix,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if features.rows() != num_nodes {
            return Err(Error::shape(format!(
                "{} feature rows for {num_nodes} nodes",
                features.rows()
            )));
        }
        if !features.is_finite() {
            return Err(Error::shape("features contain non-finite entries"));
        }
        if let Some(l) = &labels {
            if l.len() != num_nodes {
                return Err(Error::shape(format!("{} labels for {num_nodes} nodes", l.len())));
            }
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut canon = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            for &x in &[a, b] {
                if x >= num_nodes {
                    return Err(Error::Bounds {
                        index: x,
                        num_nodes,
                    });
                }
            }
            if a == b {
                return Err(Error::Internal(format!("self-loop on node {a}")));
            }
            let pair = (a.min(b), a.max(b));
            if !seen.insert(pair) {
                return Err(Error::Internal(format!("duplicate edge {pair:?}")));
            }
            canon.push(pair);
        }
        let adjacency = Adjacency::build(num_nodes, &canon);
        Ok(Self {
            num_nodes,
            edges: canon,
            edge_origin,
            features,
            labels,
            adjacency,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_origin(&self) -> &[usize] {
        &self.edge_origin
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |&m| m + 1)
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.adjacency.neighbors(i)
    }

    pub fn with_features(&self, features: DenseMatrix) -> Result<Self> {
        Self::with_origin(
            self.num_nodes,
            self.edges.clone(),
            self.edge_origin.clone(),
            features,
            self.labels.clone(),
        )
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.num_nodes {
            return Err(Error::shape(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.num_nodes
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Keeps the edges at the given positions; their provenance is carried
    /// over so that edge-indexed data of the source graph stays addressable.
    pub(crate) fn subgraph_edges(&self, keep: &[usize], features: DenseMatrix) -> Result<Self> {
        let edges = keep.iter().map(|&e| self.edges[e]).collect();
        let origin = keep.iter().map(|&e| self.edge_origin[e]).collect();
        Self::with_origin(self.num_nodes, edges, origin, features, self.labels.clone())
    }
}

/// Fraction of edges whose endpoints share a label.
pub fn homophily(graph: &Graph, labels: &[usize]) -> Result<f64> {
    if labels.len() != graph.num_nodes() {
        return Err(Error::shape(format!(
            "{} labels for {} nodes",
            labels.len(),
            graph.num_nodes()
        )));
    }
    if graph.num_edges() == 0 {
        return Err(Error::UndefinedMetric("homophily of an edgeless graph".into()));
    }
    let intra = graph
        .edges()
        .iter()
        .filter(|&&(a, b)| labels[a] == labels[b])
        .count();
    Ok(intra as f64 / graph.num_edges() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub self_loops_dropped: usize,
    pub duplicates_dropped: usize,
}

fn open(path: &Path) -> Result<BufReader<std::fs::File>> {
    std::fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push((i + 1, t.to_string()));
    }
    Ok(out)
}

pub fn read_features(path: &Path) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in content_lines(path)? {
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(path, lineno, format!("bad real `{tok}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("{} columns, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    DenseMatrix::from_rows(&rows)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    content_lines(path)?
        .into_iter()
        .map(|(lineno, line)| {
            line.parse::<usize>()
                .map_err(|_| parse_err(path, lineno, format!("bad class index `{line}`")))
        })
        .collect()
}

fn read_edges(path: &Path) -> Result<Vec<(usize, usize, usize)>> {
    content_lines(path)?
        .into_iter()
        .map(|(lineno, line)| {
            let mut it = line.split_whitespace();
            let mut next = || -> Result<usize> {
                let tok = it
                    .next()
                    .ok_or_else(|| parse_err(path, lineno, "expected two node ids"))?;
                tok.parse()
                    .map_err(|_| parse_err(path, lineno, format!("bad node id `{tok}`")))
            };
            let a = next()?;
            let b = next()?;
            if it.next().is_some() {
                return Err(parse_err(path, lineno, "expected exactly two node ids"));
            }
            Ok((lineno, a, b))
        })
        .collect()
}

/// Loads a graph from the edge, feature, and optional label text files. The
/// number of nodes is the number of feature rows.
pub fn load_graph(
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
) -> Result<(Graph, LoadStats)> {
    let features = read_features(feature_path)?;
    let n = features.rows();
    let labels = match label_path {
        Some(p) => {
            let l = read_labels(p)?;
            if l.len() != n {
                return Err(Error::shape(format!(
                    "{} labels in {} but {n} feature rows",
                    l.len(),
                    p.display()
                )));
            }
            Some(l)
        }
        None => None,
    };
    let mut stats = LoadStats::default();
    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    for (lineno, a, b) in read_edges(edge_path)? {
        if let Some(&bad) = [a, b].iter().find(|&&x| x >= n) {
            return Err(parse_err(
                edge_path,
                lineno,
                Error::Bounds {
                    index: bad,
                    num_nodes: n,
                }
                .to_string(),
            ));
        }
        if a == b {
            stats.self_loops_dropped += 1;
            continue;
        }
        let pair = (a.min(b), a.max(b));
        if seen.insert(pair) {
            edges.push(pair);
        } else {
            stats.duplicates_dropped += 1;
        }
    }
    if stats.self_loops_dropped > 0 {
        warn!(
            "{}: dropped {} self-loop(s)",
            edge_path.display(),
            stats.self_loops_dropped
        );
    }
    Ok((Graph::new(n, edges, features, labels)?, stats))
}

fn create(path: &Path) -> Result<BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn save_graph(
    graph: &Graph,
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
) -> Result<()> {
    let write_all = |path: &Path, f: &dyn Fn(&mut BufWriter<std::fs::File>) -> std::io::Result<()>| {
        let mut w = create(path)?;
        f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    };
    write_all(edge_path, &|w| {
        for &(a, b) in graph.edges() {
            writeln!(w, "{a} {b}")?;
        }
        Ok(())
    })?;
    write_all(feature_path, &|w| {
        let x = graph.features();
        for r in 0..x.rows() {
            let line: Vec<String> = x.row(r).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    })?;
    if let Some(p) = label_path {
        let labels = graph
            .labels()
            .ok_or_else(|| Error::config("graph has no labels to write"))?;
        write_all(p, &|w| {
            for l in labels {
                writeln!(w, "{l}")?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbmConfig {
    pub n: usize,
    pub num_classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feat_dim: usize,
    pub flip_prob: f64,
    pub seed: u64,
}

/// Stochastic block model with round-robin class assignment and noisy binary
/// block-prototype features.
pub fn generate_sbm(cfg: &SbmConfig) -> Result<Graph> {
    let prob = |name: &str, p: f64| {
        if (0.0..=1.0).contains(&p) {
            Ok(())
        } else {
            Err(Error::config(format!("{name}={p} is not a probability")))
        }
    };
    prob("p_in", cfg.p_in)?;
    prob("p_out", cfg.p_out)?;
    prob("flip_prob", cfg.flip_prob)?;
    if cfg.p_out > cfg.p_in {
        return Err(Error::config(format!(
            "p_out={} exceeds p_in={}",
            cfg.p_out, cfg.p_in
        )));
    }
    if cfg.num_classes == 0 || cfg.num_classes > cfg.n {
        return Err(Error::config(format!(
            "{} classes for {} nodes",
            cfg.num_classes, cfg.n
        )));
    }
    let labels: Vec<usize> = (0..cfg.n).map(|i| i % cfg.num_classes).collect();
    let seed = Seed(cfg.seed).child("sbm");

    let mut edge_stream = seed.child("edges").stream();
    let mut edges = Vec::new();
    for i in 0..cfg.n {
        for j in (i + 1)..cfg.n {
            let p = if labels[i] == labels[j] { cfg.p_in } else { cfg.p_out };
            if edge_stream.bernoulli(p) {
                edges.push((i, j));
            }
        }
    }

    let block = cfg.feat_dim / cfg.num_classes;
    let mut feat_stream = seed.child("features").stream();
    let features = DenseMatrix::from_fn(cfg.n, cfg.feat_dim, |i, d| {
        let on = block > 0 && d / block == labels[i] && d < block * cfg.num_classes;
        let flip = feat_stream.bernoulli(cfg.flip_prob);
        if on != flip {
            1.0
        } else {
            0.0
        }
    });
    Graph::new(cfg.n, edges, features, Some(labels))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitMode {
    /// `train_per_class` nodes of every class for training, `val_size` nodes
    /// for validation, everything else for testing.
    PerClass { train_per_class: usize, val_size: usize },
    Proportions { train: f64, val: f64, test: f64 },
}

pub fn make_split(graph: &Graph, mode: SplitMode, seed: u64) -> Result<Split> {
    let n = graph.num_nodes();
    let mut stream = Seed(seed).child("split").stream();
    match mode {
        SplitMode::PerClass {
            train_per_class,
            val_size,
        } => {
            let labels = graph
                .labels()
                .ok_or_else(|| Error::InfeasibleSplit("per-class split needs labels".into()))?;
            let c = graph.num_classes();
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
            for (i, &l) in labels.iter().enumerate() {
                by_class[l].push(i);
            }
            let mut train = Vec::new();
            let mut rest = Vec::new();
            for (class, mut members) in by_class.into_iter().enumerate() {
                if members.len() < train_per_class {
                    return Err(Error::InfeasibleSplit(format!(
                        "class {class} has {} nodes, {train_per_class} requested",
                        members.len()
                    )));
                }
                stream.shuffle(&mut members);
                rest.extend_from_slice(&members[train_per_class..]);
                train.extend_from_slice(&members[..train_per_class]);
            }
            if rest.len() < val_size {
                return Err(Error::InfeasibleSplit(format!(
                    "{} nodes left for a validation set of {val_size}",
                    rest.len()
                )));
            }
            rest.sort_unstable();
            stream.shuffle(&mut rest);
            let test = rest.split_off(val_size);
            check_train(Split {
                train,
                val: rest,
                test,
            })
        }
        SplitMode::Proportions { train, val, test } => {
            if [train, val, test].iter().any(|f| !(0.0..=1.0).contains(f))
                || train + val + test > 1.0 + 1e-9
            {
                return Err(Error::InfeasibleSplit(format!(
                    "proportions ({train}, {val}, {test}) do not fit in 1"
                )));
            }
            let n_train = (train * n as f64).round() as usize;
            let n_val = ((val * n as f64).round() as usize).min(n - n_train.min(n));
            let n_test = ((test * n as f64).round() as usize).min(n - n_train - n_val);
            let perm = stream.permutation(n);
            check_train(Split {
                train: perm[..n_train].to_vec(),
                val: perm[n_train..n_train + n_val].to_vec(),
                test: perm[n_train + n_val..n_train + n_val + n_test].to_vec(),
            })
        }
    }
}

fn check_train(split: Split) -> Result<Split> {
    if split.train.is_empty() {
        return Err(Error::InfeasibleSplit("empty training set".into()));
    }
    Ok(split)
}

pub fn write_split(split: &Split, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let fmt = |v: &[usize]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
    writeln!(w, "train: {}", fmt(&split.train))
        .and_then(|_| writeln!(w, "val: {}", fmt(&split.val)))
        .and_then(|_| writeln!(w, "test: {}", fmt(&split.test)))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_split(path: &Path, num_nodes: usize) -> Result<Split> {
    let mut split = Split::default();
    let mut seen = [false; 3];
    for (lineno, line) in content_lines(path)? {
        let (key, rest) = line
            .split_once(':')
            .ok_or_else(|| parse_err(path, lineno, "expected `train:`, `val:` or `test:`"))?;
        let slot = match key.trim() {
            "train" => 0,
            "val" => 1,
            "test" => 2,
            other => return Err(parse_err(path, lineno, format!("unknown part `{other}`"))),
        };
        seen[slot] = true;
        let idx = rest
            .split_whitespace()
            .map(|tok| {
                let i: usize = tok
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("bad index `{tok}`")))?;
                if i >= num_nodes {
                    return Err(parse_err(
                        path,
                        lineno,
                        Error::Bounds {
                            index: i,
                            num_nodes,
                        }
                        .to_string(),
                    ));
                }
                Ok(i)
            })
            .collect::<Result<Vec<_>>>()?;
        match slot {
            0 => split.train = idx,
            1 => split.val = idx,
            _ => split.test = idx,
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(parse_err(path, 0, "split file needs train, val and test lines"));
    }
    let mut all = HashSet::new();
    for &i in split.train.iter().chain(&split.val).chain(&split.test) {
        if !all.insert(i) {
            return Err(Error::InfeasibleSplit(format!("node {i} appears in two parts")));
        }
    }
    check_train(split)
}
