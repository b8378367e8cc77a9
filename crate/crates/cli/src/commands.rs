use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use homogcl::config::{LossMode, TrainConfig};
use homogcl::eval::{
    clustering_eval, linear_probe, saliency_homophily_bins, spearman, write_bins, EvalReport, ProbeConfig, Stats,
};
use homogcl::graph::{generate_sbm, homophily, load_graph, make_split, read_split, save_graph, Graph, SbmConfig, Split, SplitMode};
use homogcl::numerics::{DenseMatrix, Seed};
use homogcl::train::{embedding_saliency, write_metrics, write_similarity_trace, write_timings};
use homogcl::Error;

use crate::manifest::{DataPaths, RunConfig, RunManifest};
use crate::{
    DataArgs, EvalArgs, GenDataArgs, MpAblationArgs, SaliencyBinsArgs, SimilarityTraceArgs, SplitArgs, Task, TrainArgs,
    OUT_DIR_ENV,
};

/// 1 usage/config, 2 numeric, 3 I/O.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<Error>() {
        return match e {
            Error::Config(_) | Error::Shape(_) | Error::Lookup(_) | Error::InfeasibleSplit(_) => 1,
            Error::Numeric { .. }
            | Error::Diverged { .. }
            | Error::UndefinedMetric(_)
            | Error::DegenerateProbe(_)
            | Error::Internal(_) => 2,
            Error::Io { .. } | Error::Parse { .. } | Error::Bounds { .. } => 3,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        3
    } else {
        1
    }
}

fn out_dir(out: Option<&Path>) -> Result<PathBuf> {
    let dir = match out {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("homogcl-out")),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    Ok(dir)
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

fn data_paths(base: DataPaths, args: &DataArgs) -> Result<DataPaths> {
    let mut paths = base;
    paths.override_with(args.edges.clone(), args.features.clone(), args.labels.clone());
    for slot in [&mut paths.edges, &mut paths.features, &mut paths.labels] {
        if let Some(p) = slot.as_mut() {
            *p = std::path::absolute(&*p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
        }
    }
    Ok(paths)
}

fn load_data(paths: &DataPaths, need_labels: bool) -> Result<Graph> {
    let edges = paths.edges.as_deref().ok_or_else(|| usage("no edge file (--edges or data.edges)"))?;
    let features = paths
        .features
        .as_deref()
        .ok_or_else(|| usage("no feature file (--features or data.features)"))?;
    if need_labels && paths.labels.is_none() {
        return Err(usage("no label file (--labels or data.labels)"));
    }
    let (graph, stats) = load_graph(edges, features, paths.labels.as_deref())?;
    if stats.self_loops_dropped + stats.duplicates_dropped > 0 {
        log::warn!(
            "dropped {} self-loops and {} duplicate edges",
            stats.self_loops_dropped,
            stats.duplicates_dropped
        );
    }
    Ok(graph)
}

fn graph_labels(graph: &Graph) -> Result<&[usize]> {
    graph.labels().ok_or_else(|| usage("labels are required"))
}

fn split_for(graph: &Graph, args: &SplitArgs, seed: u64) -> Result<Split> {
    Ok(match &args.split {
        Some(p) => read_split(p, graph.num_nodes())?,
        None => make_split(
            graph,
            SplitMode::PerClass {
                train_per_class: args.train_per_class,
                val_size: args.val_size,
            },
            seed,
        )?,
    })
}

fn fmt_stats(s: &Stats) -> String {
    format!("{:.4} ± {:.4}", s.mean, s.std)
}

pub fn gen_data(a: &GenDataArgs) -> Result<()> {
    let graph = generate_sbm(&SbmConfig {
        n: a.n,
        num_classes: a.classes,
        p_in: a.p_in,
        p_out: a.p_out,
        feat_dim: a.feat_dim,
        flip_prob: a.flip_prob,
        seed: a.seed,
    })?;
    let dir = out_dir(a.out.as_deref())?;
    let (e, f, l) = (dir.join("edges.txt"), dir.join("features.txt"), dir.join("labels.txt"));
    save_graph(&graph, &e, &f, Some(&l))?;
    let h = homophily(&graph, graph_labels(&graph)?)?;
    println!("nodes = {}", graph.num_nodes());
    println!("edges = {}", graph.num_edges());
    println!("homophily = {h}");
    println!("wrote {}", dir.display());
    Ok(())
}

fn parse_sweep(spec: &str) -> Result<(String, Vec<String>)> {
    let (key, values) = homogcl::config::split_assignment(spec)?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
    if values.iter().any(String::is_empty) {
        return Err(usage(format!("empty value in --sweep {spec}")));
    }
    Ok((key.to_string(), values))
}

fn run_training(cfg: &RunConfig, graph: &Graph, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    let report = homogcl::train::train(graph, &cfg.train)?;
    let mut manifest = RunManifest::new(cfg)?;
    let metrics = dir.join("metrics.csv");
    let timings = dir.join("timings.csv");
    let embeddings = dir.join("embeddings.txt");
    let similarity = dir.join("similarity.csv");
    write_metrics(&report, &metrics)?;
    write_timings(&report, &timings)?;
    report.embeddings.save_text(&embeddings)?;
    write_similarity_trace(&report, &similarity)?;
    for (name, path) in [
        ("metrics", metrics),
        ("timings", timings),
        ("embeddings", embeddings),
        ("similarity", similarity),
    ] {
        manifest.outputs.push((name.to_string(), path));
    }
    manifest.write(&dir.join("manifest.cfg"))?;
    let last = report.losses.last().expect("at least one epoch");
    println!(
        "{}: mode={} epochs={} final objective = {}",
        dir.display(),
        cfg.train.loss.mode.as_str(),
        cfg.train.epochs,
        last.objective
    );
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::resolve(a.config.config.as_deref(), &a.config.sets)?;
    cfg.data = data_paths(cfg.data.clone(), &a.data)?;
    cfg.warn_on_changed_inputs()?;
    let graph = load_data(&cfg.data, false)?;
    let dir = out_dir(a.out.as_deref())?;
    match &a.sweep {
        None => {
            cfg.train.validate()?;
            run_training(&cfg, &graph, &dir)
        }
        Some(spec) => {
            let (key, values) = parse_sweep(spec)?;
            if !TrainConfig::is_key(&key) {
                return Err(usage(format!("unknown config key `{key}` in --sweep")));
            }
            // Validate every variant before spending time on any.
            let variants = values
                .iter()
                .map(|v| {
                    let mut c = cfg.clone();
                    c.set(&key, v)?;
                    c.train.validate()?;
                    Ok((v.clone(), c))
                })
                .collect::<Result<Vec<_>>>()?;
            for (v, c) in variants {
                run_training(&c, &graph, &dir.join(format!("{key}={v}")))?;
            }
            Ok(())
        }
    }
}

fn run_manifest(run: Option<&Path>) -> Result<Option<RunConfig>> {
    run.map(|r| RunConfig::from_file(&r.join("manifest.cfg"))).transpose()
}

fn load_embeddings(explicit: Option<&Path>, run: Option<&Path>, graph: &Graph) -> Result<DenseMatrix> {
    let path = match (explicit, run) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(r)) => r.join("embeddings.txt"),
        (None, None) => return Err(usage("give --embeddings or --run")),
    };
    let h = DenseMatrix::load_text(&path)?;
    if h.rows() != graph.num_nodes() {
        return Err(Error::Shape(format!(
            "{} has {} rows but the graph has {} nodes",
            path.display(),
            h.rows(),
            graph.num_nodes()
        ))
        .into());
    }
    Ok(h)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let base = run_manifest(a.run.as_deref())?.unwrap_or_default();
    let paths = data_paths(base.data, &a.data)?;
    let graph = load_data(&paths, true)?;
    let labels = graph_labels(&graph)?;
    let h = load_embeddings(a.embeddings.as_deref(), a.run.as_deref(), &graph)?;
    let mut report = EvalReport::default();
    if matches!(a.task, Task::Classify | Task::All) {
        let split = split_for(&graph, &a.split, a.seed)?;
        let cfg = ProbeConfig {
            runs: a.runs.unwrap_or(5),
            ..ProbeConfig::default()
        };
        report.accuracy = Some(linear_probe(&h, labels, &split, &cfg, Seed(a.seed))?);
    }
    if matches!(a.task, Task::Cluster | Task::All) {
        let k = graph.num_classes();
        report.clustering = Some(clustering_eval(&h, labels, k, a.runs.unwrap_or(10), 50, Seed(a.seed))?);
    }
    print!("{}", report.to_text());
    if let Some(out) = &a.out {
        report.write(out)?;
    }
    Ok(())
}

pub fn mp_ablation(a: &MpAblationArgs) -> Result<()> {
    let mut cfg = RunConfig::resolve(a.config.config.as_deref(), &a.config.sets)?;
    cfg.data = data_paths(cfg.data.clone(), &a.data)?;
    let graph = load_data(&cfg.data, true)?;
    let labels = graph_labels(&graph)?;
    let split = split_for(&graph, &a.split, cfg.train.seed)?;
    let probe = ProbeConfig {
        runs: a.runs,
        ..ProbeConfig::default()
    };
    let mut base = cfg.train;
    base.loss.mode = LossMode::Grace;
    base.loss.beta = None;
    base.aug.p_e = 0.0;
    base.aug.p_f = 0.0;
    let mut rows = Vec::new();
    for (name, mp_ablation) in [("w/ MP", false), ("w/o MP", true)] {
        let mut c = base;
        c.encoder.mp_ablation = mp_ablation;
        let report = homogcl::train::train(&graph, &c)?;
        rows.push((name, linear_probe(&report.embeddings, labels, &split, &probe, Seed(c.seed))?));
    }
    rows.push((
        "raw features",
        linear_probe(graph.features(), labels, &split, &probe, Seed(base.seed))?,
    ));
    println!("{:<14} accuracy", "variant");
    let mut csv = String::from("variant,accuracy_mean,accuracy_std\n");
    for (name, s) in &rows {
        println!("{name:<14} {}", fmt_stats(s));
        csv.push_str(&format!("{name},{},{}\n", s.mean, s.std));
    }
    let dir = out_dir(a.out.as_deref())?;
    let path = dir.join("mp_ablation.csv");
    std::fs::write(&path, csv).map_err(|e| Error::Io { path, source: e })?;
    Ok(())
}

pub fn similarity_trace(a: &SimilarityTraceArgs) -> Result<()> {
    let path = a.run.join("similarity.csv");
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::Lookup(format!("{} has no snapshots (similarity.csv missing)", a.run.display())).into())
        }
        Err(e) => return Err(Error::Io { path, source: e }.into()),
    };
    println!("{:>8} {:>10} {:>10}", "epoch", "positive", "negative");
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if let [epoch, pos, neg] = cols[..] {
            let pos: f64 = pos.parse().with_context(|| format!("bad row `{line}`"))?;
            let neg: f64 = neg.parse().with_context(|| format!("bad row `{line}`"))?;
            println!("{epoch:>8} {pos:>10.4} {neg:>10.4}");
        }
    }
    Ok(())
}

pub fn saliency_bins(a: &SaliencyBinsArgs) -> Result<()> {
    let base = run_manifest(a.run.as_deref())?.unwrap_or_default();
    let paths = data_paths(base.data, &a.data)?;
    let graph = load_data(&paths, true)?;
    let labels = graph_labels(&graph)?;
    let h = load_embeddings(a.embeddings.as_deref(), a.run.as_deref(), &graph)?;
    let mut cluster = base.train.cluster;
    if let Some(k) = a.k {
        cluster.k = k;
    }
    let s = embedding_saliency(&h, &graph, &cluster, Seed(a.seed))?;
    let bins = saliency_homophily_bins(&s, &graph, labels, a.bin_size)?;
    println!("{:>14} {:>10}", "bin_start_rank", "homophily");
    for b in &bins {
        println!("{:>14} {:>10.4}", b.start_rank, b.homophily);
    }
    let ranks: Vec<f64> = (0..bins.len()).map(|i| i as f64).collect();
    let values: Vec<f64> = bins.iter().map(|b| b.homophily).collect();
    println!("spearman(bin rank, homophily) = {:.4}", spearman(&ranks, &values)?);
    if let Some(out) = &a.out {
        write_bins(&bins, out)?;
    }
    Ok(())
}
