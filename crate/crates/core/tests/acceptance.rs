//! Acceptance suite: one line per criterion with its verdict, measured value
//! and runtime against the budget. Positional arguments select criteria by id
//! prefix (`cargo test --test acceptance -- 5`).

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use homogcl::augment::{sample_view, AugmentConfig, MaskMode};
use homogcl::cluster::{gmm_posterior, kmeans, saliency, AssignmentMatrix, Centroids, EdgeSaliency};
use homogcl::config::{LossConfig, LossMode, TrainConfig};
use homogcl::encoder::{gcn_forward_tape, head_tape, normalize_adjacency, EncoderParams};
use homogcl::eval::{ari, linear_probe, nmi, ProbeConfig, Stats};
use homogcl::graph::{
    generate_sbm, homophily, load_graph, make_split, read_split, Graph, SbmConfig, SplitMode,
};
use homogcl::loss::{
    bgrl_expanded_loss, bgrl_loss, grace_loss, homogcl_contrastive, homophily_loss, ContrastMasks,
};
use homogcl::numerics::{fd_check, DenseMatrix, Seed};
use homogcl::train::{build_objective, embedding_saliency, train, write_metrics, EpochInputs, EpochTiming};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

struct Criterion {
    id: &'static str,
    name: &'static str,
    budget: Duration,
    /// Failures are reported but do not fail the suite.
    soft: bool,
    run: fn() -> Outcome,
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

const MINUTE: u64 = 60;

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria = [
        Criterion { id: "1", name: "neighbor-expanded loss bounds the plain loss", budget: Duration::from_secs(10), soft: false, run: bound_suite },
        Criterion { id: "2", name: "gradients match finite differences", budget: Duration::from_secs(30), soft: false, run: gradient_suite },
        Criterion { id: "3", name: "losses and scores match loop oracles", budget: Duration::from_secs(30), soft: false, run: oracle_suite },
        Criterion { id: "4", name: "clustering invariants", budget: Duration::from_secs(10), soft: false, run: clustering_suite },
        Criterion { id: "5a", name: "neighbor expansion helps both bases on SBM", budget: Duration::from_secs(10 * MINUTE), soft: false, run: desk_bases },
        Criterion { id: "5b", name: "message passing ablation", budget: Duration::from_secs(5 * MINUTE), soft: false, run: desk_mp_ablation },
        Criterion { id: "5c", name: "salient edges are more homophilous", budget: Duration::from_secs(MINUTE), soft: false, run: desk_saliency_bins },
        Criterion { id: "5d", name: "soft saliency and homophily loss ablations", budget: Duration::from_secs(15 * MINUTE), soft: false, run: desk_ablations },
        Criterion { id: "6", name: "Cora linear probe (optional)", budget: Duration::from_secs(10 * MINUTE), soft: true, run: cora_check },
        Criterion { id: "7", name: "clustering overhead is linear in k", budget: Duration::from_secs(5 * MINUTE), soft: false, run: overhead_scaling },
        Criterion { id: "8", name: "identical manifests give identical metrics", budget: Duration::from_secs(2 * MINUTE), soft: false, run: determinism },
    ];
    let mut failed = 0;
    let mut ran = 0;
    for c in &criteria {
        if !filters.is_empty() && !filters.iter().any(|f| c.id.starts_with(f.as_str())) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let outcome = (c.run)();
        let elapsed = t.elapsed();
        let over = elapsed > c.budget;
        let (tag, detail) = match outcome {
            Outcome::Pass(d) if over => ("FAIL", format!("{d}; over budget")),
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => ("FAIL", d),
            Outcome::Skip(d) => ("SKIP", d),
        };
        let tag = if tag == "FAIL" && c.soft { "SOFT-FAIL" } else { tag };
        if tag == "FAIL" {
            failed += 1;
        }
        println!(
            "{tag} [{}] {}: {detail} ({:.1}s of {}s)",
            c.id,
            c.name,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    println!("acceptance: {} of {ran} criteria failed", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// 1 -------------------------------------------------------------------------

fn bound_suite() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut count = 0;
    let mut strict = 0;
    for i in 0..300u64 {
        let n = [4, 8, 16][(i % 3) as usize];
        let d = [3, 8][(i / 3 % 2) as usize];
        let tau = [0.2, 0.5, 1.0][(i / 6 % 3) as usize];
        let mut s = Seed(1).index(i).stream();
        let c = contrast_instance(n, d, &mut s);
        let grace = grace_loss(&c.u, &c.v, tau).unwrap();
        let homo = homogcl_contrastive(&c.u, &c.v, &c.saliency, &c.views[0], &c.views[1], tau).unwrap();
        worst = worst.min(homo - grace);
        count += 1;
        strict += usize::from(homo > grace);
    }
    verdict(
        worst >= -1e-9,
        format!("{count} instances, {strict} strict, min slack {worst:.3e} (need >= -1e-9)"),
    )
}

// 2 -------------------------------------------------------------------------

struct GradCase {
    graph: Graph,
    enc: EncoderParams,
    inputs: EpochInputs,
    loss: LossConfig,
}

fn grad_case(mode: LossMode, use_homo: bool, trial: u64) -> GradCase {
    let mut s = Seed(2).child(mode.as_str()).index(trial).stream();
    let n = 3 + (trial % 6) as usize;
    let graph = random_graph(n, 0.5, 3, &mut s);
    let out = 3;
    let head = mode.is_bgrl() || trial % 2 == 0;
    let enc = EncoderParams::init(&[3, 4, out], head, Seed(trial)).unwrap();
    let aug = AugmentConfig { p_e: 0.3, p_f: 0.2, mask_mode: MaskMode::Column };
    let views = [sample_view(&graph, &aug, &mut s).unwrap(), sample_view(&graph, &aug, &mut s).unwrap()];
    let sal = match mode {
        LossMode::HomogclHd => Some(EdgeSaliency::constant(graph.num_edges(), 1.0)),
        LossMode::Homogcl | LossMode::BgrlHomogcl => Some(random_saliency(&graph, &mut s)),
        _ => None,
    };
    let masks = match mode {
        LossMode::Grace => Some(ContrastMasks::grace(n)),
        LossMode::Homogcl | LossMode::HomogclHd => {
            Some(ContrastMasks::homogcl(sal.as_ref().unwrap(), &views[0], &views[1]).unwrap())
        }
        _ => None,
    };
    let loss = LossConfig { mode, use_homo, ..LossConfig::default() };
    let clusters = loss
        .homophily_active()
        .then(|| (Centroids(random_matrix(3, out, &mut s)), 0.5 + s.uniform()));
    let targets = mode
        .is_bgrl()
        .then(|| [random_matrix(n, out, &mut s), random_matrix(n, out, &mut s)]);
    let inputs = EpochInputs {
        adjacency: Arc::new(normalize_adjacency(&graph)),
        features: graph.features().clone(),
        view_adjacency: [Arc::new(normalize_adjacency(&views[0])), Arc::new(normalize_adjacency(&views[1]))],
        view_features: [views[0].features().clone(), views[1].features().clone()],
        masks,
        saliency: sal,
        clusters,
        targets,
    };
    GradCase { graph, enc, inputs, loss }
}

fn gradient_suite() -> Outcome {
    const TRIALS: u64 = 20;
    let mut worst = 0.0f64;
    let mut worst_case = String::new();
    let mut summary = Vec::new();
    let mut record = |label: String, rel: f64, checked: usize| -> bool {
        if rel > worst {
            worst = rel;
            worst_case = label.clone();
        }
        checked > 0
    };
    let mut cases: Vec<(String, LossMode, bool)> =
        LossMode::ALL.iter().map(|&m| (m.as_str().to_string(), m, true)).collect();
    cases.push(("homogcl without homophily loss".into(), LossMode::Homogcl, false));
    cases.push(("bgrl_homogcl without homophily loss".into(), LossMode::BgrlHomogcl, false));
    for (label, mode, use_homo) in &cases {
        let mut checked = 0;
        for trial in 0..TRIALS {
            let c = grad_case(*mode, *use_homo, trial);
            let report = fd_check(
                |tape, vars| Ok(build_objective(tape, &c.enc, vars, &c.graph, &c.inputs, &c.loss)?.objective),
                &c.enc.params,
                1e-6,
            )
            .unwrap();
            if !record(format!("{label} trial {trial}"), report.max_rel_error, report.checked) {
                return Outcome::Fail(format!("{label} trial {trial}: every entry skipped"));
            }
            checked += report.checked;
        }
        summary.push(format!("{label} {checked}"));
    }
    let mut checked = 0;
    for trial in 0..TRIALS {
        let mut s = Seed(3).index(trial).stream();
        let n = 3 + (trial % 6) as usize;
        let graph = random_graph(n, 0.5, 3, &mut s);
        let enc = EncoderParams::init(&[3, 5, 4], true, Seed(trial)).unwrap();
        let adj = Arc::new(normalize_adjacency(&graph));
        let weights = random_matrix(n, 4, &mut s);
        let report = fd_check(
            |tape, vars| {
                let x = tape.constant(graph.features().clone());
                let h = gcn_forward_tape(tape, &adj, x, &vars[..2]);
                let z = head_tape(tape, h, [vars[2], vars[3]]);
                let both = tape.add(h, z);
                let w = tape.constant(weights.clone());
                let prod = tape.mul(both, w);
                Ok(tape.sum(prod))
            },
            &enc.params,
            1e-6,
        )
        .unwrap();
        if !record(format!("encoder trial {trial}"), report.max_rel_error, report.checked) {
            return Outcome::Fail(format!("encoder trial {trial}: every entry skipped"));
        }
        checked += report.checked;
    }
    summary.push(format!("encoder {checked}"));
    verdict(
        worst < 1e-5,
        format!(
            "{TRIALS} trials per case, max rel error {worst:.2e} at {worst_case} (need < 1e-5); entries checked: {}",
            summary.join(", ")
        ),
    )
}

// 3 -------------------------------------------------------------------------

fn oracle_suite() -> Outcome {
    const INSTANCES: u64 = 60;
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |name: &'static str, a: f64, b: f64| {
        let e = worst.entry(name).or_insert(0.0);
        *e = e.max((a - b).abs());
    };
    for i in 0..INSTANCES {
        let mut s = Seed(4).index(i).stream();
        let n = 2 + (i % 19) as usize;
        let d = 1 + (i % 5) as usize;
        let tau = 0.2 + s.uniform();
        let c = contrast_instance(n, d, &mut s);
        note("grace", grace_loss(&c.u, &c.v, tau).unwrap(), grace_oracle(&c.u, &c.v, tau));
        note(
            "homogcl",
            homogcl_contrastive(&c.u, &c.v, &c.saliency, &c.views[0], &c.views[1], tau).unwrap(),
            homogcl_oracle(&c.u, &c.v, &saliency_map(&c.graph, &c.saliency), &c.views[0], &c.views[1], tau),
        );
        note("bgrl", bgrl_loss(&c.u, &c.v).unwrap(), bgrl_oracle(&c.u, &c.v));
        let g = random_graph(n, 0.4, 1, &mut s);
        let g = if g.num_edges() == 0 {
            Graph::new(n, vec![(0, 1)], g.features().clone(), None).unwrap()
        } else {
            g
        };
        let r = random_stochastic(n, 1 + (i % 4) as usize, &mut s);
        note("homophily", homophily_loss(&AssignmentMatrix(r.clone()), &g).unwrap(), homophily_oracle(&r, &g));
        let sal = random_saliency(&g, &mut s);
        note(
            "bgrl expanded",
            bgrl_expanded_loss(&c.u, &c.v, &sal, &g).unwrap(),
            expanded_oracle(&c.u, &c.v, &sal, &g),
        );
        let pred = random_labels(n, 1 + (i % 4) as usize, &mut s);
        let truth = random_labels(n, 1 + (i / 4 % 4) as usize, &mut s);
        note("nmi", nmi(&pred, &truth).unwrap(), nmi_oracle(&pred, &truth));
        note("ari", ari(&pred, &truth).unwrap(), ari_oracle(&pred, &truth));
    }
    let max = worst.values().copied().fold(0.0, f64::max);
    let parts: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    verdict(
        max <= 1e-12,
        format!("{INSTANCES} instances each, max abs diff: {} (need <= 1e-12)", parts.join(", ")),
    )
}

// 4 -------------------------------------------------------------------------

fn clustering_suite() -> Outcome {
    let mut row_err = 0.0f64;
    let mut sal_bad = 0;
    let mut sym_err = 0.0f64;
    let mut inertia_bad = 0;
    let mut onehot_err = 0.0f64;
    for i in 0..100u64 {
        let mut s = Seed(5).index(i).stream();
        let n = 2 + (i % 30) as usize;
        let k = 1 + (i % 5) as usize;
        let h = random_matrix(n, 3, &mut s);
        let c = Centroids(random_matrix(k, 3, &mut s));
        let r = gmm_posterior(&h, &c, 0.1 + 2.0 * s.uniform()).unwrap();
        for row in 0..n {
            row_err = row_err.max((r.matrix().row(row).iter().sum::<f64>() - 1.0).abs());
        }

        let g = random_graph(n, 0.4, 1, &mut s);
        let sal = saliency(&r, &g).unwrap();
        sal_bad += sal.values().iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
        let flipped = Graph::new(n, g.edges().iter().map(|&(a, b)| (b, a)).collect(), g.features().clone(), None).unwrap();
        let sal_flipped = saliency(&r, &flipped).unwrap();
        for e in 0..g.num_edges() {
            sym_err = sym_err.max((sal.get(e) - sal_flipped.get(e)).abs());
        }

        if k <= n {
            let res = kmeans(&h, k, 50, &mut s, None).unwrap();
            inertia_bad += res.inertia_history.windows(2).filter(|w| w[1] > w[0] + 1e-9).count();
        }

        let labels = random_labels(n, k, &mut s);
        let centers = DenseMatrix::from_fn(k, 3, |i, j| if i == j % k { 10.0 } else { 0.0 } + 10.0 * i as f64);
        let pts = DenseMatrix::from_fn(n, 3, |r, j| centers.get(labels[r], j) + 0.1 * s.normal());
        let post = gmm_posterior(&pts, &Centroids(centers), 1e-6).unwrap();
        for (row, &l) in labels.iter().enumerate() {
            onehot_err = onehot_err.max((post.matrix().get(row, l) - 1.0).abs());
        }
    }
    let ok = row_err <= 1e-12 && sal_bad == 0 && sym_err == 0.0 && inertia_bad == 0 && onehot_err <= 1e-12;
    verdict(
        ok,
        format!(
            "100 instances: row-sum err {row_err:.1e}, saliency out of range {sal_bad}, asymmetry {sym_err:.1e}, inertia increases {inertia_bad}, one-hot err {onehot_err:.1e}"
        ),
    )
}

// 5 -------------------------------------------------------------------------

const DESK_SEEDS: u64 = 5;

fn desk_graph(seed: u64) -> Graph {
    generate_sbm(&SbmConfig {
        n: 600,
        num_classes: 3,
        p_in: 0.02,
        p_out: 0.0015,
        feat_dim: 30,
        flip_prob: 0.45,
        seed,
    })
    .unwrap()
}

/// Shared desk-scale budget. The contrastive family and the bootstrap family
/// each get one setting used by every variant of that family.
fn desk_config(mode: LossMode, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.seed = seed;
    cfg.loss.mode = mode;
    cfg.encoder.hidden = 64;
    cfg.encoder.out_dim = 32;
    cfg.cluster.k = 6;
    if mode.is_bgrl() {
        cfg.epochs = 400;
        cfg.lr = 1e-3;
    } else {
        cfg.epochs = 100;
        cfg.lr = 5e-3;
    }
    cfg
}

fn probe(g: &Graph, h: &DenseMatrix, seed: u64) -> f64 {
    let split = make_split(g, SplitMode::PerClass { train_per_class: 20, val_size: 120 }, seed).unwrap();
    let cfg = ProbeConfig { runs: 3, ..ProbeConfig::default() };
    linear_probe(h, g.labels().unwrap(), &split, &cfg, Seed(seed)).unwrap().mean
}

fn seed_accuracies(variant: impl Fn(u64) -> TrainConfig) -> Stats {
    Stats::from_values(
        (0..DESK_SEEDS)
            .map(|seed| {
                let g = desk_graph(seed);
                let report = train(&g, &variant(seed)).unwrap();
                probe(&g, &report.embeddings, seed)
            })
            .collect(),
    )
}

fn fmt_stats(name: &str, s: &Stats) -> String {
    format!("{name} {:.4}±{:.4}", s.mean, s.std)
}

fn desk_homophily() -> (f64, bool) {
    let min = (0..DESK_SEEDS)
        .map(|seed| {
            let g = desk_graph(seed);
            homophily(&g, g.labels().unwrap()).unwrap()
        })
        .fold(f64::INFINITY, f64::min);
    (min, min > 0.85)
}

fn desk_bases() -> Outcome {
    let (h, h_ok) = desk_homophily();
    let acc = |mode| seed_accuracies(|seed| desk_config(mode, seed));
    let grace = acc(LossMode::Grace);
    let homo = acc(LossMode::Homogcl);
    let bgrl = acc(LossMode::Bgrl);
    let bgrl_homo = acc(LossMode::BgrlHomogcl);
    verdict(
        h_ok && homo.mean >= grace.mean && bgrl_homo.mean >= bgrl.mean,
        format!(
            "min homophily {h:.3}; {}, {}, {}, {}",
            fmt_stats("grace", &grace),
            fmt_stats("homogcl", &homo),
            fmt_stats("bgrl", &bgrl),
            fmt_stats("bgrl_homogcl", &bgrl_homo)
        ),
    )
}

fn desk_mp_ablation() -> Outcome {
    let no_aug = |seed, mp_ablation| {
        let mut cfg = desk_config(LossMode::Grace, seed);
        cfg.aug.p_e = 0.0;
        cfg.aug.p_f = 0.0;
        cfg.encoder.mp_ablation = mp_ablation;
        cfg
    };
    let with_mp = seed_accuracies(|seed| no_aug(seed, false));
    let without_mp = seed_accuracies(|seed| no_aug(seed, true));
    let raw = Stats::from_values(
        (0..DESK_SEEDS)
            .map(|seed| {
                let g = desk_graph(seed);
                probe(&g, g.features(), seed)
            })
            .collect(),
    );
    let gap = (without_mp.mean - raw.mean) * 100.0;
    verdict(
        with_mp.mean > without_mp.mean && gap.abs() <= 3.0,
        format!(
            "{}, {}, {}; w/o MP minus raw {gap:+.2} points (need within ±3)",
            fmt_stats("w/ MP", &with_mp),
            fmt_stats("w/o MP", &without_mp),
            fmt_stats("raw features", &raw)
        ),
    )
}

fn desk_saliency_bins() -> Outcome {
    let g = desk_graph(0);
    let cfg = desk_config(LossMode::Homogcl, 0);
    let report = train(&g, &cfg).unwrap();
    let s = embedding_saliency(&report.embeddings, &g, &cfg.cluster, Seed(0).child("bins")).unwrap();
    let labels = g.labels().unwrap();
    let mut order: Vec<usize> = (0..g.num_edges()).collect();
    order.sort_by(|&a, &b| s.get(b).total_cmp(&s.get(a)).then(a.cmp(&b)));
    let decile = g.num_edges() / 10;
    let bin_homophily = |edges: &[usize]| {
        let same = edges
            .iter()
            .filter(|&&e| labels[g.edges()[e].0] == labels[g.edges()[e].1])
            .count();
        same as f64 / edges.len() as f64
    };
    let top = bin_homophily(&order[..decile]);
    let bottom = bin_homophily(&order[order.len() - decile..]);
    verdict(
        top > bottom,
        format!("{decile} edges per decile: top {top:.3}, bottom {bottom:.3}"),
    )
}

fn desk_ablations() -> Outcome {
    let homo = seed_accuracies(|seed| desk_config(LossMode::Homogcl, seed));
    let hd = seed_accuracies(|seed| desk_config(LossMode::HomogclHd, seed));
    let no_homo = seed_accuracies(|seed| {
        let mut cfg = desk_config(LossMode::Homogcl, seed);
        cfg.loss.use_homo = false;
        cfg
    });
    // A shortfall no larger than one seed standard deviation counts as a tie.
    let holds = |other: &Stats| homo.mean >= other.mean || other.mean - homo.mean <= homo.std;
    verdict(
        holds(&hd) && holds(&no_homo),
        format!(
            "{}, {}, {}",
            fmt_stats("homogcl", &homo),
            fmt_stats("homogcl_hd", &hd),
            fmt_stats("without homophily loss", &no_homo)
        ),
    )
}

// 6 -------------------------------------------------------------------------

const CORA_ENV: &str = "HOMOGCL_CORA_DIR";

fn cora_check() -> Outcome {
    let Some(dir) = std::env::var_os(CORA_ENV).map(PathBuf::from) else {
        return Outcome::Skip(format!("{CORA_ENV} not set"));
    };
    let file = |name: &str| dir.join(name);
    if !["edges.txt", "features.txt", "labels.txt", "split.txt"].iter().all(|f| file(f).exists()) {
        return Outcome::Skip(format!(
            "{} lacks edges.txt, features.txt, labels.txt or split.txt",
            dir.display()
        ));
    }
    match cora_run(&dir) {
        Ok((acc, cfg)) => verdict(
            acc.mean >= 0.78,
            format!("{} (need >= 0.78) with {}", fmt_stats("test accuracy", &acc), cfg),
        ),
        Err(e) => Outcome::Fail(format!("calibration run failed: {e}")),
    }
}

/// Trains with `config.cfg` from the data directory when present, otherwise
/// with the library defaults.
fn cora_run(dir: &Path) -> homogcl::Result<(Stats, String)> {
    let (g, _) = load_graph(&dir.join("edges.txt"), &dir.join("features.txt"), Some(&dir.join("labels.txt")))?;
    let split = read_split(&dir.join("split.txt"), g.num_nodes())?;
    let cfg_path = dir.join("config.cfg");
    let cfg = if cfg_path.exists() {
        let text = std::fs::read_to_string(&cfg_path).map_err(|source| homogcl::Error::Io { path: cfg_path.clone(), source })?;
        TrainConfig::from_text(&text)?
    } else {
        TrainConfig::default()
    };
    let report = train(&g, &cfg)?;
    let acc = linear_probe(&report.embeddings, g.labels().unwrap(), &split, &ProbeConfig::default(), Seed(cfg.seed))?;
    let summary = format!(
        "mode={} epochs={} lr={} k={}",
        cfg.loss.mode.as_str(),
        cfg.epochs,
        cfg.lr,
        cfg.cluster.k
    );
    Ok((acc, summary))
}

// 7 -------------------------------------------------------------------------

/// Epoch time of a run as the sum of per-phase minima, skipping the cold first
/// epoch. Timing noise on a shared core only ever adds time, so minima are the
/// stable statistic.
fn fastest_epoch(g: &Graph, cfg: &TrainConfig) -> f64 {
    let report = train(g, cfg).unwrap();
    let warm = &report.timings[1..];
    let fastest = |phase: fn(&EpochTiming) -> f64| warm.iter().map(phase).fold(f64::INFINITY, f64::min);
    fastest(|t| t.encode) + fastest(|t| t.cluster) + fastest(|t| t.loss) + fastest(|t| t.update)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Each homogcl run is paired with an adjacent grace run and the overhead is
/// taken relative to it, which cancels slow drift in machine speed.
fn overhead_scaling() -> Outcome {
    const REPS: usize = 60;
    let ks = [5usize, 10, 20, 40];
    let g = generate_sbm(&SbmConfig {
        n: 150,
        num_classes: 3,
        p_in: 0.08,
        p_out: 0.006,
        feat_dim: 30,
        flip_prob: 0.45,
        seed: 0,
    })
    .unwrap();
    let base = |mode| {
        let mut cfg = desk_config(mode, 0);
        cfg.epochs = 30;
        cfg.encoder.out_dim = 64;
        cfg
    };
    let mut grace_min = f64::INFINITY;
    let mut ratios = vec![Vec::with_capacity(REPS); ks.len()];
    for _ in 0..REPS {
        for (i, &k) in ks.iter().enumerate() {
            let grace = fastest_epoch(&g, &base(LossMode::Grace));
            let mut cfg = base(LossMode::Homogcl);
            cfg.cluster.k = k;
            let homo = fastest_epoch(&g, &cfg);
            grace_min = grace_min.min(grace);
            ratios[i].push(homo / grace - 1.0);
        }
    }
    let overhead: Vec<f64> = ratios.into_iter().map(median).collect();
    let x: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let r2 = linear_r2(&x, &overhead);
    let pts: Vec<String> = ks
        .iter()
        .zip(&overhead)
        .map(|(k, o)| format!("k={k} {:.1}%", o * 100.0))
        .collect();
    verdict(
        r2 >= 0.9,
        format!(
            "fastest grace epoch {:.1}ms, median overhead {}; R² {r2:.3} (need >= 0.9)",
            grace_min * 1e3,
            pts.join(", ")
        ),
    )
}

fn linear_r2(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}

// 8 -------------------------------------------------------------------------

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let g = generate_sbm(&SbmConfig {
        n: 200,
        num_classes: 3,
        p_in: 0.05,
        p_out: 0.005,
        feat_dim: 20,
        flip_prob: 0.3,
        seed: 8,
    })
    .unwrap();
    let mut differing = Vec::new();
    for mode in LossMode::ALL {
        let mut cfg = TrainConfig::default();
        cfg.loss.mode = mode;
        cfg.epochs = 15;
        cfg.encoder.hidden = 32;
        cfg.encoder.out_dim = 16;
        cfg.seed = 8;
        let manifest = cfg.to_text();
        let mut files = Vec::new();
        for run in 0..2 {
            let cfg = TrainConfig::from_text(&manifest).unwrap();
            let report = train(&g, &cfg).unwrap();
            let path = dir.path().join(format!("{}-{run}.csv", mode.as_str()));
            write_metrics(&report, &path).unwrap();
            files.push(std::fs::read(&path).unwrap());
        }
        if files[0] != files[1] {
            differing.push(mode.as_str());
        }
    }
    verdict(
        differing.is_empty(),
        format!("{} modes, runs differing: {:?}", LossMode::ALL.len(), differing),
    )
}
