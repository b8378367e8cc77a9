//! Training configuration as flat dotted `key = value` pairs.

use std::fmt::Display;
use std::str::FromStr;

use crate::augment::{AugmentConfig, MaskMode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossMode {
    Grace,
    #[default]
    Homogcl,
    /// Every view neighbor is a positive with weight 1.
    HomogclHd,
    Bgrl,
    BgrlHomogcl,
}

impl LossMode {
    pub const ALL: [LossMode; 5] = [
        LossMode::Grace,
        LossMode::Homogcl,
        LossMode::HomogclHd,
        LossMode::Bgrl,
        LossMode::BgrlHomogcl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::Grace => "grace",
            LossMode::Homogcl => "homogcl",
            LossMode::HomogclHd => "homogcl_hd",
            LossMode::Bgrl => "bgrl",
            LossMode::BgrlHomogcl => "bgrl_homogcl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown loss mode `{s}`")))
    }

    pub fn is_bgrl(self) -> bool {
        matches!(self, LossMode::Bgrl | LossMode::BgrlHomogcl)
    }

    /// Whether neighbors are promoted to positives (contrastive or expanded).
    pub fn expands_positives(self) -> bool {
        matches!(self, LossMode::Homogcl | LossMode::HomogclHd | LossMode::BgrlHomogcl)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Sigma2 {
    /// Mean squared distance of each node to its assigned centroid.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub hidden: usize,
    pub out_dim: usize,
    pub layers: usize,
    pub head: bool,
    /// Replace every adjacency with the identity.
    pub mp_ablation: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            out_dim: 256,
            layers: 2,
            head: true,
            mp_ablation: false,
        }
    }
}

impl EncoderConfig {
    /// Layer widths from `input_dim` to `out_dim`.
    pub fn dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(std::iter::repeat(self.hidden).take(self.layers - 1));
        dims.push(self.out_dim);
        dims
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    pub k: usize,
    pub max_iters: usize,
    pub sigma2: Sigma2,
    pub refresh_every: usize,
    pub warm_start: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k: 10,
            max_iters: 50,
            sigma2: Sigma2::Auto,
            refresh_every: 1,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub mode: LossMode,
    pub tau: f64,
    pub alpha: f64,
    /// Unset resolves to 1 in `bgrl_homogcl` and 0 elsewhere.
    pub beta: Option<f64>,
    pub use_homo: bool,
    pub ema_tau: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            mode: LossMode::Homogcl,
            tau: 0.5,
            alpha: 1.0,
            beta: None,
            use_homo: true,
            ema_tau: 0.99,
        }
    }
}

impl LossConfig {
    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(if self.mode == LossMode::BgrlHomogcl { 1.0 } else { 0.0 })
    }

    /// Whether the homophily loss enters the objective.
    pub fn homophily_active(&self) -> bool {
        self.use_homo && self.mode != LossMode::Grace && self.mode != LossMode::Bgrl
    }

    /// Whether the trainer needs clustering at all.
    pub fn needs_clustering(&self) -> bool {
        self.mode.expands_positives() && self.mode != LossMode::HomogclHd || self.homophily_active()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Store embeddings every this many epochs; 0 keeps only init and final.
    pub snapshot_every: usize,
    pub encoder: EncoderConfig,
    pub aug: AugmentConfig,
    pub cluster: ClusterConfig,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            lr: 1e-3,
            weight_decay: 1e-5,
            seed: 0,
            snapshot_every: 0,
            encoder: EncoderConfig::default(),
            aug: AugmentConfig::default(),
            cluster: ClusterConfig::default(),
            loss: LossConfig::default(),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::config(format!("{key}: cannot parse `{value}`: {e}")))
}

/// Splits `key = value` or `key=value`, trimming both sides.
pub fn split_assignment(line: &str) -> Result<(&str, &str)> {
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| Error::config(format!("expected key=value, got `{line}`")))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return Err(Error::config(format!("empty key in `{line}`")));
    }
    Ok((k, v))
}

/// Non-comment, non-blank lines of a config text as `(line_no, key, value)`.
pub fn parse_assignments(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = split_assignment(line).map_err(|e| Error::config(format!("line {}: {e}", i + 1)))?;
        out.push((i + 1, k.to_string(), v.to_string()));
    }
    Ok(out)
}

impl TrainConfig {
    pub const KEYS: [&'static str; 24] = [
        "train.epochs",
        "train.lr",
        "train.weight_decay",
        "train.seed",
        "train.snapshot_every",
        "encoder.hidden",
        "encoder.out_dim",
        "encoder.layers",
        "encoder.head",
        "encoder.mp_ablation",
        "aug.p_e",
        "aug.p_f",
        "aug.mask_mode",
        "cluster.k",
        "cluster.max_iters",
        "cluster.sigma2",
        "cluster.refresh_every",
        "cluster.warm_start",
        "loss.mode",
        "loss.tau",
        "loss.alpha",
        "loss.beta",
        "loss.use_homo",
        "loss.ema_tau",
    ];

    pub fn is_key(key: &str) -> bool {
        Self::KEYS.contains(&key)
    }

    /// Assigns one key; unknown keys are a config error naming the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "train.epochs" => self.epochs = parse_value(key, value)?,
            "train.lr" => self.lr = parse_value(key, value)?,
            "train.weight_decay" => self.weight_decay = parse_value(key, value)?,
            "train.seed" => self.seed = parse_value(key, value)?,
            "train.snapshot_every" => self.snapshot_every = parse_value(key, value)?,
            "encoder.hidden" => self.encoder.hidden = parse_value(key, value)?,
            "encoder.out_dim" => self.encoder.out_dim = parse_value(key, value)?,
            "encoder.layers" => self.encoder.layers = parse_value(key, value)?,
            "encoder.head" => self.encoder.head = parse_value(key, value)?,
            "encoder.mp_ablation" => self.encoder.mp_ablation = parse_value(key, value)?,
            "aug.p_e" => self.aug.p_e = parse_value(key, value)?,
            "aug.p_f" => self.aug.p_f = parse_value(key, value)?,
            "aug.mask_mode" => self.aug.mask_mode = MaskMode::parse(value)?,
            "cluster.k" => self.cluster.k = parse_value(key, value)?,
            "cluster.max_iters" => self.cluster.max_iters = parse_value(key, value)?,
            "cluster.sigma2" => {
                self.cluster.sigma2 = if value == "auto" {
                    Sigma2::Auto
                } else {
                    Sigma2::Fixed(parse_value(key, value)?)
                }
            }
            "cluster.refresh_every" => self.cluster.refresh_every = parse_value(key, value)?,
            "cluster.warm_start" => self.cluster.warm_start = parse_value(key, value)?,
            "loss.mode" => self.loss.mode = LossMode::parse(value)?,
            "loss.tau" => self.loss.tau = parse_value(key, value)?,
            "loss.alpha" => self.loss.alpha = parse_value(key, value)?,
            "loss.beta" => {
                self.loss.beta = if value == "auto" {
                    None
                } else {
                    Some(parse_value(key, value)?)
                }
            }
            "loss.use_homo" => self.loss.use_homo = parse_value(key, value)?,
            "loss.ema_tau" => self.loss.ema_tau = parse_value(key, value)?,
            other => return Err(Error::config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Defaults overridden by every assignment in `text`.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (line, k, v) in parse_assignments(text)? {
            cfg.set(&k, &v).map_err(|e| Error::config(format!("line {line}: {e}")))?;
        }
        Ok(cfg)
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let sigma2 = match self.cluster.sigma2 {
            Sigma2::Auto => "auto".to_string(),
            Sigma2::Fixed(v) => v.to_string(),
        };
        let values = [
            self.epochs.to_string(),
            self.lr.to_string(),
            self.weight_decay.to_string(),
            self.seed.to_string(),
            self.snapshot_every.to_string(),
            self.encoder.hidden.to_string(),
            self.encoder.out_dim.to_string(),
            self.encoder.layers.to_string(),
            self.encoder.head.to_string(),
            self.encoder.mp_ablation.to_string(),
            self.aug.p_e.to_string(),
            self.aug.p_f.to_string(),
            self.aug.mask_mode.as_str().to_string(),
            self.cluster.k.to_string(),
            self.cluster.max_iters.to_string(),
            sigma2,
            self.cluster.refresh_every.to_string(),
            self.cluster.warm_start.to_string(),
            self.loss.mode.as_str().to_string(),
            self.loss.tau.to_string(),
            self.loss.alpha.to_string(),
            self.loss.beta.map_or_else(|| "auto".to_string(), |b| b.to_string()),
            self.loss.use_homo.to_string(),
            self.loss.ema_tau.to_string(),
        ];
        Self::KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(msg));
        if self.epochs == 0 {
            return bad("train.epochs must be positive".into());
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad(format!("train.lr={} must be positive", self.lr));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("train.weight_decay={} must be non-negative", self.weight_decay));
        }
        let e = &self.encoder;
        if e.layers == 0 || e.hidden == 0 || e.out_dim == 0 {
            return bad("encoder.layers, encoder.hidden and encoder.out_dim must be positive".into());
        }
        if self.loss.mode.is_bgrl() && !e.head {
            return bad(format!("loss.mode={} needs encoder.head=true for the predictor", self.loss.mode.as_str()));
        }
        self.aug.validate()?;
        let c = &self.cluster;
        if c.k == 0 || c.max_iters == 0 || c.refresh_every == 0 {
            return bad("cluster.k, cluster.max_iters and cluster.refresh_every must be positive".into());
        }
        if let Sigma2::Fixed(s) = c.sigma2 {
            if !(s > 0.0) || !s.is_finite() {
                return bad(format!("cluster.sigma2={s} must be positive"));
            }
        }
        let l = &self.loss;
        if !(l.tau > 0.0) || !l.tau.is_finite() {
            return bad(format!("loss.tau={} must be positive", l.tau));
        }
        if !l.alpha.is_finite() || l.alpha < 0.0 {
            return bad(format!("loss.alpha={} must be a non-negative real", l.alpha));
        }
        if let Some(b) = l.beta {
            if !b.is_finite() || b < 0.0 {
                return bad(format!("loss.beta={b} must be a non-negative real"));
            }
            if b != 0.0 && l.mode != LossMode::BgrlHomogcl {
                return bad(format!("loss.beta={b} has no effect in loss.mode={}", l.mode.as_str()));
            }
        }
        if !(0.0..=1.0).contains(&l.ema_tau) {
            return bad(format!("loss.ema_tau={} outside [0, 1]", l.ema_tau));
        }
        Ok(())
    }
}
