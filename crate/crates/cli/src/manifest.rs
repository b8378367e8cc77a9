//! Run configuration with dataset paths, and the manifest written next to
//! every run. A manifest is itself a valid config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use homogcl::config::{parse_assignments, split_assignment, TrainConfig};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataPaths {
    pub edges: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

impl DataPaths {
    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let slot = match key {
            "data.edges" => &mut self.edges,
            "data.features" => &mut self.features,
            "data.labels" => &mut self.labels,
            k if k.starts_with("data.") => bail!(homogcl::Error::Config(format!("unknown config key `{k}`"))),
            _ => return Ok(false),
        };
        *slot = (!value.is_empty()).then(|| PathBuf::from(value));
        Ok(true)
    }

    pub fn entries(&self) -> [(&'static str, Option<&Path>); 3] {
        [
            ("data.edges", self.edges.as_deref()),
            ("data.features", self.features.as_deref()),
            ("data.labels", self.labels.as_deref()),
        ]
    }

    pub fn override_with(&mut self, edges: Option<PathBuf>, features: Option<PathBuf>, labels: Option<PathBuf>) {
        if edges.is_some() {
            self.edges = edges;
        }
        if features.is_some() {
            self.features = features;
        }
        if labels.is_some() {
            self.labels = labels;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: DataPaths,
    /// `(key, sha256)` digests recorded in a manifest this config was read from.
    pub recorded_digests: Vec<(String, String)>,
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !self.data.set(key, value)? {
            self.train.set(key, value)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| homogcl::Error::Io { path: path.to_path_buf(), source: e })?;
        let mut cfg = Self::default();
        for (line, k, v) in parse_assignments(&text)? {
            cfg.set(&k, &v)
                .with_context(|| format!("{}:{line}", path.display()))?;
        }
        cfg.recorded_digests = text
            .lines()
            .filter_map(|l| l.strip_prefix("# digest "))
            .filter_map(|l| split_assignment(l).ok())
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Ok(cfg)
    }

    /// Config file (if any) followed by `--set key=value` overrides in order.
    pub fn resolve(config: Option<&Path>, sets: &[String]) -> Result<Self> {
        let mut cfg = match config {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        for s in sets {
            let (k, v) = split_assignment(s)?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn warn_on_changed_inputs(&self) -> Result<()> {
        for (key, recorded) in &self.recorded_digests {
            let path = self
                .data
                .entries()
                .into_iter()
                .find(|(k, _)| k == key)
                .and_then(|(_, p)| p);
            if let Some(p) = path {
                let now = sha256_file(p)?;
                if &now != recorded {
                    log::warn!("{} changed since the manifest was written", p.display());
                }
            }
        }
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| homogcl::Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Resolved config, dataset digests, and produced files of one run.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config: RunConfig,
    pub digests: Vec<(String, String)>,
    pub outputs: Vec<(String, PathBuf)>,
}

impl RunManifest {
    pub fn new(config: &RunConfig) -> Result<Self> {
        let mut digests = Vec::new();
        for (key, path) in config.data.entries() {
            if let Some(p) = path {
                digests.push((key.to_string(), sha256_file(p)?));
            }
        }
        Ok(Self {
            config: config.clone(),
            digests,
            outputs: Vec::new(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# homogcl run manifest\n");
        out.push_str(&format!("# version = {}\n", env!("CARGO_PKG_VERSION")));
        for (k, d) in &self.digests {
            out.push_str(&format!("# digest {k} = {d}\n"));
        }
        for (k, p) in &self.outputs {
            out.push_str(&format!("# output {k} = {}\n", p.display()));
        }
        for (key, path) in self.config.data.entries() {
            if let Some(p) = path {
                out.push_str(&format!("{key} = {}\n", p.display()));
            }
        }
        out.push_str(&self.config.train.to_text());
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())
            .map_err(|e| homogcl::Error::Io { path: path.to_path_buf(), source: e })?;
        Ok(())
    }
}
