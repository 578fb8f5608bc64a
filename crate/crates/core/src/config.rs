//! Experiment configuration. Every algorithm default lives in the structs
//! embedded here, so one JSON document fully determines a run.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::berdrop::BerOptConfig;
use crate::error::{Error, Result};
use crate::explorer::RrtConfig;
use crate::metrics::FeatureMode;
use crate::net::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Queries {
    List(Vec<Vec<f64>>),
    /// `count` latent vectors drawn from a standard normal.
    Random { count: usize, seed: u64 },
}

impl Queries {
    pub fn resolve(&self, latent_dim: usize) -> Result<Vec<Vec<f64>>> {
        let qs = match self {
            Queries::List(v) => v.clone(),
            Queries::Random { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..*count)
                    .map(|_| {
                        (0..latent_dim)
                            .map(|_| StandardNormal.sample(&mut rng))
                            .collect()
                    })
                    .collect()
            }
        };
        if qs.is_empty() {
            return Err(Error::config("queries", "no queries given"));
        }
        for (i, q) in qs.iter().enumerate() {
            if q.len() != latent_dim {
                return Err(Error::config(
                    format!("queries[{i}]"),
                    format!("has {} entries, latent dimension is {latent_dim}", q.len()),
                ));
            }
            if q.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("queries[{i}]"), "non-finite entry"));
            }
        }
        Ok(qs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Defaults to the generator file stem.
    #[serde(default)]
    pub model_id: Option<String>,
    pub generator_path: PathBuf,
    #[serde(default)]
    pub discriminator_path: Option<PathBuf>,
    pub queries: Queries,
    pub target_layers: Vec<usize>,
    #[serde(default)]
    pub beropt: BerOptConfig,
    #[serde(default)]
    pub rrt: RrtConfig,
    /// Samples per baseline; defaults to the number of accepted samples.
    #[serde(default)]
    pub baseline_n: Option<usize>,
    #[serde(default)]
    pub baseline_seed: u64,
    #[serde(default)]
    pub feature_mode: FeatureMode,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("gbas-out")
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    /// Loads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_text(path)?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.generator_path);
        if let Some(d) = cfg.discriminator_path.as_mut() {
            fix(d);
        }
        fix(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn model_id(&self) -> String {
        self.model_id.clone().unwrap_or_else(|| {
            self.generator_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".into())
        })
    }

    /// Overrides every seed in the config.
    pub fn set_seed(&mut self, seed: u64) {
        self.beropt.seed = seed;
        self.rrt.seed = seed;
        self.baseline_seed = seed;
    }

    /// Checks the config against the loaded generator (and discriminator)
    /// and returns the resolved queries.
    pub fn validate(&self, gen: &Network, disc: Option<&Network>) -> Result<Vec<Vec<f64>>> {
        self.beropt.validate()?;
        self.rrt.validate(gen.latent_dim())?;
        if self.target_layers.is_empty() {
            return Err(Error::config("target_layers", "no target layers given"));
        }
        for &l in &self.target_layers {
            if l == 0 || l > gen.depth() {
                return Err(Error::config(
                    "target_layers",
                    format!("layer {l} outside [1, {}]", gen.depth()),
                ));
            }
        }
        if self.baseline_n == Some(0) {
            return Err(Error::config("baseline_n", "must be >= 1"));
        }
        if let Some(d) = disc {
            if d.latent_dim() != gen.output_dim() {
                return Err(Error::config(
                    "discriminator_path",
                    format!(
                        "discriminator input {} does not match generator output {}",
                        d.latent_dim(),
                        gen.output_dim()
                    ),
                ));
            }
        }
        self.queries.resolve(gen.latent_dim())
    }
}

/// Reads queries from a text file: one latent vector per line, entries
/// separated by commas or whitespace. Blank lines and `#` comments are
/// skipped.
pub fn read_query_file(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = crate::io::read_text(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let q = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|e| {
                    Error::config(
                        format!("query file line {}", n + 1),
                        format!("`{s}`: {e}"),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(q);
    }
    Ok(out)
}
