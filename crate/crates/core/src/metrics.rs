//! Sample-set metrics: output spread, discriminator feature similarity and
//! region-wide output distortion.

use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::berdrop::l2_distance;
use crate::error::{Error, Result};
use crate::net::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Egbas,
    EpsL2,
    EpsLinf,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Egbas, Method::EpsL2, Method::EpsLinf];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Egbas => "egbas",
            Method::EpsL2 => "eps_l2",
            Method::EpsLinf => "eps_linf",
        }
    }

    /// Point-dump `kind` that carries samples of this method.
    pub fn point_kind(self) -> &'static str {
        match self {
            Method::Egbas => "accepted",
            Method::EpsL2 => "eps_l2",
            Method::EpsLinf => "eps_linf",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which side of the nonlinearity discriminator features are read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    #[default]
    Post,
    Pre,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub method: Method,
    pub query: Vec<f64>,
    pub layer_index: usize,
    pub points: Vec<Vec<f64>>,
}

impl SampleSet {
    pub fn new(
        method: Method,
        query: Vec<f64>,
        layer_index: usize,
        points: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("sample set"));
        }
        let dim = query.len();
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::Dimension {
                what: "sample",
                expected: dim,
                found: p.len(),
            });
        }
        Ok(SampleSet {
            method,
            query,
            layer_index,
            points,
        })
    }
}

fn outputs(net: &Network, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if points.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    points
        .iter()
        .map(|z| net.generate(z).map_err(Error::from))
        .collect()
}

/// Per-element population standard deviation of the outputs of `points`.
pub fn elementwise_std(outputs: &[Vec<f64>]) -> Vec<f64> {
    let n = outputs.len() as f64;
    let dim = outputs[0].len();
    let mut mean = vec![0.0; dim];
    for o in outputs {
        for (m, v) in mean.iter_mut().zip(o) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for o in outputs {
        for ((s, v), m) in var.iter_mut().zip(o).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.into_iter().map(|s| (s / n).sqrt()).collect()
}

/// Output spread of a sample set: per-element population standard
/// deviation of `G(z)`, averaged over output elements.
pub fn output_std(net: &Network, samples: &SampleSet) -> Result<f64> {
    let outs = outputs(net, &samples.points)?;
    let stds = elementwise_std(&outs);
    Ok(stds.iter().sum::<f64>() / stds.len() as f64)
}

/// Cosine similarity; `None` if either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSimilarity {
    pub layer: usize,
    /// Mean cosine over samples with non-zero features; `None` if none had.
    pub mean_cosine: Option<f64>,
    pub excluded: usize,
}

fn features(disc: &Network, x: &[f64], mode: FeatureMode) -> Result<Vec<Vec<f64>>> {
    Ok(disc
        .trace(x)?
        .into_iter()
        .map(|a| match mode {
            FeatureMode::Post => a.post_activation,
            FeatureMode::Pre => a.pre_activation,
        })
        .collect())
}

/// Mean cosine between discriminator features of `G(z)` and `G(z0)` at
/// every discriminator layer.
pub fn disc_similarity(
    disc: &Network,
    gen: &Network,
    samples: &SampleSet,
    z0: &[f64],
    mode: FeatureMode,
) -> Result<Vec<LayerSimilarity>> {
    if disc.latent_dim() != gen.output_dim() {
        return Err(Error::Dimension {
            what: "discriminator input",
            expected: gen.output_dim(),
            found: disc.latent_dim(),
        });
    }
    let reference = features(disc, &gen.generate(z0)?, mode)?;
    let mut sums = vec![0.0; disc.depth()];
    let mut counts = vec![0usize; disc.depth()];
    for out in outputs(gen, &samples.points)? {
        for (k, f) in features(disc, &out, mode)?.iter().enumerate() {
            if let Some(c) = cosine(f, &reference[k]) {
                sums[k] += c;
                counts[k] += 1;
            }
        }
    }
    let n = samples.points.len();
    Ok((0..disc.depth())
        .map(|k| {
            let excluded = n - counts[k];
            if excluded > 0 {
                warn!(
                    "discriminator layer {}: {excluded} of {n} samples have zero-norm features and are excluded",
                    k + 1
                );
            }
            LayerSimilarity {
                layer: k + 1,
                mean_cosine: (counts[k] > 0).then(|| sums[k] / counts[k] as f64),
                excluded,
            }
        })
        .collect())
}

/// Largest `||G(z) - G(z0)||_2` over the sample set.
pub fn region_distortion(net: &Network, samples: &SampleSet, z0: &[f64]) -> Result<f64> {
    let reference = net.generate(z0)?;
    Ok(outputs(net, &samples.points)?
        .iter()
        .map(|o| l2_distance(o, &reference))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub method: Method,
    pub sigma: f64,
    pub cosine_by_layer: Vec<LayerSimilarity>,
    pub max_region_distortion: f64,
}

pub fn evaluate(
    gen: &Network,
    disc: Option<&Network>,
    samples: &SampleSet,
    mode: FeatureMode,
) -> Result<MetricReport> {
    let cosine_by_layer = match disc {
        Some(d) => disc_similarity(d, gen, samples, &samples.query, mode)?,
        None => Vec::new(),
    };
    Ok(MetricReport {
        method: samples.method,
        sigma: output_std(gen, samples)?,
        cosine_by_layer,
        max_region_distortion: region_distortion(gen, samples, &samples.query)?,
    })
}

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub model_id: String,
    pub query_id: usize,
    pub layer: usize,
    pub report: MetricReport,
}

pub fn metrics_header(disc_layers: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "model_id",
        "query_id",
        "method",
        "layer",
        "sigma",
        "max_distortion",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=disc_layers).map(|k| format!("cos_l{k}")));
    h
}

/// Renders rows under [`metrics_header`]; missing cosines are empty cells.
pub fn metrics_to_csv(rows: &[MetricRow], disc_layers: usize) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(metrics_header(disc_layers))?;
    for r in rows {
        let mut rec = vec![
            r.model_id.clone(),
            r.query_id.to_string(),
            r.report.method.to_string(),
            r.layer.to_string(),
            r.report.sigma.to_string(),
            r.report.max_region_distortion.to_string(),
        ];
        for k in 0..disc_layers {
            rec.push(
                r.report
                    .cosine_by_layer
                    .get(k)
                    .and_then(|s| s.mean_cosine)
                    .map(|c| c.to_string())
                    .unwrap_or_default(),
            );
        }
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format {
        what: "metrics csv".into(),
        reason: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
