//! Experiment driver: for every (query, layer) cell run the boundary-aware
//! sampler, calibrate and draw both epsilon-ball baselines, and score all
//! three sample sets.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! config.json                 effective configuration
//! summary.csv                 one metrics row per (query, layer, method)
//! summary_by_method.csv       per-layer, per-method means
//! cells/q{QQ}_l{L}/
//!     beropt.json, loss_trace.csv, indicator.json, calibration.json,
//!     points.csv, metrics.csv, [query.pgm, std_{method}.pgm]
//! ```

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{calibrate, sample_l2_ball, sample_linf_ball, EpsCalibration};
use crate::berdrop::{BerOptConfig, BerOptResult};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::explorer::{e_gbas, ExplorationResult, RrtConfig};
use crate::grid::values_to_pgm;
use crate::io::{points_to_csv, write_text, PointRow};
use crate::metrics::{
    elementwise_std, evaluate, metrics_to_csv, FeatureMode, MetricReport, MetricRow, Method,
    SampleSet,
};
use crate::net::{load_network, Network};
use crate::regions::{shares_nrs, HalfspaceIndicator, Support};

/// Per-cell algorithm settings; seeds are bases mixed with the cell id.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSettings {
    pub beropt: BerOptConfig,
    pub rrt: RrtConfig,
    pub baseline_n: Option<usize>,
    pub baseline_seed: u64,
    pub feature_mode: FeatureMode,
}

impl CellSettings {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        CellSettings {
            beropt: cfg.beropt.clone(),
            rrt: cfg.rrt.clone(),
            baseline_n: cfg.baseline_n,
            baseline_seed: cfg.baseline_seed,
            feature_mode: cfg.feature_mode,
        }
    }

    pub fn beropt_for(&self, query_id: usize, layer: usize) -> BerOptConfig {
        BerOptConfig {
            seed: cell_seed(self.beropt.seed, query_id, layer, 1),
            ..self.beropt.clone()
        }
    }

    pub fn rrt_for(&self, query_id: usize, layer: usize) -> RrtConfig {
        RrtConfig {
            seed: cell_seed(self.rrt.seed, query_id, layer, 2),
            ..self.rrt.clone()
        }
    }

    /// Seeds of the L2 and L-infinity baseline draws.
    pub fn baseline_seeds_for(&self, query_id: usize, layer: usize) -> (u64, u64) {
        (
            cell_seed(self.baseline_seed, query_id, layer, 3),
            cell_seed(self.baseline_seed, query_id, layer, 4),
        )
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for one (query, layer) cell derived from a base seed.
pub fn cell_seed(base: u64, query_id: usize, layer: usize, stream: u64) -> u64 {
    splitmix64(
        splitmix64(base ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
            ^ ((query_id as u64) << 16 | layer as u64),
    )
}

#[derive(Debug, Clone)]
pub struct CellOutput {
    pub query_id: usize,
    pub layer: usize,
    pub query: Vec<f64>,
    pub beropt: BerOptResult,
    pub keep_set: Vec<usize>,
    pub dropped: Vec<usize>,
    pub indicator: HalfspaceIndicator,
    pub exploration: ExplorationResult,
    pub calibration: EpsCalibration,
    pub eps_l2: Vec<Vec<f64>>,
    pub eps_linf: Vec<Vec<f64>>,
    /// Reports in [`Method::ALL`] order.
    pub reports: Vec<MetricReport>,
    /// Samples violating relaxed NRS with the query on the keep-set, per method.
    pub nrs_violations: Vec<usize>,
}

impl CellOutput {
    pub fn samples(&self, method: Method) -> &[Vec<f64>] {
        match method {
            Method::Egbas => &self.exploration.accepted,
            Method::EpsL2 => &self.eps_l2,
            Method::EpsLinf => &self.eps_linf,
        }
    }

    pub fn report(&self, method: Method) -> &MetricReport {
        &self.reports[Method::ALL.iter().position(|m| *m == method).unwrap()]
    }

    pub fn violation_fraction(&self, method: Method) -> f64 {
        let k = Method::ALL.iter().position(|m| *m == method).unwrap();
        self.nrs_violations[k] as f64 / self.samples(method).len() as f64
    }

    pub fn points(&self) -> Vec<PointRow> {
        let mut rows = self.exploration.to_points();
        for (kind, pts) in [("eps_l2", &self.eps_l2), ("eps_linf", &self.eps_linf)] {
            rows.extend(pts.iter().map(|p| PointRow {
                kind: kind.into(),
                parent: None,
                coords: p.clone(),
            }));
        }
        rows
    }
}

/// Runs one (query, layer) cell end to end.
pub fn run_cell(
    gen: &Network,
    disc: Option<&Network>,
    query_id: usize,
    query: &[f64],
    layer: usize,
    settings: &CellSettings,
) -> Result<CellOutput> {
    let outcome = e_gbas(
        gen,
        query,
        layer,
        &settings.beropt_for(query_id, layer),
        &settings.rrt_for(query_id, layer),
    )?;
    let exploration = outcome.exploration;
    let calibration = calibrate(&exploration.accepted, &exploration.rejected)?;
    let n = settings.baseline_n.unwrap_or(exploration.accepted.len());
    let (seed_l2, seed_linf) = settings.baseline_seeds_for(query_id, layer);
    let eps_l2 = sample_l2_ball(query, calibration.eps_l2, n, seed_l2);
    let eps_linf = sample_linf_ball(query, calibration.eps_linf, n, seed_linf);

    let mut reports = Vec::with_capacity(3);
    let mut nrs_violations = Vec::with_capacity(3);
    for method in Method::ALL {
        let points = match method {
            Method::Egbas => exploration.accepted.clone(),
            Method::EpsL2 => eps_l2.clone(),
            Method::EpsLinf => eps_linf.clone(),
        };
        let mut violations = 0;
        for z in &points {
            if !shares_nrs(gen, query, z, layer, Support::Units(&outcome.keep_set))? {
                violations += 1;
            }
        }
        nrs_violations.push(violations);
        let set = SampleSet::new(method, query.to_vec(), layer, points)?;
        reports.push(evaluate(gen, disc, &set, settings.feature_mode)?);
    }

    Ok(CellOutput {
        query_id,
        layer,
        query: query.to_vec(),
        beropt: outcome.beropt,
        keep_set: outcome.keep_set,
        dropped: outcome.dropped,
        indicator: outcome.region.indicator().clone(),
        exploration,
        calibration,
        eps_l2,
        eps_linf,
        reports,
        nrs_violations,
    })
}

/// Contents of `indicator.json`; loads back as a [`HalfspaceIndicator`].
#[derive(Serialize)]
pub struct IndicatorFile<'a> {
    pub layer_index: usize,
    pub entries: &'a [i8],
    pub keep_set: &'a [usize],
    pub dropped_on_boundary: &'a [usize],
}

/// Pretty JSON with a trailing newline, as written to every output file.
pub fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

pub fn metric_rows(model_id: &str, cell: &CellOutput) -> Vec<MetricRow> {
    metric_rows_for(model_id, cell.query_id, cell.layer, &cell.reports)
}

pub fn metric_rows_for(
    model_id: &str,
    query_id: usize,
    layer: usize,
    reports: &[MetricReport],
) -> Vec<MetricRow> {
    reports
        .iter()
        .map(|r| MetricRow {
            model_id: model_id.to_string(),
            query_id,
            layer,
            report: r.clone(),
        })
        .collect()
}

fn write_cell(
    dir: &Path,
    gen: &Network,
    model_id: &str,
    disc_layers: usize,
    cell: &CellOutput,
) -> Result<()> {
    write_text(&dir.join("beropt.json"), &json(&cell.beropt.record()))?;
    write_text(&dir.join("loss_trace.csv"), &cell.beropt.loss_trace_csv())?;
    write_text(
        &dir.join("indicator.json"),
        &json(&IndicatorFile {
            layer_index: cell.indicator.layer_index,
            entries: &cell.indicator.entries,
            keep_set: &cell.keep_set,
            dropped_on_boundary: &cell.dropped,
        }),
    )?;
    write_text(&dir.join("calibration.json"), &json(&cell.calibration))?;
    write_text(
        &dir.join("points.csv"),
        &points_to_csv(&cell.points(), gen.latent_dim())?,
    )?;
    write_text(
        &dir.join("metrics.csv"),
        &metrics_to_csv(&metric_rows(model_id, cell), disc_layers)?,
    )?;

    if let Some([h, w]) = gen.output_shape() {
        let query_img = gen.generate(&cell.query)?;
        write_text(&dir.join("query.pgm"), &values_to_pgm(w, h, &query_img, 1.0))?;
        let stds = Method::ALL
            .iter()
            .map(|m| {
                let outs = cell
                    .samples(*m)
                    .iter()
                    .map(|z| gen.generate(z))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Ok(elementwise_std(&outs))
            })
            .collect::<Result<Vec<_>>>()?;
        let max = stds.iter().flatten().cloned().fold(0.0, f64::max);
        for (m, s) in Method::ALL.iter().zip(&stds) {
            write_text(&dir.join(format!("std_{m}.pgm")), &values_to_pgm(w, h, s, max))?;
        }
    }
    Ok(())
}

fn summary_by_method(cells: &[CellOutput], layers: &[usize], disc_layers: usize) -> String {
    let mut header = vec![
        "layer".to_string(),
        "method".into(),
        "cells".into(),
        "mean_sigma".into(),
        "mean_max_distortion".into(),
        "mean_nrs_violation".into(),
    ];
    header.extend((1..=disc_layers).map(|k| format!("mean_cos_l{k}")));
    let mut out = header.join(",");
    out.push('\n');
    for &layer in layers {
        let group: Vec<&CellOutput> = cells.iter().filter(|c| c.layer == layer).collect();
        let n = group.len() as f64;
        for method in Method::ALL {
            let mean = |f: &dyn Fn(&CellOutput) -> f64| group.iter().map(|c| f(c)).sum::<f64>() / n;
            let mut row = vec![
                layer.to_string(),
                method.to_string(),
                group.len().to_string(),
                mean(&|c| c.report(method).sigma).to_string(),
                mean(&|c| c.report(method).max_region_distortion).to_string(),
                mean(&|c| c.violation_fraction(method)).to_string(),
            ];
            for k in 0..disc_layers {
                let vals: Vec<f64> = group
                    .iter()
                    .filter_map(|c| c.report(method).cosine_by_layer[k].mean_cosine)
                    .collect();
                row.push(if vals.is_empty() {
                    String::new()
                } else {
                    (vals.iter().sum::<f64>() / vals.len() as f64).to_string()
                });
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
    }
    out
}

/// Result of [`run_experiment`].
#[derive(Debug)]
pub struct ExperimentOutput {
    pub model_id: String,
    pub cells: Vec<CellOutput>,
}

/// Loads the networks named by `cfg`, runs every cell and writes the output
/// tree. Cells run in parallel; files are written in a fixed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let gen = load_network(&cfg.generator_path)?;
    let disc = cfg
        .discriminator_path
        .as_ref()
        .map(load_network)
        .transpose()?;
    let queries = cfg.validate(&gen, disc.as_ref())?;
    let settings = CellSettings::from_config(cfg);
    let model_id = cfg.model_id();

    let jobs: Vec<(usize, usize)> = (0..queries.len())
        .flat_map(|q| cfg.target_layers.iter().map(move |&l| (q, l)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(q, l)| run_cell(&gen, disc.as_ref(), q, &queries[q], l, &settings))
        .collect::<Result<Vec<_>>>()?;

    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join("config.json"), &json(cfg))?;
    let disc_layers = disc.as_ref().map_or(0, |d| d.depth());
    for cell in &cells {
        let dir = out
            .join("cells")
            .join(format!("q{:02}_l{}", cell.query_id, cell.layer));
        write_cell(&dir, &gen, &model_id, disc_layers, cell)?;
    }
    let rows: Vec<MetricRow> = cells.iter().flat_map(|c| metric_rows(&model_id, c)).collect();
    write_text(&out.join("summary.csv"), &metrics_to_csv(&rows, disc_layers)?)?;
    write_text(
        &out.join("summary_by_method.csv"),
        &summary_by_method(&cells, &cfg.target_layers, disc_layers),
    )?;
    Ok(ExperimentOutput { model_id, cells })
}
