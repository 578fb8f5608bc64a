//! Boundary-constrained random-tree exploration and the end-to-end sampler.
//!
//! The tree grows from the query: each iteration draws a target uniformly in
//! the box `z0 +/- I`, steps from the nearest tree node towards it, and keeps
//! the new point only if it lies in the generative region and is farther
//! than the step size from every existing node. Candidates that leave the
//! region are kept aside as rejected samples; they later calibrate the
//! epsilon-ball baselines.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::berdrop::{beropt, BerOptConfig, BerOptResult};
use crate::error::{Error, Result};
use crate::net::Network;
use crate::regions::{indicator_from_query, HalfspaceIndicator, RegionSpec};

/// Amount by which each extension overshoots the step size.
///
/// A new node sits at distance `step_delta` from the node it grew from, so a
/// strict `> step_delta` spacing test against the whole tree would otherwise
/// hinge on rounding noise. With the overshoot, the parent always clears the
/// test and it only rejects candidates that crowd some other node.
pub const STEP_OVERSHOOT: f64 = 1e-10;

/// Half-width of the uniform sampling box, shared or per latent dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Interval {
    Uniform(f64),
    PerDim(Vec<f64>),
}

impl Interval {
    pub fn half_width(&self, dim: usize) -> f64 {
        match self {
            Interval::Uniform(v) => *v,
            Interval::PerDim(v) => v[dim],
        }
    }

    pub fn max_norm(&self) -> f64 {
        match self {
            Interval::Uniform(v) => *v,
            Interval::PerDim(v) => v.iter().cloned().fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RrtConfig {
    pub interval: Interval,
    pub max_iters: usize,
    pub step_delta: f64,
    pub seed: u64,
}

impl Default for RrtConfig {
    fn default() -> Self {
        let interval = Interval::Uniform(3.0);
        RrtConfig {
            step_delta: 0.05 * interval.max_norm(),
            interval,
            max_iters: 20_000,
            seed: 0,
        }
    }
}

impl RrtConfig {
    pub fn validate(&self, latent_dim: usize) -> Result<()> {
        if !(self.step_delta.is_finite() && self.step_delta > 0.0) {
            return Err(Error::config("rrt.step_delta", "must be finite and > 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("rrt.max_iters", "must be >= 1"));
        }
        let ok = |v: &f64| v.is_finite() && *v > 0.0;
        match &self.interval {
            Interval::Uniform(v) if !ok(v) => {
                Err(Error::config("rrt.interval", "must be finite and > 0"))
            }
            Interval::PerDim(v) if v.len() != latent_dim => Err(Error::config(
                "rrt.interval",
                format!("has {} entries, latent dimension is {latent_dim}", v.len()),
            )),
            Interval::PerDim(v) if !v.iter().all(ok) => {
                Err(Error::config("rrt.interval", "entries must be finite and > 0"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExplorationResult {
    /// Tree nodes; index 0 is the query.
    pub accepted: Vec<Vec<f64>>,
    /// Candidate steps that failed the membership test.
    pub rejected: Vec<Vec<f64>>,
    /// Parent index per accepted node (`None` for the root).
    pub parents: Vec<Option<usize>>,
}

impl ExplorationResult {
    /// Point dump as `kind,parent,coord_0..` rows; rejected rows have an
    /// empty parent.
    pub fn to_points(&self) -> Vec<crate::io::PointRow> {
        use crate::io::PointRow;
        let mut rows: Vec<PointRow> = self
            .accepted
            .iter()
            .zip(&self.parents)
            .map(|(p, parent)| PointRow {
                kind: "accepted".into(),
                parent: *parent,
                coords: p.clone(),
            })
            .collect();
        rows.extend(self.rejected.iter().map(|p| PointRow {
            kind: "rejected".into(),
            parent: None,
            coords: p.clone(),
        }));
        rows
    }

    /// Inverse of [`Self::to_points`]; rows of other kinds are ignored.
    pub fn from_points(rows: &[crate::io::PointRow]) -> Self {
        let mut out = ExplorationResult::default();
        for r in rows {
            match r.kind.as_str() {
                "accepted" => {
                    out.accepted.push(r.coords.clone());
                    out.parents.push(r.parent);
                }
                "rejected" => out.rejected.push(r.coords.clone()),
                _ => {}
            }
        }
        out
    }
}

/// Index and Euclidean distance of the point closest to `q`; ties go to the
/// lowest index.
pub fn nearest(points: &[Vec<f64>], q: &[f64]) -> Result<(usize, f64)> {
    let mut best = None::<(usize, f64)>;
    for (i, p) in points.iter().enumerate() {
        let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
        match best {
            Some((_, b)) if d2 >= b => {}
            _ => best = Some((i, d2)),
        }
    }
    best.map(|(i, d2)| (i, d2.sqrt()))
        .ok_or(Error::Empty("point set"))
}

/// Grows a random tree from `z0` confined to `region`.
pub fn gb_rrt(z0: &[f64], region: &RegionSpec<'_>, cfg: &RrtConfig) -> Result<ExplorationResult> {
    let dim = region.network().latent_dim();
    cfg.validate(dim)?;
    if z0.len() != dim {
        return Err(Error::Dimension {
            what: "query",
            expected: dim,
            found: z0.len(),
        });
    }
    if let Some(unit) = region.violation(z0)? {
        return Err(Error::QueryOutsideRegion { unit });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let step = cfg.step_delta + STEP_OVERSHOOT;
    let mut out = ExplorationResult {
        accepted: vec![z0.to_vec()],
        rejected: Vec::new(),
        parents: vec![None],
    };
    let mut target = vec![0.0; dim];

    for _ in 0..cfg.max_iters {
        for (d, t) in target.iter_mut().enumerate() {
            let half = cfg.interval.half_width(d);
            *t = z0[d] + rng.random_range(-half..half);
        }
        let (qi, dist) = nearest(&out.accepted, &target)?;
        if dist == 0.0 {
            continue;
        }
        let q = &out.accepted[qi];
        let candidate: Vec<f64> = q
            .iter()
            .zip(&target)
            .map(|(a, b)| a + (b - a) / dist * step)
            .collect();

        if !region.contains(&candidate)? {
            out.rejected.push(candidate);
            continue;
        }
        let (_, spacing) = nearest(&out.accepted, &candidate)?;
        if spacing > cfg.step_delta {
            out.accepted.push(candidate);
            out.parents.push(Some(qi));
        }
    }
    Ok(out)
}

/// Everything produced by one end-to-end sampling run.
#[derive(Debug, Clone)]
pub struct EgbasOutcome<'a> {
    pub beropt: BerOptResult,
    /// Kept units after dropping any that sit exactly on the query's boundary.
    pub keep_set: Vec<usize>,
    /// Units removed from the BerOpt keep-set because the query's
    /// pre-activation there is exactly zero.
    pub dropped: Vec<usize>,
    pub region: RegionSpec<'a>,
    pub exploration: ExplorationResult,
}

/// Indicator for a BerOpt keep-set. Units whose pre-activation at the query
/// is exactly zero are dropped (with a warning) since the query fixes no side
/// for them. Returns `(indicator, kept, dropped)`.
pub fn keep_set_indicator(
    net: &Network,
    z0: &[f64],
    l: usize,
    keep_set: &[usize],
) -> Result<(HalfspaceIndicator, Vec<usize>, Vec<usize>)> {
    let pre = net.pre_activation(z0, l)?;
    let width = pre.len();
    if let Some(&bad) = keep_set.iter().find(|&&k| k >= width) {
        return Err(Error::UnitIndex { index: bad, width });
    }
    let (kept, dropped): (Vec<usize>, Vec<usize>) =
        keep_set.iter().partition(|&&k| pre[k] != 0.0);
    if !dropped.is_empty() {
        warn!(
            "query lies exactly on the boundary of kept unit(s) {dropped:?} at layer {l}; dropping them from the keep-set"
        );
    }
    let indicator = indicator_from_query(net, z0, l, &kept)?;
    Ok((indicator, kept, dropped))
}

/// BerOpt, then thresholded indicator, then boundary-constrained tree growth.
pub fn e_gbas<'a>(
    net: &'a Network,
    z0: &[f64],
    l: usize,
    beropt_cfg: &BerOptConfig,
    rrt_cfg: &RrtConfig,
) -> Result<EgbasOutcome<'a>> {
    rrt_cfg.validate(net.latent_dim())?;
    let ber = beropt(net, z0, l, beropt_cfg)?;
    let (indicator, keep_set, dropped) = keep_set_indicator(net, z0, l, &ber.keep_set)?;
    let region = RegionSpec::new(net, indicator)?;
    let exploration = gb_rrt(z0, &region, rrt_cfg)?;
    Ok(EgbasOutcome {
        beropt: ber,
        keep_set,
        dropped,
        region,
        exploration,
    })
}
