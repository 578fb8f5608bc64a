//! Sign-pattern maps of 2-D latent spaces, exported as CSV and PGM.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::explorer::ExplorationResult;
use crate::net::Network;
use crate::regions::sign_pattern;

/// `[x_min, x_max, y_min, y_max]`.
pub type Bounds = [f64; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct GridFigure {
    pub bounds: Bounds,
    pub resolution: usize,
    /// Row-major (`row` indexes the second latent coordinate) cell IDs;
    /// equal IDs mean equal sign patterns on the considered units.
    pub cell_ids: Vec<usize>,
    /// True where a 4-neighbour has a different cell ID.
    pub boundary: Vec<bool>,
    pub overlay: Option<ExplorationResult>,
}

impl GridFigure {
    pub fn cell_center(&self, row: usize, col: usize) -> [f64; 2] {
        let [x0, x1, y0, y1] = self.bounds;
        let n = self.resolution as f64;
        [
            x0 + (col as f64 + 0.5) * (x1 - x0) / n,
            y0 + (row as f64 + 0.5) * (y1 - y0) / n,
        ]
    }

    /// Cell containing `z`, if it lies inside the bounds.
    pub fn locate(&self, z: &[f64]) -> Option<(usize, usize)> {
        let [x0, x1, y0, y1] = self.bounds;
        let n = self.resolution as f64;
        let fx = (z[0] - x0) / (x1 - x0) * n;
        let fy = (z[1] - y0) / (y1 - y0) * n;
        if !(0.0..n).contains(&fx) || !(0.0..n).contains(&fy) {
            return None;
        }
        Some((fy as usize, fx as usize))
    }

    pub fn distinct_patterns(&self) -> usize {
        self.cell_ids.iter().max().map_or(0, |m| m + 1)
    }

    pub fn boundary_cells(&self) -> usize {
        self.boundary.iter().filter(|b| **b).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,z_0,z_1,cell_id,boundary\n");
        for row in 0..self.resolution {
            for col in 0..self.resolution {
                let k = row * self.resolution + col;
                let [x, y] = self.cell_center(row, col);
                out.push_str(&format!(
                    "{row},{col},{x},{y},{},{}\n",
                    self.cell_ids[k],
                    u8::from(self.boundary[k])
                ));
            }
        }
        out
    }

    /// Grayscale raster: regions in mid-gray shades, boundaries black,
    /// rejected samples dark gray, accepted samples white. The top image
    /// row is the largest second coordinate.
    pub fn to_pgm(&self) -> String {
        let n = self.resolution;
        let mut px: Vec<u8> = self
            .cell_ids
            .iter()
            .zip(&self.boundary)
            .map(|(&id, &b)| if b { 0 } else { 96 + ((id * 37) % 128) as u8 })
            .collect();
        if let Some(ov) = &self.overlay {
            for (points, shade) in [(&ov.rejected, 40u8), (&ov.accepted, 255u8)] {
                for p in points {
                    if let Some((r, c)) = self.locate(p) {
                        px[r * n + c] = shade;
                    }
                }
            }
        }
        let rows: Vec<Vec<u8>> = (0..n).rev().map(|r| px[r * n..(r + 1) * n].to_vec()).collect();
        pgm(n, n, &rows.concat())
    }
}

/// Plain (ASCII) PGM with maxval 255.
pub fn pgm(width: usize, height: usize, pixels: &[u8]) -> String {
    let mut out = format!("P2\n{width} {height}\n255\n");
    for row in pixels.chunks(width) {
        let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Maps values linearly from `[0, max]` to `0..=255` (clamped).
pub fn values_to_pgm(width: usize, height: usize, values: &[f64], max: f64) -> String {
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let px: Vec<u8> = values
        .iter()
        .map(|v| (v * scale).round().clamp(0.0, 255.0) as u8)
        .collect();
    pgm(width, height, &px)
}

/// Sign-pattern census of layer `l` over a `resolution x resolution` grid.
///
/// With `units`, only those units' signs distinguish cells.
pub fn export_grid_figure(
    net: &Network,
    l: usize,
    bounds: Bounds,
    resolution: usize,
    units: Option<&[usize]>,
    overlay: Option<&ExplorationResult>,
) -> Result<GridFigure> {
    if net.latent_dim() != 2 {
        return Err(Error::Dimension {
            what: "latent space for grid figures",
            expected: 2,
            found: net.latent_dim(),
        });
    }
    if resolution == 0 {
        return Err(Error::config("resolution", "must be >= 1"));
    }
    if !(bounds[0] < bounds[1] && bounds[2] < bounds[3]) {
        return Err(Error::config("bounds", "need x_min < x_max and y_min < y_max"));
    }
    net.check_layer(l)?;
    if let Some(us) = units {
        let width = net.layer_dim(l);
        if let Some(&bad) = us.iter().find(|&&u| u >= width) {
            return Err(Error::UnitIndex { index: bad, width });
        }
    }

    let mut fig = GridFigure {
        bounds,
        resolution,
        cell_ids: Vec::with_capacity(resolution * resolution),
        boundary: vec![false; resolution * resolution],
        overlay: overlay.cloned(),
    };
    let mut ids: HashMap<Vec<i8>, usize> = HashMap::new();
    for row in 0..resolution {
        for col in 0..resolution {
            let z = fig.cell_center(row, col);
            let signs = sign_pattern(net, &z, l)?;
            let key = match units {
                Some(us) => us.iter().map(|&u| signs[u]).collect(),
                None => signs,
            };
            let next = ids.len();
            fig.cell_ids.push(*ids.entry(key).or_insert(next));
        }
    }
    let n = resolution;
    for row in 0..n {
        for col in 0..n {
            let id = fig.cell_ids[row * n + col];
            let differs = |r: usize, c: usize| fig.cell_ids[r * n + c] != id;
            fig.boundary[row * n + col] = (row > 0 && differs(row - 1, col))
                || (row + 1 < n && differs(row + 1, col))
                || (col > 0 && differs(row, col - 1))
                || (col + 1 < n && differs(row, col + 1));
        }
    }
    Ok(fig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{ActivationKind, Layer};

    #[test]
    fn identity_net_has_axis_boundaries() {
        let net = Network::new(
            2,
            vec![Layer::new(2, 2, ActivationKind::Identity, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 2])],
        )
        .unwrap();
        let fig = export_grid_figure(&net, 1, [-1.0, 1.0, -1.0, 1.0], 10, None, None).unwrap();
        assert_eq!(fig.distinct_patterns(), 4);
        // Boundary cells are exactly the two rows and two columns touching an axis.
        for row in 0..10 {
            for col in 0..10 {
                let expect = row == 4 || row == 5 || col == 4 || col == 5;
                assert_eq!(fig.boundary[row * 10 + col], expect, "({row},{col})");
            }
        }
        assert!(fig.to_pgm().starts_with("P2\n10 10\n255\n"));
        assert_eq!(fig.to_csv().lines().count(), 101);
    }

    #[test]
    fn rejects_non_2d_latent() {
        let net = Network::new(
            3,
            vec![Layer::new(3, 1, ActivationKind::Relu, vec![1.0; 3], vec![0.0])],
        )
        .unwrap();
        let err = export_grid_figure(&net, 1, [-1.0, 1.0, -1.0, 1.0], 4, None, None).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 2, found: 3, .. }));
    }

    #[test]
    fn locate_matches_centers() {
        let net = Network::new(
            2,
            vec![Layer::new(2, 1, ActivationKind::Relu, vec![1.0, 1.0], vec![0.0])],
        )
        .unwrap();
        let fig = export_grid_figure(&net, 1, [-2.0, 2.0, 0.0, 1.0], 8, None, None).unwrap();
        for row in 0..8 {
            for col in 0..8 {
                assert_eq!(fig.locate(&fig.cell_center(row, col)), Some((row, col)));
            }
        }
        assert_eq!(fig.locate(&[5.0, 0.5]), None);
    }
}
