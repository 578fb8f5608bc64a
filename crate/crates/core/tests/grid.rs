mod common;

use common::*;
use gbas_core::explorer::{gb_rrt, Interval, RrtConfig};
use gbas_core::grid::export_grid_figure;
use gbas_core::regions::{indicator_from_query, sign_pattern, RegionSpec};
use gbas_core::toy::handcrafted_2d;
use gbas_core::ActivationKind;

const BOUNDS: [f64; 4] = [-3.0, 3.0, -3.0, 3.0];

#[test]
fn handcrafted_model_has_several_regions() {
    let net = handcrafted_2d().unwrap();
    for l in 1..=net.depth().min(2) {
        let fig = export_grid_figure(&net, l, BOUNDS, 120, None, None).unwrap();
        assert!(fig.distinct_patterns() >= 3, "layer {l}: {}", fig.distinct_patterns());
        assert!(fig.boundary_cells() > 0);
    }
}

#[test]
fn equal_ids_mean_equal_patterns() {
    let mut r = rng(51);
    let net = random_net(&mut r, &[2, 6, 5], &[ActivationKind::Relu]);
    let n = 40;
    let fig = export_grid_figure(&net, 2, BOUNDS, n, None, None).unwrap();
    let mut seen = std::collections::HashMap::new();
    for row in 0..n {
        for col in 0..n {
            let p = sign_pattern(&net, &fig.cell_center(row, col), 2).unwrap();
            let id = fig.cell_ids[row * n + col];
            assert_eq!(seen.entry(id).or_insert_with(|| p.clone()), &p);
        }
    }
    assert_eq!(seen.len(), fig.distinct_patterns());
}

#[test]
fn unit_subset_merges_regions() {
    let mut r = rng(52);
    let net = random_net(&mut r, &[2, 8], &[ActivationKind::Tanh]);
    let all = export_grid_figure(&net, 1, BOUNDS, 60, None, None).unwrap();
    let two = export_grid_figure(&net, 1, BOUNDS, 60, Some(&[1, 4]), None).unwrap();
    let none = export_grid_figure(&net, 1, BOUNDS, 60, Some(&[]), None).unwrap();
    assert!(two.distinct_patterns() <= 4);
    assert!(two.distinct_patterns() <= all.distinct_patterns());
    assert_eq!(none.distinct_patterns(), 1);
    assert_eq!(none.boundary_cells(), 0);
    assert!(export_grid_figure(&net, 1, BOUNDS, 60, Some(&[8]), None).is_err());
}

#[test]
fn overlay_samples_sit_in_the_query_cell() {
    let net = handcrafted_2d().unwrap();
    let z0 = [0.4, -0.2];
    let keep: Vec<usize> = (0..net.layer_dim(1)).collect();
    let ind = indicator_from_query(&net, &z0, 1, &keep).unwrap();
    let region = RegionSpec::new(&net, ind).unwrap();
    let cfg = RrtConfig {
        interval: Interval::Uniform(3.0),
        max_iters: 3000,
        step_delta: 0.15,
        seed: 2,
    };
    let tree = gb_rrt(&z0, &region, &cfg).unwrap();
    let n = 200;
    let fig = export_grid_figure(&net, 1, BOUNDS, n, None, Some(&tree)).unwrap();
    let (qr, qc) = fig.locate(&z0).unwrap();
    let query_id = fig.cell_ids[qr * n + qc];
    // Interior accepted samples share the query's cell; boundary cells can
    // hold either side since the grid samples the cell centre.
    let mut checked = 0;
    for z in &tree.accepted {
        if let Some((r, c)) = fig.locate(z) {
            if !fig.boundary[r * n + c] {
                assert_eq!(fig.cell_ids[r * n + c], query_id, "{z:?}");
                checked += 1;
            }
        }
    }
    assert!(checked > 10);
    for z in &tree.rejected {
        if let Some((r, c)) = fig.locate(z) {
            if !fig.boundary[r * n + c] {
                assert_ne!(fig.cell_ids[r * n + c], query_id, "{z:?}");
            }
        }
    }
}

#[test]
fn csv_and_pgm_layout() {
    let net = handcrafted_2d().unwrap();
    let fig = export_grid_figure(&net, 1, BOUNDS, 5, None, None).unwrap();
    let csv = fig.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("row,col,z_0,z_1,cell_id,boundary"));
    assert_eq!(lines.count(), 25);
    let pgm = fig.to_pgm();
    assert!(pgm.starts_with("P2\n5 5\n255\n"));
    assert_eq!(pgm.lines().count(), 3 + 5);
}
