//! Gradient audit fixture: a small concurrent problem with every term
//! active, checked against central finite differences before a run.

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stopt_core::elasticity::{DistortionMode, DistortionSpec, MaterialModel};
use stopt_core::model::{Model, ModelSpec, Terms};
use stopt_core::sensitivities::{finite_difference_audit, AuditRow};
use stopt_core::BuildPlate;

pub const AUDIT_TOLERANCE: f64 = 1e-3;

fn fixture() -> Result<Model> {
    let grid = stopt_core::build_grid(8, 6, 1.0, BuildPlate::Bottom)?;
    let supports: Vec<usize> = (0..=6)
        .flat_map(|iy| {
            let n = grid.node_index(0, iy);
            [2 * n, 2 * n + 1]
        })
        .collect();
    let tip = grid.node_index(8, 3);
    let markers: Vec<usize> = (0..=8).step_by(2).map(|ix| grid.node_index(ix, 6)).collect();
    let distortion = DistortionSpec::new(markers, DistortionMode::FlatnessY)?;
    Ok(Model::new(ModelSpec {
        n_layers: 3,
        v0: 0.5 * 48.0,
        filter_radius: 1.6,
        material: MaterialModel::default(),
        kappa_min: 1e-4,
        drain_beta: 0.1,
        char_length: None,
        mask: None,
        fixed_layout: false,
        supports,
        loads: vec![(2 * tip + 1, -1.0)],
        gravity: 1.0,
        eps0: 0.01,
        distortion: Some(distortion),
        terms: Terms {
            compliance: true,
            gravity_alpha: 0.7,
            distortion_weight: 0.5,
            distortion_bound: Some(1.0),
            sequence_deviation: true,
            layer_constraints: true,
        },
        grid,
    })?)
}

pub fn run_audit(seed: u64) -> Result<Vec<AuditRow>> {
    let model = fixture()?;
    let ne = model.grid().element_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi: Vec<f64> = (0..ne).map(|_| rng.gen_range(0.25..0.75)).collect();
    let mu: Vec<f64> = (0..ne).map(|_| rng.gen_range(0.25..0.75)).collect();
    Ok(finite_difference_audit(
        &model, &phi, &mu, 8.0, 1e-4, 32, seed,
    )?)
}

pub fn print_audit(rows: &[AuditRow]) -> bool {
    println!(
        "{:<12} {:<10} {:>14} {:>14} {:>10}  {}",
        "function", "variable", "analytic", "finite diff", "rel err", "status"
    );
    let mut all_pass = true;
    for row in rows {
        let ok = row.passes(AUDIT_TOLERANCE);
        all_pass &= ok;
        println!(
            "{:<12} {:<10} {:>14.6e} {:>14.6e} {:>10.3e}  {}",
            row.function,
            row.variable,
            row.analytic,
            row.finite_difference,
            row.relative_error,
            if ok { "pass" } else { "FAIL" }
        );
    }
    all_pass
}
