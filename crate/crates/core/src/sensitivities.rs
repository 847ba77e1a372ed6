//! Adjoint gradient assembly for every scalar the optimizer sees.
//!
//! Each response decomposes into a direct density dependence and a set of
//! per-stage dependencies through the intermediate densities. The stage
//! dependencies split again: one branch multiplies the stage projection and
//! lands on the density, the other differentiates the projection and lands
//! on the pseudo-time field. The time branch is closed by a single heat
//! adjoint solve per scalar, whose multiplier simultaneously yields the
//! conductor-field gradient and the heat contribution to the density
//! gradient. Finally the density gradient is pulled back through the
//! projection derivative and the filter transpose onto the raw design
//! field.

use crate::elasticity;
use crate::error::{Error, Result};
use crate::model::{ForwardState, Model, GRAVITY_DIRECTION};
use crate::projection::{heaviside_derivative, heaviside_up_derivative};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Total gradient of one scalar with respect to the raw design fields.
/// `phi` is empty for fixed-layout problems.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
}

/// Gradient of one scalar with respect to the physical density and the
/// pseudo-time field, before the heat adjoint and the filter chain close
/// the loop. The `time` part is also the complete gradient for
/// formulations where the time field itself is the design variable.
#[derive(Debug, Clone)]
pub struct ChainSeed {
    pub rho: Vec<f64>,
    pub time: Vec<f64>,
}

fn add_scaled(dst: &mut Vec<f64>, src: &[f64], scale: f64, len: usize) {
    if dst.is_empty() {
        dst.resize(len, 0.0);
    }
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

/// Collapse per-stage sensitivities `rows[j] = dF/d(stage density j)` and a
/// direct part `dF/drho` into density and time gradients.
fn reduce(model: &Model, state: &ForwardState, rows: &[Vec<f64>], direct: &[f64]) -> ChainSeed {
    let ne = model.grid().element_count();
    let mut rho = vec![0.0; ne];
    if !direct.is_empty() {
        rho.copy_from_slice(direct);
    }
    let mut time = vec![0.0; ne];
    for (j, row) in rows.iter().enumerate() {
        if row.is_empty() {
            continue;
        }
        let eta = model.eta(j + 1);
        for e in 0..ne {
            let a = row[e];
            if a == 0.0 {
                continue;
            }
            rho[e] += a * state.stage_proj[j][e];
            time[e] += a * state.rho[e] * heaviside_derivative(state.time[e], state.beta, eta);
        }
    }
    ChainSeed { rho, time }
}

fn compliance_direct(model: &Model, state: &ForwardState) -> Result<Vec<f64>> {
    let sys = model
        .final_elastic_system()
        .ok_or_else(|| Error::ordering("compliance gradient without a final-structure system"))?;
    let u = state
        .final_u
        .as_ref()
        .ok_or_else(|| Error::ordering("compliance gradient before the final solve"))?;
    let energies = sys.element_products(u, u);
    let mat = &model.spec().material;
    Ok(state
        .rho
        .iter()
        .zip(&energies)
        .map(|(&r, &w)| -mat.dyoungs(r) * w)
        .collect())
}

/// Per-stage self-weight compliance sensitivities, one row per layer.
/// Includes the load-derivative term of the design-dependent gravity load.
fn gravity_rows(model: &Model, state: &ForwardState) -> Result<Vec<Vec<f64>>> {
    let sys = model
        .stage_elastic_system()
        .ok_or_else(|| Error::ordering("gravity gradient without staged systems"))?;
    if state.sw_u.len() != model.n_layers() {
        return Err(Error::ordering("gravity gradient before the stage solves"));
    }
    let grid = model.grid();
    let mat = model.spec().material;
    let g = model.spec().gravity;
    let ne = grid.element_count();
    let rows: Vec<Vec<f64>> = (0..model.n_layers())
        .into_par_iter()
        .map(|k| {
            let u = &state.sw_u[k];
            let energies = sys.element_products(u, u);
            let swdot = elasticity::self_weight_dot(grid, u, g, GRAVITY_DIRECTION);
            (0..ne)
                .map(|e| 2.0 * swdot[e] - mat.dyoungs(state.stage_rho[k][e]) * energies[e])
                .collect()
        })
        .collect();
    Ok(rows)
}

/// Per-stage sensitivities of the accumulated-distortion measure. One
/// adjoint solve per stage against the stored stiffness factorizations;
/// each stage row couples to the next stage through the eigenstrain load's
/// dependence on the previous intermediate density.
fn distortion_rows(model: &Model, state: &ForwardState) -> Result<Vec<Vec<f64>>> {
    let sys = model
        .stage_elastic_system()
        .ok_or_else(|| Error::ordering("distortion gradient without staged systems"))?;
    let spec = model
        .spec()
        .distortion
        .as_ref()
        .ok_or_else(|| Error::config("distortion gradient without marker specification"))?;
    let u_acc = state
        .u_acc
        .as_ref()
        .ok_or_else(|| Error::ordering("distortion gradient before the eigenstrain solves"))?;
    let grid = model.grid();
    let mat = model.spec().material;
    let n = model.n_layers();
    let ne = grid.element_count();
    let d = spec.gradient(u_acc, 2 * grid.node_count());

    let gammas: Vec<Vec<f64>> = state
        .eig_factors
        .par_iter()
        .map(|factor| {
            let mut gamma = sys.solve(factor, &d);
            for v in &mut gamma {
                *v = -*v;
            }
            gamma
        })
        .collect();
    let nu = mat.nu;
    let eps0 = model.spec().eps0;
    let gdots: Vec<Vec<f64>> = gammas
        .par_iter()
        .map(|gamma| elasticity::eigenstrain_dot(grid, nu, eps0, gamma))
        .collect();

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let energies = sys.element_products(&gammas[k], &state.eig_u[k]);
            let rk = &state.stage_rho[k];
            (0..ne)
                .map(|e| {
                    let prev = if k == 0 { 0.0 } else { state.stage_rho[k - 1][e] };
                    let w = rk[e] - prev;
                    let mut a = mat.dyoungs(rk[e]) * energies[e]
                        - (mat.dyoungs(rk[e]) * w + mat.youngs(rk[e])) * gdots[k][e];
                    if k + 1 < n {
                        a += mat.youngs(state.stage_rho[k + 1][e]) * gdots[k + 1][e];
                    }
                    a
                })
                .collect()
        })
        .collect();
    Ok(rows)
}

/// Seed of the active scenario objective: whichever of compliance,
/// weighted stage self-weight compliances, weighted distortion, and the
/// squared sequence deviations the model's terms switch on.
pub fn objective_seed(model: &Model, state: &ForwardState) -> Result<ChainSeed> {
    let terms = &model.spec().terms;
    let ne = model.grid().element_count();
    let n = model.n_layers();
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut direct: Vec<f64> = Vec::new();

    if terms.compliance {
        let b = compliance_direct(model, state)?;
        add_scaled(&mut direct, &b, 1.0, ne);
    }
    if terms.gravity_alpha != 0.0 {
        for (row, src) in rows.iter_mut().zip(gravity_rows(model, state)?) {
            add_scaled(row, &src, terms.gravity_alpha, ne);
        }
    }
    if terms.distortion_weight != 0.0 {
        for (row, src) in rows.iter_mut().zip(distortion_rows(model, state)?) {
            add_scaled(row, &src, terms.distortion_weight, ne);
        }
    }
    if terms.sequence_deviation {
        let v0 = model.spec().v0;
        let h2 = model.grid().h() * model.grid().h();
        for (j, row) in rows.iter_mut().enumerate() {
            let coeff = 2.0 * state.gj[j] / v0 * h2 / v0;
            add_scaled(row, &vec![coeff; ne], 1.0, ne);
        }
    }
    Ok(reduce(model, state, &rows, &direct))
}

/// Seed of the total-volume constraint g0.
pub fn total_volume_seed(model: &Model) -> ChainSeed {
    let ne = model.grid().element_count();
    let h2 = model.grid().h() * model.grid().h();
    ChainSeed {
        rho: vec![h2; ne],
        time: vec![0.0; ne],
    }
}

/// Seeds of every per-layer volume constraint g_1..g_N, in order.
pub fn stage_volume_seeds(model: &Model, state: &ForwardState) -> Vec<ChainSeed> {
    let ne = model.grid().element_count();
    let n = model.n_layers();
    let h2 = model.grid().h() * model.grid().h();
    (0..n)
        .map(|j| {
            let mut rows: Vec<Vec<f64>> = vec![Vec::new(); n];
            rows[j] = vec![h2; ne];
            reduce(model, state, &rows, &[])
        })
        .collect()
}

/// Seed of the bare distortion measure, for use as a constraint.
pub fn distortion_seed(model: &Model, state: &ForwardState) -> Result<ChainSeed> {
    let rows = distortion_rows(model, state)?;
    Ok(reduce(model, state, &rows, &[]))
}

/// Close each seed's time branch with a heat adjoint and pull the density
/// branch back through projection and filter. One adjoint solve per seed
/// with a nonzero time part; its multiplier serves both the conductor
/// gradient and the heat part of the layout gradient.
pub fn to_design(
    model: &Model,
    state: &ForwardState,
    seeds: &[ChainSeed],
) -> Result<Vec<GradientBundle>> {
    let heat_sol = state
        .heat
        .as_ref()
        .ok_or_else(|| Error::ordering("design gradients require a heat-coupled state"))?;
    let ne = model.grid().element_count();
    let needs_adjoint: Vec<bool> = seeds
        .iter()
        .map(|s| s.time.iter().any(|&v| v != 0.0))
        .collect();
    let dfdt_list: Vec<Vec<f64>> = seeds
        .iter()
        .zip(&needs_adjoint)
        .filter(|(_, &need)| need)
        .map(|(s, _)| s.time.clone())
        .collect();
    let lambdas = model.heat_system().adjoint_many(heat_sol, &dfdt_list);

    let coeff = 1.0 - model.heat_system().kappa_min();
    let mut bundles = Vec::with_capacity(seeds.len());
    let mut li = 0;
    for (seed, &need) in seeds.iter().zip(&needs_adjoint) {
        let mut drho = seed.rho.clone();
        let mut dmu = vec![0.0; ne];
        if need {
            let s = model
                .heat_system()
                .design_products(&lambdas[li], &heat_sol.temperature);
            li += 1;
            for e in 0..ne {
                dmu[e] = coeff * state.rho[e] * s[e];
                drho[e] += coeff * state.mu[e] * s[e];
            }
        }
        let phi = if let Some(ft) = &state.phi_tilde {
            let inner: Vec<f64> = drho
                .iter()
                .zip(ft)
                .map(|(&d, &f)| d * heaviside_up_derivative(f, state.beta, 0.5))
                .collect();
            model.filter().apply_transpose(&inner)
        } else {
            Vec::new()
        };
        bundles.push(GradientBundle { phi, mu: dmu });
    }
    Ok(bundles)
}

/// Central difference of a scalar-valued function at `x0`.
pub fn central_difference<F>(mut f: F, x0: f64, step: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    Ok((f(x0 + step)? - f(x0 - step)?) / (2.0 * step))
}

#[derive(Debug, Clone)]
pub struct AuditRow {
    pub function: String,
    pub variable: String,
    pub analytic: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

impl AuditRow {
    pub fn passes(&self, tol: f64) -> bool {
        self.relative_error < tol
    }
}

/// Verify every optimizer-facing gradient against central differences on a
/// random sample of design variables. Entries where both values fall below
/// 1e-12 in combined magnitude count as exact.
pub fn finite_difference_audit(
    model: &Model,
    phi: &[f64],
    mu: &[f64],
    beta: f64,
    step: f64,
    samples: usize,
    rng_seed: u64,
) -> Result<Vec<AuditRow>> {
    let state = model.forward(phi, mu, beta)?;
    let fixed = model.spec().fixed_layout;

    type Extract = Box<dyn Fn(&ForwardState) -> f64>;
    let mut targets: Vec<(String, ChainSeed, Extract)> = Vec::new();
    targets.push((
        "objective".into(),
        objective_seed(model, &state)?,
        Box::new(|s| s.objective),
    ));
    if !fixed {
        targets.push((
            "g0".into(),
            total_volume_seed(model),
            Box::new(|s| s.g0),
        ));
    }
    for (j, seed) in stage_volume_seeds(model, &state).into_iter().enumerate() {
        targets.push((
            format!("g{}", j + 1),
            seed,
            Box::new(move |s| s.gj[j]),
        ));
    }
    if model.spec().terms.distortion_bound.is_some() {
        targets.push((
            "distortion".into(),
            distortion_seed(model, &state)?,
            Box::new(|s| s.distortion.unwrap_or(f64::NAN)),
        ));
    }

    let seeds: Vec<ChainSeed> = targets.iter().map(|(_, s, _)| s.clone()).collect();
    let bundles = to_design(model, &state, &seeds)?;

    let ne = model.grid().element_count();
    let nvar = if fixed { ne } else { 2 * ne };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let picks = rand::seq::index::sample(&mut rng, nvar, samples.min(nvar)).into_vec();

    let mut rows = Vec::new();
    for ((name, _, extract), bundle) in targets.iter().zip(&bundles) {
        for &v in &picks {
            let (analytic, label, is_phi, idx) = if !fixed && v < ne {
                (bundle.phi[v], format!("phi[{v}]"), true, v)
            } else {
                let idx = if fixed { v } else { v - ne };
                (bundle.mu[idx], format!("mu[{idx}]"), false, idx)
            };
            let fd = central_difference(
                |x| {
                    let mut p = phi.to_vec();
                    let mut m = mu.to_vec();
                    if is_phi {
                        p[idx] = x;
                    } else {
                        m[idx] = x;
                    }
                    Ok(extract(&model.forward(&p, &m, beta)?))
                },
                if is_phi { phi[idx] } else { mu[idx] },
                step,
            )?;
            let scale = analytic.abs() + fd.abs();
            let relative_error = if scale < 1e-12 {
                0.0
            } else {
                (analytic - fd).abs() / analytic.abs().max(fd.abs())
            };
            rows.push(AuditRow {
                function: name.clone(),
                variable: label,
                analytic,
                finite_difference: fd,
                relative_error,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod sensitivity_tests {
    use super::*;
    use crate::elasticity::{DistortionMode, DistortionSpec, MaterialModel};
    use crate::grid::{build_grid, BuildPlate};
    use crate::model::{ModelSpec, Terms};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn audit_fixture(terms: Terms, with_markers: bool) -> Model {
        let grid = build_grid(8, 6, 1.0, BuildPlate::Bottom).unwrap();
        let supports: Vec<usize> = (0..=6)
            .flat_map(|iy| {
                let n = grid.node_index(0, iy);
                [2 * n, 2 * n + 1]
            })
            .collect();
        let tip = grid.node_index(8, 3);
        let distortion = with_markers.then(|| {
            let markers: Vec<usize> = (0..=8).step_by(2).map(|ix| grid.node_index(ix, 6)).collect();
            DistortionSpec::new(markers, DistortionMode::FlatnessY).unwrap()
        });
        Model::new(ModelSpec {
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
            distortion,
            terms,
            grid,
        })
        .unwrap()
    }

    fn random_fields(ne: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = (0..ne).map(|_| rng.gen_range(0.25..0.75)).collect();
        let mu = (0..ne).map(|_| rng.gen_range(0.25..0.75)).collect();
        (phi, mu)
    }

    #[test]
    fn full_concurrent_audit_passes() {
        let model = audit_fixture(
            Terms {
                compliance: true,
                gravity_alpha: 0.7,
                distortion_weight: 0.5,
                distortion_bound: Some(1.0),
                sequence_deviation: true,
                layer_constraints: true,
            },
            true,
        );
        let (phi, mu) = random_fields(48, 42);
        let rows = finite_difference_audit(&model, &phi, &mu, 8.0, 1e-4, 32, 7).unwrap();
        assert!(!rows.is_empty());
        for row in &rows {
            assert!(row.analytic.is_finite() && row.finite_difference.is_finite());
            assert!(
                row.passes(1e-3),
                "{} {} analytic {:.6e} fd {:.6e} rel {:.3e}",
                row.function,
                row.variable,
                row.analytic,
                row.finite_difference,
                row.relative_error
            );
        }
    }

    #[test]
    fn volume_gradient_is_numerically_tight() {
        let model = audit_fixture(
            Terms {
                compliance: true,
                ..Terms::default()
            },
            false,
        );
        let (phi, mu) = random_fields(48, 5);
        let rows = finite_difference_audit(&model, &phi, &mu, 8.0, 1e-5, 16, 11).unwrap();
        for row in rows.iter().filter(|r| r.function == "g0") {
            assert!(
                row.passes(1e-6),
                "{} rel {:.3e}",
                row.variable,
                row.relative_error
            );
        }
    }

    #[test]
    fn time_independent_objective_has_zero_conductor_gradient() {
        let model = audit_fixture(
            Terms {
                compliance: true,
                ..Terms::default()
            },
            false,
        );
        let (phi, mu) = random_fields(48, 9);
        let state = model.forward(&phi, &mu, 8.0).unwrap();
        let seed = objective_seed(&model, &state).unwrap();
        assert!(seed.time.iter().all(|&v| v == 0.0));
        let bundle = to_design(&model, &state, &[seed]).unwrap().pop().unwrap();
        assert!(bundle.mu.iter().all(|&v| v == 0.0));
        assert!(bundle.phi.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn compliance_only_matches_classic_filtered_gradient() {
        let model = audit_fixture(
            Terms {
                compliance: true,
                ..Terms::default()
            },
            false,
        );
        let (phi, mu) = random_fields(48, 21);
        let state = model.forward(&phi, &mu, 8.0).unwrap();
        let seed = objective_seed(&model, &state).unwrap();
        let bundle = to_design(&model, &state, &[seed]).unwrap().pop().unwrap();

        let sys = model.final_elastic_system().unwrap();
        let u = state.final_u.as_ref().unwrap();
        let energies = sys.element_products(u, u);
        let mat = model.spec().material;
        let ft = state.phi_tilde.as_ref().unwrap();
        let inner: Vec<f64> = (0..48)
            .map(|e| {
                -mat.dyoungs(state.rho[e])
                    * energies[e]
                    * heaviside_up_derivative(ft[e], 8.0, 0.5)
            })
            .collect();
        let expect = model.filter().apply_transpose(&inner);
        for (a, b) in bundle.phi.iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
        }
    }

    #[test]
    fn linear_functions_differentiate_exactly() {
        let d = central_difference(|x| Ok(3.0 * x - 7.0), 0.4, 1e-6).unwrap();
        assert!((d - 3.0).abs() <= 1e-10);
    }

    #[test]
    fn symmetric_problem_yields_symmetric_gradients() {
        let grid = build_grid(7, 4, 1.0, BuildPlate::Bottom).unwrap();
        let model = Model::new(ModelSpec {
            n_layers: 3,
            v0: 14.0,
            filter_radius: 1.5,
            material: MaterialModel::default(),
            kappa_min: 1e-4,
            drain_beta: 0.1,
            char_length: None,
            mask: None,
            fixed_layout: false,
            supports: vec![],
            loads: vec![],
            gravity: 1.0,
            eps0: 0.01,
            distortion: None,
            terms: Terms {
                gravity_alpha: 1.0,
                sequence_deviation: true,
                ..Terms::default()
            },
            grid: grid.clone(),
        })
        .unwrap();
        let mut phi = vec![0.0; 28];
        let mut mu = vec![0.0; 28];
        for e in 0..28 {
            let (ix, iy) = grid.element_coords(e);
            let dx = (ix as f64 - 3.0).abs();
            phi[e] = 0.3 + 0.08 * dx + 0.05 * iy as f64;
            mu[e] = 0.8 - 0.07 * dx - 0.04 * iy as f64;
        }
        let state = model.forward(&phi, &mu, 8.0).unwrap();
        let seed = objective_seed(&model, &state).unwrap();
        let bundle = to_design(&model, &state, &[seed]).unwrap().pop().unwrap();
        let scale_phi = bundle.phi.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let scale_mu = bundle.mu.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(scale_phi > 0.0 && scale_mu > 0.0);
        for e in 0..28 {
            let (ix, iy) = grid.element_coords(e);
            let m = grid.element_index(6 - ix, iy);
            assert!((bundle.phi[e] - bundle.phi[m]).abs() <= 1e-10 * scale_phi);
            assert!((bundle.mu[e] - bundle.mu[m]).abs() <= 1e-10 * scale_mu);
        }
    }

    #[test]
    fn explicit_time_state_rejects_design_pullback() {
        let model = audit_fixture(
            Terms {
                sequence_deviation: true,
                ..Terms::default()
            },
            false,
        );
        let rho = vec![1.0; 48];
        let t: Vec<f64> = (0..48).map(|e| (e % 6) as f64 / 6.0 + 0.05).collect();
        let state = model.forward_with_time(&rho, &t, 8.0).unwrap();
        let seed = objective_seed(&model, &state).unwrap();
        assert!(to_design(&model, &state, &[seed]).is_err());
    }
}
