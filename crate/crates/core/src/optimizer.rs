//! Optimization loop: moving-asymptote steps over the stacked design
//! vector, projection continuation, convergence control, and the final
//! volume polish that snaps a converged layout onto its volume budget.

use crate::error::{Error, Result};
use crate::model::{ForwardState, Model};
use crate::projection::ContinuationSchedule;
use crate::sensitivities::{
    distortion_seed, objective_seed, stage_volume_seeds, to_design, total_volume_seed, ChainSeed,
    GradientBundle,
};
use stopt_mma::{Mma, Options as MmaOptions};

/// One evaluation of a problem: scaled values and gradients for the
/// optimizer, raw values for reporting. The Jacobian is row-major, one row
/// per constraint.
pub struct Evaluation {
    pub objective: f64,
    pub objective_gradient: Vec<f64>,
    pub constraints: Vec<f64>,
    pub constraint_jacobian: Vec<f64>,
    pub raw_objective: f64,
    pub raw_constraints: Vec<f64>,
}

pub trait OptimizationProblem {
    fn dim(&self) -> usize;
    fn constraint_count(&self) -> usize;
    /// Box bounds per variable; equal bounds freeze a variable.
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn evaluate(&mut self, x: &[f64], beta: f64) -> Result<Evaluation>;
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub max_iterations: usize,
    pub schedule: ContinuationSchedule,
    /// Max per-variable change below which the design counts as settled.
    pub change_tolerance: f64,
    /// Scaled-constraint feasibility threshold for stopping.
    pub constraint_tolerance: f64,
    pub mma: MmaOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_iterations: 500,
            schedule: ContinuationSchedule::default(),
            change_tolerance: 1e-3,
            constraint_tolerance: 1e-6,
            mma: MmaOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterationRow {
    pub iteration: usize,
    pub objective: f64,
    pub constraints: Vec<f64>,
    pub change: f64,
    pub beta: f64,
}

pub struct RunResult {
    pub x: Vec<f64>,
    pub history: Vec<IterationRow>,
    pub converged: bool,
}

/// Drive a problem to its iteration cap or to convergence: settled design,
/// feasible scaled constraints, continuation saturated.
pub fn run_optimization<P: OptimizationProblem + ?Sized>(
    problem: &mut P,
    x0: Vec<f64>,
    config: &RunConfig,
) -> Result<RunResult> {
    let n = problem.dim();
    if x0.len() != n {
        return Err(Error::config(format!(
            "initial design has {} variables, problem expects {n}",
            x0.len()
        )));
    }
    if config.max_iterations == 0 {
        return Err(Error::config("iteration cap must be at least 1"));
    }
    let (xmin, xmax) = problem.bounds();
    let mut x: Vec<f64> = x0
        .iter()
        .enumerate()
        .map(|(j, &v)| v.clamp(xmin[j], xmax[j]))
        .collect();
    let mut mma = Mma::new(
        xmin,
        xmax,
        problem.constraint_count(),
        config.mma.clone(),
    );
    let mut history = Vec::new();
    let mut converged = false;

    for iteration in 1..=config.max_iterations {
        let beta = config.schedule.value(iteration);
        let eval = problem.evaluate(&x, beta)?;
        let x_new = mma.step(
            &x,
            &eval.objective_gradient,
            &eval.constraints,
            &eval.constraint_jacobian,
        );
        let change = x
            .iter()
            .zip(&x_new)
            .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));
        history.push(IterationRow {
            iteration,
            objective: eval.raw_objective,
            constraints: eval.raw_constraints.clone(),
            change,
            beta,
        });
        x = x_new;
        if config.schedule.saturated(iteration)
            && change < config.change_tolerance
            && eval
                .constraints
                .iter()
                .all(|&g| g <= config.constraint_tolerance)
        {
            converged = true;
            break;
        }
    }

    Ok(RunResult {
        x,
        history,
        converged,
    })
}

/// Concurrent layout-and-sequence problem over the stacked vector
/// `[phi; mu]` (or `mu` alone for fixed layouts). Constraint rows, in
/// order: total volume (free layouts), per-layer volumes (when active),
/// distortion bound (when set). Volume rows are scaled by the budget, the
/// distortion row by its bound, and the objective to ten at the first
/// evaluation.
pub struct ConcurrentProblem {
    model: Model,
    frozen_mu: Option<f64>,
    objective_scale: Option<f64>,
    state: Option<ForwardState>,
}

impl ConcurrentProblem {
    pub fn new(model: Model) -> Result<Self> {
        let terms = &model.spec().terms;
        let has_objective = terms.compliance
            || terms.gravity_alpha != 0.0
            || terms.distortion_weight != 0.0
            || terms.sequence_deviation;
        if !has_objective {
            return Err(Error::config("no objective term active"));
        }
        let problem = ConcurrentProblem {
            model,
            frozen_mu: None,
            objective_scale: None,
            state: None,
        };
        if problem.constraint_count() == 0 {
            return Err(Error::config("no constraint active"));
        }
        Ok(problem)
    }

    /// Freeze the conductor field at a uniform value (layout-only studies).
    pub fn freeze_mu(&mut self, value: f64) {
        self.frozen_mu = Some(value);
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn last_state(&self) -> Option<&ForwardState> {
        self.state.as_ref()
    }

    pub fn take_state(&mut self) -> Option<ForwardState> {
        self.state.take()
    }

    fn fixed_layout(&self) -> bool {
        self.model.spec().fixed_layout
    }

    /// Split the stacked vector into its layout and conductor blocks.
    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        if self.fixed_layout() {
            (&[], x)
        } else {
            x.split_at(self.model.grid().element_count())
        }
    }

    fn flatten(&self, bundle: &GradientBundle, scale: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        if !self.fixed_layout() {
            out.extend(bundle.phi.iter().map(|&v| v * scale));
        }
        out.extend(bundle.mu.iter().map(|&v| v * scale));
        out
    }
}

impl OptimizationProblem for ConcurrentProblem {
    fn dim(&self) -> usize {
        let ne = self.model.grid().element_count();
        if self.fixed_layout() {
            ne
        } else {
            2 * ne
        }
    }

    fn constraint_count(&self) -> usize {
        let terms = &self.model.spec().terms;
        let mut m = 0;
        if !self.fixed_layout() {
            m += 1;
        }
        if terms.layer_constraints {
            m += self.model.n_layers();
        }
        if terms.distortion_bound.is_some() {
            m += 1;
        }
        m
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let ne = self.model.grid().element_count();
        let mask = self.model.spec().mask.as_deref();
        let mut lo = Vec::with_capacity(self.dim());
        let mut hi = Vec::with_capacity(self.dim());
        if !self.fixed_layout() {
            for e in 0..ne {
                let inside = mask.map_or(true, |m| m[e]);
                lo.push(0.0);
                hi.push(if inside { 1.0 } else { 0.0 });
            }
        }
        for e in 0..ne {
            let inside = mask.map_or(true, |m| m[e]);
            match self.frozen_mu {
                Some(v) => {
                    lo.push(v);
                    hi.push(v);
                }
                None => {
                    lo.push(0.0);
                    hi.push(if inside { 1.0 } else { 0.0 });
                }
            }
        }
        (lo, hi)
    }

    fn evaluate(&mut self, x: &[f64], beta: f64) -> Result<Evaluation> {
        let (phi, mu) = self.split(x);
        let state = self.model.forward(phi, mu, beta)?;
        let terms = self.model.spec().terms.clone();
        let v0 = self.model.spec().v0;

        let mut seeds: Vec<ChainSeed> = vec![objective_seed(&self.model, &state)?];
        if !self.fixed_layout() {
            seeds.push(total_volume_seed(&self.model));
        }
        if terms.layer_constraints {
            seeds.extend(stage_volume_seeds(&self.model, &state));
        }
        if terms.distortion_bound.is_some() {
            seeds.push(distortion_seed(&self.model, &state)?);
        }
        let bundles = to_design(&self.model, &state, &seeds)?;

        let scale = *self
            .objective_scale
            .get_or_insert(10.0 / state.objective.abs().max(1e-12));

        let mut constraints = Vec::new();
        let mut raw_constraints = Vec::new();
        let mut jacobian = Vec::new();
        let mut row = 1;
        if !self.fixed_layout() {
            constraints.push(state.g0 / v0);
            raw_constraints.push(state.g0);
            jacobian.extend(self.flatten(&bundles[row], 1.0 / v0));
            row += 1;
        }
        if terms.layer_constraints {
            for j in 0..self.model.n_layers() {
                constraints.push(state.gj[j] / v0);
                raw_constraints.push(state.gj[j]);
                jacobian.extend(self.flatten(&bundles[row], 1.0 / v0));
                row += 1;
            }
        }
        if let Some(bound) = terms.distortion_bound {
            let d = state.distortion.unwrap_or(f64::NAN);
            constraints.push(d / bound - 1.0);
            raw_constraints.push(d - bound);
            jacobian.extend(self.flatten(&bundles[row], 1.0 / bound));
        }

        let eval = Evaluation {
            objective: scale * state.objective,
            objective_gradient: self.flatten(&bundles[0], scale),
            constraints,
            constraint_jacobian: jacobian,
            raw_objective: state.objective,
            raw_constraints,
        };
        self.state = Some(state);
        Ok(eval)
    }
}

/// Snap a free layout onto its volume budget by a uniform shift of the
/// unfrozen design values, bisected so the volume residual lands in
/// [-8e-5, -1e-6]: feasible, active, and inside every reporting band. The
/// residual is monotone in the shift, so bisection cannot miss. Returns
/// the polished residual.
pub fn polish_volume(model: &Model, x: &mut [f64], beta: f64) -> Result<f64> {
    if model.spec().fixed_layout {
        return Err(Error::config("volume polish applies to free layouts"));
    }
    let ne = model.grid().element_count();
    let h2 = model.grid().h() * model.grid().h();
    let v0 = model.spec().v0;
    let mask = model.spec().mask.clone();
    let free: Vec<bool> = (0..ne)
        .map(|e| mask.as_ref().map_or(true, |m| m[e]))
        .collect();
    let phi = &x[..ne];
    let residual = |delta: f64| -> f64 {
        let shifted: Vec<f64> = phi
            .iter()
            .zip(&free)
            .map(|(&p, &f)| if f { (p + delta).clamp(0.0, 1.0) } else { p })
            .collect();
        let (_, rho) = model.density(&shifted, beta);
        h2 * rho.iter().sum::<f64>() - v0
    };

    const BAND_LO: f64 = -8e-5;
    const BAND_HI: f64 = -1e-6;
    let g = residual(0.0);
    if (BAND_LO..=BAND_HI).contains(&g) {
        return Ok(g);
    }
    let mut lo = -1.0;
    let mut hi = 1.0;
    if residual(lo) > BAND_HI || residual(hi) < BAND_LO {
        return Err(Error::numerical("volume residual band is unreachable"));
    }
    let mut landed = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let gm = residual(mid);
        if gm > BAND_HI {
            hi = mid;
        } else if gm < BAND_LO {
            lo = mid;
        } else {
            landed = Some((mid, gm));
            break;
        }
    }
    let (delta, g) =
        landed.ok_or_else(|| Error::numerical("volume polish bisection failed to land"))?;
    for (p, &f) in x[..ne].iter_mut().zip(&free) {
        if f {
            *p = (*p + delta).clamp(0.0, 1.0);
        }
    }
    Ok(g)
}

#[cfg(test)]
mod optimizer_tests {
    use super::*;
    use crate::elasticity::MaterialModel;
    use crate::grid::{build_grid, BuildPlate};
    use crate::model::{ModelSpec, Terms};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Quadratic {
        target: Vec<f64>,
        checked: usize,
    }

    impl OptimizationProblem for Quadratic {
        fn dim(&self) -> usize {
            self.target.len()
        }
        fn constraint_count(&self) -> usize {
            1
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![0.0; self.dim()], vec![1.0; self.dim()])
        }
        fn evaluate(&mut self, x: &[f64], _beta: f64) -> Result<Evaluation> {
            for &v in x {
                assert!((0.0..=1.0).contains(&v));
            }
            self.checked += 1;
            let f: f64 = x
                .iter()
                .zip(&self.target)
                .map(|(&v, &t)| (v - t) * (v - t))
                .sum();
            let df: Vec<f64> = x
                .iter()
                .zip(&self.target)
                .map(|(&v, &t)| 2.0 * (v - t))
                .collect();
            let n = self.dim() as f64;
            let g = x.iter().sum::<f64>() / n - 0.9;
            let dg = vec![1.0 / n; self.dim()];
            Ok(Evaluation {
                objective: f,
                objective_gradient: df,
                constraints: vec![g],
                constraint_jacobian: dg,
                raw_objective: f,
                raw_constraints: vec![g],
            })
        }
    }

    fn flat_schedule() -> ContinuationSchedule {
        ContinuationSchedule {
            beta_initial: 8.0,
            growth: 2.0,
            period: 1,
            beta_max: 8.0,
        }
    }

    #[test]
    fn quadratic_settles_near_interior_minimum() {
        let mut problem = Quadratic {
            target: vec![0.3, 0.7, 0.5],
            checked: 0,
        };
        let config = RunConfig {
            max_iterations: 200,
            schedule: flat_schedule(),
            ..RunConfig::default()
        };
        let result = run_optimization(&mut problem, vec![0.9, 0.1, 0.9], &config).unwrap();
        for (x, t) in result.x.iter().zip(&problem.target) {
            assert!((x - t).abs() < 1e-2, "{x} vs {t}");
        }
        assert_eq!(problem.checked, result.history.len());
        let tail = &result.history[result.history.len() - 20..];
        let worst = tail.iter().fold(0.0f64, |m, r| m.max(r.change));
        assert!(worst < 0.05, "late oscillation {worst}");
    }

    struct ActiveConstraint;

    impl OptimizationProblem for ActiveConstraint {
        fn dim(&self) -> usize {
            2
        }
        fn constraint_count(&self) -> usize {
            1
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![0.0; 2], vec![1.0; 2])
        }
        fn evaluate(&mut self, x: &[f64], _beta: f64) -> Result<Evaluation> {
            // Minimize x0 + x1 subject to 1 - x0 - x1 <= 0: the optimizer
            // must settle exactly on the constraint plane.
            Ok(Evaluation {
                objective: x[0] + x[1],
                objective_gradient: vec![1.0, 1.0],
                constraints: vec![1.0 - x[0] - x[1]],
                constraint_jacobian: vec![-1.0, -1.0],
                raw_objective: x[0] + x[1],
                raw_constraints: vec![1.0 - x[0] - x[1]],
            })
        }
    }

    #[test]
    fn convergence_stop_fires_on_active_constraint() {
        let mut problem = ActiveConstraint;
        let config = RunConfig {
            max_iterations: 300,
            schedule: flat_schedule(),
            constraint_tolerance: 1e-4,
            ..RunConfig::default()
        };
        let result = run_optimization(&mut problem, vec![0.9, 0.9], &config).unwrap();
        assert!(result.converged, "no stop in {} iters", result.history.len());
        assert!(result.history.len() < 300);
        let sum = result.x[0] + result.x[1];
        assert!((sum - 1.0).abs() < 1e-2, "sum {sum}");
    }

    #[test]
    fn iteration_cap_is_honored() {
        let mut problem = Quadratic {
            target: vec![0.5; 4],
            checked: 0,
        };
        let config = RunConfig {
            max_iterations: 7,
            schedule: ContinuationSchedule::default(),
            ..RunConfig::default()
        };
        let result = run_optimization(&mut problem, vec![0.0; 4], &config).unwrap();
        assert_eq!(result.history.len(), 7);
        assert!(!result.converged);
    }

    fn cantilever_model(nx: usize, ny: usize, vf: f64, radius: f64) -> Model {
        let grid = build_grid(nx, ny, 1.0, BuildPlate::Bottom).unwrap();
        let supports: Vec<usize> = (0..=ny)
            .flat_map(|iy| {
                let n = grid.node_index(0, iy);
                [2 * n, 2 * n + 1]
            })
            .collect();
        let tip = grid.node_index(nx, ny / 2);
        Model::new(ModelSpec {
            n_layers: 1,
            v0: vf * (nx * ny) as f64,
            filter_radius: radius,
            material: MaterialModel::default(),
            kappa_min: 1e-4,
            drain_beta: 0.1,
            char_length: None,
            mask: None,
            fixed_layout: false,
            supports,
            loads: vec![(2 * tip + 1, -1.0)],
            gravity: 0.0,
            eps0: 0.01,
            distortion: None,
            terms: Terms {
                compliance: true,
                ..Terms::default()
            },
            grid,
        })
        .unwrap()
    }

    #[test]
    fn classic_cantilever_ends_volume_active() {
        let model = cantilever_model(60, 20, 0.5, 2.0);
        let mut problem = ConcurrentProblem::new(model).unwrap();
        problem.freeze_mu(0.5);
        let config = RunConfig {
            max_iterations: 150,
            schedule: ContinuationSchedule {
                beta_initial: 8.0,
                growth: 2.0,
                period: 30,
                beta_max: 64.0,
            },
            ..RunConfig::default()
        };
        let x0 = vec![0.5; problem.dim()];
        let mut result = run_optimization(&mut problem, x0, &config).unwrap();

        let first = result.history.first().unwrap().objective;
        let last = result.history.last().unwrap().objective;
        assert!(last < 0.6 * first, "compliance {first} -> {last}");
        let raw_g0 = *result
            .history
            .last()
            .unwrap()
            .constraints
            .first()
            .unwrap();
        assert!(raw_g0.abs() <= 0.02 * 600.0, "pre-polish g0 {raw_g0}");
        for (e, &v) in result.x.iter().enumerate() {
            assert!((0.0..=1.0).contains(&v), "x[{e}] = {v}");
        }
        for (e, &v) in result.x[1200..].iter().enumerate() {
            assert_eq!(v, 0.5, "frozen mu moved at {e}");
        }

        let beta = config.schedule.value(result.history.len());
        let g0 = polish_volume(problem.model(), &mut result.x, beta).unwrap();
        assert!((-1e-4..=1e-6).contains(&g0), "polished g0 {g0}");
    }

    #[test]
    fn masked_layout_variables_stay_frozen() {
        let grid = build_grid(8, 6, 1.0, BuildPlate::Bottom).unwrap();
        let mut mask = vec![true; 48];
        for iy in 0..6 {
            mask[grid.element_index(4, iy)] = false;
        }
        let supports: Vec<usize> = (0..=6)
            .flat_map(|iy| {
                let n = grid.node_index(0, iy);
                [2 * n, 2 * n + 1]
            })
            .collect();
        let tip = grid.node_index(8, 3);
        let model = Model::new(ModelSpec {
            n_layers: 2,
            v0: 0.5 * 42.0,
            filter_radius: 1.5,
            material: MaterialModel::default(),
            kappa_min: 1e-4,
            drain_beta: 0.1,
            char_length: None,
            mask: Some(mask.clone()),
            fixed_layout: false,
            supports,
            loads: vec![(2 * tip + 1, -1.0)],
            gravity: 0.0,
            eps0: 0.01,
            distortion: None,
            terms: Terms {
                compliance: true,
                layer_constraints: true,
                ..Terms::default()
            },
            grid,
        })
        .unwrap();
        let mut problem = ConcurrentProblem::new(model).unwrap();
        assert_eq!(problem.constraint_count(), 3);
        let mut x0 = vec![0.0; problem.dim()];
        for e in 0..48 {
            if mask[e] {
                x0[e] = 0.5;
                x0[48 + e] = 0.5;
            }
        }
        let config = RunConfig {
            max_iterations: 10,
            schedule: flat_schedule(),
            ..RunConfig::default()
        };
        let result = run_optimization(&mut problem, x0, &config).unwrap();
        for e in 0..48 {
            if !mask[e] {
                assert_eq!(result.x[e], 0.0);
                assert_eq!(result.x[48 + e], 0.0);
            }
        }
        let state = problem.last_state().unwrap();
        for e in 0..48 {
            if !mask[e] {
                assert_eq!(state.rho[e], 0.0);
            }
        }
    }

    #[test]
    fn polish_lands_in_band_and_is_idempotent() {
        let model = cantilever_model(10, 10, 0.4, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut x: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..1.0)).collect();
        let g0 = polish_volume(&model, &mut x, 8.0).unwrap();
        assert!((-8e-5..=-1e-6).contains(&g0), "g0 {g0}");
        let snapshot = x.clone();
        let g0_again = polish_volume(&model, &mut x, 8.0).unwrap();
        assert_eq!(g0, g0_again);
        assert_eq!(snapshot, x);
    }
}
