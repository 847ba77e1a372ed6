//! The five experiment presets. Each preset builds its models, drives the
//! optimizer, and leaves a run directory per sub-run: summary, convergence
//! table, field dumps, validity records.

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::time::Instant;
use stopt_core::baseline::BaselineProblem;
use stopt_core::elasticity::DistortionSpec;
use stopt_core::model::{ForwardState, Model, ModelSpec, Terms};
use stopt_core::optimizer::{
    polish_volume, run_optimization, ConcurrentProblem, OptimizationProblem, RunConfig, RunResult,
};
use stopt_core::projection::ContinuationSchedule;
use stopt_core::sequence::{check_sequence_validity, plate_seed_elements, ValidityReport};
use stopt_core::Grid;

use crate::config::{Config, MuInit, Scenario};
use crate::masks::{self, MaskPreset};
use crate::report::{RunDir, Summary, ValiditySummary};

pub struct Flags {
    pub dump_stages: bool,
    pub dump_heat: bool,
    pub full_res: bool,
    pub threads: usize,
}

pub const GRAVITY_SWEEP: [f64; 5] = [0.0, 0.1, 2.0, 5.0, 10.0];

pub fn run_scenario(cfg: &Config, out_root: &Path, flags: &Flags) -> Result<Vec<Summary>> {
    match cfg.scenario {
        Scenario::ValidateInit => validate_init(cfg, out_root, flags),
        Scenario::SequenceOnly => sequence_only(cfg, out_root, flags),
        Scenario::Gravity => gravity(cfg, out_root, flags),
        Scenario::ThermalSequence => thermal_sequence(cfg, out_root, flags),
        Scenario::ThermalConcurrent => thermal_concurrent(cfg, out_root, flags),
    }
}

fn mask_scale(flags: &Flags) -> usize {
    if flags.full_res {
        2
    } else {
        1
    }
}

/// Conductor-field starting points. Random draws per-element values from
/// the seeded stream; monotonic ramps from 1 at the plate to 0.1 at the
/// far side; uniform sits mid-range.
fn mu_initial(kind: MuInit, grid: &Grid, seed: u64) -> Vec<f64> {
    let ne = grid.element_count();
    match kind {
        MuInit::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..ne).map(|_| rng.gen_range(0.0..1.0)).collect()
        }
        MuInit::Monotonic => {
            let extent = grid.build_axis_extent();
            (0..ne)
                .map(|e| {
                    let frac = grid.element_plate_offset(e) / extent;
                    1.0 - 0.9 * frac
                })
                .collect()
        }
        MuInit::Uniform => vec![0.5; ne],
    }
}

fn apply_mask(values: &mut [f64], mask: Option<&[bool]>) {
    if let Some(m) = mask {
        for (v, &inside) in values.iter_mut().zip(m) {
            if !inside {
                *v = 0.0;
            }
        }
    }
}

/// Left edge clamped, unit downward load at the top-right corner node.
fn cantilever_bcs(grid: &Grid) -> (Vec<usize>, Vec<(usize, f64)>) {
    let mut supports = Vec::new();
    for iy in 0..=grid.ny() {
        let n = grid.node_index(0, iy);
        supports.push(2 * n);
        supports.push(2 * n + 1);
    }
    let tip = grid.node_index(grid.nx(), grid.ny());
    let loads = vec![(2 * tip + 1, -1.0)];
    (supports, loads)
}

fn run_config(cfg: &Config) -> RunConfig {
    RunConfig {
        max_iterations: cfg.max_iterations,
        schedule: cfg.schedule.clone(),
        change_tolerance: cfg.change_tolerance,
        constraint_tolerance: cfg.constraint_tolerance,
        mma: Default::default(),
    }
}

struct DriveOutcome {
    result: RunResult,
    state: ForwardState,
    validity: ValidityReport,
    solid: Vec<bool>,
}

/// Run a concurrent/regularized problem to its cap, snap free layouts onto
/// the volume budget, and re-evaluate at the final sharpness for
/// reporting. Validity is always measured on the solid set rho > 0.5.
fn drive_concurrent(
    problem: &mut ConcurrentProblem,
    x0: Vec<f64>,
    cfg: &Config,
) -> Result<DriveOutcome> {
    let config = run_config(cfg);
    let mut result = run_optimization(problem, x0, &config)?;
    let beta = cfg.schedule.beta_max;
    if !problem.model().spec().fixed_layout {
        polish_volume(problem.model(), &mut result.x, beta)?;
    }
    problem.evaluate(&result.x, beta)?;
    let state = problem
        .take_state()
        .expect("evaluate populates the forward state");
    let grid = problem.model().grid();
    let solid: Vec<bool> = state.rho.iter().map(|&r| r > 0.5).collect();
    let seeds = plate_seed_elements(grid, &solid);
    let validity = check_sequence_validity(grid, &state.time, &solid, &seeds);
    Ok(DriveOutcome {
        result,
        state,
        validity,
        solid,
    })
}

fn emit_common(
    dir: &mut RunDir,
    cfg: &Config,
    name: &str,
    outcome: &DriveOutcome,
    flags: &Flags,
    grid: &Grid,
    metrics: Vec<(String, f64)>,
    started: Instant,
) -> Result<Summary> {
    let state = &outcome.state;
    let constraint_max = outcome
        .result
        .history
        .last()
        .map(|row| {
            row.constraints
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .unwrap_or(f64::NAN);
    let summary = Summary {
        scenario: cfg.scenario.to_string(),
        run: name.to_string(),
        final_objective: state.objective,
        constraint_max,
        validity: ValiditySummary::from(&outcome.validity),
        iterations: outcome.result.history.len(),
        converged: outcome.result.converged,
        final_beta_t: cfg.schedule.beta_max,
        metrics,
    };
    dir.record_validity("final", &outcome.validity);
    dir.write_summary(&summary)?;
    dir.write_convergence(&outcome.result.history)?;
    dir.write_element_field("time", grid, &state.time)?;
    dir.write_element_field("rho", grid, &state.rho)?;
    let layers: Vec<f64> =
        stopt_core::sequence::extract_layers(&state.time, cfg.n_layers, &outcome.solid)
            .iter()
            .map(|&j| j as f64)
            .collect();
    dir.write_element_field("layers", grid, &layers)?;
    let mut vtk_fields: Vec<(&str, &[f64])> = vec![
        ("time", &state.time[..]),
        ("rho", &state.rho[..]),
        ("layers", &layers[..]),
    ];
    if !state.mu.is_empty() {
        dir.write_element_field("mu", grid, &state.mu)?;
        vtk_fields.push(("mu", &state.mu[..]));
    }
    dir.write_vtk(grid, &vtk_fields)?;
    if flags.dump_stages {
        for (j, stage) in state.stage_rho.iter().enumerate() {
            dir.write_element_field(&format!("stage_{:02}", j + 1), grid, stage)?;
        }
    }
    if flags.dump_heat {
        if let Some(heat) = &state.heat {
            dir.write_node_field("temperature", grid, &heat.temperature)?;
        }
    }
    dir.flush_validity()?;
    dir.write_meta(started.elapsed().as_secs_f64(), flags.threads)?;
    Ok(summary)
}

fn validate_init(cfg: &Config, out_root: &Path, flags: &Flags) -> Result<Vec<Summary>> {
    let grid = stopt_core::build_grid(cfg.nx, cfg.ny, cfg.h, cfg.build_plate)?;
    let (supports, loads) = cantilever_bcs(&grid);
    let inits = match cfg.mu_init {
        Some(one) => vec![one],
        None => vec![MuInit::Random, MuInit::Monotonic, MuInit::Uniform],
    };
    let mut summaries = Vec::new();
    for init in inits {
        let started = Instant::now();
        let model = Model::new(ModelSpec {
            grid: grid.clone(),
            n_layers: cfg.n_layers,
            v0: cfg.volume_fraction * domain_area(&grid),
            filter_radius: cfg.filter_radius,
            material: cfg.material,
            kappa_min: cfg.kappa_min,
            drain_beta: cfg.drain_beta,
            char_length: None,
            mask: None,
            fixed_layout: false,
            supports: supports.clone(),
            loads: loads.clone(),
            gravity: 0.0,
            eps0: cfg.eigenstrain,
            distortion: None,
            terms: Terms {
                compliance: true,
                layer_constraints: true,
                ..Terms::default()
            },
        })?;
        let ne = grid.element_count();
        let mut x0 = vec![cfg.volume_fraction; ne];
        x0.extend(mu_initial(init, &grid, cfg.seed));
        let mut problem = ConcurrentProblem::new(model)?;
        let outcome = drive_concurrent(&mut problem, x0, cfg)?;
        let name = format!("init_{init}");
        let mut dir = RunDir::create(&out_root.join(&name))?;
        let metrics = vec![("compliance".to_string(), outcome.state.f0)];
        summaries.push(emit_common(
            &mut dir, cfg, &name, &outcome, flags, &grid, metrics, started,
        )?);
    }
    Ok(summaries)
}

fn domain_area(grid: &Grid) -> f64 {
    grid.element_count() as f64 * grid.h() * grid.h()
}

fn mask_area(grid: &Grid, mask: &[bool]) -> f64 {
    mask.iter().filter(|&&m| m).count() as f64 * grid.h() * grid.h()
}

/// Settle stages appended to explicit-baseline runs: constant sharpness,
/// progressively tighter moves. They collapse the optimizer's terminal
/// limit cycle so the validity check sees the equilibrium field, not the
/// cycle noise.
fn settle_stages(cfg: &Config) -> Vec<RunConfig> {
    let bmax = cfg.schedule.beta_max;
    let constant = ContinuationSchedule {
        beta_initial: bmax,
        growth: 2.0,
        period: 25,
        beta_max: bmax,
    };
    [(300, 0.02, 0.05), (300, 0.005, 0.02), (400, 0.002, 0.01)]
        .iter()
        .map(|&(iters, move_limit, asy_init)| {
            let mut stage = RunConfig {
                max_iterations: iters,
                schedule: constant.clone(),
                ..RunConfig::default()
            };
            stage.mma.move_limit = move_limit;
            stage.mma.asy_init = asy_init;
            stage.mma.asy_decr = 0.5;
            stage
        })
        .collect()
}

fn baseline_model(cfg: &Config, preset: &MaskPreset) -> Result<Model> {
    Ok(Model::new(ModelSpec {
        grid: preset.grid.clone(),
        n_layers: cfg.n_layers,
        v0: mask_area(&preset.grid, &preset.mask),
        filter_radius: cfg.filter_radius,
        material: cfg.material,
        kappa_min: cfg.kappa_min,
        drain_beta: cfg.drain_beta,
        char_length: None,
        mask: Some(preset.mask.clone()),
        fixed_layout: true,
        supports: Vec::new(),
        loads: Vec::new(),
        gravity: 0.0,
        eps0: cfg.eigenstrain,
        distortion: None,
        terms: Terms {
            sequence_deviation: true,
            ..Terms::default()
        },
    })?)
}

struct BaselineOutcome {
    time: Vec<f64>,
    init_validity: ValidityReport,
    validity: ValidityReport,
    smoothness: f64,
    history_len: usize,
    converged: bool,
    final_objective: f64,
    constraint_max: f64,
}

fn drive_baseline(cfg: &Config, preset: &MaskPreset, geodesic: bool) -> Result<BaselineOutcome> {
    let model = baseline_model(cfg, preset)?;
    let mut problem = BaselineProblem::new(model, cfg.epsilon)?;
    let s0 = if geodesic {
        let (field, unreachable) = problem.geodesic_initial();
        if unreachable != 0 {
            bail!("mask has {unreachable} elements the plate cannot reach");
        }
        field
    } else {
        problem.euclidean_initial()
    };
    let init_validity = problem.validity(&problem.time_field(&s0));
    let mut result = run_optimization(&mut problem, s0, &run_config(cfg))?;
    let mut history = result.history;
    for stage in settle_stages(cfg) {
        result = run_optimization(&mut problem, result.x, &stage)?;
        history.extend(result.history.drain(..));
    }
    let time = problem.time_field(&result.x);
    let validity = problem.validity(&time);
    let smoothness = problem.smoothness(&time);
    let last = history.last().expect("at least one iteration ran");
    Ok(BaselineOutcome {
        time,
        init_validity,
        validity,
        smoothness,
        history_len: history.len(),
        converged: result.converged,
        final_objective: last.objective,
        constraint_max: last
            .constraints
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
    })
}

fn sequence_only(cfg: &Config, out_root: &Path, flags: &Flags) -> Result<Vec<Summary>> {
    let preset = if cfg.mask == "notched" {
        masks::notched(mask_scale(flags))?
    } else {
        masks::component(&cfg.mask, mask_scale(flags))?
    };
    let grid = preset.grid.clone();
    let mut summaries = Vec::new();

    for geodesic in [false, true] {
        let started = Instant::now();
        let name = if geodesic {
            "baseline_geodesic"
        } else {
            "baseline_euclidean"
        };
        let outcome = drive_baseline(cfg, &preset, geodesic)?;
        let mut dir = RunDir::create(&out_root.join(name))?;
        dir.record_validity("initial", &outcome.init_validity);
        dir.record_validity("final", &outcome.validity);
        let summary = Summary {
            scenario: cfg.scenario.to_string(),
            run: name.to_string(),
            final_objective: outcome.final_objective,
            constraint_max: outcome.constraint_max,
            validity: ValiditySummary::from(&outcome.validity),
            iterations: outcome.history_len,
            converged: outcome.converged,
            final_beta_t: cfg.schedule.beta_max,
            metrics: vec![
                ("smoothness".to_string(), outcome.smoothness),
                ("smoothness_bound".to_string(), cfg.epsilon),
                (
                    "init_violations".to_string(),
                    outcome.init_validity.violation_count() as f64,
                ),
            ],
        };
        dir.write_summary(&summary)?;
        dir.write_element_field("time", &grid, &outcome.time)?;
        let rho: Vec<f64> = preset.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        dir.write_element_field("rho", &grid, &rho)?;
        let layers: Vec<f64> =
            stopt_core::sequence::extract_layers(&outcome.time, cfg.n_layers, &preset.mask)
                .iter()
                .map(|&j| j as f64)
                .collect();
        dir.write_element_field("layers", &grid, &layers)?;
        dir.write_vtk(
            &grid,
            &[
                ("time", &outcome.time[..]),
                ("rho", &rho[..]),
                ("layers", &layers[..]),
            ],
        )?;
        dir.flush_validity()?;
        dir.write_meta(started.elapsed().as_secs_f64(), flags.threads)?;
        summaries.push(summary);
    }

    // The same sequence problem under the heat regularization: the time
    // field comes from the conductor field, smoothness is intrinsic, and
    // the per-layer budgets become optimizer constraints.
    let started = Instant::now();
    let model = Model::new(ModelSpec {
        grid: grid.clone(),
        n_layers: cfg.n_layers,
        v0: mask_area(&grid, &preset.mask),
        filter_radius: cfg.filter_radius,
        material: cfg.material,
        kappa_min: cfg.kappa_min,
        drain_beta: cfg.drain_beta,
        char_length: None,
        mask: Some(preset.mask.clone()),
        fixed_layout: true,
        supports: Vec::new(),
        loads: Vec::new(),
        gravity: 0.0,
        eps0: cfg.eigenstrain,
        distortion: None,
        terms: Terms {
            sequence_deviation: true,
            layer_constraints: true,
            ..Terms::default()
        },
    })?;
    let mut mu0 = mu_initial(MuInit::Uniform, &grid, cfg.seed);
    apply_mask(&mut mu0, Some(&preset.mask));
    let mut problem = ConcurrentProblem::new(model)?;
    let outcome = drive_concurrent(&mut problem, mu0, cfg)?;
    let name = "heat_regularized";
    let mut dir = RunDir::create(&out_root.join(name))?;
    let metrics = vec![(
        "smoothness".to_string(),
        stopt_core::sequence::mean_neighbor_constraint(&grid, &outcome.state.time, &outcome.solid),
    )];
    summaries.push(emit_common(
        &mut dir, cfg, name, &outcome, flags, &grid, metrics, started,
    )?);
    Ok(summaries)
}

fn gravity(cfg: &Config, out_root: &Path, flags: &Flags) -> Result<Vec<Summary>> {
    let grid = stopt_core::build_grid(cfg.nx, cfg.ny, cfg.h, cfg.build_plate)?;
    let (supports, loads) = cantilever_bcs(&grid);
    let alphas: Vec<f64> = match cfg.alpha {
        Some(a) => vec![a],
        None => GRAVITY_SWEEP.to_vec(),
    };
    let mut summaries = Vec::new();
    for alpha in alphas {
        let started = Instant::now();
        let model = Model::new(ModelSpec {
            grid: grid.clone(),
            n_layers: cfg.n_layers,
            v0: cfg.volume_fraction * domain_area(&grid),
            filter_radius: cfg.filter_radius,
            material: cfg.material,
            kappa_min: cfg.kappa_min,
            drain_beta: cfg.drain_beta,
            char_length: None,
            mask: None,
            fixed_layout: false,
            supports: supports.clone(),
            loads: loads.clone(),
            gravity: cfg.gravity_magnitude,
            eps0: cfg.eigenstrain,
            distortion: None,
            terms: Terms {
                compliance: true,
                gravity_alpha: alpha,
                layer_constraints: true,
                ..Terms::default()
            },
        })?;
        let ne = grid.element_count();
        let mut x0 = vec![cfg.volume_fraction; ne];
        x0.extend(mu_initial(cfg.mu_init.unwrap_or(MuInit::Uniform), &grid, cfg.seed));
        let mut problem = ConcurrentProblem::new(model)?;
        let outcome = drive_concurrent(&mut problem, x0, cfg)?;
        let name = format!("alpha_{alpha}");
        let mut dir = RunDir::create(&out_root.join(&name))?;
        let metrics = vec![
            ("alpha".to_string(), alpha),
            ("compliance".to_string(), outcome.state.f0),
            (
                "contact_width".to_string(),
                contact_width(&grid, &outcome.solid),
            ),
            (
                "bottom_quarter_fraction".to_string(),
                bottom_quarter_fraction(&grid, &outcome.state.rho),
            ),
        ];
        summaries.push(emit_common(
            &mut dir, cfg, &name, &outcome, flags, &grid, metrics, started,
        )?);
    }
    Ok(summaries)
}

/// Width of the solid region touching the build plate.
pub fn contact_width(grid: &Grid, solid: &[bool]) -> f64 {
    grid.build_plate_elements()
        .iter()
        .filter(|&&e| solid[e])
        .count() as f64
        * grid.h()
}

/// Material fraction in the quarter of the domain nearest the plate.
pub fn bottom_quarter_fraction(grid: &Grid, rho: &[f64]) -> f64 {
    let cutoff = grid.build_axis_extent() / 4.0;
    let mut inside = 0.0;
    let mut total = 0.0;
    for (e, &r) in rho.iter().enumerate() {
        total += r;
        if grid.element_plate_offset(e) < cutoff {
            inside += r;
        }
    }
    if total > 0.0 {
        inside / total
    } else {
        0.0
    }
}

/// Planar bottom-up reference sequence: time from the normalized plate
/// offset, the schedule a conventional slicer would use.
fn bottom_up_time(grid: &Grid) -> Vec<f64> {
    let extent = grid.build_axis_extent();
    (0..grid.element_count())
        .map(|e| grid.element_plate_offset(e) / extent)
        .collect()
}

fn thermal_model(cfg: &Config, preset: &MaskPreset, distortion: DistortionSpec) -> Result<Model> {
    Ok(Model::new(ModelSpec {
        grid: preset.grid.clone(),
        n_layers: cfg.n_layers,
        v0: mask_area(&preset.grid, &preset.mask),
        filter_radius: cfg.filter_radius,
        material: cfg.material,
        kappa_min: cfg.kappa_min,
        drain_beta: cfg.drain_beta,
        char_length: None,
        mask: Some(preset.mask.clone()),
        fixed_layout: true,
        supports: Vec::new(),
        loads: Vec::new(),
        gravity: 0.0,
        eps0: cfg.eigenstrain,
        distortion: Some(distortion),
        terms: Terms {
            distortion_weight: 1.0,
            layer_constraints: true,
            ..Terms::default()
        },
    })?)
}

fn thermal_sequence(cfg: &Config, out_root: &Path, flags: &Flags) -> Result<Vec<Summary>> {
    let names: Vec<&str> = match cfg.component.as_deref() {
        Some(one) => vec![masks::COMPONENTS
            .iter()
            .copied()
            .find(|&c| c == one)
            .expect("validated at load")],
        None => masks::COMPONENTS.to_vec(),
    };
    let mut summaries = Vec::new();
    for name in names {
        let started = Instant::now();
        let preset = masks::component(name, mask_scale(flags))?;
        let distortion = preset
            .distortion
            .clone()
            .expect("components define a measured feature");
        let grid = preset.grid.clone();

        // Reference: the planar bottom-up schedule on the same component.
        let model = thermal_model(cfg, &preset, distortion.clone())?;
        let rho: Vec<f64> = preset.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        let reference = model.forward_with_time(&rho, &bottom_up_time(&grid), cfg.schedule.beta_max)?;
        let baseline_distortion = reference
            .distortion
            .expect("distortion term is active");

        let model = thermal_model(cfg, &preset, distortion)?;
        let mut mu0 = mu_initial(cfg.mu_init.unwrap_or(MuInit::Monotonic), &grid, cfg.seed);
        apply_mask(&mut mu0, Some(&preset.mask));
        let mut problem = ConcurrentProblem::new(model)?;
        let outcome = drive_concurrent(&mut problem, mu0, cfg)?;
        let optimized = outcome
            .state
            .distortion
            .expect("distortion term is active");
        let mut dir = RunDir::create(&out_root.join(name))?;
        let metrics = vec![
            ("distortion".to_string(), optimized),
            ("bottom_up_distortion".to_string(), baseline_distortion),
            (
                "distortion_ratio".to_string(),
                optimized / baseline_distortion,
            ),
        ];
        summaries.push(emit_common(
            &mut dir, cfg, name, &outcome, flags, &grid, metrics, started,
        )?);
    }
    Ok(summaries)
}

fn thermal_concurrent(cfg: &Config, out_root: &Path, flags: &Flags) -> Result<Vec<Summary>> {
    let started = Instant::now();
    let grid = stopt_core::build_grid(cfg.nx, cfg.ny, cfg.h, cfg.build_plate)?;
    let (supports, loads) = cantilever_bcs(&grid);
    // Measured feature: flatness of the domain's top edge, the surface a
    // functional part would mate on.
    let markers: Vec<usize> = (0..=grid.nx()).map(|ix| grid.node_index(ix, grid.ny())).collect();
    let distortion = DistortionSpec::new(markers, stopt_core::elasticity::DistortionMode::FlatnessY)?;

    let spec = |bound: Option<f64>, weight: f64| ModelSpec {
        grid: grid.clone(),
        n_layers: cfg.n_layers,
        v0: cfg.volume_fraction * domain_area(&grid),
        filter_radius: cfg.filter_radius,
        material: cfg.material,
        kappa_min: cfg.kappa_min,
        drain_beta: cfg.drain_beta,
        char_length: None,
        mask: None,
        fixed_layout: false,
        supports: supports.clone(),
        loads: loads.clone(),
        gravity: 0.0,
        eps0: cfg.eigenstrain,
        distortion: Some(distortion.clone()),
        terms: Terms {
            compliance: true,
            layer_constraints: true,
            distortion_bound: bound,
            distortion_weight: weight,
            ..Terms::default()
        },
    };

    // Calibrate the bound against the uniform initial design's distortion
    // under a bottom-up heat schedule, so the constraint is meaningful at
    // any resolution.
    let probe_model = Model::new(spec(None, 0.0))?;
    let ne = grid.element_count();
    let phi0 = vec![cfg.volume_fraction; ne];
    let mu0 = mu_initial(cfg.mu_init.unwrap_or(MuInit::Uniform), &grid, cfg.seed);
    let init_state = probe_model.forward(&phi0, &mu0, cfg.schedule.beta_initial)?;
    let reference = init_state.distortion.expect("distortion term is active");
    let bound = cfg.distortion_bound_factor * reference;

    let model = Model::new(spec(Some(bound), 0.0))?;
    let mut x0 = phi0;
    x0.extend(mu0);
    let mut problem = ConcurrentProblem::new(model)?;
    let outcome = drive_concurrent(&mut problem, x0, cfg)?;
    let name = "concurrent";
    let mut dir = RunDir::create(&out_root.join(name))?;
    let metrics = vec![
        ("compliance".to_string(), outcome.state.f0),
        (
            "distortion".to_string(),
            outcome.state.distortion.expect("distortion term is active"),
        ),
        ("distortion_bound".to_string(), bound),
    ];
    let summary = emit_common(&mut dir, cfg, name, &outcome, flags, &grid, metrics, started)?;
    Ok(vec![summary])
}
