//! Declarative run configuration: one TOML file per scenario, every field
//! optional except the scenario name. Defaults mirror the experiment
//! presets, so a minimal file is a single line.

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use std::fmt;
use std::path::Path;
use stopt_core::elasticity::MaterialModel;
use stopt_core::projection::ContinuationSchedule;
use stopt_core::BuildPlate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    ValidateInit,
    SequenceOnly,
    Gravity,
    ThermalSequence,
    ThermalConcurrent,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Scenario::ValidateInit => "validate_init",
            Scenario::SequenceOnly => "sequence_only",
            Scenario::Gravity => "gravity",
            Scenario::ThermalSequence => "thermal_sequence",
            Scenario::ThermalConcurrent => "thermal_concurrent",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuInit {
    Random,
    Monotonic,
    Uniform,
}

impl fmt::Display for MuInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            MuInit::Random => "random",
            MuInit::Monotonic => "monotonic",
            MuInit::Uniform => "uniform",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: String,
    out_dir: Option<String>,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    problem: RawProblem,
    #[serde(default)]
    material: RawMaterial,
    #[serde(default)]
    continuation: RawContinuation,
    #[serde(default)]
    run: RawRun,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    nx: Option<usize>,
    ny: Option<usize>,
    h: Option<f64>,
    build_plate: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    n_layers: Option<usize>,
    volume_fraction: Option<f64>,
    drain_beta: Option<f64>,
    filter_radius: Option<f64>,
    kappa_min: Option<f64>,
    mu_init: Option<MuInit>,
    seed: Option<u64>,
    alpha: Option<f64>,
    gravity_magnitude: Option<f64>,
    eigenstrain: Option<f64>,
    epsilon: Option<f64>,
    mask: Option<String>,
    component: Option<String>,
    distortion_bound_factor: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaterial {
    e0: Option<f64>,
    e_min: Option<f64>,
    nu: Option<f64>,
    penal: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContinuation {
    beta_initial: Option<f64>,
    growth: Option<f64>,
    period: Option<usize>,
    beta_max: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    max_iterations: Option<usize>,
    change_tolerance: Option<f64>,
    constraint_tolerance: Option<f64>,
}

/// Fully resolved configuration: every scenario default applied, every
/// value validated.
#[derive(Debug, Clone)]
pub struct Config {
    pub scenario: Scenario,
    pub out_dir: String,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub build_plate: BuildPlate,
    pub n_layers: usize,
    pub volume_fraction: f64,
    pub drain_beta: f64,
    pub filter_radius: f64,
    pub kappa_min: f64,
    /// Conductor-field initialization; None = the scenario's full set.
    pub mu_init: Option<MuInit>,
    pub seed: u64,
    /// Gravity weight; None = the preset sweep.
    pub alpha: Option<f64>,
    pub gravity_magnitude: f64,
    pub eigenstrain: f64,
    /// Neighbor-mean smoothness tolerance of the explicit baseline.
    pub epsilon: f64,
    pub mask: String,
    /// Thermal component; None = all three presets.
    pub component: Option<String>,
    /// Distortion bound as a fraction of the bottom-up baseline measure.
    pub distortion_bound_factor: f64,
    pub material: MaterialModel,
    pub schedule: ContinuationSchedule,
    pub max_iterations: usize,
    pub change_tolerance: f64,
    pub constraint_tolerance: f64,
}

impl Config {
    /// Double the desk-scale resolution (the experiment-native sizes).
    pub fn full_res(&mut self) {
        self.nx *= 2;
        self.ny *= 2;
    }
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let raw: RawConfig = toml::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    resolve(raw)
}

fn resolve(raw: RawConfig) -> Result<Config> {
    let scenario = match raw.scenario.as_str() {
        "validate_init" => Scenario::ValidateInit,
        "sequence_only" => Scenario::SequenceOnly,
        "gravity" => Scenario::Gravity,
        "thermal_sequence" => Scenario::ThermalSequence,
        "thermal_concurrent" => Scenario::ThermalConcurrent,
        other => bail!(
            "scenario: unknown value {other:?}; valid scenarios are \
             validate_init, sequence_only, gravity, thermal_sequence, \
             thermal_concurrent"
        ),
    };

    let (def_nx, def_ny) = default_grid(scenario);
    let nx = raw.grid.nx.unwrap_or(def_nx);
    let ny = raw.grid.ny.unwrap_or(def_ny);
    if nx == 0 || ny == 0 {
        bail!("grid.nx/grid.ny: must be positive");
    }
    let h = raw.grid.h.unwrap_or(1.0);
    if !(h > 0.0) {
        bail!("grid.h: must be positive");
    }
    let build_plate = match raw.grid.build_plate.as_deref() {
        None | Some("bottom") => BuildPlate::Bottom,
        Some("top") => BuildPlate::Top,
        Some("left") => BuildPlate::Left,
        Some("right") => BuildPlate::Right,
        Some(other) => bail!("grid.build_plate: unknown value {other:?}"),
    };

    let n_layers = raw
        .problem
        .n_layers
        .unwrap_or(default_layers(scenario));
    if n_layers == 0 {
        bail!("problem.n_layers: must be at least 1");
    }
    let volume_fraction = raw.problem.volume_fraction.unwrap_or(0.6);
    if !(volume_fraction > 0.0 && volume_fraction <= 1.0) {
        bail!("problem.volume_fraction: must lie in (0, 1]");
    }
    let drain_beta = raw.problem.drain_beta.unwrap_or(0.1);
    if !(drain_beta > 0.0) {
        bail!("problem.drain_beta: must be positive");
    }
    let filter_radius = raw
        .problem
        .filter_radius
        .unwrap_or(default_filter_radius(scenario));
    if !(filter_radius >= 1.0) {
        bail!("problem.filter_radius: must be at least 1 element");
    }
    let kappa_min = raw.problem.kappa_min.unwrap_or(1e-4);
    if !(kappa_min > 0.0 && kappa_min < 1.0) {
        bail!("problem.kappa_min: must lie in (0, 1)");
    }
    let epsilon = raw.problem.epsilon.unwrap_or(1e-6);
    if !(epsilon > 0.0) {
        bail!("problem.epsilon: must be positive");
    }
    let distortion_bound_factor = raw.problem.distortion_bound_factor.unwrap_or(0.5);
    if !(distortion_bound_factor > 0.0) {
        bail!("problem.distortion_bound_factor: must be positive");
    }
    if let Some(a) = raw.problem.alpha {
        if a < 0.0 {
            bail!("problem.alpha: must be nonnegative");
        }
    }
    if let Some(c) = raw.problem.component.as_deref() {
        if !crate::masks::COMPONENTS.contains(&c) {
            bail!(
                "problem.component: unknown value {c:?}; valid components are {}",
                crate::masks::COMPONENTS.join(", ")
            );
        }
    }
    let mask = raw.problem.mask.unwrap_or_else(|| "notched".to_string());
    if mask != "notched" && !crate::masks::COMPONENTS.contains(&mask.as_str()) {
        bail!(
            "problem.mask: unknown value {mask:?}; valid masks are notched, {}",
            crate::masks::COMPONENTS.join(", ")
        );
    }

    let material = MaterialModel {
        e0: raw.material.e0.unwrap_or(1.0),
        e_min: raw.material.e_min.unwrap_or(1e-9),
        nu: raw.material.nu.unwrap_or(0.3),
        penal: raw.material.penal.unwrap_or(3.0),
    };
    if !(material.e0 > 0.0) {
        bail!("material.e0: must be positive");
    }
    if !(material.e_min > 0.0 && material.e_min < material.e0) {
        bail!("material.e_min: must lie in (0, e0)");
    }
    if !(material.nu > -1.0 && material.nu < 0.5) {
        bail!("material.nu: must lie in (-1, 0.5)");
    }

    let schedule = ContinuationSchedule {
        beta_initial: raw.continuation.beta_initial.unwrap_or(8.0),
        growth: raw.continuation.growth.unwrap_or(2.0),
        period: raw.continuation.period.unwrap_or(25),
        beta_max: raw.continuation.beta_max.unwrap_or(64.0),
    };
    if !(schedule.beta_initial > 0.0) {
        bail!("continuation.beta_initial: must be positive");
    }
    if !(schedule.growth > 1.0) {
        bail!("continuation.growth: must exceed 1");
    }
    if schedule.period == 0 {
        bail!("continuation.period: must be positive");
    }
    if schedule.beta_max < schedule.beta_initial {
        bail!("continuation.beta_max: must be at least beta_initial");
    }

    let max_iterations = raw.run.max_iterations.unwrap_or(500);
    if max_iterations == 0 {
        bail!("run.max_iterations: must be positive");
    }
    let change_tolerance = raw.run.change_tolerance.unwrap_or(1e-3);
    let constraint_tolerance = raw.run.constraint_tolerance.unwrap_or(1e-6);
    if !(change_tolerance > 0.0) || !(constraint_tolerance > 0.0) {
        bail!("run tolerances must be positive");
    }

    Ok(Config {
        scenario,
        out_dir: raw
            .out_dir
            .unwrap_or_else(|| format!("runs/{scenario}", scenario = scenario_slug(scenario))),
        nx,
        ny,
        h,
        build_plate,
        n_layers,
        volume_fraction,
        drain_beta,
        filter_radius,
        kappa_min,
        mu_init: raw.problem.mu_init,
        seed: raw.problem.seed.unwrap_or(7),
        alpha: raw.problem.alpha,
        gravity_magnitude: raw.problem.gravity_magnitude.unwrap_or(2.5e-4),
        eigenstrain: raw.problem.eigenstrain.unwrap_or(0.01),
        epsilon,
        mask,
        component: raw.problem.component,
        distortion_bound_factor,
        material,
        schedule,
        max_iterations,
        change_tolerance,
        constraint_tolerance,
    })
}

fn scenario_slug(scenario: Scenario) -> String {
    scenario.to_string()
}

fn default_grid(scenario: Scenario) -> (usize, usize) {
    match scenario {
        Scenario::ValidateInit | Scenario::Gravity | Scenario::ThermalConcurrent => (105, 70),
        // Fixed-layout scenarios take their grids from the mask presets;
        // these are placeholders for validation.
        Scenario::SequenceOnly => (48, 40),
        Scenario::ThermalSequence => (105, 70),
    }
}

fn default_layers(scenario: Scenario) -> usize {
    match scenario {
        Scenario::SequenceOnly => 10,
        _ => 20,
    }
}

fn default_filter_radius(scenario: Scenario) -> f64 {
    match scenario {
        Scenario::SequenceOnly => 2.5,
        _ => 2.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config> {
        resolve(toml::from_str(text).map_err(anyhow::Error::from)?)
    }

    #[test]
    fn minimal_config_resolves_experiment_defaults() {
        let cfg = parse("scenario = \"validate_init\"").unwrap();
        assert_eq!(cfg.n_layers, 20);
        assert_eq!(cfg.volume_fraction, 0.6);
        assert_eq!(cfg.drain_beta, 0.1);
        assert_eq!(cfg.material.e0, 1.0);
        assert_eq!(cfg.material.nu, 0.3);
        assert_eq!((cfg.nx, cfg.ny), (105, 70));
    }

    #[test]
    fn unknown_scenario_lists_the_valid_ones() {
        let err = parse("scenario = \"quench\"").unwrap_err().to_string();
        assert!(err.contains("unknown value"));
        assert!(err.contains("validate_init"));
        assert!(err.contains("thermal_concurrent"));
    }

    #[test]
    fn schema_violations_name_the_field() {
        let err = parse("scenario = \"gravity\"\n[problem]\nvolume_fraction = 1.5")
            .unwrap_err()
            .to_string();
        assert!(err.contains("volume_fraction"));

        let err = parse("scenario = \"gravity\"\n[grid]\nbuild_plate = \"core\"")
            .unwrap_err()
            .to_string();
        assert!(err.contains("build_plate"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("scenario = \"gravity\"\nturbo = true").is_err());
    }

    #[test]
    fn full_res_doubles_the_grid() {
        let mut cfg = parse("scenario = \"validate_init\"").unwrap();
        cfg.full_res();
        assert_eq!((cfg.nx, cfg.ny), (210, 140));
    }
}
