//! Forward analysis pipeline: design fields in, all responses out.
//!
//! One evaluation runs filter and projection to obtain the density, solves
//! the virtual heat problem for the pseudo-time field, projects the time
//! field into the staged intermediate densities, and then solves whichever
//! mechanical problems the active scenario terms request: the complete
//! structure under its service load, each intermediate structure under
//! self-weight, and the staged eigenstrain accumulation whose final
//! displacement feeds the distortion measure.

use crate::elasticity::{
    self, compliance, DistortionSpec, ElasticFactor, ElasticSystem, MaterialModel,
};
use crate::error::{Error, Result};
use crate::filter::DensityFilter;
use crate::grid::Grid;
use crate::heat::{conductivity_field, drain_rate, HeatSolution, HeatSystem};
use crate::projection::{heaviside_project, heaviside_up};
use crate::sequence::layer_volume_constraints;
use rayon::prelude::*;

pub const GRAVITY_DIRECTION: (f64, f64) = (0.0, -1.0);

/// Which response terms a scenario activates.
#[derive(Debug, Clone, Default)]
pub struct Terms {
    /// Final-structure compliance under the service load enters the
    /// objective.
    pub compliance: bool,
    /// Weight of the summed intermediate self-weight compliances; 0 = off.
    pub gravity_alpha: f64,
    /// Staged eigenstrain distortion enters the objective with this weight.
    pub distortion_weight: f64,
    /// Staged eigenstrain distortion bounded as a constraint.
    pub distortion_bound: Option<f64>,
    /// Squared normalized per-stage volume deviations enter the objective.
    pub sequence_deviation: bool,
    /// Per-layer volume budgets g_1..g_N imposed as optimizer constraints.
    pub layer_constraints: bool,
}

impl Terms {
    pub fn needs_eigenstrain(&self) -> bool {
        self.distortion_weight != 0.0 || self.distortion_bound.is_some()
    }
}

/// Problem definition for [`Model::new`].
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub grid: Grid,
    pub n_layers: usize,
    /// Absolute volume budget for g0 and the per-stage shares.
    pub v0: f64,
    pub filter_radius: f64,
    pub material: MaterialModel,
    pub kappa_min: f64,
    pub drain_beta: f64,
    /// Characteristic length for the drain rate; build-axis extent when
    /// absent.
    pub char_length: Option<f64>,
    /// Design mask; None = full rectangle.
    pub mask: Option<Vec<bool>>,
    /// Layout is the mask itself (sequence-only scenarios): density is not
    /// a design field.
    pub fixed_layout: bool,
    /// Fixed dofs of the final structure's supports.
    pub supports: Vec<usize>,
    /// Point loads (dof, value) of the final structure.
    pub loads: Vec<(usize, f64)>,
    /// Gravity magnitude (force per volume) for self-weight stages.
    pub gravity: f64,
    /// Eigenstrain magnitude for the staged inherent-strain model.
    pub eps0: f64,
    pub distortion: Option<DistortionSpec>,
    pub terms: Terms,
}

pub struct Model {
    spec: ModelSpec,
    filter: DensityFilter,
    heat: HeatSystem,
    /// Final-structure system (scenario supports); present when compliance
    /// is active.
    final_system: Option<ElasticSystem>,
    final_load: Vec<f64>,
    /// Intermediate-structure system: build plate fully fixed.
    stage_system: Option<ElasticSystem>,
    fixed_rho: Option<Vec<f64>>,
}

/// Everything produced by one forward evaluation, in the exact form the
/// sensitivity assembly consumes.
pub struct ForwardState {
    pub beta: f64,
    pub phi_tilde: Option<Vec<f64>>,
    pub rho: Vec<f64>,
    pub mu: Vec<f64>,
    pub kappa: Vec<f64>,
    pub heat: Option<HeatSolution>,
    /// Pseudo-time field actually used (heat solution or explicit).
    pub time: Vec<f64>,
    /// Stage projections `H(t; eta_j)` before density multiplication.
    pub stage_proj: Vec<Vec<f64>>,
    /// Intermediate densities `rho . stage_proj[j]`.
    pub stage_rho: Vec<Vec<f64>>,
    pub final_u: Option<Vec<f64>>,
    pub f0: f64,
    /// Self-weight stage displacements and loads (empty when alpha = 0).
    pub sw_u: Vec<Vec<f64>>,
    pub sw_load: Vec<Vec<f64>>,
    pub sw_f: Vec<f64>,
    /// Eigenstrain stage displacements, their factorizations, and the
    /// accumulated displacement (empty/None when distortion is off).
    pub eig_u: Vec<Vec<f64>>,
    pub eig_factors: Vec<ElasticFactor>,
    pub u_acc: Option<Vec<f64>>,
    pub distortion: Option<f64>,
    pub g0: f64,
    pub gj: Vec<f64>,
    pub objective: f64,
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        if spec.n_layers == 0 {
            return Err(Error::config("layer count must be at least 1"));
        }
        if spec.terms.needs_eigenstrain() && spec.distortion.is_none() {
            return Err(Error::config(
                "distortion term requested without marker specification",
            ));
        }
        let filter = DensityFilter::with_mask(&spec.grid, spec.filter_radius, spec.mask.as_deref())?;
        let lc = spec
            .char_length
            .unwrap_or_else(|| spec.grid.build_axis_extent());
        let heat = HeatSystem::new(&spec.grid, spec.kappa_min, drain_rate(spec.drain_beta, lc))?;
        let ndof = 2 * spec.grid.node_count();

        let final_system = if spec.terms.compliance {
            Some(ElasticSystem::new(
                &spec.grid,
                &spec.supports,
                spec.material.nu,
            )?)
        } else {
            None
        };
        let mut final_load = vec![0.0; ndof];
        for &(dof, v) in &spec.loads {
            if dof >= ndof {
                return Err(Error::config(format!("load dof {dof} out of range")));
            }
            final_load[dof] += v;
        }
        if spec.terms.compliance && final_load.iter().all(|&v| v == 0.0) {
            return Err(Error::config("compliance objective with zero load"));
        }

        let stage_system = if spec.terms.gravity_alpha != 0.0 || spec.terms.needs_eigenstrain() {
            let plate_fixed: Vec<usize> = spec
                .grid
                .build_plate_nodes()
                .iter()
                .flat_map(|&n| [2 * n, 2 * n + 1])
                .collect();
            Some(ElasticSystem::new(
                &spec.grid,
                &plate_fixed,
                spec.material.nu,
            )?)
        } else {
            None
        };

        let fixed_rho = if spec.fixed_layout {
            let mask = spec.mask.as_ref().ok_or_else(|| {
                Error::config("fixed layout requires a design mask")
            })?;
            Some(mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect())
        } else {
            None
        };

        Ok(Model {
            spec,
            filter,
            heat,
            final_system,
            final_load,
            stage_system,
            fixed_rho,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.spec.grid
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn filter(&self) -> &DensityFilter {
        &self.filter
    }

    pub fn heat_system(&self) -> &HeatSystem {
        &self.heat
    }

    pub fn stage_elastic_system(&self) -> Option<&ElasticSystem> {
        self.stage_system.as_ref()
    }

    pub fn final_elastic_system(&self) -> Option<&ElasticSystem> {
        self.final_system.as_ref()
    }

    pub fn final_load(&self) -> &[f64] {
        &self.final_load
    }

    pub fn n_layers(&self) -> usize {
        self.spec.n_layers
    }

    pub fn eta(&self, j: usize) -> f64 {
        j as f64 / self.spec.n_layers as f64
    }

    pub fn fixed_rho(&self) -> Option<&[f64]> {
        self.fixed_rho.as_deref()
    }

    /// Physical density from the raw design field at sharpness `beta`.
    pub fn density(&self, phi: &[f64], beta: f64) -> (Vec<f64>, Vec<f64>) {
        let phi_tilde = self.filter.apply(phi);
        let rho = phi_tilde
            .iter()
            .map(|&v| heaviside_up(v, beta, 0.5))
            .collect();
        (phi_tilde, rho)
    }

    /// Full evaluation for design variables. `phi` is ignored (may be
    /// empty) for fixed layouts.
    pub fn forward(&self, phi: &[f64], mu: &[f64], beta: f64) -> Result<ForwardState> {
        let (phi_tilde, rho) = if let Some(fixed) = &self.fixed_rho {
            (None, fixed.clone())
        } else {
            let (ft, rho) = self.density(phi, beta);
            (Some(ft), rho)
        };
        let kappa = conductivity_field(&rho, mu, self.heat.kappa_min());
        let heat = self.heat.solve(&kappa)?;
        let time = heat.time.clone();
        self.analyze(phi_tilde, rho, mu.to_vec(), kappa, Some(heat), time, beta)
    }

    /// Evaluation against an explicitly supplied pseudo-time field,
    /// bypassing the heat regularizer (baseline formulation, fixed
    /// reference sequences).
    pub fn forward_with_time(&self, rho: &[f64], t: &[f64], beta: f64) -> Result<ForwardState> {
        self.analyze(
            None,
            rho.to_vec(),
            Vec::new(),
            Vec::new(),
            None,
            t.to_vec(),
            beta,
        )
    }

    fn analyze(
        &self,
        phi_tilde: Option<Vec<f64>>,
        rho: Vec<f64>,
        mu: Vec<f64>,
        kappa: Vec<f64>,
        heat: Option<HeatSolution>,
        time: Vec<f64>,
        beta: f64,
    ) -> Result<ForwardState> {
        let n = self.spec.n_layers;
        let ne = self.spec.grid.element_count();
        assert_eq!(rho.len(), ne);
        assert_eq!(time.len(), ne);

        let stage_proj: Vec<Vec<f64>> = (1..=n)
            .map(|j| {
                let eta = self.eta(j);
                time.iter()
                    .map(|&te| heaviside_project(te, beta, eta))
                    .collect()
            })
            .collect();
        let stage_rho: Vec<Vec<f64>> = stage_proj
            .iter()
            .map(|p| p.iter().zip(&rho).map(|(&pe, &re)| pe * re).collect())
            .collect();

        let (g0, gj) = layer_volume_constraints(&self.spec.grid, &rho, &stage_rho, self.spec.v0)?;

        let mut f0 = 0.0;
        let mut final_u = None;
        if let Some(sys) = &self.final_system {
            let youngs: Vec<f64> = rho.iter().map(|&r| self.spec.material.youngs(r)).collect();
            let u = sys.solve(&sys.factorize(&youngs)?, &self.final_load);
            f0 = compliance(&u, &self.final_load);
            final_u = Some(u);
        }

        let mut sw_u = Vec::new();
        let mut sw_load = Vec::new();
        let mut sw_f = Vec::new();
        if self.spec.terms.gravity_alpha != 0.0 {
            let sys = self.stage_system.as_ref().unwrap();
            let mut results: Vec<Result<(Vec<f64>, Vec<f64>, f64)>> =
                (0..n).map(|_| Ok((Vec::new(), Vec::new(), 0.0))).collect();
            results.par_iter_mut().enumerate().for_each(|(k, slot)| {
                *slot = (|| {
                    let rj = &stage_rho[k];
                    let youngs: Vec<f64> =
                        rj.iter().map(|&r| self.spec.material.youngs(r)).collect();
                    let load = elasticity::self_weight_load(
                        &self.spec.grid,
                        rj,
                        self.spec.gravity,
                        GRAVITY_DIRECTION,
                    );
                    let u = sys.solve(&sys.factorize(&youngs)?, &load);
                    let c = compliance(&u, &load);
                    Ok((u, load, c))
                })();
            });
            for r in results {
                let (u, load, c) = r?;
                sw_u.push(u);
                sw_load.push(load);
                sw_f.push(c);
            }
        }

        let mut eig_u = Vec::new();
        let mut eig_factors = Vec::new();
        let mut u_acc = None;
        let mut distortion = None;
        if self.spec.terms.needs_eigenstrain() {
            let sys = self.stage_system.as_ref().unwrap();
            let mut results: Vec<Result<(Vec<f64>, ElasticFactor)>> = (0..n)
                .map(|_| Err(Error::numerical("stage not solved")))
                .collect();
            results.par_iter_mut().enumerate().for_each(|(k, slot)| {
                *slot = (|| {
                    let rj = &stage_rho[k];
                    let prev: Option<&Vec<f64>> = if k == 0 { None } else { Some(&stage_rho[k - 1]) };
                    let weights: Vec<f64> = (0..ne)
                        .map(|e| rj[e] - prev.map_or(0.0, |p| p[e]))
                        .collect();
                    let youngs: Vec<f64> =
                        rj.iter().map(|&r| self.spec.material.youngs(r)).collect();
                    let load = elasticity::inherent_strain_load(
                        &self.spec.grid,
                        &self.spec.material,
                        rj,
                        &weights,
                        self.spec.eps0,
                    );
                    let factor = sys.factorize(&youngs)?;
                    let u = sys.solve(&factor, &load);
                    Ok((u, factor))
                })();
            });
            let ndof = 2 * self.spec.grid.node_count();
            let mut acc = vec![0.0; ndof];
            for r in results {
                let (u, factor) = r?;
                for (a, &v) in acc.iter_mut().zip(&u) {
                    *a += v;
                }
                eig_u.push(u);
                eig_factors.push(factor);
            }
            let spec = self.spec.distortion.as_ref().unwrap();
            distortion = Some(spec.measure(&acc));
            u_acc = Some(acc);
        }

        let mut objective = 0.0;
        if self.spec.terms.compliance {
            objective += f0;
        }
        objective += self.spec.terms.gravity_alpha * sw_f.iter().sum::<f64>();
        if let Some(d) = distortion {
            objective += self.spec.terms.distortion_weight * d;
        }
        if self.spec.terms.sequence_deviation {
            let v0 = self.spec.v0;
            objective += gj.iter().map(|&g| (g / v0) * (g / v0)).sum::<f64>();
        }

        Ok(ForwardState {
            beta,
            phi_tilde,
            rho,
            mu,
            kappa,
            heat,
            time,
            stage_proj,
            stage_rho,
            final_u,
            f0,
            sw_u,
            sw_load,
            sw_f,
            eig_u,
            eig_factors,
            u_acc,
            distortion,
            g0,
            gj,
            objective,
        })
    }
}
