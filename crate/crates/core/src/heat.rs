//! Virtual steady-state heat problem that generates the pseudo-time field.
//!
//! The build plate is held at unit temperature and every element drains heat
//! at a uniform volumetric rate, so temperature decays with distance from
//! the plate, fastest through poorly conducting (void) regions. Conductivity
//! follows the current structure, which makes the resulting elemental time
//! field `t = 1 - tau` a smooth, design-differentiable stand-in for a
//! fabrication schedule: material near the plate carries small `t`, material
//! reachable only through long structural paths carries large `t`.

use crate::band::{BandedCholesky, BandedSystem};
use crate::error::{Error, Result};
use crate::grid::Grid;
use rayon::prelude::*;

pub const DEFAULT_KAPPA_MIN: f64 = 1e-4;
pub const DEFAULT_DRAIN_BETA: f64 = 0.1;

/// Volumetric drain coefficient from the dimensionless rate `beta` and the
/// characteristic length of the build direction.
pub fn drain_rate(beta: f64, characteristic_length: f64) -> f64 {
    beta / (characteristic_length * characteristic_length)
}

/// Elemental conductivity: floor plus structure-weighted remainder, where
/// `mu` is the raw process variable and `rho` the physical density.
pub fn conductivity_field(rho: &[f64], mu: &[f64], kappa_min: f64) -> Vec<f64> {
    assert_eq!(rho.len(), mu.len());
    rho.iter()
        .zip(mu)
        .map(|(&r, &m)| kappa_min + (1.0 - kappa_min) * r * m)
        .collect()
}

/// Conduction matrix of a unit-conductivity square bilinear quad, integrated
/// with 2x2 Gauss quadrature. Independent of the element size.
pub fn conduction_element_matrix() -> [[f64; 4]; 4] {
    let mut ke = [[0.0; 4]; 4];
    let gp = 1.0 / 3.0f64.sqrt();
    for &xi in &[-gp, gp] {
        for &eta in &[-gp, gp] {
            // Shape function gradients on the reference square, nodes
            // counterclockwise from bottom-left.
            let dxi = [
                -(1.0 - eta) / 4.0,
                (1.0 - eta) / 4.0,
                (1.0 + eta) / 4.0,
                -(1.0 + eta) / 4.0,
            ];
            let deta = [
                -(1.0 - xi) / 4.0,
                -(1.0 + xi) / 4.0,
                (1.0 + xi) / 4.0,
                (1.0 - xi) / 4.0,
            ];
            for i in 0..4 {
                for j in 0..4 {
                    ke[i][j] += dxi[i] * dxi[j] + deta[i] * deta[j];
                }
            }
        }
    }
    ke
}

/// Averages nodal values onto elements (corner mean).
pub fn nodal_to_elemental(grid: &Grid, nodal: &[f64]) -> Vec<f64> {
    assert_eq!(nodal.len(), grid.node_count());
    let mut out = vec![0.0; grid.element_count()];
    out.par_iter_mut().enumerate().for_each(|(e, o)| {
        let nodes = grid.element_nodes(e);
        *o = nodes.iter().map(|&n| nodal[n]).sum::<f64>() / 4.0;
    });
    out
}

#[derive(Debug, Clone)]
pub struct HeatSystem {
    grid: Grid,
    kappa_min: f64,
    drain: f64,
    ke: [[f64; 4]; 4],
    /// Node index -> free equation index, or usize::MAX on the plate.
    free_of_node: Vec<usize>,
    free_nodes: Vec<usize>,
    hb: usize,
}

/// Factorized state of one heat solve, reused by every adjoint against the
/// same conductivity.
pub struct HeatSolution {
    factor: BandedCholesky,
    /// Full nodal temperature, including unit plate values.
    pub temperature: Vec<f64>,
    /// Elemental temperature (corner mean).
    pub tau: Vec<f64>,
    /// Elemental pseudo-time `1 - tau`.
    pub time: Vec<f64>,
}

impl HeatSystem {
    pub fn new(grid: &Grid, kappa_min: f64, drain: f64) -> Result<Self> {
        if !(kappa_min > 0.0) || kappa_min >= 1.0 {
            return Err(Error::config(format!(
                "conductivity floor must lie in (0, 1), got {kappa_min}"
            )));
        }
        if drain < 0.0 || !drain.is_finite() {
            return Err(Error::config(format!(
                "drain rate must be nonnegative, got {drain}"
            )));
        }
        let mut free_of_node = vec![usize::MAX; grid.node_count()];
        let mut free_nodes = Vec::new();
        let mut on_plate = vec![false; grid.node_count()];
        for &n in grid.build_plate_nodes() {
            on_plate[n] = true;
        }
        for n in 0..grid.node_count() {
            if !on_plate[n] {
                free_of_node[n] = free_nodes.len();
                free_nodes.push(n);
            }
        }
        // Free indices inherit node ordering, so the bandwidth bound of the
        // node numbering carries over.
        let hb = grid.ny() + 2;
        Ok(HeatSystem {
            grid: grid.clone(),
            kappa_min,
            drain,
            ke: conduction_element_matrix(),
            free_of_node,
            free_nodes,
            hb,
        })
    }

    pub fn kappa_min(&self) -> f64 {
        self.kappa_min
    }

    pub fn drain(&self) -> f64 {
        self.drain
    }

    pub fn free_count(&self) -> usize {
        self.free_nodes.len()
    }

    fn assemble(&self, kappa: &[f64]) -> (BandedSystem, Vec<f64>) {
        let g = &self.grid;
        assert_eq!(kappa.len(), g.element_count());
        let nf = self.free_nodes.len();
        let mut sys = BandedSystem::new(nf, self.hb.min(nf.saturating_sub(1)));
        let mut rhs = vec![0.0; nf];
        let lumped = self.drain * g.h() * g.h() / 4.0;
        for e in 0..g.element_count() {
            let nodes = g.element_nodes(e);
            let k = kappa[e];
            for a in 0..4 {
                let fa = self.free_of_node[nodes[a]];
                if fa == usize::MAX {
                    continue;
                }
                sys.add(fa, fa, lumped);
                for b in 0..4 {
                    let v = k * self.ke[a][b];
                    let fb = self.free_of_node[nodes[b]];
                    if fb == usize::MAX {
                        // Dirichlet lifting with unit plate temperature.
                        rhs[fa] -= v;
                    } else {
                        sys.add(fa, fb, v);
                    }
                }
            }
        }
        (sys, rhs)
    }

    pub fn solve(&self, kappa: &[f64]) -> Result<HeatSolution> {
        let (sys, rhs) = self.assemble(kappa);
        let factor = sys.factorize()?;
        let tf = factor.solve(&rhs);
        let mut temperature = vec![1.0; self.grid.node_count()];
        for (i, &n) in self.free_nodes.iter().enumerate() {
            temperature[n] = tf[i];
        }
        let tau = nodal_to_elemental(&self.grid, &temperature);
        let time = tau.iter().map(|&v| 1.0 - v).collect();
        Ok(HeatSolution {
            factor,
            temperature,
            tau,
            time,
        })
    }

    /// Solves the adjoint equation for a functional with elemental partial
    /// derivative `dfdt` with respect to the pseudo-time field. Returns the
    /// full nodal multiplier, zero on the plate.
    pub fn adjoint(&self, sol: &HeatSolution, dfdt: &[f64]) -> Vec<f64> {
        assert_eq!(dfdt.len(), self.grid.element_count());
        let g = &self.grid;
        let mut rhs = vec![0.0; self.free_nodes.len()];
        for e in 0..g.element_count() {
            // d tau_e / d T_n = 1/4 at the element corners and t = 1 - tau,
            // so the nodal right-hand side gathers +dfdt/4.
            for n in g.element_nodes(e) {
                let f = self.free_of_node[n];
                if f != usize::MAX {
                    rhs[f] += dfdt[e] / 4.0;
                }
            }
        }
        let lf = sol.factor.solve(&rhs);
        let mut lambda = vec![0.0; g.node_count()];
        for (i, &n) in self.free_nodes.iter().enumerate() {
            lambda[n] = lf[i];
        }
        lambda
    }

    /// Adjoint solves for several functionals against one factorization.
    pub fn adjoint_many(&self, sol: &HeatSolution, dfdt_list: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = vec![Vec::new(); dfdt_list.len()];
        out.par_iter_mut().enumerate().for_each(|(i, slot)| {
            *slot = self.adjoint(sol, &dfdt_list[i]);
        });
        out
    }

    /// Elemental bilinear products `s_e = lambda_e' K_c T_e` with the unit
    /// conduction matrix. The chain rules for both design fields reuse them:
    /// `df/dmu_e = (1 - kappa_min) rho_e s_e` and the conductivity part of
    /// `df/drho_e` is `(1 - kappa_min) mu_e s_e`.
    pub fn design_products(&self, lambda: &[f64], temperature: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        assert_eq!(lambda.len(), g.node_count());
        assert_eq!(temperature.len(), g.node_count());
        let mut out = vec![0.0; g.element_count()];
        out.par_iter_mut().enumerate().for_each(|(e, o)| {
            let nodes = g.element_nodes(e);
            let mut s = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    s += lambda[nodes[a]] * self.ke[a][b] * temperature[nodes[b]];
                }
            }
            *o = s;
        });
        out
    }
}
