//! Plane-stress linear elasticity on the quad grid.
//!
//! One canonical unit-modulus element stiffness serves the complete
//! structure and every intermediate structure; densities only scale it
//! through the penalized modulus interpolation. Loads cover point forces,
//! design-dependent self-weight, and the simplified per-layer eigenstrain
//! (inherent strain) model, whose nodal forces are precomputed for a
//! unit-modulus element and scaled the same way as stiffness.

use crate::band::{BandedCholesky, BandedSystem};
use crate::error::{Error, Result};
use crate::grid::Grid;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy)]
pub struct MaterialModel {
    pub e0: f64,
    pub e_min: f64,
    pub nu: f64,
    pub penal: f64,
}

impl Default for MaterialModel {
    fn default() -> Self {
        MaterialModel {
            e0: 1.0,
            e_min: 1e-9,
            nu: 0.3,
            penal: 3.0,
        }
    }
}

impl MaterialModel {
    pub fn youngs(&self, rho: f64) -> f64 {
        self.e_min + rho.powf(self.penal) * (self.e0 - self.e_min)
    }

    pub fn dyoungs(&self, rho: f64) -> f64 {
        self.penal * rho.powf(self.penal - 1.0) * (self.e0 - self.e_min)
    }
}

fn shape_gradients(xi: f64, eta: f64) -> ([f64; 4], [f64; 4]) {
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
    (dxi, deta)
}

/// Unit-modulus plane-stress stiffness of a square bilinear quad, 2x2 Gauss.
/// Dofs interleave as [x0, y0, .., x3, y3], nodes counterclockwise from
/// bottom-left. Independent of the element size.
pub fn elastic_element_matrix(nu: f64) -> [[f64; 8]; 8] {
    let d = [
        [1.0 / (1.0 - nu * nu), nu / (1.0 - nu * nu), 0.0],
        [nu / (1.0 - nu * nu), 1.0 / (1.0 - nu * nu), 0.0],
        [0.0, 0.0, 0.5 / (1.0 + nu)],
    ];
    let mut ke = [[0.0; 8]; 8];
    let gp = 1.0 / 3.0f64.sqrt();
    for &xi in &[-gp, gp] {
        for &eta in &[-gp, gp] {
            // On a square of side h the Jacobian is (h/2)I, so B carries a
            // 2/h and the area element h^2/4; the h cancels globally and the
            // reference-square gradients can be used directly.
            let (dx, dy) = shape_gradients(xi, eta);
            let mut b = [[0.0; 8]; 3];
            for a in 0..4 {
                b[0][2 * a] = dx[a];
                b[1][2 * a + 1] = dy[a];
                b[2][2 * a] = dy[a];
                b[2][2 * a + 1] = dx[a];
            }
            for i in 0..8 {
                for j in 0..8 {
                    let mut s = 0.0;
                    for r in 0..3 {
                        for c in 0..3 {
                            s += b[r][i] * d[r][c] * b[c][j];
                        }
                    }
                    ke[i][j] += s;
                }
            }
        }
    }
    ke
}

/// Nodal forces of an isotropic contraction eigenstrain -eps0 [1, 1, 0] on a
/// unit-modulus square element of side `h`, same dof layout as the stiffness.
pub fn eigenstrain_element_load(nu: f64, eps0: f64, h: f64) -> [f64; 8] {
    // D e* reduces to -eps0 / (1 - nu) [1, 1, 0]; integrating B^T against a
    // constant stress needs only the mean shape gradients.
    let mut f = [0.0; 8];
    let s = -eps0 / (1.0 - nu);
    let gp = 1.0 / 3.0f64.sqrt();
    for &xi in &[-gp, gp] {
        for &eta in &[-gp, gp] {
            let (dx, dy) = shape_gradients(xi, eta);
            for a in 0..4 {
                // B picks up 2/h, the area element h^2/4; net h/2 per point
                // with unit Gauss weights over four points.
                f[2 * a] += dx[a] * s * h / 2.0;
                f[2 * a + 1] += dy[a] * s * h / 2.0;
            }
        }
    }
    f
}

/// Elastic FEM with homogeneous Dirichlet supports given as fixed dofs
/// (dof = 2 node + component).
#[derive(Debug, Clone)]
pub struct ElasticSystem {
    grid: Grid,
    ke: [[f64; 8]; 8],
    free_of_dof: Vec<usize>,
    free_dofs: Vec<usize>,
    hb: usize,
}

pub struct ElasticFactor {
    factor: BandedCholesky,
}

impl ElasticSystem {
    pub fn new(grid: &Grid, fixed_dofs: &[usize], nu: f64) -> Result<Self> {
        if fixed_dofs.is_empty() {
            return Err(Error::config(
                "elastic system needs at least one supported dof",
            ));
        }
        let ndof = 2 * grid.node_count();
        let mut fixed = vec![false; ndof];
        for &d in fixed_dofs {
            if d >= ndof {
                return Err(Error::config(format!(
                    "fixed dof {d} out of range for {ndof} dofs"
                )));
            }
            fixed[d] = true;
        }
        let mut free_of_dof = vec![usize::MAX; ndof];
        let mut free_dofs = Vec::new();
        for d in 0..ndof {
            if !fixed[d] {
                free_of_dof[d] = free_dofs.len();
                free_dofs.push(d);
            }
        }
        Ok(ElasticSystem {
            grid: grid.clone(),
            ke: elastic_element_matrix(nu),
            free_of_dof,
            free_dofs,
            hb: 2 * (grid.ny() + 2) + 1,
        })
    }

    pub fn dof_count(&self) -> usize {
        2 * self.grid.node_count()
    }

    pub fn free_count(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn element_matrix(&self) -> &[[f64; 8]; 8] {
        &self.ke
    }

    fn element_dofs(&self, e: usize) -> [usize; 8] {
        let nodes = self.grid.element_nodes(e);
        let mut dofs = [0usize; 8];
        for a in 0..4 {
            dofs[2 * a] = 2 * nodes[a];
            dofs[2 * a + 1] = 2 * nodes[a] + 1;
        }
        dofs
    }

    /// Assembles and factorizes the stiffness for the given elemental moduli.
    pub fn factorize(&self, youngs: &[f64]) -> Result<ElasticFactor> {
        assert_eq!(youngs.len(), self.grid.element_count());
        let nf = self.free_dofs.len();
        let mut sys = BandedSystem::new(nf, self.hb.min(nf.saturating_sub(1)));
        for e in 0..self.grid.element_count() {
            let dofs = self.element_dofs(e);
            let ee = youngs[e];
            for a in 0..8 {
                let fa = self.free_of_dof[dofs[a]];
                if fa == usize::MAX {
                    continue;
                }
                for b in 0..8 {
                    let fb = self.free_of_dof[dofs[b]];
                    if fb != usize::MAX {
                        sys.add(fa, fb, ee * self.ke[a][b]);
                    }
                }
            }
        }
        let factor = sys
            .factorize()
            .map_err(|e| Error::numerical(format!("stiffness factorization failed: {e}")))?;
        Ok(ElasticFactor { factor })
    }

    /// Solves K u = f for a full-length load vector; fixed dofs return 0.
    pub fn solve(&self, factor: &ElasticFactor, load: &[f64]) -> Vec<f64> {
        assert_eq!(load.len(), self.dof_count());
        let rhs: Vec<f64> = self.free_dofs.iter().map(|&d| load[d]).collect();
        let uf = factor.factor.solve(&rhs);
        let mut u = vec![0.0; self.dof_count()];
        for (i, &d) in self.free_dofs.iter().enumerate() {
            u[d] = uf[i];
        }
        u
    }

    /// Per-element bilinear products u_e' K1 v_e with the unit-modulus
    /// element stiffness; the kernel of every stiffness-derivative term.
    pub fn element_products(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.dof_count());
        assert_eq!(v.len(), self.dof_count());
        let mut out = vec![0.0; self.grid.element_count()];
        out.par_iter_mut().enumerate().for_each(|(e, o)| {
            let dofs = self.element_dofs(e);
            let mut s = 0.0;
            for a in 0..8 {
                let ua = u[dofs[a]];
                if ua == 0.0 {
                    continue;
                }
                for b in 0..8 {
                    s += ua * self.ke[a][b] * v[dofs[b]];
                }
            }
            *o = s;
        });
        out
    }
}

/// Consistent-lumped gravity load: each element sends
/// `rho_e g h^2 / 4 direction` to each corner node.
pub fn self_weight_load(grid: &Grid, rho_stage: &[f64], g: f64, direction: (f64, f64)) -> Vec<f64> {
    assert_eq!(rho_stage.len(), grid.element_count());
    let mut f = vec![0.0; 2 * grid.node_count()];
    let q = g * grid.h() * grid.h() / 4.0;
    for e in 0..grid.element_count() {
        let w = rho_stage[e] * q;
        if w == 0.0 {
            continue;
        }
        for n in grid.element_nodes(e) {
            f[2 * n] += w * direction.0;
            f[2 * n + 1] += w * direction.1;
        }
    }
    f
}

/// Per-element products `(dF_e/drho_e) . u_e` of the self-weight load for a
/// fixed displacement-like vector, i.e. g h^2/4 sum of corner components
/// along the load direction.
pub fn self_weight_dot(grid: &Grid, u: &[f64], g: f64, direction: (f64, f64)) -> Vec<f64> {
    assert_eq!(u.len(), 2 * grid.node_count());
    let q = g * grid.h() * grid.h() / 4.0;
    let mut out = vec![0.0; grid.element_count()];
    out.par_iter_mut().enumerate().for_each(|(e, o)| {
        let mut s = 0.0;
        for n in grid.element_nodes(e) {
            s += direction.0 * u[2 * n] + direction.1 * u[2 * n + 1];
        }
        *o = q * s;
    });
    out
}

/// Eigenstrain load of one stage: element contributions
/// `E(rho_stage_e) w_e f_hat_e`, where `w` weights the newly deposited
/// material (1 on the newest layer in the discrete case).
pub fn inherent_strain_load(
    grid: &Grid,
    material: &MaterialModel,
    rho_stage: &[f64],
    weights: &[f64],
    eps0: f64,
) -> Vec<f64> {
    assert_eq!(rho_stage.len(), grid.element_count());
    assert_eq!(weights.len(), grid.element_count());
    let fe = eigenstrain_element_load(material.nu, eps0, grid.h());
    let mut f = vec![0.0; 2 * grid.node_count()];
    for e in 0..grid.element_count() {
        let scale = material.youngs(rho_stage[e]) * weights[e];
        if scale == 0.0 {
            continue;
        }
        let nodes = grid.element_nodes(e);
        for a in 0..4 {
            f[2 * nodes[a]] += scale * fe[2 * a];
            f[2 * nodes[a] + 1] += scale * fe[2 * a + 1];
        }
    }
    f
}

/// Per-element products `f_hat_e . u_e` with the unit-modulus eigenstrain
/// nodal forces.
pub fn eigenstrain_dot(grid: &Grid, nu: f64, eps0: f64, u: &[f64]) -> Vec<f64> {
    assert_eq!(u.len(), 2 * grid.node_count());
    let fe = eigenstrain_element_load(nu, eps0, grid.h());
    let mut out = vec![0.0; grid.element_count()];
    out.par_iter_mut().enumerate().for_each(|(e, o)| {
        let nodes = grid.element_nodes(e);
        let mut s = 0.0;
        for a in 0..4 {
            s += fe[2 * a] * u[2 * nodes[a]] + fe[2 * a + 1] * u[2 * nodes[a] + 1];
        }
        *o = s;
    });
    out
}

pub fn compliance(u: &[f64], f: &[f64]) -> f64 {
    assert_eq!(u.len(), f.len());
    u.iter().zip(f).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistortionMode {
    FlatnessY,
    FlatnessX,
    PairRelative,
}

/// One marker group: mean-removed sum of squares of one displacement
/// component over the group's nodes, or the squared difference of a node
/// pair's displacements.
#[derive(Debug, Clone)]
pub struct DistortionGroup {
    pub markers: Vec<usize>,
    pub mode: DistortionMode,
}

impl DistortionGroup {
    fn component(&self) -> usize {
        match self.mode {
            DistortionMode::FlatnessX => 0,
            _ => 1,
        }
    }

    fn measure(&self, u: &[f64]) -> f64 {
        let c = self.component();
        match self.mode {
            DistortionMode::PairRelative => {
                let d = u[2 * self.markers[0] + c] - u[2 * self.markers[1] + c];
                d * d
            }
            _ => {
                let vals: Vec<f64> = self.markers.iter().map(|&n| u[2 * n + c]).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                vals.iter().map(|v| (v - mean) * (v - mean)).sum()
            }
        }
    }

    fn accumulate_gradient(&self, u: &[f64], d: &mut [f64]) {
        let c = self.component();
        match self.mode {
            DistortionMode::PairRelative => {
                let diff = u[2 * self.markers[0] + c] - u[2 * self.markers[1] + c];
                d[2 * self.markers[0] + c] += 2.0 * diff;
                d[2 * self.markers[1] + c] += -2.0 * diff;
            }
            _ => {
                let mean = self
                    .markers
                    .iter()
                    .map(|&n| u[2 * n + c])
                    .sum::<f64>()
                    / self.markers.len() as f64;
                for &n in &self.markers {
                    d[2 * n + c] += 2.0 * (u[2 * n + c] - mean);
                }
            }
        }
    }
}

/// Marker-based distortion of a displacement field: the sum of one or more
/// group measures, so a component can track several geometric features at
/// once (a horizontal and a vertical edge, say).
#[derive(Debug, Clone)]
pub struct DistortionSpec {
    pub groups: Vec<DistortionGroup>,
}

impl DistortionSpec {
    pub fn new(markers: Vec<usize>, mode: DistortionMode) -> Result<Self> {
        DistortionSpec::sum(vec![DistortionGroup { markers, mode }])
    }

    pub fn sum(groups: Vec<DistortionGroup>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::config("distortion needs at least one marker group"));
        }
        for g in &groups {
            if g.markers.len() < 2 {
                return Err(Error::config("distortion needs at least 2 marker nodes"));
            }
            if g.mode == DistortionMode::PairRelative && g.markers.len() != 2 {
                return Err(Error::config(
                    "pair-relative distortion needs exactly 2 marker nodes",
                ));
            }
        }
        Ok(DistortionSpec { groups })
    }

    pub fn measure(&self, u: &[f64]) -> f64 {
        self.groups.iter().map(|g| g.measure(u)).sum()
    }

    /// Full-length dD/dU; zero away from markers. The mean term drops out of
    /// the flatness gradient because the residuals sum to zero.
    pub fn gradient(&self, u: &[f64], ndof: usize) -> Vec<f64> {
        let mut d = vec![0.0; ndof];
        for g in &self.groups {
            g.accumulate_gradient(u, &mut d);
        }
        d
    }
}

#[cfg(test)]
mod elasticity_tests {
    use super::*;
    use crate::grid::{build_grid, BuildPlate};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn element_matrix_matches_classic_constants() {
        let ke = elastic_element_matrix(0.3);
        assert!((ke[0][0] - 0.45 / 0.91).abs() < 1e-14);
        assert!((ke[0][1] - (0.125 + 0.3 / 8.0) / 0.91).abs() < 1e-14);
        for i in 0..8 {
            for j in 0..8 {
                assert!((ke[i][j] - ke[j][i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn element_matrix_annihilates_rigid_modes() {
        let ke = elastic_element_matrix(0.3);
        let tx = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let ty = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        // Rotation u = (-y, x) at corners (0,0) (1,0) (1,1) (0,1).
        let rot = [0.0, 0.0, 0.0, 1.0, -1.0, 1.0, -1.0, 0.0];
        for mode in [tx, ty, rot] {
            for i in 0..8 {
                let r: f64 = (0..8).map(|j| ke[i][j] * mode[j]).sum();
                assert!(r.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn modulus_interpolation_values() {
        let m = MaterialModel::default();
        assert!((m.youngs(0.5) - (1e-9 + 0.125 * (1.0 - 1e-9))).abs() < 1e-18);
        assert!((m.youngs(1.0) - 1.0).abs() < 1e-15);
        assert!((m.youngs(0.0) - 1e-9).abs() < 1e-24);
        let d = 1e-7;
        let fd = (m.youngs(0.7 + d) - m.youngs(0.7 - d)) / (2.0 * d);
        assert!((m.dyoungs(0.7) - fd).abs() < 1e-6);
    }

    /// Independent dense assembly used as the oracle: same physics, separate
    /// code path (B-matrix at each Gauss point, dense matrix, nalgebra).
    fn dense_solve(
        grid: &Grid,
        youngs: &[f64],
        fixed: &[usize],
        load: &[f64],
    ) -> Vec<f64> {
        let nu = 0.3;
        let ndof = 2 * grid.node_count();
        let mut k = DMatrix::<f64>::zeros(ndof, ndof);
        let d = DMatrix::from_row_slice(
            3,
            3,
            &[
                1.0 / (1.0 - nu * nu),
                nu / (1.0 - nu * nu),
                0.0,
                nu / (1.0 - nu * nu),
                1.0 / (1.0 - nu * nu),
                0.0,
                0.0,
                0.0,
                0.5 / (1.0 + nu),
            ],
        );
        let gp = [-(1.0 / 3.0f64.sqrt()), 1.0 / 3.0f64.sqrt()];
        for e in 0..grid.element_count() {
            let nodes = grid.element_nodes(e);
            for &xi in &gp {
                for &eta in &gp {
                    let (dx, dy) = shape_gradients(xi, eta);
                    let mut b = DMatrix::<f64>::zeros(3, 8);
                    for a in 0..4 {
                        b[(0, 2 * a)] = dx[a];
                        b[(1, 2 * a + 1)] = dy[a];
                        b[(2, 2 * a)] = dy[a];
                        b[(2, 2 * a + 1)] = dx[a];
                    }
                    let kel = b.transpose() * &d * &b * youngs[e];
                    for a in 0..4 {
                        for c in 0..2 {
                            for a2 in 0..4 {
                                for c2 in 0..2 {
                                    k[(2 * nodes[a] + c, 2 * nodes[a2] + c2)] +=
                                        kel[(2 * a + c, 2 * a2 + c2)];
                                }
                            }
                        }
                    }
                }
            }
        }
        let keep: Vec<usize> = (0..ndof).filter(|d| !fixed.contains(d)).collect();
        let kr = DMatrix::from_fn(keep.len(), keep.len(), |i, j| k[(keep[i], keep[j])]);
        let fr = DVector::from_fn(keep.len(), |i, _| load[keep[i]]);
        let ur = kr.lu().solve(&fr).unwrap();
        let mut u = vec![0.0; ndof];
        for (i, &dof) in keep.iter().enumerate() {
            u[dof] = ur[i];
        }
        u
    }

    fn left_edge_fixed(grid: &Grid) -> Vec<usize> {
        (0..=grid.ny())
            .flat_map(|iy| {
                let n = grid.node_index(0, iy);
                [2 * n, 2 * n + 1]
            })
            .collect()
    }

    #[test]
    fn solid_cantilever_matches_dense_oracle() {
        let g = build_grid(16, 4, 1.0, BuildPlate::Left).unwrap();
        let fixed = left_edge_fixed(&g);
        let sys = ElasticSystem::new(&g, &fixed, 0.3).unwrap();
        let youngs = vec![1.0; g.element_count()];
        let mut load = vec![0.0; sys.dof_count()];
        load[2 * g.node_index(16, 0) + 1] = -1.0;
        let u = sys.solve(&sys.factorize(&youngs).unwrap(), &load);
        let u_ref = dense_solve(&g, &youngs, &fixed, &load);
        let scale = u_ref.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..u.len() {
            assert!(
                (u[i] - u_ref[i]).abs() <= 1e-10 * scale,
                "dof {i}: {} vs {}",
                u[i],
                u_ref[i]
            );
        }
        let tip = 2 * g.node_index(16, 0) + 1;
        assert!((u[tip] - u_ref[tip]).abs() <= 1e-10 * u_ref[tip].abs());
    }

    #[test]
    fn void_density_scales_displacements_by_modulus_ratio() {
        let g = build_grid(8, 3, 1.0, BuildPlate::Left).unwrap();
        let sys = ElasticSystem::new(&g, &left_edge_fixed(&g), 0.3).unwrap();
        let m = MaterialModel::default();
        let solid: Vec<f64> = vec![m.youngs(1.0); 24];
        let void: Vec<f64> = vec![m.youngs(0.0); 24];
        let mut load = vec![0.0; sys.dof_count()];
        load[2 * g.node_index(8, 3) + 1] = -1.0;
        let tip = 2 * g.node_index(8, 3) + 1;
        let u1 = sys.solve(&sys.factorize(&solid).unwrap(), &load)[tip];
        let u0 = sys.solve(&sys.factorize(&void).unwrap(), &load)[tip];
        assert!((u0 / u1 - m.e0 / m.e_min).abs() < 1e-6 * (m.e0 / m.e_min));
    }

    #[test]
    fn self_weight_lumping_and_conservation() {
        let g = build_grid(4, 3, 0.5, BuildPlate::Bottom).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..1.0)).collect();
        let f = self_weight_load(&g, &rho, 2.0, (0.0, -1.0));
        let total: f64 = f.iter().skip(1).step_by(2).sum();
        let expect = -2.0 * 0.25 * rho.iter().sum::<f64>();
        assert!((total - expect).abs() < 1e-12);
        let fx: f64 = f.iter().step_by(2).map(|v| v.abs()).sum();
        assert_eq!(fx, 0.0);
        assert!(self_weight_load(&g, &vec![0.0; 12], 2.0, (0.0, -1.0))
            .iter()
            .all(|&v| v == 0.0));
        let g1 = build_grid(1, 1, 1.0, BuildPlate::Bottom).unwrap();
        let f1 = self_weight_load(&g1, &[1.0], 1.0, (0.0, -1.0));
        for n in 0..4 {
            assert!((f1[2 * n + 1] + 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn eigenstrain_load_closed_form_and_equilibrium() {
        let nu = 0.3;
        let (eps0, h) = (0.01, 0.7);
        let f = eigenstrain_element_load(nu, eps0, h);
        let s = eps0 * h / (2.0 * (1.0 - nu));
        let expect = [s, s, -s, s, -s, -s, s, -s];
        for i in 0..8 {
            assert!((f[i] - expect[i]).abs() < 1e-15, "dof {i}");
        }
        let (mut fx, mut fy, mut mz) = (0.0, 0.0, 0.0);
        let xy = [(0.0, 0.0), (h, 0.0), (h, h), (0.0, h)];
        for a in 0..4 {
            fx += f[2 * a];
            fy += f[2 * a + 1];
            mz += xy[a].0 * f[2 * a + 1] - xy[a].1 * f[2 * a];
        }
        assert!(fx.abs() < 1e-12 && fy.abs() < 1e-12 && mz.abs() < 1e-12);
    }

    #[test]
    fn unconstrained_element_contracts_stress_free() {
        let g = build_grid(1, 1, 0.8, BuildPlate::Bottom).unwrap();
        let m = MaterialModel::default();
        // Fix just enough dofs to remove rigid modes without constraining
        // the uniform-strain solution: node 0 fully, node 1 vertically.
        let n1 = g.node_index(1, 0);
        let sys = ElasticSystem::new(&g, &[0, 1, 2 * n1 + 1], 0.3).unwrap();
        let load = inherent_strain_load(&g, &m, &[1.0], &[1.0], 0.01);
        let u = sys.solve(&sys.factorize(&[1.0]).unwrap(), &load);
        for iy in 0..=1 {
            for ix in 0..=1 {
                let n = g.node_index(ix, iy);
                let (x, y) = (ix as f64 * 0.8, iy as f64 * 0.8);
                assert!((u[2 * n] - (-0.01 * x)).abs() < 1e-12);
                assert!((u[2 * n + 1] - (-0.01 * y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fixed_strip_eigenstrain_matches_dense_oracle() {
        let g = build_grid(1, 2, 1.0, BuildPlate::Bottom).unwrap();
        let m = MaterialModel::default();
        let fixed: Vec<usize> = g
            .build_plate_nodes()
            .iter()
            .flat_map(|&n| [2 * n, 2 * n + 1])
            .collect();
        let sys = ElasticSystem::new(&g, &fixed, 0.3).unwrap();
        let youngs = vec![1.0; 2];
        // Eigenstrain only on the top element of the two-element stack.
        let load = inherent_strain_load(&g, &m, &[1.0, 1.0], &[0.0, 1.0], 0.01);
        let u = sys.solve(&sys.factorize(&youngs).unwrap(), &load);
        let u_ref = dense_solve(&g, &youngs, &fixed, &load);
        let mut nonzero = false;
        for i in 0..u.len() {
            assert!((u[i] - u_ref[i]).abs() <= 1e-10 * u_ref[i].abs().max(1e-15));
            nonzero |= u[i].abs() > 1e-6;
        }
        assert!(nonzero);
    }

    #[test]
    fn compliance_is_monotone_under_material_addition() {
        let g = build_grid(8, 4, 1.0, BuildPlate::Left).unwrap();
        let sys = ElasticSystem::new(&g, &left_edge_fixed(&g), 0.3).unwrap();
        let m = MaterialModel::default();
        let mut load = vec![0.0; sys.dof_count()];
        load[2 * g.node_index(8, 0) + 1] = -1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let a: Vec<f64> = (0..32).map(|_| rng.gen_range(0.05..0.9)).collect();
            let b: Vec<f64> = a.iter().map(|&v| (v + rng.gen_range(0.0..0.1)).min(1.0)).collect();
            let ya: Vec<f64> = a.iter().map(|&r| m.youngs(r)).collect();
            let yb: Vec<f64> = b.iter().map(|&r| m.youngs(r)).collect();
            let ca = compliance(&sys.solve(&sys.factorize(&ya).unwrap(), &load), &load);
            let cb = compliance(&sys.solve(&sys.factorize(&yb).unwrap(), &load), &load);
            assert!(cb <= ca * (1.0 + 1e-9), "{cb} vs {ca}");
        }
    }

    #[test]
    fn mirrored_problem_mirrors_displacements() {
        let g = build_grid(6, 3, 1.0, BuildPlate::Bottom).unwrap();
        let fixed: Vec<usize> = g
            .build_plate_nodes()
            .iter()
            .flat_map(|&n| [2 * n, 2 * n + 1])
            .collect();
        let sys = ElasticSystem::new(&g, &fixed, 0.3).unwrap();
        let m = MaterialModel::default();
        // Density field symmetric about the vertical midline.
        let mut rho = vec![0.0; 18];
        for ix in 0..6 {
            for iy in 0..3 {
                rho[g.element_index(ix, iy)] = 0.3 + 0.1 * ((ix as f64 - 2.5).abs()) + 0.05 * iy as f64;
            }
        }
        let youngs: Vec<f64> = rho.iter().map(|&r| m.youngs(r)).collect();
        let mut load = vec![0.0; sys.dof_count()];
        load[2 * g.node_index(3, 3) + 1] = -1.0;
        let u = sys.solve(&sys.factorize(&youngs).unwrap(), &load);
        for ix in 0..=6 {
            for iy in 0..=3 {
                let a = g.node_index(ix, iy);
                let b = g.node_index(6 - ix, iy);
                assert!((u[2 * a] + u[2 * b]).abs() < 1e-10);
                assert!((u[2 * a + 1] - u[2 * b + 1]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn compliance_gradient_matches_finite_differences() {
        let g = build_grid(5, 3, 1.0, BuildPlate::Left).unwrap();
        let sys = ElasticSystem::new(&g, &left_edge_fixed(&g), 0.3).unwrap();
        let m = MaterialModel::default();
        let mut load = vec![0.0; sys.dof_count()];
        load[2 * g.node_index(5, 3) + 1] = -1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rho: Vec<f64> = (0..15).map(|_| rng.gen_range(0.3..0.9)).collect();
        let solve_c = |rho: &[f64]| {
            let y: Vec<f64> = rho.iter().map(|&r| m.youngs(r)).collect();
            let u = sys.solve(&sys.factorize(&y).unwrap(), &load);
            compliance(&u, &load)
        };
        let y: Vec<f64> = rho.iter().map(|&r| m.youngs(r)).collect();
        let u = sys.solve(&sys.factorize(&y).unwrap(), &load);
        let energies = sys.element_products(&u, &u);
        let d = 1e-6;
        for &e in &[0usize, 4, 9, 14] {
            let grad = -m.dyoungs(rho[e]) * energies[e];
            let keep = rho[e];
            rho[e] = keep + d;
            let cp = solve_c(&rho);
            rho[e] = keep - d;
            let cm = solve_c(&rho);
            rho[e] = keep;
            let fd = (cp - cm) / (2.0 * d);
            assert!((grad - fd).abs() <= 1e-4 * fd.abs(), "e={e}: {grad} vs {fd}");
        }
    }

    #[test]
    fn distortion_measures_and_gradients() {
        let markers = vec![3usize, 5, 9];
        let spec = DistortionSpec::new(markers.clone(), DistortionMode::FlatnessY).unwrap();
        let mut u = vec![0.0; 24];
        // Rigid translation of all markers leaves the measure at zero.
        for &n in &markers {
            u[2 * n + 1] = 0.8;
        }
        assert!(spec.measure(&u) < 1e-30);
        u[2 * 3 + 1] = 0.0;
        u[2 * 5 + 1] = 1.0;
        u[2 * 9 + 1] = 2.0;
        assert!((spec.measure(&u) - 2.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for mode in [
            DistortionMode::FlatnessY,
            DistortionMode::FlatnessX,
            DistortionMode::PairRelative,
        ] {
            let marks = if mode == DistortionMode::PairRelative {
                vec![2usize, 7]
            } else {
                vec![1usize, 4, 6, 10]
            };
            let spec = DistortionSpec::new(marks, mode).unwrap();
            let u: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // Brute-force re-computation oracle.
            let c = if mode == DistortionMode::FlatnessX { 0 } else { 1 };
            let vals: Vec<f64> = spec.markers.iter().map(|&n| u[2 * n + c]).collect();
            let brute = if mode == DistortionMode::PairRelative {
                (vals[0] - vals[1]) * (vals[0] - vals[1])
            } else {
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                vals.iter().map(|v| (v - mean) * (v - mean)).sum()
            };
            assert!((spec.measure(&u) - brute).abs() < 1e-14);
            let grad = spec.gradient(&u, 24);
            let d = 1e-7;
            for i in 0..24 {
                let mut up = u.clone();
                up[i] += d;
                let mut dn = u.clone();
                dn[i] -= d;
                let fd = (spec.measure(&up) - spec.measure(&dn)) / (2.0 * d);
                assert!((grad[i] - fd).abs() < 1e-6, "mode {mode:?} dof {i}");
            }
        }
    }

    #[test]
    fn configuration_errors_are_reported() {
        let g = build_grid(2, 2, 1.0, BuildPlate::Bottom).unwrap();
        assert!(ElasticSystem::new(&g, &[], 0.3).is_err());
        assert!(ElasticSystem::new(&g, &[999], 0.3).is_err());
        assert!(DistortionSpec::new(vec![1], DistortionMode::FlatnessY).is_err());
        assert!(DistortionSpec::new(vec![1, 2, 3], DistortionMode::PairRelative).is_err());
    }
}
