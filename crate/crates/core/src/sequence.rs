//! Fabrication sequences over the element grid.
//!
//! A sequence is an elemental pseudo-time field in [0, 1]. This module
//! projects it into intermediate densities, partitions it into layers,
//! checks the two admissibility rules (no material deposited in midair, none
//! deposited into an enclosed cavity), constructs Euclidean and geodesic
//! initial fields, and evaluates the explicit neighbor-mean smoothness
//! constraint used by the baseline formulation.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::projection::heaviside_project;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Density of the intermediate structure at threshold `eta`:
/// `rho_e * H(t_e)` with the decreasing projection.
pub fn intermediate_density(rho: &[f64], t: &[f64], eta: f64, beta_t: f64) -> Vec<f64> {
    assert_eq!(rho.len(), t.len());
    rho.iter()
        .zip(t)
        .map(|(&r, &te)| r * heaviside_project(te, beta_t, eta))
        .collect()
}

/// Layer index per element: `j` when `t` falls in [ (j-1)/n, j/n ), with
/// `t = 1` closed into layer `n`. Elements outside the mask get 0.
pub fn extract_layers(t: &[f64], n: usize, solid_mask: &[bool]) -> Vec<usize> {
    assert!(n >= 1);
    assert_eq!(t.len(), solid_mask.len());
    t.iter()
        .zip(solid_mask)
        .map(|(&te, &solid)| {
            if !solid {
                0
            } else {
                ((te * n as f64).floor() as usize + 1).min(n)
            }
        })
        .collect()
}

/// Violations of the two sequence admissibility rules.
#[derive(Debug, Clone, Default)]
pub struct ValidityReport {
    /// Solid elements outside the starting set whose time is strictly below
    /// every in-mask edge neighbor (deposited in midair). Isolated elements
    /// count as violations.
    pub interior_minima: Vec<usize>,
    /// Solid elements with four solid edge neighbors whose time strictly
    /// exceeds all of them (deposited into an enclosed cavity).
    pub enclosed_maxima: Vec<usize>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.interior_minima.is_empty() && self.enclosed_maxima.is_empty()
    }

    pub fn violation_count(&self) -> usize {
        self.interior_minima.len() + self.enclosed_maxima.len()
    }
}

/// Scans the time field for admissibility violations. Comparisons are
/// strict with a 1e-9 tolerance, so plateaus and ties never flag. `s0`
/// marks elements allowed to start on the plate (exempt from the minimum
/// rule); the boundary set for the maximum rule is derived from the mask:
/// any element with fewer than four solid edge neighbors is exempt.
pub fn check_sequence_validity(
    grid: &Grid,
    t: &[f64],
    solid_mask: &[bool],
    s0: &[bool],
) -> ValidityReport {
    const TOL: f64 = 1e-9;
    assert_eq!(t.len(), grid.element_count());
    assert_eq!(solid_mask.len(), grid.element_count());
    assert_eq!(s0.len(), grid.element_count());
    let mut report = ValidityReport::default();
    for e in 0..grid.element_count() {
        if !solid_mask[e] {
            continue;
        }
        let mut nmin = f64::INFINITY;
        let mut nmax = f64::NEG_INFINITY;
        let mut solid_neighbors = 0usize;
        for k in grid.neighbors4(e) {
            if solid_mask[k] {
                solid_neighbors += 1;
                nmin = nmin.min(t[k]);
                nmax = nmax.max(t[k]);
            }
        }
        if !s0[e] && (solid_neighbors == 0 || t[e] < nmin - TOL) {
            report.interior_minima.push(e);
        }
        if solid_neighbors == 4 && t[e] > nmax + TOL {
            report.enclosed_maxima.push(e);
        }
    }
    report
}

/// Plate-adjacent solid elements: the canonical starting set.
pub fn plate_seed_elements(grid: &Grid, solid_mask: &[bool]) -> Vec<bool> {
    let mut s0 = vec![false; grid.element_count()];
    for &e in grid.build_plate_elements() {
        if solid_mask[e] {
            s0[e] = true;
        }
    }
    s0
}

/// Straight-line distance to the build plate, zero on plate-adjacent
/// elements, normalized so the farthest solid element reads 1. Void
/// elements read 1 by convention.
pub fn euclidean_distance_field(grid: &Grid, solid_mask: &[bool]) -> Vec<f64> {
    assert_eq!(solid_mask.len(), grid.element_count());
    let mut dmax = 0.0f64;
    for e in 0..grid.element_count() {
        if solid_mask[e] {
            dmax = dmax.max(grid.element_plate_offset(e));
        }
    }
    let scale = if dmax > 0.0 { dmax } else { 1.0 };
    (0..grid.element_count())
        .map(|e| {
            if solid_mask[e] {
                grid.element_plate_offset(e) / scale
            } else {
                1.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    d: f64,
    e: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (distance, element index) for deterministic tie order.
        other
            .d
            .total_cmp(&self.d)
            .then_with(|| other.e.cmp(&self.e))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path distance to the build plate measured inside the solid,
/// over 8-connected element adjacency with axis weight h and diagonal
/// weight h sqrt(2). Normalized by the largest finite distance; void and
/// unreachable elements read 1, the latter also being reported.
pub fn geodesic_distance_field(grid: &Grid, solid_mask: &[bool]) -> (Vec<f64>, Vec<usize>) {
    assert_eq!(solid_mask.len(), grid.element_count());
    let n = grid.element_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    for &e in grid.build_plate_elements() {
        if solid_mask[e] {
            dist[e] = 0.0;
            heap.push(HeapEntry { d: 0.0, e });
        }
    }
    while let Some(HeapEntry { d, e }) = heap.pop() {
        if d > dist[e] {
            continue;
        }
        for (k, w) in grid.neighbors8(e) {
            if !solid_mask[k] {
                continue;
            }
            let nd = d + w;
            if nd < dist[k] {
                dist[k] = nd;
                heap.push(HeapEntry { d: nd, e: k });
            }
        }
    }
    let mut dmax = 0.0f64;
    for e in 0..n {
        if solid_mask[e] && dist[e].is_finite() {
            dmax = dmax.max(dist[e]);
        }
    }
    let scale = if dmax > 0.0 { dmax } else { 1.0 };
    let mut disconnected = Vec::new();
    let values = (0..n)
        .map(|e| {
            if !solid_mask[e] {
                1.0
            } else if dist[e].is_finite() {
                dist[e] / scale
            } else {
                disconnected.push(e);
                1.0
            }
        })
        .collect();
    (values, disconnected)
}

/// Per-element residuals `t_e - mean(t over in-mask edge neighbors)`; zero
/// for void elements and for solid elements without solid neighbors.
pub fn neighbor_mean_residuals(grid: &Grid, t: &[f64], solid_mask: &[bool]) -> Vec<f64> {
    assert_eq!(t.len(), grid.element_count());
    let mut r = vec![0.0; grid.element_count()];
    for e in 0..grid.element_count() {
        if !solid_mask[e] {
            continue;
        }
        let (mut sum, mut cnt) = (0.0, 0usize);
        for k in grid.neighbors4(e) {
            if solid_mask[k] {
                sum += t[k];
                cnt += 1;
            }
        }
        if cnt > 0 {
            r[e] = t[e] - sum / cnt as f64;
        }
    }
    r
}

/// Mean squared deviation from the neighborhood mean over the solid set:
/// the explicit smoothness measure of the baseline formulation.
pub fn mean_neighbor_constraint(grid: &Grid, t: &[f64], solid_mask: &[bool]) -> f64 {
    let n = solid_mask.iter().filter(|&&s| s).count();
    if n == 0 {
        return 0.0;
    }
    let r = neighbor_mean_residuals(grid, t, solid_mask);
    r.iter().map(|v| v * v).sum::<f64>() / n as f64
}

/// Exact gradient of [`mean_neighbor_constraint`] with respect to `t`.
pub fn mean_neighbor_gradient(grid: &Grid, t: &[f64], solid_mask: &[bool]) -> Vec<f64> {
    let n = solid_mask.iter().filter(|&&s| s).count();
    let mut grad = vec![0.0; grid.element_count()];
    if n == 0 {
        return grad;
    }
    let r = neighbor_mean_residuals(grid, t, solid_mask);
    for e in 0..grid.element_count() {
        if !solid_mask[e] {
            continue;
        }
        grad[e] += 2.0 * r[e];
        let cnt = grid.neighbors4(e).filter(|&k| solid_mask[k]).count();
        if cnt > 0 {
            let w = 2.0 * r[e] / cnt as f64;
            for k in grid.neighbors4(e) {
                if solid_mask[k] {
                    grad[k] -= w;
                }
            }
        }
    }
    for g in &mut grad {
        *g /= n as f64;
    }
    grad
}

/// Volume constraints: `g0` on the complete structure against the budget
/// `v0`, and one per stage against a proportional share `(j/n) v0`.
pub fn layer_volume_constraints(
    grid: &Grid,
    rho: &[f64],
    stage_rhos: &[Vec<f64>],
    v0: f64,
) -> Result<(f64, Vec<f64>)> {
    if !(v0 > 0.0) {
        return Err(Error::config(format!("volume budget must be positive, got {v0}")));
    }
    let ve = grid.h() * grid.h();
    let n = stage_rhos.len();
    let g0 = rho.iter().sum::<f64>() * ve - v0;
    let gj = stage_rhos
        .iter()
        .enumerate()
        .map(|(i, rj)| rj.iter().sum::<f64>() * ve - ((i + 1) as f64 / n as f64) * v0)
        .collect();
    Ok((g0, gj))
}
