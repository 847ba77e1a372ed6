//! Linear cone (hat) density filter with row-normalized weights.
//!
//! Weights between elements e and k are `max(0, r - dist(e, k))` on centroid
//! distances, truncated at the domain boundary and renormalized so each row
//! sums to one. Both the forward map and its transpose are precomputed in
//! compressed sparse rows; the transpose is needed to pull sensitivities
//! back from filtered to raw design variables.

use crate::error::{Error, Result};
use crate::grid::Grid;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct DensityFilter {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    weight: Vec<f64>,
    t_row_ptr: Vec<usize>,
    t_col_idx: Vec<u32>,
    t_weight: Vec<f64>,
}

impl DensityFilter {
    pub fn new(grid: &Grid, radius: f64) -> Result<Self> {
        Self::with_mask(grid, radius, None)
    }

    /// Filter restricted to a design mask: rows of masked-out elements are
    /// identity, and in-mask rows draw only on in-mask neighbors (the mask
    /// boundary truncates and renormalizes like the domain boundary does).
    pub fn with_mask(grid: &Grid, radius: f64, mask: Option<&[bool]>) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::config(format!(
                "filter radius must be positive and finite, got {radius}"
            )));
        }
        let n = grid.element_count();
        if let Some(m) = mask {
            if m.len() != n {
                return Err(Error::config("filter mask length mismatch"));
            }
        }
        let in_mask = |e: usize| mask.map_or(true, |m| m[e]);
        let h = grid.h();
        let reach = (radius / h).ceil() as i64;
        let (nx, ny) = (grid.nx() as i64, grid.ny() as i64);

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut weight = Vec::new();
        row_ptr.push(0);
        for ix in 0..nx {
            for iy in 0..ny {
                let row = (ix * ny + iy) as usize;
                if !in_mask(row) {
                    col_idx.push(row as u32);
                    weight.push(1.0);
                    row_ptr.push(col_idx.len());
                    continue;
                }
                let mut sum = 0.0;
                let start = col_idx.len();
                for dx in -reach..=reach {
                    let jx = ix + dx;
                    if jx < 0 || jx >= nx {
                        continue;
                    }
                    for dy in -reach..=reach {
                        let jy = iy + dy;
                        if jy < 0 || jy >= ny {
                            continue;
                        }
                        let col = (jx * ny + jy) as usize;
                        if !in_mask(col) {
                            continue;
                        }
                        let dist = h * ((dx * dx + dy * dy) as f64).sqrt();
                        let w = radius - dist;
                        if w > 0.0 {
                            col_idx.push(col as u32);
                            weight.push(w);
                            sum += w;
                        }
                    }
                }
                for w in &mut weight[start..] {
                    *w /= sum;
                }
                row_ptr.push(col_idx.len());
            }
        }

        // Transpose sparsity, built by counting sort over columns.
        let mut t_row_ptr = vec![0usize; n + 1];
        for &c in &col_idx {
            t_row_ptr[c as usize + 1] += 1;
        }
        for i in 0..n {
            t_row_ptr[i + 1] += t_row_ptr[i];
        }
        let mut cursor = t_row_ptr.clone();
        let mut t_col_idx = vec![0u32; col_idx.len()];
        let mut t_weight = vec![0.0; weight.len()];
        for row in 0..n {
            for k in row_ptr[row]..row_ptr[row + 1] {
                let c = col_idx[k] as usize;
                t_col_idx[cursor[c]] = row as u32;
                t_weight[cursor[c]] = weight[k];
                cursor[c] += 1;
            }
        }

        Ok(DensityFilter {
            n,
            row_ptr,
            col_idx,
            weight,
            t_row_ptr,
            t_col_idx,
            t_weight,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        self.matvec(x, &self.row_ptr, &self.col_idx, &self.weight)
    }

    /// Multiplies by the transpose of the (row-normalized) filter matrix.
    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        self.matvec(x, &self.t_row_ptr, &self.t_col_idx, &self.t_weight)
    }

    fn matvec(&self, x: &[f64], rp: &[usize], ci: &[u32], w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        out.par_iter_mut().enumerate().for_each(|(row, o)| {
            let mut acc = 0.0;
            for k in rp[row]..rp[row + 1] {
                acc += w[k] * x[ci[k] as usize];
            }
            *o = acc;
        });
        out
    }
}

#[cfg(test)]
mod filter_tests {
    use super::*;
    use crate::grid::{build_grid, BuildPlate};
    use proptest::prelude::*;

    fn spike(n: usize, at: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[at] = 1.0;
        v
    }

    #[test]
    fn interior_spike_matches_hand_summed_cone() {
        let g = build_grid(5, 5, 1.0, BuildPlate::Bottom).unwrap();
        let f = DensityFilter::new(&g, 1.5).unwrap();
        let center = g.element_index(2, 2);
        let out = f.apply(&spike(25, center));
        // Interior row sum: 1.5 + 4*0.5 + 4*(1.5 - sqrt(2)) = 3.84314575.
        assert!((out[center] - 0.390305258).abs() < 1e-8);
        let right = g.element_index(3, 2);
        assert!((out[right] - 0.130101753).abs() < 1e-8);
    }

    #[test]
    fn corner_row_is_truncated_and_renormalized() {
        let g = build_grid(5, 5, 1.0, BuildPlate::Bottom).unwrap();
        let f = DensityFilter::new(&g, 1.5).unwrap();
        let corner = g.element_index(0, 0);
        let out = f.apply(&spike(25, corner));
        // Corner row sum: 1.5 + 2*0.5 + (1.5 - sqrt(2)) = 2.58578644.
        assert!((out[corner] - 0.5800943).abs() < 1e-6, "{}", out[corner]);
    }

    #[test]
    fn radius_equal_to_spacing_is_identity() {
        let g = build_grid(7, 4, 0.5, BuildPlate::Bottom).unwrap();
        let f = DensityFilter::new(&g, 0.5).unwrap();
        let x: Vec<f64> = (0..28).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = f.apply(&x);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn mask_truncates_like_a_domain_boundary() {
        let g = build_grid(5, 5, 1.0, BuildPlate::Bottom).unwrap();
        let mut mask = vec![true; 25];
        // Void column at ix=3 separates the domain; the right strip and the
        // left block must not exchange mass.
        for iy in 0..5 {
            mask[g.element_index(3, iy)] = false;
        }
        let f = DensityFilter::with_mask(&g, 1.5, Some(&mask)).unwrap();
        let out = f.apply(&spike(25, g.element_index(2, 2)));
        for iy in 0..5 {
            assert_eq!(out[g.element_index(3, iy)], 0.0);
            assert_eq!(out[g.element_index(4, iy)], 0.0);
        }
        // Masked-out rows are identity.
        let held = f.apply(&spike(25, g.element_index(3, 2)));
        assert_eq!(held[g.element_index(3, 2)], 1.0);
        // In-mask rows renormalize over the reduced neighborhood.
        let ones = vec![1.0; 25];
        for v in f.apply(&ones) {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_nonpositive_radius() {
        let g = build_grid(3, 3, 1.0, BuildPlate::Bottom).unwrap();
        assert!(DensityFilter::new(&g, 0.0).is_err());
        assert!(DensityFilter::new(&g, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn rows_partition_unity_and_transpose_is_adjoint(
            nx in 2usize..12, ny in 2usize..12, rmul in 1.0f64..3.0, seed in 0u64..1000
        ) {
            let g = build_grid(nx, ny, 1.0, BuildPlate::Bottom).unwrap();
            let f = DensityFilter::new(&g, rmul).unwrap();
            let n = g.element_count();
            let ones = vec![1.0; n];
            for v in f.apply(&ones) {
                prop_assert!((v - 1.0).abs() < 1e-12);
            }
            let a: Vec<f64> = (0..n).map(|i| ((i as f64 + seed as f64) * 0.61).sin()).collect();
            let b: Vec<f64> = (0..n).map(|i| ((i as f64 * 1.3 + seed as f64) * 0.29).cos()).collect();
            let lhs: f64 = f.apply(&a).iter().zip(&b).map(|(x, y)| x * y).sum();
            let rhs: f64 = a.iter().zip(f.apply_transpose(&b)).map(|(x, y)| x * y).sum();
            prop_assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        }
    }
}
