//! Scalar fields attached to grid elements or nodes.

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    Elemental,
    Nodal,
}

/// A snapshot of one scalar per element or per node. Values are created in
/// full and never resized; operations on fields return new snapshots.
#[derive(Debug, Clone)]
pub struct ScalarField {
    support: Support,
    values: Vec<f64>,
    bounds: Option<(f64, f64)>,
}

impl ScalarField {
    pub fn elemental(grid: &Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.element_count(), "elemental field length");
        ScalarField {
            support: Support::Elemental,
            values,
            bounds: None,
        }
    }

    pub fn nodal(grid: &Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.node_count(), "nodal field length");
        ScalarField {
            support: Support::Nodal,
            values,
            bounds: None,
        }
    }

    pub fn constant_elemental(grid: &Grid, value: f64) -> Self {
        Self::elemental(grid, vec![value; grid.element_count()])
    }

    /// Declares the range the values must live in and checks it, with a
    /// 1e-12 tolerance for roundoff at the ends.
    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Result<Self> {
        for (i, &v) in self.values.iter().enumerate() {
            if v < lo - 1e-12 || v > hi + 1e-12 || !v.is_finite() {
                return Err(Error::config(format!(
                    "field value {v} at index {i} outside [{lo}, {hi}]"
                )));
            }
        }
        self.bounds = Some((lo, hi));
        Ok(self)
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl std::ops::Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

#[cfg(test)]
mod field_tests {
    use super::*;
    use crate::grid::{build_grid, BuildPlate};

    #[test]
    fn length_is_checked_against_support() {
        let g = build_grid(3, 2, 1.0, BuildPlate::Bottom).unwrap();
        let f = ScalarField::elemental(&g, vec![0.5; 6]);
        assert_eq!(f.len(), 6);
        let f = ScalarField::nodal(&g, vec![0.0; 12]);
        assert_eq!(f.support(), Support::Nodal);
        assert_eq!(f.len(), 12);
    }

    #[test]
    #[should_panic(expected = "elemental field length")]
    fn wrong_length_panics() {
        let g = build_grid(3, 2, 1.0, BuildPlate::Bottom).unwrap();
        let _ = ScalarField::elemental(&g, vec![0.0; 7]);
    }

    #[test]
    fn bounds_are_enforced_with_tolerance() {
        let g = build_grid(2, 2, 1.0, BuildPlate::Bottom).unwrap();
        let ok = ScalarField::elemental(&g, vec![0.0, 1.0, 0.5, 1.0 + 5e-13]).with_bounds(0.0, 1.0);
        assert!(ok.is_ok());
        let bad = ScalarField::elemental(&g, vec![0.0, 1.0, 0.5, 1.1]).with_bounds(0.0, 1.0);
        assert!(bad.is_err());
    }
}
