//! Structured grid of square bilinear elements.
//!
//! Elements and nodes are indexed column by column with the y index running
//! fastest: element `(ix, iy)` has index `ix * ny + iy` and node `(ix, iy)`
//! has index `ix * (ny + 1) + iy`. For the wide, short domains typical of
//! planar fabrication problems this ordering keeps the assembled system
//! bandwidth proportional to the domain height, which the banded solver
//! exploits directly.

use crate::error::{Error, Result};

/// Domain edge acting as the build plate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuildPlate {
    Bottom,
    Top,
    Left,
    Right,
}

/// Immutable description of the discretized rectangular domain.
#[derive(Debug, Clone)]
pub struct Grid {
    nx: usize,
    ny: usize,
    h: f64,
    plate: BuildPlate,
    plate_nodes: Vec<usize>,
    plate_elements: Vec<usize>,
}

/// Constructs a grid and derives the build plate node and element sets.
pub fn build_grid(nx: usize, ny: usize, h: f64, plate: BuildPlate) -> Result<Grid> {
    if nx == 0 || ny == 0 {
        return Err(Error::config(format!("grid must be non-empty, got {nx}x{ny}")));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::config(format!("element size must be positive, got {h}")));
    }
    let node_at = |ix: usize, iy: usize| ix * (ny + 1) + iy;
    let elem_at = |ix: usize, iy: usize| ix * ny + iy;
    let (plate_nodes, plate_elements): (Vec<usize>, Vec<usize>) = match plate {
        BuildPlate::Bottom => (
            (0..=nx).map(|ix| node_at(ix, 0)).collect(),
            (0..nx).map(|ix| elem_at(ix, 0)).collect(),
        ),
        BuildPlate::Top => (
            (0..=nx).map(|ix| node_at(ix, ny)).collect(),
            (0..nx).map(|ix| elem_at(ix, ny - 1)).collect(),
        ),
        BuildPlate::Left => (
            (0..=ny).map(|iy| node_at(0, iy)).collect(),
            (0..ny).map(|iy| elem_at(0, iy)).collect(),
        ),
        BuildPlate::Right => (
            (0..=ny).map(|iy| node_at(nx, iy)).collect(),
            (0..ny).map(|iy| elem_at(nx - 1, iy)).collect(),
        ),
    };
    if plate_nodes.is_empty() {
        return Err(Error::config("build plate node set is empty"));
    }
    Ok(Grid {
        nx,
        ny,
        h,
        plate,
        plate_nodes,
        plate_elements,
    })
}

impl Grid {
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn build_plate(&self) -> BuildPlate {
        self.plate
    }
    pub fn element_count(&self) -> usize {
        self.nx * self.ny
    }
    pub fn node_count(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    /// Nodes on the build plate edge, where the pseudo-temperature is fixed.
    pub fn build_plate_nodes(&self) -> &[usize] {
        &self.plate_nodes
    }

    /// Elements adjacent to the build plate edge.
    pub fn build_plate_elements(&self) -> &[usize] {
        &self.plate_elements
    }

    pub fn element_index(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.nx && iy < self.ny);
        ix * self.ny + iy
    }

    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix <= self.nx && iy <= self.ny);
        ix * (self.ny + 1) + iy
    }

    pub fn element_coords(&self, e: usize) -> (usize, usize) {
        (e / self.ny, e % self.ny)
    }

    pub fn node_coords(&self, n: usize) -> (usize, usize) {
        (n / (self.ny + 1), n % (self.ny + 1))
    }

    /// Corner nodes of an element, counterclockwise from bottom-left.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (ix, iy) = self.element_coords(e);
        let bl = self.node_index(ix, iy);
        let br = self.node_index(ix + 1, iy);
        [bl, br, br + 1, bl + 1]
    }

    pub fn element_centroid(&self, e: usize) -> (f64, f64) {
        let (ix, iy) = self.element_coords(e);
        ((ix as f64 + 0.5) * self.h, (iy as f64 + 0.5) * self.h)
    }

    /// Edge-sharing neighbor elements, in (left, right, down, up) order.
    pub fn neighbors4(&self, e: usize) -> impl Iterator<Item = usize> + '_ {
        let (ix, iy) = self.element_coords(e);
        let mut out = [usize::MAX; 4];
        let mut k = 0;
        if ix > 0 {
            out[k] = self.element_index(ix - 1, iy);
            k += 1;
        }
        if ix + 1 < self.nx {
            out[k] = self.element_index(ix + 1, iy);
            k += 1;
        }
        if iy > 0 {
            out[k] = self.element_index(ix, iy - 1);
            k += 1;
        }
        if iy + 1 < self.ny {
            out[k] = self.element_index(ix, iy + 1);
            k += 1;
        }
        out.into_iter().take(k)
    }

    /// Edge- and corner-sharing neighbors with their step lengths.
    pub fn neighbors8(&self, e: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (ix, iy) = self.element_coords(e);
        let diag = self.h * std::f64::consts::SQRT_2;
        let h = self.h;
        let nx = self.nx as isize;
        let ny = self.ny as isize;
        let (ix, iy) = (ix as isize, iy as isize);
        let ny_u = self.ny;
        (-1..=1).flat_map(move |dx| {
            (-1..=1).filter_map(move |dy| {
                if dx == 0 && dy == 0 {
                    return None;
                }
                let (jx, jy) = (ix + dx, iy + dy);
                if jx < 0 || jy < 0 || jx >= nx || jy >= ny {
                    return None;
                }
                let w = if dx != 0 && dy != 0 { diag } else { h };
                Some(((jx as usize) * ny_u + jy as usize, w))
            })
        })
    }

    /// Elements on the domain boundary.
    pub fn boundary_elements(&self) -> Vec<usize> {
        (0..self.element_count())
            .filter(|&e| {
                let (ix, iy) = self.element_coords(e);
                ix == 0 || iy == 0 || ix + 1 == self.nx || iy + 1 == self.ny
            })
            .collect()
    }

    /// Distance from the element's plate-facing edge to the build plate.
    /// Zero for elements sitting directly on the plate.
    pub fn element_plate_offset(&self, e: usize) -> f64 {
        let (ix, iy) = self.element_coords(e);
        let steps = match self.plate {
            BuildPlate::Bottom => iy,
            BuildPlate::Top => self.ny - 1 - iy,
            BuildPlate::Left => ix,
            BuildPlate::Right => self.nx - 1 - ix,
        };
        steps as f64 * self.h
    }

    /// Domain extent along the build direction, the default characteristic
    /// length of the pseudo-time regularization.
    pub fn build_axis_extent(&self) -> f64 {
        match self.plate {
            BuildPlate::Bottom | BuildPlate::Top => self.ny as f64 * self.h,
            BuildPlate::Left | BuildPlate::Right => self.nx as f64 * self.h,
        }
    }
}
