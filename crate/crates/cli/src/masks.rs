//! Named mask presets: the notched overhang component for sequence-only
//! runs and the three fixed components whose fabrication-induced
//! distortion is optimized. All are parametrized by an integer scale so
//! `--full-res` doubles cleanly.

use anyhow::{bail, Result};
use stopt_core::elasticity::{DistortionGroup, DistortionMode, DistortionSpec};
use stopt_core::{build_grid, BuildPlate, Grid};

pub const COMPONENTS: [&str; 3] = ["table", "bracket", "portal"];

pub struct MaskPreset {
    pub grid: Grid,
    pub mask: Vec<bool>,
    pub distortion: Option<DistortionSpec>,
}

/// The notched component: a width-6s pipe runs up from the plate and
/// rightward along the top, and a fat block hangs from the arm's far end,
/// separated from the column by a void notch. Both pipe elbows are
/// mitered. The hanging block overhangs: a plate-offset ordering deposits
/// it before the arm that carries it, which is exactly the trap the
/// initialization comparison needs.
pub fn notched(scale: usize) -> Result<MaskPreset> {
    let s = scale.max(1);
    let (nx, ny) = (48, 40);
    let (w, bw, bd, cut) = (6, 6, 18, 4);
    let mut base = vec![false; nx * ny];
    let arm_y0 = ny - w;
    for ix in 0..nx {
        for iy in 0..ny {
            let mut solid = false;
            if ix < w {
                solid = true;
                if iy >= arm_y0 && (w - 1 - ix) + (iy - arm_y0) >= cut {
                    solid = false;
                }
            }
            if ix >= w && iy >= arm_y0 {
                solid = true;
                if ix >= nx - bw && (ix - (nx - bw)) + (iy - arm_y0) >= cut {
                    solid = false;
                }
            }
            if ix >= nx - bw && iy >= arm_y0 - bd && iy < arm_y0 {
                solid = true;
            }
            if solid {
                base[ix * ny + iy] = true;
            }
        }
    }
    let grid = build_grid(nx * s, ny * s, 1.0, BuildPlate::Bottom)?;
    Ok(MaskPreset {
        grid,
        mask: upsample(&base, nx, ny, s),
        distortion: None,
    })
}

/// Refine a mask by an integer factor: each base cell becomes an s-by-s
/// block, so every scale carries the same shape.
fn upsample(base: &[bool], nx: usize, ny: usize, s: usize) -> Vec<bool> {
    let mut out = vec![false; nx * s * ny * s];
    for ix in 0..nx * s {
        for iy in 0..ny * s {
            out[ix * ny * s + iy] = base[(ix / s) * ny + iy / s];
        }
    }
    out
}

/// Fixed component presets for distortion-driven sequence optimization.
/// Shapes and measured features:
/// - table: two legs carrying a deck; measured feature is the flatness of
///   the deck's top edge (vertical displacements).
/// - bracket: an L of a wall and a top arm; measured features are the
///   flatness of the arm's top edge (vertical) and of the arm's free end
///   edge (horizontal).
/// - portal: two towers and a beam; measured feature is the relative
///   vertical displacement of the two top-edge points above the towers.
pub fn component(name: &str, scale: usize) -> Result<MaskPreset> {
    let s = scale.max(1);
    match name {
        "table" => table(s),
        "bracket" => bracket(s),
        "portal" => portal(s),
        other => bail!("unknown component {other:?}"),
    }
}

fn rect(mask: &mut [bool], ny: usize, x0: usize, x1: usize, y0: usize, y1: usize) {
    for ix in x0..x1 {
        for iy in y0..y1 {
            mask[ix * ny + iy] = true;
        }
    }
}

fn table(s: usize) -> Result<MaskPreset> {
    let (nx, ny) = (60 * s, 40 * s);
    let grid = build_grid(nx, ny, 1.0, BuildPlate::Bottom)?;
    let mut mask = vec![false; nx * ny];
    rect(&mut mask, ny, 6 * s, 14 * s, 0, 30 * s);
    rect(&mut mask, ny, 46 * s, 54 * s, 0, 30 * s);
    rect(&mut mask, ny, 2 * s, 58 * s, 30 * s, 40 * s);
    let markers: Vec<usize> = (2 * s..=58 * s).map(|ix| grid.node_index(ix, 40 * s)).collect();
    let distortion = DistortionSpec::new(markers, DistortionMode::FlatnessY)?;
    Ok(MaskPreset {
        grid,
        mask,
        distortion: Some(distortion),
    })
}

fn bracket(s: usize) -> Result<MaskPreset> {
    let (nx, ny) = (48 * s, 48 * s);
    let grid = build_grid(nx, ny, 1.0, BuildPlate::Bottom)?;
    let mut mask = vec![false; nx * ny];
    rect(&mut mask, ny, 0, 12 * s, 0, 48 * s);
    rect(&mut mask, ny, 12 * s, 40 * s, 38 * s, 48 * s);
    let top: Vec<usize> = (12 * s..=40 * s).map(|ix| grid.node_index(ix, 48 * s)).collect();
    let end: Vec<usize> = (38 * s..=48 * s).map(|iy| grid.node_index(40 * s, iy)).collect();
    let distortion = DistortionSpec::sum(vec![
        DistortionGroup {
            markers: top,
            mode: DistortionMode::FlatnessY,
        },
        DistortionGroup {
            markers: end,
            mode: DistortionMode::FlatnessX,
        },
    ])?;
    Ok(MaskPreset {
        grid,
        mask,
        distortion: Some(distortion),
    })
}

fn portal(s: usize) -> Result<MaskPreset> {
    let (nx, ny) = (60 * s, 40 * s);
    let grid = build_grid(nx, ny, 1.0, BuildPlate::Bottom)?;
    let mut mask = vec![false; nx * ny];
    rect(&mut mask, ny, 0, 8 * s, 0, 32 * s);
    rect(&mut mask, ny, 52 * s, 60 * s, 0, 32 * s);
    rect(&mut mask, ny, 0, 60 * s, 32 * s, 40 * s);
    let markers = vec![grid.node_index(4 * s, 40 * s), grid.node_index(56 * s, 40 * s)];
    let distortion = DistortionSpec::new(markers, DistortionMode::PairRelative)?;
    Ok(MaskPreset {
        grid,
        mask,
        distortion: Some(distortion),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use stopt_core::sequence::{geodesic_distance_field, plate_seed_elements};

    #[test]
    fn every_preset_is_plate_connected() {
        for preset in [
            notched(1).unwrap(),
            component("table", 1).unwrap(),
            component("bracket", 1).unwrap(),
            component("portal", 1).unwrap(),
        ] {
            let seeds = plate_seed_elements(&preset.grid, &preset.mask);
            assert!(seeds.iter().any(|&s| s));
            let (_, unreachable) = geodesic_distance_field(&preset.grid, &preset.mask);
            assert!(unreachable.is_empty());
        }
    }

    #[test]
    fn notched_mask_scales_consistently() {
        let base = notched(1).unwrap();
        let doubled = notched(2).unwrap();
        let solid1 = base.mask.iter().filter(|&&m| m).count();
        let solid2 = doubled.mask.iter().filter(|&&m| m).count();
        assert_eq!(solid2, 4 * solid1);
    }

    #[test]
    fn component_markers_sit_on_solid_boundaries() {
        for name in COMPONENTS {
            let preset = component(name, 1).unwrap();
            let spec = preset.distortion.unwrap();
            let ny = preset.grid.ny();
            for group in &spec.groups {
                for &node in &group.markers {
                    let (ix, iy) = (node / (ny + 1), node % (ny + 1));
                    let touching = [
                        (ix.wrapping_sub(1), iy.wrapping_sub(1)),
                        (ix, iy.wrapping_sub(1)),
                        (ix.wrapping_sub(1), iy),
                        (ix, iy),
                    ]
                    .iter()
                    .any(|&(ex, ey)| {
                        ex < preset.grid.nx()
                            && ey < preset.grid.ny()
                            && preset.mask[ex * preset.grid.ny() + ey]
                    });
                    assert!(touching, "{name}: marker node ({ix},{iy}) floats in void");
                }
            }
        }
    }
}
