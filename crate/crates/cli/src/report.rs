//! Run artifacts: machine-readable summary, per-iteration convergence
//! table, field dumps in CSV and legacy VTK, and validity records.
//!
//! Everything in `summary.json` is a pure function of config + seed, so
//! reruns compare bit-identically; wall-clock time and other
//! run-environment facts live in `run_meta.json` instead.

use anyhow::{Context, Result};
use serde::Serialize;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use stopt_core::optimizer::IterationRow;
use stopt_core::sequence::ValidityReport;
use stopt_core::Grid;

#[derive(Debug, Clone, Serialize)]
pub struct ValiditySummary {
    pub interior_minima: usize,
    pub enclosed_maxima: usize,
    pub is_valid: bool,
}

impl From<&ValidityReport> for ValiditySummary {
    fn from(r: &ValidityReport) -> Self {
        ValiditySummary {
            interior_minima: r.interior_minima.len(),
            enclosed_maxima: r.enclosed_maxima.len(),
            is_valid: r.is_valid(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub run: String,
    pub final_objective: f64,
    /// Largest raw constraint value at the last iterate (negative =
    /// strictly feasible everywhere).
    pub constraint_max: f64,
    pub validity: ValiditySummary,
    pub iterations: usize,
    pub converged: bool,
    pub final_beta_t: f64,
    /// Scenario-specific scalars worth comparing across runs.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub metrics: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize)]
struct RunMeta {
    wall_time_seconds: f64,
    threads: usize,
}

#[derive(Debug, Clone, Serialize)]
struct ValidityLine<'a> {
    field: &'a str,
    interior_minima: usize,
    enclosed_maxima: usize,
    is_valid: bool,
}

/// Writer for one run directory (one scenario sub-run).
pub struct RunDir {
    root: PathBuf,
    validity: Vec<String>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root.join("fields"))
            .with_context(|| format!("creating {}", root.display()))?;
        Ok(RunDir {
            root: root.to_path_buf(),
            validity: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write_summary(&self, summary: &Summary) -> Result<()> {
        let text = serde_json::to_string_pretty(summary)?;
        fs::write(self.root.join("summary.json"), text + "\n")?;
        Ok(())
    }

    pub fn write_meta(&self, wall_time_seconds: f64, threads: usize) -> Result<()> {
        let meta = RunMeta {
            wall_time_seconds,
            threads,
        };
        let text = serde_json::to_string_pretty(&meta)?;
        fs::write(self.root.join("run_meta.json"), text + "\n")?;
        Ok(())
    }

    pub fn write_convergence(&self, history: &[IterationRow]) -> Result<()> {
        let mut out = String::from("iteration,objective,constraint_max,change,beta_t\n");
        for row in history {
            let cmax = row
                .constraints
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            out.push_str(&format!(
                "{},{:.8e},{:.8e},{:.8e},{:.8e}\n",
                row.iteration, row.objective, cmax, row.change, row.beta
            ));
        }
        fs::write(self.root.join("convergence.csv"), out)?;
        Ok(())
    }

    /// Element field as CSV, one row per grid row, top row first so the
    /// file reads like the domain.
    pub fn write_element_field(&self, name: &str, grid: &Grid, values: &[f64]) -> Result<()> {
        assert_eq!(values.len(), grid.element_count());
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut out = String::new();
        for iy in (0..ny).rev() {
            let row: Vec<String> = (0..nx)
                .map(|ix| format!("{:.8e}", values[ix * ny + iy]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        fs::write(self.root.join("fields").join(format!("{name}.csv")), out)?;
        Ok(())
    }

    /// Nodal field as CSV in the same orientation.
    pub fn write_node_field(&self, name: &str, grid: &Grid, values: &[f64]) -> Result<()> {
        assert_eq!(values.len(), grid.node_count());
        let (nx, ny) = (grid.nx() + 1, grid.ny() + 1);
        let mut out = String::new();
        for iy in (0..ny).rev() {
            let row: Vec<String> = (0..nx)
                .map(|ix| format!("{:.8e}", values[ix * ny + iy]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        fs::write(self.root.join("fields").join(format!("{name}.csv")), out)?;
        Ok(())
    }

    /// All element fields of a run in one legacy-VTK structured-points
    /// file, viewable in ParaView.
    pub fn write_vtk(&self, grid: &Grid, fields: &[(&str, &[f64])]) -> Result<()> {
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut out = String::new();
        out.push_str("# vtk DataFile Version 3.0\n");
        out.push_str("fabrication fields\nASCII\nDATASET STRUCTURED_POINTS\n");
        out.push_str(&format!("DIMENSIONS {} {} 1\n", nx + 1, ny + 1));
        out.push_str("ORIGIN 0 0 0\n");
        out.push_str(&format!("SPACING {h} {h} {h}\n", h = grid.h()));
        out.push_str(&format!("CELL_DATA {}\n", nx * ny));
        for (name, values) in fields {
            assert_eq!(values.len(), grid.element_count());
            out.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
            for iy in 0..ny {
                for ix in 0..nx {
                    out.push_str(&format!("{:.8e}\n", values[ix * ny + iy]));
                }
            }
        }
        fs::write(self.root.join("fields").join("fields.vtk"), out)?;
        Ok(())
    }

    pub fn record_validity(&mut self, field: &str, report: &ValidityReport) {
        let line = ValidityLine {
            field,
            interior_minima: report.interior_minima.len(),
            enclosed_maxima: report.enclosed_maxima.len(),
            is_valid: report.is_valid(),
        };
        self.validity
            .push(serde_json::to_string(&line).expect("validity line serializes"));
    }

    pub fn flush_validity(&self) -> Result<()> {
        let mut f = fs::File::create(self.root.join("validity.jsonl"))?;
        for line in &self.validity {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}
