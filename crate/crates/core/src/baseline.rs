//! Explicit sequence optimization over a fixed layout: the pseudo-time
//! field is the design quantity, layer volumes drive the objective, and an
//! aggregated neighbor-mean constraint keeps the field locally coherent.
//! This is the formulation the heat regularizer replaces; it is kept for
//! side-by-side comparison, and in particular for showing how its outcome
//! depends on how the time field is initialized.
//!
//! The optimization variables pass through the same cone filter the density
//! side uses before they become the time field. Without that, the
//! neighbor-mean constraint confines the iterates to a thin tube around the
//! smooth modes, and the asymptote updates overshoot it in the rough
//! directions: the runs end checkerboard-contaminated and infeasible at any
//! move limit. Filtering removes the rough modes from the search space
//! entirely.

use crate::error::{Error, Result};
use crate::filter::DensityFilter;
use crate::model::{ForwardState, Model};
use crate::optimizer::{Evaluation, OptimizationProblem};
use crate::sensitivities::objective_seed;
use crate::sequence::{
    check_sequence_validity, euclidean_distance_field, geodesic_distance_field,
    mean_neighbor_constraint, mean_neighbor_gradient, plate_seed_elements, ValidityReport,
};

/// Default bound on the aggregated squared neighbor-mean residual.
/// Feasibility scales with the build height: a time field pinned at the
/// plate, plateauing at both ends, and spanning its range over H element
/// rows carries curvature ~1/H^2, so its residual aggregate is ~0.75/H^4.
/// The default suits builds of 40+ rows; coarser domains need a larger
/// bound.
pub const DEFAULT_SMOOTHNESS_EPSILON: f64 = 1e-6;

/// The layer-volume deviation objective is already normalized by the volume
/// budget, so its raw magnitude sits around 1e-2. A fixed scale keeps its
/// gradient below the smoothness-constraint rows; an adaptive 1/|f| scale
/// would amplify threshold-crossing pressure enough to fight the
/// feasibility push and scramble the field's ordering.
const OBJECTIVE_SCALE: f64 = 100.0;

pub struct BaselineProblem {
    model: Model,
    mask: Vec<bool>,
    seeds: Vec<bool>,
    filter: DensityFilter,
    epsilon: f64,
    state: Option<ForwardState>,
}

impl BaselineProblem {
    /// The model must carry a fixed layout; its mask is the structure whose
    /// fabrication order is optimized. `epsilon` bounds the aggregated
    /// squared neighbor-mean residual.
    pub fn new(model: Model, epsilon: f64) -> Result<Self> {
        if !model.spec().fixed_layout {
            return Err(Error::config("explicit sequence optimization needs a fixed layout"));
        }
        if epsilon <= 0.0 {
            return Err(Error::config("smoothness tolerance must be positive"));
        }
        let mask = model
            .spec()
            .mask
            .clone()
            .ok_or_else(|| Error::config("fixed layout carries no mask"))?;
        let seeds = plate_seed_elements(model.grid(), &mask);
        if seeds.iter().all(|&s| !s) {
            return Err(Error::config("no solid element touches the build plate"));
        }
        let filter = DensityFilter::with_mask(model.grid(), model.spec().filter_radius, Some(&mask))?;
        Ok(BaselineProblem {
            model,
            mask,
            seeds,
            filter,
            epsilon,
            state: None,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn last_state(&self) -> Option<&ForwardState> {
        self.state.as_ref()
    }

    /// Initial variables from the normalized build-plate offset.
    pub fn euclidean_initial(&self) -> Vec<f64> {
        euclidean_distance_field(self.model.grid(), &self.mask)
    }

    /// Initial variables from normalized in-structure shortest paths.
    /// Also reports how many solid elements the plate cannot reach.
    pub fn geodesic_initial(&self) -> (Vec<f64>, usize) {
        let (field, unreachable) = geodesic_distance_field(self.model.grid(), &self.mask);
        (field, unreachable.len())
    }

    /// The pseudo-time field induced by a variable vector: cone-filtered,
    /// with plate-seed elements pinned to zero.
    pub fn time_field(&self, s: &[f64]) -> Vec<f64> {
        let mut t = self.filter.apply(s);
        for (e, &seed) in self.seeds.iter().enumerate() {
            if seed {
                t[e] = 0.0;
            }
        }
        t
    }

    pub fn validity(&self, t: &[f64]) -> ValidityReport {
        check_sequence_validity(self.model.grid(), t, &self.mask, &self.seeds)
    }

    pub fn smoothness(&self, t: &[f64]) -> f64 {
        mean_neighbor_constraint(self.model.grid(), t, &self.mask)
    }

    fn pull_back(&self, mut df_dt: Vec<f64>) -> Vec<f64> {
        for (e, &seed) in self.seeds.iter().enumerate() {
            if seed {
                df_dt[e] = 0.0;
            }
        }
        self.filter.apply_transpose(&df_dt)
    }
}

impl OptimizationProblem for BaselineProblem {
    fn dim(&self) -> usize {
        self.model.grid().element_count()
    }

    fn constraint_count(&self) -> usize {
        1
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let ne = self.dim();
        let mut lo = vec![0.0; ne];
        let mut hi = vec![1.0; ne];
        for e in 0..ne {
            if !self.mask[e] {
                lo[e] = 1.0;
            } else if self.seeds[e] {
                hi[e] = 0.0;
            }
        }
        (lo, hi)
    }

    fn evaluate(&mut self, s: &[f64], beta: f64) -> Result<Evaluation> {
        let rho = self
            .model
            .fixed_rho()
            .expect("fixed layout checked at construction")
            .to_vec();
        let t = self.time_field(s);
        let state = self.model.forward_with_time(&rho, &t, beta)?;
        let seed = objective_seed(&self.model, &state)?;
        let df = self.pull_back(seed.time);

        let smooth = mean_neighbor_constraint(self.model.grid(), &t, &self.mask);
        let dsmooth = self.pull_back(mean_neighbor_gradient(self.model.grid(), &t, &self.mask));

        let eval = Evaluation {
            objective: OBJECTIVE_SCALE * state.objective,
            objective_gradient: df.iter().map(|&v| v * OBJECTIVE_SCALE).collect(),
            constraints: vec![smooth / self.epsilon - 1.0],
            constraint_jacobian: dsmooth.iter().map(|&v| v / self.epsilon).collect(),
            raw_objective: state.objective,
            raw_constraints: vec![smooth],
        };
        self.state = Some(state);
        Ok(eval)
    }
}
