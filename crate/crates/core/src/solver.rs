//! Iterative hard thresholding with pluggable projections and optional
//! fully-corrective refits.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::{GroupLayout, GroupSupport};
use crate::objective::SmoothObjective;
use crate::project::Projector;

/// How the gradient step size is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `1 / (4 λ_max)` with `λ_max` from power iteration.
    Auto,
    /// `1 / λ_max`, using `λ_max` as a stand-in for the restricted
    /// smoothness constant.
    InverseCurvature,
    /// `1 / L̂`, with `L̂` the largest restricted eigenvalue seen over
    /// `trials` random supports of `k` groups (`k` = projector budget).
    RestrictedCurvature {
        trials: usize,
    },
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IhtConfig {
    /// Projection operator and its budget.
    pub projector: Projector,
    pub step: StepRule,
    /// Iteration cap `T`.
    pub max_iters: usize,
    /// Stop once `‖w_{t+1} − w_t‖ <= tol`.
    pub tol: f64,
    /// Refit the objective on the projected support after every projection.
    pub full_corrections: bool,
    /// Run even if the groups do not cover every coordinate.
    pub allow_partial_cover: bool,
    /// Seeds the power iteration behind [`StepRule::Auto`].
    pub seed: u64,
    /// Starting point; zero when `None`.
    pub init: Option<Vec<f64>>,
}

impl IhtConfig {
    pub fn new(projector: Projector) -> Self {
        IhtConfig {
            projector,
            step: StepRule::Auto,
            max_iters: 1000,
            tol: 1e-10,
            full_corrections: false,
            allow_partial_cover: false,
            seed: 0,
            init: None,
        }
    }

    pub fn validate(&self, layout: &GroupLayout) -> Result<()> {
        self.projector.validate(layout)?;
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter(
                "max_iters must be at least 1".into(),
            ));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "tol must be non-negative, got {}",
                self.tol
            )));
        }
        match self.step {
            StepRule::Fixed(eta) if !(eta > 0.0 && eta.is_finite()) => {
                return Err(Error::InvalidParameter(format!(
                    "step size must be positive, got {eta}"
                )));
            }
            StepRule::RestrictedCurvature { trials: 0 } => {
                return Err(Error::InvalidParameter(
                    "restricted curvature needs at least one trial".into(),
                ));
            }
            _ => {}
        }
        if !self.allow_partial_cover && !layout.covers_ambient() {
            return Err(Error::PartialCover);
        }
        if let Some(init) = &self.init {
            layout.check_vector(init)?;
        }
        Ok(())
    }
}

/// Per-iteration history of a solve. Entry `t` describes iterate `w_{t+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IhtTrace {
    pub objective_values: Vec<f64>,
    pub iterate_change: Vec<f64>,
    pub support_history: Vec<GroupSupport>,
    /// `‖w_t − w*‖` when a reference was supplied.
    pub error_to_reference: Option<Vec<f64>>,
    pub iterations_run: usize,
    pub converged: bool,
    /// Step size used.
    pub eta: f64,
}

impl IhtTrace {
    pub fn rows(&self) -> Vec<TraceRow> {
        (0..self.iterations_run)
            .map(|t| TraceRow {
                iteration: t + 1,
                objective: self.objective_values[t],
                iterate_change: self.iterate_change[t],
                error_to_reference: self.error_to_reference.as_ref().map(|e| e[t]),
                n_groups: self.support_history[t].size(),
            })
            .collect()
    }

    /// CSV with header `iteration,objective,iterate_change,error_to_reference,n_groups`.
    /// `error_to_reference` is empty when no reference was given.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for row in self.rows() {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub iterate_change: f64,
    pub error_to_reference: Option<f64>,
    pub n_groups: usize,
}

pub fn read_trace_csv<R: Read>(reader: R) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Runs IHT: a gradient step followed by a projection, repeated until the
/// iterate stops moving or `max_iters` is reached.
///
/// With `full_corrections` each projected point is replaced by the
/// objective's minimizer on the projection's kept coordinates.
pub fn iht_solve<O: SmoothObjective + ?Sized>(
    obj: &O,
    layout: &GroupLayout,
    config: &IhtConfig,
    reference: Option<&[f64]>,
) -> Result<(Vec<f64>, IhtTrace)> {
    if obj.dim() != layout.p() {
        return Err(Error::DimensionMismatch {
            expected: layout.p(),
            got: obj.dim(),
        });
    }
    config.validate(layout)?;
    if let Some(r) = reference {
        layout.check_vector(r)?;
    }

    let eta = match config.step {
        StepRule::Auto => 0.25 / obj.max_curvature(config.seed)?,
        StepRule::InverseCurvature => 1.0 / obj.max_curvature(config.seed)?,
        StepRule::RestrictedCurvature { trials } => {
            let k = config.projector.group_budget();
            1.0 / obj.restricted_curvature(layout, k, trials, config.seed)?
        }
        StepRule::Fixed(eta) => eta,
    };

    let mut w = config.init.clone().unwrap_or_else(|| vec![0.0; layout.p()]);
    let mut trace = IhtTrace {
        objective_values: Vec::new(),
        iterate_change: Vec::new(),
        support_history: Vec::new(),
        error_to_reference: reference.map(|_| Vec::new()),
        iterations_run: 0,
        converged: false,
        eta,
    };

    for t in 1..=config.max_iters {
        let grad = obj.gradient(&w);
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: t,
                quantity: "gradient",
            });
        }
        let step: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi - eta * gi).collect();
        let proj = config.projector.project(&step, layout)?;
        let next = if config.full_corrections {
            obj.restricted_minimizer(&proj.kept_coords())?
        } else {
            proj.u
        };
        let value = obj.value(&next);
        if !value.is_finite() {
            return Err(Error::Divergence {
                iteration: t,
                quantity: "objective",
            });
        }

        let change = distance(&next, &w);
        trace.objective_values.push(value);
        trace.iterate_change.push(change);
        trace.support_history.push(proj.selected);
        if let (Some(errs), Some(r)) = (trace.error_to_reference.as_mut(), reference) {
            errs.push(distance(&next, r));
        }
        trace.iterations_run = t;
        w = next;
        if change <= config.tol {
            trace.converged = true;
            break;
        }
    }
    Ok((w, trace))
}

/// Which sparsity-level rule [`theoretical_budget`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BudgetRule {
    /// Least squares with Gaussian design: `8 κ² k* log(κ/ε)`.
    LeastSquares,
    /// General RSC/RSS objective: `32 κ² k* log(κ ‖w*‖/ε)`, where `κ` is
    /// the restricted condition number `L/α`.
    GeneralRsc { w_star_norm: f64 },
}

/// Group budget `k` prescribed by the convergence theory, clamped to at
/// least `k_star`.
pub fn theoretical_budget(
    kappa: f64,
    k_star: usize,
    epsilon: f64,
    rule: BudgetRule,
) -> Result<usize> {
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "kappa must be >= 1, got {kappa}"
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if k_star == 0 {
        return Err(Error::InvalidParameter("k_star must be positive".into()));
    }
    let k = k_star as f64;
    let raw = match rule {
        BudgetRule::LeastSquares => 8.0 * kappa * kappa * k * (kappa / epsilon).ln(),
        BudgetRule::GeneralRsc { w_star_norm } => {
            if !(w_star_norm > 0.0 && w_star_norm.is_finite()) {
                return Err(Error::InvalidParameter(
                    "w_star_norm must be positive".into(),
                ));
            }
            32.0 * kappa * kappa * k * (kappa * w_star_norm / epsilon).ln()
        }
    };
    Ok((raw.ceil().max(0.0) as usize).max(k_star))
}
