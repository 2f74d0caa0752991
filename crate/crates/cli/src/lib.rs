//! Experiment drivers behind the `giht` binary.
//!
//! Everything here is deterministic given the seeds in its inputs: trials
//! are indexed, each trial derives its own seed, and results are collected
//! in index order, so the worker count never changes the output.

use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use giht::synth::{self, generate_with_covariance, Covariance};
use giht::{iht_solve, Error, IhtConfig, IhtTrace, Projector, Result, SynthInstance, SynthSpec};

/// Exit status for a failed command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<Error>() {
        Some(Error::Divergence { .. }) => 2,
        Some(Error::InfeasibleSpec(_)) => 3,
        _ => 1,
    }
}

/// Seed of trial `t` in a batch seeded with `base`.
pub fn trial_seed(base: u64, t: usize) -> u64 {
    base.wrapping_add(t as u64)
}

/// Outcome of one solve on a synthetic instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// `‖ŵ − w*‖ / ‖w*‖`.
    pub final_rel_error: f64,
    pub iterations: usize,
    pub wall_time_ms: f64,
    /// Objective at `ŵ`.
    pub objective: f64,
    /// Objective at `w*`, i.e. `‖noise‖² / 2n`.
    pub noise_objective: f64,
    pub converged: bool,
    pub eta: f64,
    /// Selected groups at the final iterate.
    pub selected_groups: Vec<usize>,
    /// Whether every active group of `w*` is among `selected_groups`.
    pub active_groups_recovered: bool,
}

/// Runs IHT on `inst`, tracking the distance to `w*`.
pub fn solve_instance(
    inst: &SynthInstance,
    config: &IhtConfig,
) -> Result<(Vec<f64>, IhtTrace, SolveReport)> {
    let start = Instant::now();
    let (w, trace) = iht_solve(&inst.problem, &inst.layout, config, Some(&inst.w_star))?;
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let selected_groups = trace
        .support_history
        .last()
        .map(|s| s.group_ids.clone())
        .unwrap_or_default();
    let active_groups_recovered = inst
        .active_groups
        .group_ids
        .iter()
        .all(|g| selected_groups.binary_search(g).is_ok());
    let report = SolveReport {
        final_rel_error: inst.relative_error(&w),
        iterations: trace.iterations_run,
        wall_time_ms,
        objective: giht::objective::least_squares_value(&inst.problem, &w)?,
        noise_objective: giht::objective::least_squares_value(&inst.problem, &inst.w_star)?,
        converged: trace.converged,
        eta: trace.eta,
        selected_groups,
        active_groups_recovered,
    };
    Ok((w, trace, report))
}

/// One `(n, κ)` cell of a phase-transition grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub n: usize,
    pub kappa: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Median over trials; diverged trials count as `inf`.
    pub median_rel_error: f64,
}

/// A phase-transition experiment.
///
/// Every cell uses `base` with `n` and `kappa` overridden. Trial `t` uses
/// seed `trial_seed(base.seed, t)` in every cell, so cells differ only in
/// `n` and `κ`. The projector budget and solver settings come from `config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub base: SynthSpec,
    pub ns: Vec<usize>,
    pub kappas: Vec<f64>,
    pub trials: usize,
    /// A trial succeeds when its relative error is at most this.
    pub success_tol: f64,
    pub config: IhtConfig,
}

impl PhaseGrid {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if self.ns.is_empty() || self.kappas.is_empty() {
            return Err(Error::InvalidParameter(
                "n and kappa grids must be non-empty".into(),
            ));
        }
        for &n in &self.ns {
            for &kappa in &self.kappas {
                SynthSpec {
                    n,
                    kappa,
                    ..self.base.clone()
                }
                .validate()?;
            }
        }
        Ok(())
    }
}

/// Relative error of one trial; `inf` when the solver diverged.
fn run_trial(spec: &SynthSpec, cov: &Covariance, config: &IhtConfig) -> Result<f64> {
    let inst = generate_with_covariance(spec, cov)?;
    match iht_solve(&inst.problem, &inst.layout, config, None) {
        Ok((w, _)) => Ok(inst.relative_error(&w)),
        Err(Error::Divergence { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Runs the grid, returning cells ordered by `κ` then `n` as given.
///
/// The covariance of each `(κ, trial)` pair is built once and reused for
/// every `n`.
pub fn run_phase_transition(grid: &PhaseGrid) -> Result<Vec<PhaseCell>> {
    grid.validate()?;
    let p = grid.base.p();
    let mut cells = Vec::with_capacity(grid.ns.len() * grid.kappas.len());
    for &kappa in &grid.kappas {
        let covs: Vec<Covariance> = (0..grid.trials)
            .into_par_iter()
            .map(|t| {
                synth::make_covariance(p, kappa, grid.base.rotate, trial_seed(grid.base.seed, t))
            })
            .collect::<Result<_>>()?;
        let jobs: Vec<(usize, usize)> = grid
            .ns
            .iter()
            .flat_map(|&n| (0..grid.trials).map(move |t| (n, t)))
            .collect();
        let errors: Vec<f64> = jobs
            .par_iter()
            .map(|&(n, t)| {
                let spec = SynthSpec {
                    n,
                    kappa,
                    seed: trial_seed(grid.base.seed, t),
                    ..grid.base.clone()
                };
                let config = IhtConfig {
                    seed: spec.seed,
                    ..grid.config.clone()
                };
                run_trial(&spec, &covs[t], &config)
            })
            .collect::<Result<_>>()?;
        for (i, &n) in grid.ns.iter().enumerate() {
            let mut errs = errors[i * grid.trials..(i + 1) * grid.trials].to_vec();
            let successes = errs.iter().filter(|&&e| e <= grid.success_tol).count();
            cells.push(PhaseCell {
                n,
                kappa,
                trials: grid.trials,
                successes,
                success_rate: successes as f64 / grid.trials as f64,
                median_rel_error: median(&mut errs),
            });
        }
    }
    Ok(cells)
}

/// CSV with header `n,kappa,trials,successes,success_rate,median_rel_error`.
pub fn write_phase_csv<W: Write>(cells: &[PhaseCell], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for cell in cells {
        wtr.serialize(cell)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_phase_csv<R: Read>(reader: R) -> Result<Vec<PhaseCell>> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Sparse view of a vector for JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseEntry {
    pub index: usize,
    pub value: f64,
}

pub fn sparse_entries(v: &[f64]) -> Vec<SparseEntry> {
    v.iter()
        .enumerate()
        .filter(|(_, x)| **x != 0.0)
        .map(|(index, &value)| SparseEntry { index, value })
        .collect()
}

/// JSON shape printed by `giht project`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub projector: Projector,
    pub u: Vec<SparseEntry>,
    pub selected_groups: Vec<usize>,
    pub selection_order: Vec<usize>,
    pub gains: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub within_group_support: Option<Vec<Vec<usize>>>,
}

/// Parses a vector file: one value per line, blank lines and `#` comments
/// skipped.
pub fn read_vector<R: Read>(mut reader: R) -> Result<Vec<f64>> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let value: f64 = line.parse().map_err(|e| Error::Parse {
            line: i + 1,
            msg: format!("{line:?}: {e}"),
        })?;
        out.push(value);
    }
    Ok(out)
}
