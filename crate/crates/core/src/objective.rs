//! Smooth objectives, the least-squares instance and restricted-eigenvalue
//! diagnostics.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::GroupLayout;
use crate::rng;

/// Ridge added to the restricted normal equations when the plain Cholesky
/// factorization fails.
pub const FC_RIDGE: f64 = 1e-10;

const POWER_MAX_ITERS: usize = 100;
const POWER_REL_TOL: f64 = 1e-8;

/// A differentiable objective over `R^p`.
///
/// Callers guarantee `w.len() == self.dim()`.
pub trait SmoothObjective {
    fn dim(&self) -> usize;

    fn value(&self, w: &[f64]) -> f64;

    fn gradient(&self, w: &[f64]) -> Vec<f64>;

    /// Estimate of the largest Hessian eigenvalue.
    fn max_curvature(&self, _seed: u64) -> Result<f64> {
        Err(Error::Unsupported("curvature estimation"))
    }

    /// Estimate of the largest Hessian eigenvalue over vectors supported on
    /// `k` groups of `layout`, from `trials` random supports.
    fn restricted_curvature(
        &self,
        _layout: &GroupLayout,
        _k: usize,
        _trials: usize,
        _seed: u64,
    ) -> Result<f64> {
        Err(Error::Unsupported("restricted curvature estimation"))
    }

    /// Minimizer of the objective over vectors supported on `support`.
    fn restricted_minimizer(&self, _support: &[usize]) -> Result<Vec<f64>> {
        Err(Error::Unsupported("full corrections"))
    }
}

/// Least-squares regression data: `f(w) = ‖y − Xw‖² / 2n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl RegressionProblem {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::InvalidParameter(format!(
                "design must be non-empty, got {n}x{p}"
            )));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "design and response must be finite".into(),
            ));
        }
        Ok(RegressionProblem { x, y })
    }

    /// Builds a problem from row-major data, one sample per row.
    pub fn from_rows(n: usize, p: usize, rows: &[f64], y: Vec<f64>) -> Result<Self> {
        if rows.len() != n * p {
            return Err(Error::DimensionMismatch {
                expected: n * p,
                got: rows.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, p, rows), DVector::from_vec(y))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    fn check_w(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                got: w.len(),
            });
        }
        Ok(())
    }

    /// `Xw`, skipping zero coordinates of `w`.
    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                for (o, &xij) in out.iter_mut().zip(self.column(j)) {
                    *o += wj * xij;
                }
            }
        }
        out
    }

    /// `Xᵀr`.
    pub fn apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        (0..self.p())
            .map(|j| self.column(j).iter().zip(r).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn residual(&self, w: &[f64]) -> Vec<f64> {
        let mut r = self.apply(w);
        for (ri, yi) in r.iter_mut().zip(self.y.iter()) {
            *ri -= yi;
        }
        r
    }

    /// Reads the CSV layout written by [`RegressionProblem::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut width = None;
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |pos| pos.line() as usize);
            let values = record
                .iter()
                .map(|field| {
                    field.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line,
                        msg: format!("{field:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() < 2 {
                return Err(Error::Parse {
                    line,
                    msg: "need at least one feature column and the response".into(),
                });
            }
            match width {
                None => width = Some(values.len()),
                Some(w) if w != values.len() => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("expected {w} columns, found {}", values.len()),
                    })
                }
                _ => {}
            }
            let (features, response) = values.split_at(values.len() - 1);
            rows.extend_from_slice(features);
            y.push(response[0]);
        }
        let width = width.ok_or(Error::Parse {
            line: 0,
            msg: "empty matrix file".into(),
        })?;
        Self::from_rows(y.len(), width - 1, &rows, y)
    }

    /// Writes one sample per line: the `p` features followed by the response.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        let mut record = Vec::with_capacity(self.p() + 1);
        for i in 0..self.n() {
            record.clear();
            record.extend(self.x.row(i).iter().map(f64::to_string));
            record.push(self.y[i].to_string());
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

impl SmoothObjective for RegressionProblem {
    fn dim(&self) -> usize {
        self.p()
    }

    fn value(&self, w: &[f64]) -> f64 {
        let r = self.residual(w);
        r.iter().map(|v| v * v).sum::<f64>() / (2.0 * self.n() as f64)
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let n = self.n() as f64;
        let mut g = self.apply_transpose(&self.residual(w));
        g.iter_mut().for_each(|v| *v /= n);
        g
    }

    fn max_curvature(&self, seed: u64) -> Result<f64> {
        estimate_step_size(self, seed).map(|s| s.lambda_max)
    }

    fn restricted_curvature(
        &self,
        layout: &GroupLayout,
        k: usize,
        trials: usize,
        seed: u64,
    ) -> Result<f64> {
        estimate_restricted_spectrum(self, layout, k, trials, seed).map(|e| e.l_hat)
    }

    fn restricted_minimizer(&self, support: &[usize]) -> Result<Vec<f64>> {
        fully_correct(self, support)
    }
}

/// `‖y − Xw‖² / 2n`.
pub fn least_squares_value(problem: &RegressionProblem, w: &[f64]) -> Result<f64> {
    problem.check_w(w)?;
    Ok(problem.value(w))
}

/// `Xᵀ(Xw − y) / n`.
pub fn least_squares_gradient(problem: &RegressionProblem, w: &[f64]) -> Result<Vec<f64>> {
    problem.check_w(w)?;
    Ok(problem.gradient(w))
}

/// Worst per-coordinate relative error between the analytic gradient and
/// central differences with step `h`.
///
/// The relative error of coordinate `j` is `|a − d| / max(|a|, |d|)`, and is
/// zero when both are exactly zero.
pub fn check_gradient<O: SmoothObjective + ?Sized>(obj: &O, w: &[f64], h: f64) -> f64 {
    let analytic = obj.gradient(w);
    let mut probe = w.to_vec();
    let mut worst = 0.0f64;
    for j in 0..w.len() {
        probe[j] = w[j] + h;
        let up = obj.value(&probe);
        probe[j] = w[j] - h;
        let down = obj.value(&probe);
        probe[j] = w[j];
        let fd = (up - down) / (2.0 * h);
        let scale = analytic[j].abs().max(fd.abs());
        if scale > 0.0 {
            worst = worst.max((analytic[j] - fd).abs() / scale);
        }
    }
    worst
}

/// Largest eigenvalue of `XᵀX/n` and the step size derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizeEstimate {
    pub lambda_max: f64,
    /// `1 / (4 λ_max)`.
    pub eta: f64,
}

/// Power iteration on `XᵀX/n` from a seeded Gaussian start vector.
pub fn estimate_step_size(problem: &RegressionProblem, seed: u64) -> Result<StepSizeEstimate> {
    if problem.x.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroMatrix);
    }
    let n = problem.n() as f64;
    let mut rng = rng::stream(seed, rng::STREAM_POWER);
    let mut v: Vec<f64> = (0..problem.p())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    normalize(&mut v);

    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let mut next = problem.apply_transpose(&problem.apply(&v));
        next.iter_mut().for_each(|x| *x /= n);
        let rayleigh: f64 = v.iter().zip(&next).map(|(a, b)| a * b).sum();
        let norm = normalize(&mut next);
        if norm == 0.0 {
            break;
        }
        v = next;
        let done = (rayleigh - lambda).abs() <= POWER_REL_TOL * rayleigh.abs();
        lambda = rayleigh;
        if done {
            break;
        }
    }
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::ZeroMatrix);
    }
    Ok(StepSizeEstimate {
        lambda_max: lambda,
        eta: 1.0 / (4.0 * lambda),
    })
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Least-squares refit restricted to `support`.
///
/// Solves `(X_Sᵀ X_S / n) w_S = X_Sᵀ y / n` by Cholesky, retrying with a
/// [`FC_RIDGE`] ridge if the factorization fails. Coordinates outside the
/// support are zero. An empty support gives the zero vector.
pub fn fully_correct(problem: &RegressionProblem, support: &[usize]) -> Result<Vec<f64>> {
    let p = problem.p();
    if let Some(&bad) = support.iter().find(|&&j| j >= p) {
        return Err(Error::IndexOutOfRange { index: bad, dim: p });
    }
    let mut cols = support.to_vec();
    cols.sort_unstable();
    cols.dedup();
    let mut w = vec![0.0; p];
    if cols.is_empty() {
        return Ok(w);
    }

    let n = problem.n() as f64;
    let xs = problem.x.select_columns(cols.iter());
    let gram = xs.tr_mul(&xs) / n;
    let rhs = xs.tr_mul(&problem.y) / n;

    let solution = match Cholesky::new(gram.clone()) {
        Some(chol) => chol.solve(&rhs),
        None => {
            let ridged = gram + DMatrix::identity(cols.len(), cols.len()) * FC_RIDGE;
            Cholesky::new(ridged)
                .ok_or(Error::SingularSystem { ridge: FC_RIDGE })?
                .solve(&rhs)
        }
    };
    for (&j, &v) in cols.iter().zip(solution.iter()) {
        w[j] = v;
    }
    Ok(w)
}

/// Monte-Carlo bounds on the restricted eigenvalues of `XᵀX/n` over
/// `k`-group-sparse directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestrictedSpectrumEstimate {
    /// Smallest Rayleigh quotient observed.
    pub alpha_hat: f64,
    /// Largest Rayleigh quotient observed.
    pub l_hat: f64,
    pub trials: usize,
    pub k: usize,
    /// Some sampled support had more coordinates than samples, so its
    /// smallest restricted eigenvalue is zero.
    pub rank_deficient: bool,
}

impl RestrictedSpectrumEstimate {
    /// `L_hat / alpha_hat`; infinite when `alpha_hat` is zero.
    pub fn kappa_hat(&self) -> f64 {
        if self.alpha_hat > 0.0 {
            self.l_hat / self.alpha_hat
        } else {
            f64::INFINITY
        }
    }
}

/// Samples `trials` random `k`-group supports and records the extreme
/// Rayleigh quotients `‖Xw‖² / (n‖w‖²)` over directions `w` on each support.
///
/// Each trial draws `k` distinct groups uniformly from its own seeded stream
/// and takes the smallest and largest eigenvalue of the restricted Gram
/// matrix `X_SᵀX_S / n`, i.e. the extremes of the quotient over all `w`
/// supported on the union `S`. Trials are independent and run in parallel.
pub fn estimate_restricted_spectrum(
    problem: &RegressionProblem,
    layout: &GroupLayout,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<RestrictedSpectrumEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    layout.check_budget("k", k)?;
    if layout.p() != problem.p() {
        return Err(Error::DimensionMismatch {
            expected: problem.p(),
            got: layout.p(),
        });
    }
    let n = problem.n();
    let extremes: Vec<(f64, f64, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, rng::STREAM_TRIAL_BASE + t as u64);
            let mut ids = index::sample(&mut rng, layout.num_groups(), k).into_vec();
            ids.sort_unstable();
            let coords = layout.union_coords(&ids);
            let xs = problem.x.select_columns(coords.iter());
            let gram = xs.tr_mul(&xs) / n as f64;
            let eig = SymmetricEigen::new(gram).eigenvalues;
            let lo = eig.min().max(0.0);
            let hi = eig.max();
            let deficient = coords.len() > n;
            (if deficient { 0.0 } else { lo }, hi, deficient)
        })
        .collect();

    Ok(RestrictedSpectrumEstimate {
        alpha_hat: extremes.iter().map(|e| e.0).fold(f64::INFINITY, f64::min),
        l_hat: extremes.iter().map(|e| e.1).fold(0.0, f64::max),
        trials,
        k,
        rank_deficient: extremes.iter().any(|e| e.2),
    })
}
