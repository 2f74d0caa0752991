//! Synthetic recovery instances: conditioned Gaussian designs over
//! contiguous overlapping groups with group-sparse ground truth.
//!
//! Random draws are split over named streams (see [`crate::rng`]): active
//! groups and signal values, rotation, noise, and one stream per design row.
//! An instance is a pure function of its [`SynthSpec`].

use std::cmp::Ordering;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::{GroupLayout, GroupSupport};
use crate::objective::RegressionProblem;
use crate::rng;

/// `M` groups of size `B`; consecutive groups share `overlap` coordinates.
pub fn contiguous_layout(
    num_groups: usize,
    group_size: usize,
    overlap: usize,
) -> Result<GroupLayout> {
    if num_groups == 0 || group_size == 0 || overlap >= group_size {
        return Err(Error::InvalidParameter(format!(
            "contiguous layout needs M >= 1, B >= 1 and overlap < B (got M={num_groups}, B={group_size}, overlap={overlap})"
        )));
    }
    let stride = group_size - overlap;
    let p = num_groups * group_size - (num_groups - 1) * overlap;
    let groups = (0..num_groups)
        .map(|i| (i * stride..i * stride + group_size).collect())
        .collect();
    GroupLayout::new(p, groups)
}

/// Feature covariance with geometrically spaced eigenvalues from 1 down to
/// `1/κ`, optionally conjugated by a random orthogonal matrix.
#[derive(Debug, Clone)]
pub struct Covariance {
    eigenvalues: Vec<f64>,
    /// Symmetric square root `Q Λ^{1/2} Qᵀ`, present when rotated.
    sqrt: Option<DMatrix<f64>>,
}

impl Covariance {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn condition_number(&self) -> f64 {
        self.eigenvalues[0] / self.eigenvalues[self.dim() - 1]
    }

    pub fn is_rotated(&self) -> bool {
        self.sqrt.is_some()
    }

    /// `Σ^{1/2} v` with the symmetric square root.
    pub fn sqrt_apply(&self, v: &[f64]) -> Vec<f64> {
        match &self.sqrt {
            None => v
                .iter()
                .zip(&self.eigenvalues)
                .map(|(x, l)| x * l.sqrt())
                .collect(),
            Some(s) => (s * DVector::from_column_slice(v)).as_slice().to_vec(),
        }
    }

    /// Maps standard normal rows `Z` to rows of `Z Σ^{1/2}`.
    fn color_rows(&self, mut z: DMatrix<f64>) -> DMatrix<f64> {
        match &self.sqrt {
            None => {
                for (mut col, l) in z.column_iter_mut().zip(&self.eigenvalues) {
                    col *= l.sqrt();
                }
                z
            }
            Some(s) => z * s,
        }
    }

    /// Dense `Σ`, for small dimensions.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.sqrt {
            None => DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues)),
            Some(s) => s * s,
        }
    }
}

pub fn make_covariance(p: usize, kappa: f64, rotate: bool, seed: u64) -> Result<Covariance> {
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "kappa must be >= 1, got {kappa}"
        )));
    }
    if p == 0 {
        return Err(Error::InvalidParameter(
            "covariance dimension must be positive".into(),
        ));
    }
    let mut eigenvalues: Vec<f64> = (0..p)
        .map(|j| {
            if p == 1 {
                1.0
            } else {
                kappa.powf(-(j as f64) / (p - 1) as f64)
            }
        })
        .collect();
    if p > 1 {
        eigenvalues[p - 1] = 1.0 / kappa;
    }
    // Σ = I is rotation invariant, so skip the QR.
    let sqrt = (rotate && kappa > 1.0).then(|| {
        let mut q = random_orthogonal(p, seed);
        let qt = q.transpose();
        for (mut col, l) in q.column_iter_mut().zip(&eigenvalues) {
            col *= l.sqrt();
        }
        let s = q * qt;
        // Symmetrize away rounding.
        (&s + s.transpose()) * 0.5
    });
    Ok(Covariance { eigenvalues, sqrt })
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// column signs fixed by `diag(R)`.
fn random_orthogonal(p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng::stream(seed, rng::STREAM_ROTATION);
    let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

/// Full recipe for a synthetic instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// `M`.
    pub num_groups: usize,
    /// `B`.
    pub group_size: usize,
    /// Coordinates shared by consecutive groups.
    pub overlap: usize,
    /// Number of active groups.
    pub k_star: usize,
    /// Nonzeros kept per active group (sparse-overlapping-group signals).
    pub k2_star: Option<usize>,
    pub kappa: f64,
    /// Noise standard deviation.
    pub noise_lambda: f64,
    pub n: usize,
    pub rotate: bool,
    pub seed: u64,
}

impl SynthSpec {
    pub fn p(&self) -> usize {
        self.num_groups * self.group_size - self.num_groups.saturating_sub(1) * self.overlap
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InfeasibleSpec(msg));
        if self.num_groups == 0 || self.group_size == 0 {
            return fail("num_groups and group_size must be positive".into());
        }
        if self.overlap >= self.group_size {
            return fail(format!(
                "overlap {} must be < group_size {}",
                self.overlap, self.group_size
            ));
        }
        if self.k_star == 0 || self.k_star > self.num_groups {
            return fail(format!(
                "k_star {} must lie in 1..={}",
                self.k_star, self.num_groups
            ));
        }
        if let Some(k2) = self.k2_star {
            if k2 == 0 || k2 > self.group_size {
                return fail(format!("k2_star {k2} must lie in 1..={}", self.group_size));
            }
        }
        if !(self.kappa >= 1.0 && self.kappa.is_finite()) {
            return fail(format!("kappa {} must be >= 1", self.kappa));
        }
        if !(self.noise_lambda >= 0.0 && self.noise_lambda.is_finite()) {
            return fail(format!("noise_lambda {} must be >= 0", self.noise_lambda));
        }
        if self.n == 0 {
            return fail("n must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthInstance {
    pub spec: SynthSpec,
    pub problem: RegressionProblem,
    pub layout: GroupLayout,
    pub w_star: Vec<f64>,
    pub active_groups: GroupSupport,
}

#[derive(Serialize, Deserialize)]
struct InstanceMeta {
    spec: SynthSpec,
    w_star: Vec<f64>,
    active_groups: Vec<usize>,
}

impl SynthInstance {
    /// `‖w − w*‖ / ‖w*‖`.
    pub fn relative_error(&self, w: &[f64]) -> f64 {
        let num: f64 = w
            .iter()
            .zip(&self.w_star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den: f64 = self.w_star.iter().map(|b| b * b).sum();
        (num / den).sqrt()
    }

    /// Writes `data.csv` (features then response per row), `layout.json`
    /// and `meta.json` (spec, ground truth, active groups) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.problem.save(&dir.join("data.csv"))?;
        std::fs::write(
            dir.join("layout.json"),
            serde_json::to_string(&self.layout)?,
        )?;
        let meta = InstanceMeta {
            spec: self.spec.clone(),
            w_star: self.w_star.clone(),
            active_groups: self.active_groups.group_ids.clone(),
        };
        std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let problem = RegressionProblem::load(&dir.join("data.csv"))?;
        let layout: GroupLayout =
            serde_json::from_str(&std::fs::read_to_string(dir.join("layout.json"))?)?;
        let meta: InstanceMeta =
            serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)?;
        if problem.p() != layout.p() || meta.w_star.len() != layout.p() {
            return Err(Error::DimensionMismatch {
                expected: layout.p(),
                got: problem.p(),
            });
        }
        let active_groups = GroupSupport::from_groups(&layout, &meta.active_groups)?;
        Ok(SynthInstance {
            spec: meta.spec,
            problem,
            layout,
            w_star: meta.w_star,
            active_groups,
        })
    }
}

/// Draws a ground-truth vector, a design and noisy observations.
///
/// `k_star` groups are chosen uniformly without replacement and the union of
/// their coordinates is filled with Uniform[-1, 1] values. For SoG specs each
/// active group then keeps only its `k2_star` largest-magnitude entries; the
/// kept sets are unioned. Rows are `Σ^{1/2} z` with standard normal `z`, and
/// `y = X w* + λ ξ`.
pub fn generate(spec: &SynthSpec) -> Result<SynthInstance> {
    spec.validate()?;
    let cov = make_covariance(spec.p(), spec.kappa, spec.rotate, spec.seed)?;
    generate_with_covariance(spec, &cov)
}

/// [`generate`] with a prebuilt covariance, so experiments can share one
/// covariance across many instances. The covariance must have dimension
/// `spec.p()`; `spec.kappa` and `spec.rotate` are not consulted.
pub fn generate_with_covariance(spec: &SynthSpec, cov: &Covariance) -> Result<SynthInstance> {
    spec.validate()?;
    let layout = contiguous_layout(spec.num_groups, spec.group_size, spec.overlap)?;
    let p = layout.p();
    if cov.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: cov.dim(),
        });
    }

    let mut rng = rng::stream(spec.seed, rng::STREAM_SIGNAL);
    let mut active = index::sample(&mut rng, spec.num_groups, spec.k_star).into_vec();
    active.sort_unstable();
    let active_groups = GroupSupport::from_groups(&layout, &active)?;
    let mut w_star = vec![0.0; p];
    for &j in &active_groups.coords {
        w_star[j] = rng.random_range(-1.0f64..=1.0);
    }
    if let Some(k2) = spec.k2_star {
        let mut keep = vec![false; p];
        for &id in &active {
            let mut coords = layout.group(id).to_vec();
            coords.sort_by(|&a, &b| {
                w_star[b]
                    .abs()
                    .partial_cmp(&w_star[a].abs())
                    .unwrap_or(Ordering::Equal)
                    .then(a.cmp(&b))
            });
            for &j in coords.iter().take(k2) {
                keep[j] = true;
            }
        }
        for (w, k) in w_star.iter_mut().zip(&keep) {
            if !k {
                *w = 0.0;
            }
        }
    }

    let rows: Vec<Vec<f64>> = (0..spec.n)
        .into_par_iter()
        .map(|i| {
            let mut row_rng = rng::stream(spec.seed, rng::STREAM_ROW_BASE + i as u64);
            (0..p).map(|_| row_rng.sample(StandardNormal)).collect()
        })
        .collect();
    let z = DMatrix::from_fn(spec.n, p, |i, j| rows[i][j]);
    drop(rows);
    let x = cov.color_rows(z);

    let clean = RegressionProblem::new(x, DVector::zeros(spec.n))?;
    let mut y = clean.apply(&w_star);
    if spec.noise_lambda > 0.0 {
        let mut noise = rng::stream(spec.seed, rng::STREAM_NOISE);
        for yi in y.iter_mut() {
            *yi += spec.noise_lambda * noise.sample::<f64, _>(StandardNormal);
        }
    }
    let problem = RegressionProblem::new(clean.x().clone(), DVector::from_vec(y))?;

    Ok(SynthInstance {
        spec: spec.clone(),
        problem,
        layout,
        w_star,
        active_groups,
    })
}
