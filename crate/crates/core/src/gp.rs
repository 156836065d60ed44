//! Zero-mean Gaussian-process machinery shared by the surrogate and the
//! discrepancy: squared-exponential kernels, covariance assembly, jittered
//! Cholesky, evidence and posterior conditionals.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Isotropic squared-exponential kernel `λ·exp(−‖a − b‖²/(2β²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SEKernel {
    /// Signal variance.
    pub lambda: f64,
    /// Lengthscale.
    pub beta: f64,
}

/// Surrogate hyperparameters over the joint `(x, θ)` input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateHypers {
    pub beta_x: f64,
    pub beta_theta: f64,
    pub lambda_x: f64,
}

/// Discrepancy hyperparameters over `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyHypers {
    pub beta_d: f64,
    pub lambda_d: f64,
}

impl DiscrepancyHypers {
    pub fn kernel(&self) -> SEKernel {
        SEKernel {
            lambda: self.lambda_d,
            beta: self.beta_d,
        }
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

pub fn kernel_se(a: &[f64], b: &[f64], k: &SEKernel) -> f64 {
    k.lambda * (-sq_dist(a, b) / (2.0 * k.beta * k.beta)).exp()
}

/// A point of the surrogate's joint input space.
#[derive(Debug, Clone, Copy)]
pub struct JointInput<'a> {
    pub x: &'a [f64],
    pub theta: &'a [f64],
}

/// Product of SE factors: one lengthscale for `x`, one shared across `θ`.
pub fn kernel_joint(p: JointInput<'_>, q: JointInput<'_>, h: &SurrogateHypers) -> f64 {
    let ex = sq_dist(p.x, q.x) / (2.0 * h.beta_x * h.beta_x);
    let et = sq_dist(p.theta, q.theta) / (2.0 * h.beta_theta * h.beta_theta);
    h.lambda_x * (-(ex + et)).exp()
}

/// Diagonal inflation added by [`build_cov`].
#[derive(Debug, Clone, Copy)]
pub enum Nugget<'a> {
    Scalar(f64),
    PerElement(&'a [f64]),
}

pub fn build_cov<T, K>(inputs: &[T], kernel: K, nugget: Nugget<'_>) -> DMatrix<f64>
where
    K: Fn(&T, &T) -> f64,
{
    let n = inputs.len();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = kernel(&inputs[i], &inputs[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    for i in 0..n {
        m[(i, i)] += match nugget {
            Nugget::Scalar(s) => s,
            Nugget::PerElement(d) => d[i],
        };
    }
    m
}

/// Cholesky factor of `K + jitter·I`.
pub struct JitteredCholesky {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
    pub retries: usize,
}

impl JitteredCholesky {
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }
}

pub const MAX_JITTER_RETRIES: usize = 6;

/// Factorises `K`, retrying with jitter `1e-10·mean(diag)`, escalated ×10 per
/// retry, for at most [`MAX_JITTER_RETRIES`] retries.
pub fn chol_jitter(k: &DMatrix<f64>) -> Result<JitteredCholesky> {
    let n = k.nrows();
    if n != k.ncols() {
        return Err(Error::invalid(format!("covariance is {}x{}, not square", n, k.ncols())));
    }
    if let Some(chol) = Cholesky::new(k.clone()) {
        return Ok(JitteredCholesky {
            chol,
            jitter: 0.0,
            retries: 0,
        });
    }
    let mean_diag = if n == 0 { 1.0 } else { k.diagonal().mean().abs() };
    let base = 1e-10 * if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut jitter = base;
    for retry in 1..=MAX_JITTER_RETRIES {
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(kj) {
            return Ok(JitteredCholesky {
                chol,
                jitter,
                retries: retry,
            });
        }
        if retry < MAX_JITTER_RETRIES {
            jitter *= 10.0;
        }
    }
    Err(Error::NotPositiveDefinite {
        retries: MAX_JITTER_RETRIES,
        jitter,
    })
}

/// Zero-mean log evidence `−½ yᵀK⁻¹y − ½ log det K − (n/2) log 2π`.
pub fn gp_log_marginal(y: &DVector<f64>, k: &DMatrix<f64>) -> Result<f64> {
    if y.len() != k.nrows() {
        return Err(Error::invalid(format!(
            "{} outputs for a {}x{} covariance",
            y.len(),
            k.nrows(),
            k.ncols()
        )));
    }
    let f = chol_jitter(k)?;
    Ok(log_marginal_from(&f, y))
}

pub(crate) fn log_marginal_from(f: &JitteredCholesky, y: &DVector<f64>) -> f64 {
    let alpha = f.solve(y);
    let n = y.len() as f64;
    -0.5 * y.dot(&alpha) - 0.5 * f.log_det() - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Posterior mean and covariance of the latent function at `test`, given
/// noisy observations `y` at `train`.
pub fn gp_posterior<T, K>(
    train: &[T],
    y: &[f64],
    kernel: K,
    noise: f64,
    test: &[T],
) -> Result<(DVector<f64>, DMatrix<f64>)>
where
    K: Fn(&T, &T) -> f64,
{
    if train.len() != y.len() {
        return Err(Error::invalid(format!(
            "{} training inputs but {} outputs",
            train.len(),
            y.len()
        )));
    }
    let k = build_cov(train, &kernel, Nugget::Scalar(noise));
    let f = chol_jitter(&k)?;
    let cross = DMatrix::from_fn(train.len(), test.len(), |i, j| kernel(&train[i], &test[j]));
    let prior = build_cov(test, &kernel, Nugget::Scalar(0.0));
    let yv = DVector::from_column_slice(y);
    let mean = cross.transpose() * f.solve(&yv);
    let v = f.chol.solve(&cross);
    let mut cov = prior - cross.transpose() * v;
    cov = (&cov + cov.transpose()) * 0.5;
    Ok((mean, cov))
}

/// Affine map `(v − mean)/sd` used to give GP outputs zero mean and unit
/// scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

impl Standardization {
    pub const IDENTITY: Self = Self { mean: 0.0, sd: 1.0 };

    /// Empirical mean and (n − 1) standard deviation; falls back to unit
    /// scale for constant or single-point data.
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::IDENTITY;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            sd: if sd > 0.0 { sd } else { 1.0 },
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.sd
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.sd + self.mean
    }
}
