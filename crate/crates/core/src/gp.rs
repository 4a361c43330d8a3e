//! Single-output Gaussian-process regression with a squared-exponential ARD
//! kernel and maximum-a-posteriori hyperparameters.
//!
//! Inputs are mapped affinely onto the unit cube of a [`DesignSpace`] and
//! outputs are standardized before fitting. Every public prediction speaks
//! original units; the `*_unit` methods take unit-cube inputs and are the hot
//! path used by the acquisition machinery.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::optim::{minimize_bounded, LbfgsOptions};
use crate::problem::DesignSpace;

/// Relative diagonal jitter: `K + JITTER * variance * I`.
pub const JITTER: f64 = 1e-6;

/// Squared-exponential kernel with one lengthscale per input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SeArdKernel {
    pub variance: f64,
    pub lengthscales: Vec<f64>,
}

impl SeArdKernel {
    pub fn new(variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        if !(variance > 0.0) || lengthscales.iter().any(|l| !(*l > 0.0)) || lengthscales.is_empty()
        {
            return Err(Error::InvalidArgument(
                "kernel variance and lengthscales must be positive".into(),
            ));
        }
        Ok(Self {
            variance,
            lengthscales,
        })
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for k in 0..a.len() {
            let t = (a[k] - b[k]) / self.lengthscales[k];
            r2 += t * t;
        }
        self.variance * (-0.5 * r2).exp()
    }
}

/// Kernel matrix between the rows of `a` (n x d) and `b` (m x d).
pub fn kernel_eval(
    kernel: &SeArdKernel,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let d = kernel.dim();
    if a.ncols() != d || b.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: if a.ncols() != d { a.ncols() } else { b.ncols() },
        });
    }
    let rows_a = rows(a);
    let rows_b = rows(b);
    Ok(DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        kernel.eval(&rows_a[i], &rows_b[j])
    }))
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Log-normal prior on each lengthscale (unit-cube scale).
#[derive(Debug, Clone, PartialEq)]
pub struct LengthscalePrior {
    /// Median of the prior.
    pub median: f64,
    /// Standard deviation of `ln(lengthscale)`.
    pub log_std: f64,
}

impl Default for LengthscalePrior {
    fn default() -> Self {
        Self {
            median: 0.3,
            log_std: 0.7,
        }
    }
}

impl LengthscalePrior {
    fn log_density_and_dlog(&self, l: f64) -> (f64, f64) {
        let mu = self.median.ln();
        let s2 = self.log_std * self.log_std;
        let z = l.ln() - mu;
        let lp = -l.ln()
            - (self.log_std * (2.0 * std::f64::consts::PI).sqrt()).ln()
            - z * z / (2.0 * s2);
        (lp, -1.0 - z / s2)
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub prior: LengthscalePrior,
    pub restarts: usize,
    pub lengthscale_bounds: (f64, f64),
    pub variance_bounds: (f64, f64),
    pub lbfgs: LbfgsOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            prior: LengthscalePrior::default(),
            restarts: 10,
            lengthscale_bounds: (1e-3, 1e2),
            variance_bounds: (1e-6, 1e4),
            lbfgs: LbfgsOptions {
                max_iters: 100,
                pg_tol: 1e-6,
                f_tol: 1e-10,
                ..LbfgsOptions::default()
            },
        }
    }
}

/// Log marginal likelihood plus log prior at log-hyperparameters
/// `theta = [ln variance, ln l_1, ..., ln l_d]`, with its gradient.
///
/// `x` holds unit-cube inputs as rows, `y` standardized outputs. Returns
/// `None` when the kernel matrix fails to factor.
pub fn map_objective(
    theta: &[f64],
    x: &[Vec<f64>],
    y: &[f64],
    prior: &LengthscalePrior,
) -> Option<(f64, Vec<f64>)> {
    let n = x.len();
    let d = theta.len() - 1;
    let variance = theta[0].exp();
    let ls: Vec<f64> = theta[1..].iter().map(|t| t.exp()).collect();
    let kernel = SeArdKernel {
        variance,
        lengthscales: ls.clone(),
    };
    let mut k = DMatrix::from_fn(n, n, |i, j| kernel.eval(&x[i], &x[j]));
    for i in 0..n {
        k[(i, i)] += JITTER * variance;
    }
    let chol = k.clone().cholesky()?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let l = chol.l();
    let log_det_half: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
    let mut value =
        -0.5 * yv.dot(&alpha) - log_det_half - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    let kinv = chol.inverse();

    // W = alpha alpha^T - K^-1; dL/dtheta_j = 1/2 tr(W dK_j)
    let mut grad = vec![0.0; d + 1];
    for a in 0..n {
        for b in 0..n {
            let w = alpha[a] * alpha[b] - kinv[(a, b)];
            grad[0] += 0.5 * w * k[(a, b)];
            if a != b {
                let kab = k[(a, b)];
                for c in 0..d {
                    let t = (x[a][c] - x[b][c]) / ls[c];
                    grad[1 + c] += 0.5 * w * kab * t * t;
                }
            }
        }
    }
    for c in 0..d {
        let (lp, dlp) = prior.log_density_and_dlog(ls[c]);
        value += lp;
        grad[1 + c] += dlp;
    }
    if !value.is_finite() {
        return None;
    }
    Some((value, grad))
}

/// A fitted GP for one objective.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub space: DesignSpace,
    /// Kernel on unit-cube inputs and standardized outputs.
    pub kernel: SeArdKernel,
    pub y_mean: f64,
    pub y_std: f64,
    /// Training inputs in unit-cube coordinates.
    pub x_unit: Vec<Vec<f64>>,
    /// Standardized training outputs.
    pub y_scaled: Vec<f64>,
    /// Lower Cholesky factor of `K + jitter I`.
    pub chol: DMatrix<f64>,
    /// `(K + jitter I)^-1 y`.
    pub alpha: DVector<f64>,
    /// Best MAP objective value found.
    pub map_value: f64,
}

/// Variance (or full covariance) part of a posterior.
#[derive(Debug, Clone, PartialEq)]
pub enum PosteriorCov {
    Variance(DVector<f64>),
    Full(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mean: DVector<f64>,
    pub cov: PosteriorCov,
}

impl Posterior {
    pub fn variances(&self) -> DVector<f64> {
        match &self.cov {
            PosteriorCov::Variance(v) => v.clone(),
            PosteriorCov::Full(c) => c.diagonal(),
        }
    }
}

/// Point prediction in original output units with gradients with respect to
/// the unit-cube input.
#[derive(Debug, Clone)]
pub struct PointPrediction {
    pub mean: f64,
    pub var: f64,
    pub dmean: Vec<f64>,
    pub dvar: Vec<f64>,
}

fn standardize(y: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = if var.sqrt() > 1e-12 * (1.0 + mean.abs()) {
        var.sqrt()
    } else {
        1.0
    };
    (mean, std, y.iter().map(|v| (v - mean) / std).collect())
}

impl GpModel {
    /// Builds a model at fixed hyperparameters (unit-cube/standardized scale).
    pub fn with_kernel(
        space: &DesignSpace,
        x: &DMatrix<f64>,
        y: &[f64],
        kernel: SeArdKernel,
    ) -> Result<Self> {
        let x_unit: Vec<Vec<f64>> = rows(x).iter().map(|r| space.to_unit(r)).collect();
        let (y_mean, y_std, y_scaled) = standardize(y);
        Self::assemble(
            space.clone(),
            x_unit,
            y_mean,
            y_std,
            y_scaled,
            kernel,
            f64::NAN,
        )
    }

    fn assemble(
        space: DesignSpace,
        x_unit: Vec<Vec<f64>>,
        y_mean: f64,
        y_std: f64,
        y_scaled: Vec<f64>,
        kernel: SeArdKernel,
        map_value: f64,
    ) -> Result<Self> {
        let n = x_unit.len();
        let mut k = DMatrix::from_fn(n, n, |i, j| kernel.eval(&x_unit[i], &x_unit[j]));
        for i in 0..n {
            k[(i, i)] += JITTER * kernel.variance;
        }
        let chol = k.cholesky().ok_or(Error::NotPositiveDefinite)?;
        let alpha = chol.solve(&DVector::from_column_slice(&y_scaled));
        Ok(Self {
            space,
            kernel,
            y_mean,
            y_std,
            x_unit,
            y_scaled,
            chol: chol.unpack(),
            alpha,
            map_value,
        })
    }

    pub fn n_train(&self) -> usize {
        self.x_unit.len()
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Jitter added to the diagonal, in standardized output units.
    pub fn jitter(&self) -> f64 {
        JITTER * self.kernel.variance
    }

    /// Jitter in original output units.
    pub fn jitter_original(&self) -> f64 {
        self.jitter() * self.y_std * self.y_std
    }

    /// Kernel column `k(X_train, z)` for a unit-cube point.
    pub fn k_train(&self, z: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.n_train(),
            self.x_unit.iter().map(|xi| self.kernel.eval(xi, z)),
        )
    }

    /// Solves `L v = b` with the cached factor.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol
            .solve_lower_triangular(b)
            .expect("cholesky factor is nonsingular")
    }

    /// Solves `(K + jitter I) v = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let t = self.solve_lower(b);
        self.chol
            .tr_solve_lower_triangular(&t)
            .expect("cholesky factor is nonsingular")
    }

    /// Mean and variance at a unit-cube point with input gradients.
    pub fn predict_unit(&self, z: &[f64]) -> PointPrediction {
        let d = self.dim();
        let n = self.n_train();
        let kx = self.k_train(z);
        let mean_s = kx.dot(&self.alpha);
        let v = self.solve(&kx);
        let var_s = (self.kernel.variance - kx.dot(&v)).max(0.0);
        let mut dmean = vec![0.0; d];
        let mut dvar = vec![0.0; d];
        for j in 0..n {
            for c in 0..d {
                let l2 = self.kernel.lengthscales[c] * self.kernel.lengthscales[c];
                let dk = -kx[j] * (z[c] - self.x_unit[j][c]) / l2;
                dmean[c] += dk * self.alpha[j];
                dvar[c] -= 2.0 * dk * v[j];
            }
        }
        let s = self.y_std;
        PointPrediction {
            mean: self.y_mean + s * mean_s,
            var: var_s * s * s,
            dmean: dmean.iter().map(|g| g * s).collect(),
            dvar: dvar.iter().map(|g| g * s * s).collect(),
        }
    }

    /// Posterior at the rows of `x_test` (original units).
    pub fn posterior(&self, x_test: &DMatrix<f64>, full_cov: bool) -> Posterior {
        let zs: Vec<Vec<f64>> = rows(x_test).iter().map(|r| self.space.to_unit(r)).collect();
        self.posterior_unit(&zs, full_cov)
    }

    pub fn posterior_unit(&self, zs: &[Vec<f64>], full_cov: bool) -> Posterior {
        let m = zs.len();
        let s = self.y_std;
        let kx: Vec<DVector<f64>> = zs.iter().map(|z| self.k_train(z)).collect();
        let lk: Vec<DVector<f64>> = kx.iter().map(|k| self.solve_lower(k)).collect();
        let mean =
            DVector::from_iterator(m, kx.iter().map(|k| self.y_mean + s * k.dot(&self.alpha)));
        let cov = if full_cov {
            let mut c = DMatrix::from_fn(m, m, |i, j| {
                (self.kernel.eval(&zs[i], &zs[j]) - lk[i].dot(&lk[j])) * s * s
            });
            for i in 0..m {
                c[(i, i)] = c[(i, i)].max(0.0);
            }
            PosteriorCov::Full(c)
        } else {
            PosteriorCov::Variance(DVector::from_iterator(
                m,
                lk.iter()
                    .map(|l| (self.kernel.variance - l.dot(l)).max(0.0) * s * s),
            ))
        };
        Posterior { mean, cov }
    }

    /// Posterior mean at a single original-units point.
    pub fn mean_at(&self, x: &[f64]) -> f64 {
        let z = self.space.to_unit(x);
        self.y_mean + self.y_std * self.k_train(&z).dot(&self.alpha)
    }
}

/// MAP fit: multi-restart bounded quasi-Newton ascent of
/// log marginal likelihood + log-normal lengthscale log-prior.
///
/// Restarts whose starting point fails to factor are discarded; the winner
/// is the best objective, ties broken by restart index.
pub fn fit_map<R: Rng>(
    space: &DesignSpace,
    x: &DMatrix<f64>,
    y: &[f64],
    opts: &FitOptions,
    rng: &mut R,
) -> Result<GpModel> {
    let n = x.nrows();
    let d = space.dim();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "GP fit needs at least two observations".into(),
        ));
    }
    if x.ncols() != d || y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    let x_unit: Vec<Vec<f64>> = rows(x).iter().map(|r| space.to_unit(r)).collect();
    let (y_mean, y_std, y_scaled) = standardize(y);

    let (llo, lhi) = (
        opts.lengthscale_bounds.0.ln(),
        opts.lengthscale_bounds.1.ln(),
    );
    let lo: Vec<f64> = std::iter::once(opts.variance_bounds.0.ln())
        .chain(std::iter::repeat_n(llo, d))
        .collect();
    let hi: Vec<f64> = std::iter::once(opts.variance_bounds.1.ln())
        .chain(std::iter::repeat_n(lhi, d))
        .collect();

    let normal = Normal::new(opts.prior.median.ln(), opts.prior.log_std).expect("valid prior");
    let starts: Vec<Vec<f64>> = (0..opts.restarts.max(1))
        .map(|_| {
            std::iter::once(0.0)
                .chain((0..d).map(|_| normal.sample(rng).clamp(llo, lhi)))
                .collect()
        })
        .collect();

    let results: Vec<Option<(f64, Vec<f64>)>> = starts
        .par_iter()
        .map(|t0| {
            let neg = |t: &[f64]| {
                map_objective(t, &x_unit, &y_scaled, &opts.prior)
                    .map(|(v, g)| (-v, g.iter().map(|x| -x).collect()))
            };
            minimize_bounded(neg, t0, &lo, &hi, &opts.lbfgs).map(|m| (-m.f, m.x))
        })
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    for r in results.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| r.0 > b.0) {
            best = Some(r);
        }
    }
    let (value, theta) = best.ok_or(Error::FitFailed)?;
    let kernel = SeArdKernel {
        variance: theta[0].exp(),
        lengthscales: theta[1..].iter().map(|t| t.exp()).collect(),
    };
    GpModel::assemble(
        space.clone(),
        x_unit,
        y_mean,
        y_std,
        y_scaled,
        kernel,
        value,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::rng_stream;

    #[test]
    fn kernel_at_zero_distance_is_variance() {
        let k = SeArdKernel::new(2.5, vec![0.3, 0.7]).unwrap();
        let a = DMatrix::from_row_slice(1, 2, &[0.1, 0.2]);
        assert_eq!(kernel_eval(&k, &a, &a).unwrap()[(0, 0)], 2.5);
    }

    #[test]
    fn kernel_at_sqrt2() {
        let k = SeArdKernel::new(1.0, vec![1.0]).unwrap();
        let a = DMatrix::from_row_slice(1, 1, &[0.0]);
        let b = DMatrix::from_row_slice(1, 1, &[2f64.sqrt()]);
        assert!((kernel_eval(&k, &a, &b).unwrap()[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn kernel_swap_transposes() {
        let k = SeArdKernel::new(1.3, vec![0.2, 0.5]).unwrap();
        let a = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, 0.5, 0.5, 0.9, 0.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.3, 0.3, 0.0, 1.0]);
        assert_eq!(
            kernel_eval(&k, &a, &b).unwrap(),
            kernel_eval(&k, &b, &a).unwrap().transpose()
        );
        assert!(kernel_eval(&k, &a, &DMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn constant_data_gives_constant_mean() {
        let space = DesignSpace::unit(1);
        let x = DMatrix::from_column_slice(6, 1, &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        let y = vec![3.5; 6];
        let gp = fit_map(
            &space,
            &x,
            &y,
            &FitOptions::default(),
            &mut rng_stream(0, 0),
        )
        .unwrap();
        for t in [0.05, 0.33, 0.71, 0.97] {
            assert!((gp.mean_at(&[t]) - 3.5).abs() < 1e-9);
        }
    }

    #[test]
    fn single_point_rejected() {
        let space = DesignSpace::unit(1);
        let x = DMatrix::from_column_slice(1, 1, &[0.5]);
        assert!(fit_map(
            &space,
            &x,
            &[1.0],
            &FitOptions::default(),
            &mut rng_stream(0, 0)
        )
        .is_err());
    }
}
