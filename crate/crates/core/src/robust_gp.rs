//! Gaussian-process posterior over the Bayes risk `J(x) = E[f(x + xi)]`.
//!
//! Pushing the expectation through a GP on `f` gives a GP on `J` whose
//! covariances are kernel expectations:
//!
//! ```text
//! m_J(x)      = k_Jf(x)^T K^-1 y
//! Cov_J(x,x') = k_J(x,x') - k_Jf(x)^T K^-1 k_fJ(x')
//! k_Jf(x)     = E_xi[k(x + xi, X)]
//! k_J(x,x')   = E_{xi,xi'}[k(x + xi, x' + xi')]
//! ```
//!
//! The expectations are either sample averages over two frozen sample sets
//! `E` and `E2` (any noise distribution) or closed forms for the SE kernel
//! under Gaussian noise. With frozen samples the posterior is a
//! deterministic, differentiable function of `x`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gp::{rows, GpModel, PointPrediction, Posterior, PosteriorCov};
use crate::problem::{rng_stream, sample_noise, DesignSpace, NoiseDistribution};

/// Default number of frozen kernel-expectation samples.
pub const DEFAULT_KE_SAMPLES: usize = 2000;

const STREAM_E: u64 = 0x4b45_0001;
const STREAM_E2: u64 = 0x4b45_0002;
const PAR_CHUNK: usize = 256;

/// Perturbation samples drawn once per optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedNoiseSamples {
    /// `N x d`, original units.
    pub e: DMatrix<f64>,
    /// Independent `N x d` set used for the second argument of `k_J`.
    pub e2: DMatrix<f64>,
    pub seed: u64,
}

impl FixedNoiseSamples {
    pub fn draw(noise: &NoiseDistribution, n: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            e: sample_noise(noise, n, &mut rng_stream(seed, STREAM_E))?,
            e2: sample_noise(noise, n, &mut rng_stream(seed, STREAM_E2))?,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.e.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.e.nrows() == 0
    }
}

/// How kernel expectations are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeMode {
    /// Closed form, SE kernel with Gaussian (or zero) noise only.
    Analytic,
    /// Sample average over the frozen sets.
    SaaMc,
}

/// Which frozen set a kernel expectation averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSet {
    E,
    E2,
}

#[derive(Debug, Clone)]
struct ObjectiveCache {
    inv_l: Vec<f64>,
    /// Training inputs divided by the lengthscales, row-major `n x d`.
    xs: Vec<f64>,
    /// Samples in unit-cube units divided by the lengthscales, row-major.
    es: Vec<f64>,
    e2s: Vec<f64>,
    /// `k_J(x, x)`, which is independent of `x` for a stationary kernel.
    kj_diag: f64,
    /// Analytic mode: per-dimension `l^2 + s^2`, `l^2 + 2 s^2` and amplitudes.
    an_l2_one: Vec<f64>,
    an_l2_two: Vec<f64>,
    an_amp_one: f64,
    an_amp_two: f64,
    an_shift: Vec<f64>,
}

/// Robust GP: one base GP per objective plus the frozen noise samples.
#[derive(Debug, Clone)]
pub struct RobustGp {
    pub base: Vec<GpModel>,
    pub samples: FixedNoiseSamples,
    pub mode: KeMode,
    noise: NoiseDistribution,
    space: DesignSpace,
    caches: Vec<ObjectiveCache>,
    parallel: bool,
}

/// Robust posterior at one point for one objective, plus the pieces needed by
/// the active-learning acquisition.
#[derive(Debug, Clone)]
struct PointState {
    a: DVector<f64>,
    b: DVector<f64>,
    da: Option<DMatrix<f64>>,
    db: Option<DMatrix<f64>>,
}

impl RobustGp {
    pub fn new(
        base: Vec<GpModel>,
        noise: &NoiseDistribution,
        samples: FixedNoiseSamples,
        mode: KeMode,
    ) -> Result<Self> {
        let first = base.first().ok_or(Error::InvalidArgument(
            "robust GP needs at least one model".into(),
        ))?;
        let space = first.space.clone();
        let d = space.dim();
        if noise.dim() != d || samples.e.ncols() != d || samples.e2.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: samples.e.ncols(),
            });
        }
        if samples.is_empty() || samples.e2.nrows() != samples.len() {
            return Err(Error::InvalidArgument(
                "noise sample sets must be non-empty and equally sized".into(),
            ));
        }
        let (an_mean, an_std) = match (mode, noise) {
            (KeMode::Analytic, NoiseDistribution::Gaussian { mean, std }) => {
                (mean.clone(), std.clone())
            }
            (KeMode::Analytic, NoiseDistribution::Zero { dim }) => {
                (vec![0.0; *dim], vec![0.0; *dim])
            }
            (KeMode::Analytic, _) => return Err(Error::AnalyticUnsupported),
            _ => (vec![0.0; d], vec![0.0; d]),
        };
        let widths = space.widths();
        let caches = base
            .iter()
            .map(|gp| {
                let ls = &gp.kernel.lengthscales;
                let inv_l: Vec<f64> = ls.iter().map(|l| 1.0 / l).collect();
                let scale_rows = |m: &DMatrix<f64>| -> Vec<f64> {
                    let mut out = Vec::with_capacity(m.nrows() * d);
                    for i in 0..m.nrows() {
                        for c in 0..d {
                            out.push(m[(i, c)] / widths[c] * inv_l[c]);
                        }
                    }
                    out
                };
                let xs: Vec<f64> = gp
                    .x_unit
                    .iter()
                    .flat_map(|r| r.iter().zip(&inv_l).map(|(v, il)| v * il))
                    .collect();
                let es = scale_rows(&samples.e);
                let e2s = scale_rows(&samples.e2);
                let n_s = samples.len();
                let mut acc = 0.0;
                for i in 0..n_s {
                    let mut r2 = 0.0;
                    for c in 0..d {
                        let t = es[i * d + c] - e2s[i * d + c];
                        r2 += t * t;
                    }
                    acc += (-0.5 * r2).exp();
                }
                let s2: Vec<f64> = an_std
                    .iter()
                    .zip(&widths)
                    .map(|(s, w)| (s / w).powi(2))
                    .collect();
                let l2: Vec<f64> = ls.iter().map(|l| l * l).collect();
                let an_l2_one: Vec<f64> = l2.iter().zip(&s2).map(|(l, s)| l + s).collect();
                let an_l2_two: Vec<f64> = l2.iter().zip(&s2).map(|(l, s)| l + 2.0 * s).collect();
                let an_amp_one = l2
                    .iter()
                    .zip(&an_l2_one)
                    .map(|(l, t)| (l / t).sqrt())
                    .product::<f64>();
                let an_amp_two = l2
                    .iter()
                    .zip(&an_l2_two)
                    .map(|(l, t)| (l / t).sqrt())
                    .product::<f64>();
                ObjectiveCache {
                    inv_l,
                    xs,
                    es,
                    e2s,
                    kj_diag: match mode {
                        KeMode::SaaMc => gp.kernel.variance * acc / n_s as f64,
                        KeMode::Analytic => gp.kernel.variance * an_amp_two,
                    },
                    an_l2_one,
                    an_l2_two,
                    an_amp_one,
                    an_amp_two,
                    an_shift: an_mean.iter().zip(&widths).map(|(m, w)| m / w).collect(),
                }
            })
            .collect();
        Ok(Self {
            base,
            samples,
            mode,
            noise: noise.clone(),
            space,
            caches,
            parallel: false,
        })
    }

    /// Splits Monte Carlo sums across rayon workers in fixed-size chunks,
    /// reduced in chunk order.
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn n_objectives(&self) -> usize {
        self.base.len()
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn noise(&self) -> &NoiseDistribution {
        &self.noise
    }

    fn n_train(&self) -> usize {
        self.base[0].n_train()
    }

    /// `k_Jf(z)` over training inputs for objective `o` (standardized kernel
    /// units) and, optionally, its Jacobian with respect to `z` (unit cube).
    fn ke_row(
        &self,
        o: usize,
        z: &[f64],
        set: SampleSet,
        grad: bool,
    ) -> (DVector<f64>, Option<DMatrix<f64>>) {
        let gp = &self.base[o];
        let c = &self.caches[o];
        let d = self.dim();
        let n = gp.n_train();
        match self.mode {
            KeMode::Analytic => {
                let mut a = DVector::zeros(n);
                let mut da = grad.then(|| DMatrix::zeros(n, d));
                for j in 0..n {
                    let mut r2 = 0.0;
                    for k in 0..d {
                        let t = z[k] + c.an_shift[k] - gp.x_unit[j][k];
                        r2 += t * t / c.an_l2_one[k];
                    }
                    let v = gp.kernel.variance * c.an_amp_one * (-0.5 * r2).exp();
                    a[j] = v;
                    if let Some(da) = da.as_mut() {
                        for k in 0..d {
                            let t = z[k] + c.an_shift[k] - gp.x_unit[j][k];
                            da[(j, k)] = -v * t / c.an_l2_one[k];
                        }
                    }
                }
                (a, da)
            }
            KeMode::SaaMc => {
                let samples = match set {
                    SampleSet::E => &c.es,
                    SampleSet::E2 => &c.e2s,
                };
                let n_s = samples.len() / d;
                let zs: Vec<f64> = z.iter().zip(&c.inv_l).map(|(v, il)| v * il).collect();
                // u_j = z/l - x_j/l; accumulate sum_i exp(-|u_j + e_i|^2 / 2)
                let accumulate = |range: std::ops::Range<usize>| -> (Vec<f64>, Vec<f64>) {
                    let mut acc = vec![0.0; n];
                    let mut gacc = if grad { vec![0.0; n * d] } else { Vec::new() };
                    let mut u = vec![0.0; d];
                    // blocks of samples stay in cache across training inputs
                    let blocks: Vec<std::ops::Range<usize>> = range
                        .clone()
                        .step_by(PAR_CHUNK)
                        .map(|b| b..(b + PAR_CHUNK).min(range.end))
                        .collect();
                    for block in blocks {
                        for j in 0..n {
                            for k in 0..d {
                                u[k] = zs[k] - c.xs[j * d + k];
                            }
                            let mut s = 0.0;
                            if grad {
                                let g = &mut gacc[j * d..(j + 1) * d];
                                for i in block.clone() {
                                    let e = &samples[i * d..(i + 1) * d];
                                    let mut r2 = 0.0;
                                    for k in 0..d {
                                        let t = u[k] + e[k];
                                        r2 += t * t;
                                    }
                                    let w = (-0.5 * r2).exp();
                                    s += w;
                                    for k in 0..d {
                                        g[k] -= w * (u[k] + e[k]);
                                    }
                                }
                            } else {
                                for i in block.clone() {
                                    let e = &samples[i * d..(i + 1) * d];
                                    let mut r2 = 0.0;
                                    for k in 0..d {
                                        let t = u[k] + e[k];
                                        r2 += t * t;
                                    }
                                    s += (-0.5 * r2).exp();
                                }
                            }
                            acc[j] += s;
                        }
                    }
                    (acc, gacc)
                };
                let (acc, gacc) = if self.parallel && n_s > PAR_CHUNK {
                    let chunks: Vec<std::ops::Range<usize>> = (0..n_s)
                        .step_by(PAR_CHUNK)
                        .map(|s| s..(s + PAR_CHUNK).min(n_s))
                        .collect();
                    let parts: Vec<(Vec<f64>, Vec<f64>)> =
                        chunks.into_par_iter().map(accumulate).collect();
                    let mut acc = vec![0.0; n];
                    let mut gacc = if grad { vec![0.0; n * d] } else { Vec::new() };
                    for (pa, pg) in parts {
                        for (t, v) in acc.iter_mut().zip(pa) {
                            *t += v;
                        }
                        for (t, v) in gacc.iter_mut().zip(pg) {
                            *t += v;
                        }
                    }
                    (acc, gacc)
                } else {
                    accumulate(0..n_s)
                };
                let scale = gp.kernel.variance / n_s as f64;
                let a = DVector::from_iterator(n, acc.into_iter().map(|v| v * scale));
                let da = grad
                    .then(|| DMatrix::from_fn(n, d, |j, k| gacc[j * d + k] * scale * c.inv_l[k]));
                (a, da)
            }
        }
    }

    /// `k_J(z1, z2)` for objective `o` in standardized kernel units.
    fn kj_pair(&self, o: usize, z1: &[f64], z2: &[f64]) -> f64 {
        let gp = &self.base[o];
        let c = &self.caches[o];
        let d = self.dim();
        match self.mode {
            KeMode::Analytic => {
                let mut r2 = 0.0;
                for k in 0..d {
                    r2 += (z1[k] - z2[k]).powi(2) / c.an_l2_two[k];
                }
                gp.kernel.variance * c.an_amp_two * (-0.5 * r2).exp()
            }
            KeMode::SaaMc => {
                let n_s = c.es.len() / d;
                let u: Vec<f64> = (0..d).map(|k| (z1[k] - z2[k]) * c.inv_l[k]).collect();
                let mut s = 0.0;
                for i in 0..n_s {
                    let mut r2 = 0.0;
                    for k in 0..d {
                        let t = u[k] + c.es[i * d + k] - c.e2s[i * d + k];
                        r2 += t * t;
                    }
                    s += (-0.5 * r2).exp();
                }
                gp.kernel.variance * s / n_s as f64
            }
        }
    }

    fn state(&self, o: usize, z: &[f64], grad: bool) -> PointState {
        let (a, da) = self.ke_row(o, z, SampleSet::E, grad);
        let (b, db) = match self.mode {
            KeMode::Analytic => (a.clone(), da.clone()),
            KeMode::SaaMc => self.ke_row(o, z, SampleSet::E2, grad),
        };
        PointState { a, b, da, db }
    }

    /// `k_Jf` at the rows of `x_test` (original units), one `m x n` matrix
    /// per objective, in the GP's standardized kernel units.
    pub fn ke_cross(&self, x_test: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let zs: Vec<Vec<f64>> = rows(x_test).iter().map(|r| self.space.to_unit(r)).collect();
        (0..self.n_objectives())
            .map(|o| {
                let n = self.n_train();
                let mut out = DMatrix::zeros(zs.len(), n);
                for (i, z) in zs.iter().enumerate() {
                    let (a, _) = self.ke_row(o, z, SampleSet::E, false);
                    out.row_mut(i).copy_from(&a.transpose());
                }
                out
            })
            .collect()
    }

    /// Mean and variance of `J_o` at a unit-cube point, original units, with
    /// gradients with respect to the unit-cube input.
    pub fn predict_unit(&self, o: usize, z: &[f64], grad: bool) -> PointPrediction {
        let gp = &self.base[o];
        let c = &self.caches[o];
        let d = self.dim();
        let st = self.state(o, z, grad);
        let mean_s = st.a.dot(&gp.alpha);
        let wb = gp.solve(&st.b);
        let var_raw = c.kj_diag - st.a.dot(&wb);
        let s = gp.y_std;
        let (mut dmean, mut dvar) = (vec![0.0; d], vec![0.0; d]);
        if let (Some(da), Some(db)) = (&st.da, &st.db) {
            let wa = if self.mode == KeMode::Analytic {
                wb.clone()
            } else {
                gp.solve(&st.a)
            };
            for k in 0..d {
                dmean[k] = da.column(k).dot(&gp.alpha) * s;
                if var_raw > 0.0 {
                    dvar[k] = -(da.column(k).dot(&wb) + db.column(k).dot(&wa)) * s * s;
                }
            }
        }
        PointPrediction {
            mean: gp.y_mean + s * mean_s,
            var: var_raw.max(0.0) * s * s,
            dmean,
            dvar,
        }
    }

    /// Predictions for all objectives at a unit-cube point.
    pub fn predict_all_unit(&self, z: &[f64], grad: bool) -> Vec<PointPrediction> {
        (0..self.n_objectives())
            .map(|o| self.predict_unit(o, z, grad))
            .collect()
    }

    /// Unrepaired SAA covariance of `J_o` between unit-cube points, original units.
    pub fn covariance_raw_unit(&self, o: usize, zs: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let gp = &self.base[o];
        let s = gp.y_std;
        let states: Vec<PointState> = zs.iter().map(|z| self.state(o, z, false)).collect();
        let la: Vec<DVector<f64>> = states.iter().map(|st| gp.solve_lower(&st.a)).collect();
        let lb: Vec<DVector<f64>> = states.iter().map(|st| gp.solve_lower(&st.b)).collect();
        let m = zs.len();
        let mean = DVector::from_iterator(
            m,
            states.iter().map(|st| gp.y_mean + s * st.a.dot(&gp.alpha)),
        );
        let cov = DMatrix::from_fn(m, m, |p, q| {
            let kj = if p == q {
                self.caches[o].kj_diag
            } else {
                self.kj_pair(o, &zs[p], &zs[q])
            };
            (kj - la[p].dot(&lb[q])) * s * s
        });
        (mean, cov)
    }

    /// Robust posterior of every objective at the rows of `x_test`.
    ///
    /// Variances are clamped at zero; full covariances are symmetrized and
    /// repaired with [`nearest_pd`].
    pub fn robust_posterior(
        &self,
        x_test: &DMatrix<f64>,
        full_cov: bool,
    ) -> Result<Vec<Posterior>> {
        let zs: Vec<Vec<f64>> = rows(x_test).iter().map(|r| self.space.to_unit(r)).collect();
        self.robust_posterior_unit(&zs, full_cov)
    }

    pub fn robust_posterior_unit(&self, zs: &[Vec<f64>], full_cov: bool) -> Result<Vec<Posterior>> {
        (0..self.n_objectives())
            .map(|o| {
                if full_cov {
                    let (mean, cov) = self.covariance_raw_unit(o, zs);
                    Ok(Posterior {
                        mean,
                        cov: PosteriorCov::Full(nearest_pd(&cov)?),
                    })
                } else {
                    let preds: Vec<PointPrediction> =
                        zs.iter().map(|z| self.predict_unit(o, z, false)).collect();
                    Ok(Posterior {
                        mean: DVector::from_iterator(zs.len(), preds.iter().map(|p| p.mean)),
                        cov: PosteriorCov::Variance(DVector::from_iterator(
                            zs.len(),
                            preds.iter().map(|p| p.var),
                        )),
                    })
                }
            })
            .collect()
    }

    /// Posterior means of `J` at original-units points, one row per point.
    pub fn mean_j(&self, x: &[f64]) -> Vec<f64> {
        let z = self.space.to_unit(x);
        (0..self.n_objectives())
            .map(|o| {
                let (a, _) = self.ke_row(o, &z, SampleSet::E, false);
                self.base[o].y_mean + self.base[o].y_std * a.dot(&self.base[o].alpha)
            })
            .collect()
    }

    /// Prepares repeated evaluations of the variance of `J_o` at `z_star`
    /// after conditioning on an extra observation at a candidate location.
    pub fn fantasy_at(&self, z_star: &[f64]) -> FantasyContext<'_> {
        let per_obj = (0..self.n_objectives())
            .map(|o| {
                let gp = &self.base[o];
                let st = self.state(o, z_star, false);
                let la = gp.solve_lower(&st.a);
                let lb = gp.solve_lower(&st.b);
                let var_s = (self.caches[o].kj_diag - la.dot(&lb)).max(0.0);
                (la, lb, var_s)
            })
            .collect();
        FantasyContext {
            rgp: self,
            z_star: z_star.to_vec(),
            per_obj,
        }
    }

    /// `E_xi[k(z_star + xi, z)]` for a single location `z` (standardized units).
    fn ke_point(&self, o: usize, z_star: &[f64], z: &[f64], set: SampleSet) -> f64 {
        let gp = &self.base[o];
        let c = &self.caches[o];
        let d = self.dim();
        match self.mode {
            KeMode::Analytic => {
                let mut r2 = 0.0;
                for k in 0..d {
                    let t = z_star[k] + c.an_shift[k] - z[k];
                    r2 += t * t / c.an_l2_one[k];
                }
                gp.kernel.variance * c.an_amp_one * (-0.5 * r2).exp()
            }
            KeMode::SaaMc => {
                let samples = match set {
                    SampleSet::E => &c.es,
                    SampleSet::E2 => &c.e2s,
                };
                let n_s = samples.len() / d;
                let u: Vec<f64> = (0..d).map(|k| (z_star[k] - z[k]) * c.inv_l[k]).collect();
                let mut s = 0.0;
                for i in 0..n_s {
                    let mut r2 = 0.0;
                    for k in 0..d {
                        let t = u[k] + samples[i * d + k];
                        r2 += t * t;
                    }
                    s += (-0.5 * r2).exp();
                }
                gp.kernel.variance * s / n_s as f64
            }
        }
    }
}

/// Cached state for evaluating post-fantasy variances at a fixed pending point.
pub struct FantasyContext<'a> {
    rgp: &'a RobustGp,
    z_star: Vec<f64>,
    /// `(L^-1 a, L^-1 b, var)` per objective, standardized units.
    per_obj: Vec<(DVector<f64>, DVector<f64>, f64)>,
}

impl FantasyContext<'_> {
    /// Current variance of `J_o` at the pending point, standardized units.
    pub fn prior_variance(&self, o: usize) -> f64 {
        self.per_obj[o].2
    }

    /// Variance of `J_o` at the pending point after adding a noise-free
    /// observation at unit-cube location `z` to the base GP, hyperparameters
    /// fixed. The Cholesky factor is extended by one row; the observed value
    /// never enters.
    pub fn posterior_variance(&self, o: usize, z: &[f64]) -> f64 {
        let rgp = self.rgp;
        let gp = &rgp.base[o];
        let (la, lb, var) = &self.per_obj[o];
        let kx = gp.k_train(z);
        let l = gp.solve_lower(&kx);
        let jitter = gp.jitter();
        // Schur complement of the extended kernel matrix, floored at the jitter
        let schur = (gp.kernel.variance + jitter - l.dot(&l)).max(jitter);
        let ca = rgp.ke_point(o, &self.z_star, z, SampleSet::E) - l.dot(la);
        let cb = match rgp.mode {
            KeMode::Analytic => ca,
            KeMode::SaaMc => rgp.ke_point(o, &self.z_star, z, SampleSet::E2) - l.dot(lb),
        };
        (var - ca * cb / schur).max(0.0)
    }
}

/// Nearest positive-definite matrix to `c`.
///
/// The matrix is symmetrized; if it does not factor, negative eigenvalues are
/// zeroed (the Frobenius-nearest PSD matrix) and a nugget from the ladder
/// `1e-10 * 2^k * trace / m` is added until a Cholesky factorization succeeds.
pub fn nearest_pd(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !c.is_square() {
        return Err(Error::InvalidArgument(
            "nearest_pd needs a square matrix".into(),
        ));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let m = c.nrows();
    if m == 0 {
        return Ok(c.clone());
    }
    let sym = (c + c.transpose()) * 0.5;
    if sym.clone().cholesky().is_some() {
        return Ok(sym);
    }
    let eig = SymmetricEigen::new(sym.clone());
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let psd = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let psd = (&psd + psd.transpose()) * 0.5;
    let trace = sym.trace();
    let scale = if trace > 0.0 { trace / m as f64 } else { 1.0 };
    for k in 0..200 {
        let eps = 1e-10 * 2f64.powi(k) * scale;
        let mut candidate = psd.clone();
        for i in 0..m {
            candidate[(i, i)] += eps;
        }
        if candidate.clone().cholesky().is_some() {
            return Ok(candidate);
        }
    }
    Err(Error::NotPositiveDefinite)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::SeArdKernel;

    #[test]
    fn nearest_pd_keeps_pd_input() {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let out = nearest_pd(&c).unwrap();
        assert!((out - &c).norm() < 1e-8 * c.norm());
    }

    #[test]
    fn nearest_pd_clips_negative_direction() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let out = nearest_pd(&c).unwrap();
        let ev = SymmetricEigen::new(out.clone()).eigenvalues;
        let (lo, hi) = (ev.min(), ev.max());
        assert!((hi - 3.0).abs() < 1e-8);
        assert!(lo > 0.0 && lo < 1e-6);
        assert!(out.cholesky().is_some());
    }

    #[test]
    fn nearest_pd_rejects_nan() {
        let c = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(matches!(nearest_pd(&c), Err(Error::NonFinite)));
    }

    #[test]
    fn analytic_requires_gaussian() {
        let space = DesignSpace::unit(1);
        let x = DMatrix::from_column_slice(3, 1, &[0.1, 0.5, 0.9]);
        let gp = GpModel::with_kernel(
            &space,
            &x,
            &[0.0, 1.0, 0.0],
            SeArdKernel::new(1.0, vec![0.3]).unwrap(),
        )
        .unwrap();
        let noise = NoiseDistribution::Uniform {
            lower: vec![-0.1],
            upper: vec![0.1],
        };
        let s = FixedNoiseSamples::draw(&noise, 10, 0).unwrap();
        assert!(matches!(
            RobustGp::new(vec![gp], &noise, s, KeMode::Analytic),
            Err(Error::AnalyticUnsupported)
        ));
    }
}
