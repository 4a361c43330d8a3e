//! First-stage hypervolume acquisitions (analytic EHVI, Monte Carlo qEHVI),
//! the second-stage active-learning acquisition and its activation test, and
//! a multi-start optimizer for both.
//!
//! Acquisitions are evaluated in unit-cube coordinates of the design space;
//! objective values stay in original units.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::gp::{GpModel, PointPrediction, PosteriorCov};
use crate::optim::{fd_gradient, minimize_bounded, shifted_halton, LbfgsOptions};
use crate::pareto::{dominates, hypervolume_2d};
use crate::problem::DesignSpace;
use crate::robust_gp::{nearest_pd, RobustGp};

/// Default number of frozen standard-normal draws for qEHVI.
pub const QEHVI_BASE_SAMPLES: usize = 512;

/// Default activation threshold, unit-cube coordinates.
pub const DEFAULT_EPS: f64 = 1e-3;

/// A per-objective Gaussian posterior that acquisitions can query.
pub trait Surrogate: Sync {
    fn n_objectives(&self) -> usize;

    fn space(&self) -> &DesignSpace;

    /// Marginal predictions per objective at a unit-cube point.
    fn predict(&self, z: &[f64], grad: bool) -> Vec<PointPrediction>;

    /// Joint mean and repaired covariance per objective over unit-cube points.
    fn joint(&self, zs: &[Vec<f64>]) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>>;
}

impl Surrogate for RobustGp {
    fn n_objectives(&self) -> usize {
        RobustGp::n_objectives(self)
    }

    fn space(&self) -> &DesignSpace {
        RobustGp::space(self)
    }

    fn predict(&self, z: &[f64], grad: bool) -> Vec<PointPrediction> {
        self.predict_all_unit(z, grad)
    }

    fn joint(&self, zs: &[Vec<f64>]) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
        self.robust_posterior_unit(zs, true)?
            .into_iter()
            .map(|p| match p.cov {
                PosteriorCov::Full(c) => Ok((p.mean, c)),
                PosteriorCov::Variance(_) => unreachable!("full covariance requested"),
            })
            .collect()
    }
}

/// Independent standard GPs, one per objective, as a surrogate of `f`.
#[derive(Debug, Clone)]
pub struct GpSet(pub Vec<GpModel>);

impl Surrogate for GpSet {
    fn n_objectives(&self) -> usize {
        self.0.len()
    }

    fn space(&self) -> &DesignSpace {
        &self.0[0].space
    }

    fn predict(&self, z: &[f64], _grad: bool) -> Vec<PointPrediction> {
        self.0.iter().map(|gp| gp.predict_unit(z)).collect()
    }

    fn joint(&self, zs: &[Vec<f64>]) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
        self.0
            .iter()
            .map(|gp| {
                let p = gp.posterior_unit(zs, true);
                match p.cov {
                    PosteriorCov::Full(c) => Ok((p.mean, nearest_pd(&c)?)),
                    PosteriorCov::Variance(_) => unreachable!("full covariance requested"),
                }
            })
            .collect()
    }
}

/// Frozen inputs of a hypervolume acquisition.
#[derive(Debug, Clone)]
pub struct AcquisitionContext {
    /// Current front (model-inferred for the robust method).
    pub front: Vec<Vec<f64>>,
    pub ref_point: Vec<f64>,
    /// `S` rows of `M * q` standard-normal draws for qEHVI.
    pub base_samples: Vec<Vec<f64>>,
}

impl AcquisitionContext {
    pub fn new(front: Vec<Vec<f64>>, ref_point: Vec<f64>) -> Self {
        Self {
            front,
            ref_point,
            base_samples: Vec::new(),
        }
    }

    /// Draws `n` frozen base samples for batches of size `q`.
    pub fn with_base_samples<R: Rng>(mut self, n: usize, q: usize, rng: &mut R) -> Self {
        let width = self.ref_point.len() * q;
        self.base_samples = (0..n)
            .map(|_| (0..width).map(|_| StandardNormal.sample(rng)).collect())
            .collect();
        self
    }
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn norm_pdf(t: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * t * t).exp()
}

fn norm_cdf(t: f64) -> f64 {
    0.5 * erfc(-t / std::f64::consts::SQRT_2)
}

/// `E[(Y - c)^+]` for `Y ~ N(mu, sigma^2)` with derivatives in `mu` and `sigma`.
fn expected_excess(mu: f64, sigma: f64, c: f64) -> (f64, f64, f64) {
    if c == f64::INFINITY {
        return (0.0, 0.0, 0.0);
    }
    if sigma <= 0.0 {
        return if mu > c {
            (mu - c, 1.0, 0.0)
        } else {
            (0.0, 0.0, 0.0)
        };
    }
    let t = (mu - c) / sigma;
    let (cdf, pdf) = (norm_cdf(t), norm_pdf(t));
    ((mu - c) * cdf + sigma * pdf, cdf, pdf)
}

/// Non-dominated improvement region above `ref_point` as vertical strips
/// `[lo, hi) x [floor, inf)`.
fn improvement_cells(front: &[Vec<f64>], ref_point: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut pts: Vec<(f64, f64)> = front
        .iter()
        .filter(|p| p[0] > ref_point[0] && p[1] > ref_point[1])
        .filter(|p| !front.iter().any(|q| dominates(q, p)))
        .map(|p| (p[0], p[1]))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    pts.dedup_by(|a, b| a.0 == b.0);
    let mut cells = Vec::with_capacity(pts.len() + 1);
    let mut lo = ref_point[0];
    for &(x, y) in &pts {
        cells.push((lo, x, y));
        lo = x;
    }
    cells.push((lo, f64::INFINITY, ref_point[1]));
    cells
}

/// Exact EHVI of a bivariate independent Gaussian over a 2-d front, with
/// derivatives in the means and standard deviations.
pub fn ehvi_gaussian(
    front: &[Vec<f64>],
    ref_point: &[f64],
    mean: [f64; 2],
    std: [f64; 2],
) -> (f64, [f64; 2], [f64; 2]) {
    let mut value = 0.0;
    let (mut dm, mut ds) = ([0.0; 2], [0.0; 2]);
    for (lo, hi, floor) in improvement_cells(front, ref_point) {
        let (pl, pl_m, pl_s) = expected_excess(mean[0], std[0], lo);
        let (ph, ph_m, ph_s) = expected_excess(mean[0], std[0], hi);
        let width = pl - ph;
        let (height, h_m, h_s) = expected_excess(mean[1], std[1], floor);
        value += width * height;
        dm[0] += (pl_m - ph_m) * height;
        ds[0] += (pl_s - ph_s) * height;
        dm[1] += width * h_m;
        ds[1] += width * h_s;
    }
    (value, dm, ds)
}

/// Analytic EHVI at unit-cube point `z`.
pub fn ehvi<S: Surrogate + ?Sized>(ctx: &AcquisitionContext, model: &S, z: &[f64]) -> f64 {
    ehvi_with_grad(ctx, model, z, false).0
}

/// EHVI and its gradient with respect to `z`, chained through the posterior.
pub fn ehvi_with_grad<S: Surrogate + ?Sized>(
    ctx: &AcquisitionContext,
    model: &S,
    z: &[f64],
    grad: bool,
) -> (f64, Vec<f64>) {
    assert_eq!(
        model.n_objectives(),
        2,
        "EHVI is implemented for two objectives"
    );
    let preds = model.predict(z, grad);
    let mean = [preds[0].mean, preds[1].mean];
    let std = [preds[0].var.sqrt(), preds[1].var.sqrt()];
    let (v, dm, ds) = ehvi_gaussian(&ctx.front, &ctx.ref_point, mean, std);
    let d = z.len();
    let mut g = vec![0.0; d];
    if grad {
        for (o, p) in preds.iter().enumerate() {
            for k in 0..d {
                g[k] += dm[o] * p.dmean[k];
                if std[o] > 0.0 {
                    g[k] += ds[o] * p.dvar[k] / (2.0 * std[o]);
                }
            }
        }
    }
    (v, g)
}

/// SAA estimate of qEHVI for the batch `zs` (unit cube) with its standard error.
pub fn qehvi_with_se<S: Surrogate + ?Sized>(
    ctx: &AcquisitionContext,
    model: &S,
    zs: &[Vec<f64>],
) -> Result<(f64, f64)> {
    let q = zs.len();
    let m = model.n_objectives();
    if q == 0 {
        return Err(Error::InvalidArgument(
            "qEHVI needs a non-empty batch".into(),
        ));
    }
    if ctx.base_samples.is_empty() || ctx.base_samples[0].len() < m * q {
        return Err(Error::InvalidArgument(
            "base samples do not cover the batch".into(),
        ));
    }
    let joint = model.joint(zs)?;
    let chols: Vec<DMatrix<f64>> = joint
        .iter()
        .map(|(_, c)| {
            c.clone()
                .cholesky()
                .map(|ch| ch.unpack())
                .ok_or(Error::NotPositiveDefinite)
        })
        .collect::<Result<_>>()?;
    let base_hv = hypervolume_2d(&ctx.front, &ctx.ref_point);
    let mut pts = ctx.front.clone();
    let nf = pts.len();
    pts.extend(std::iter::repeat_n(vec![0.0; m], q));
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for s in &ctx.base_samples {
        for o in 0..m {
            let (mean, _) = &joint[o];
            let l = &chols[o];
            for i in 0..q {
                let mut y = mean[i];
                for k in 0..=i {
                    y += l[(i, k)] * s[o * q + k];
                }
                pts[nf + i][o] = y;
            }
        }
        let hvi = (hypervolume_2d(&pts, &ctx.ref_point) - base_hv).max(0.0);
        sum += hvi;
        sum_sq += hvi * hvi;
    }
    let n = ctx.base_samples.len() as f64;
    let mean = sum / n;
    let se = if n > 1.0 {
        ((sum_sq / n - mean * mean).max(0.0) / (n - 1.0)).sqrt()
    } else {
        f64::INFINITY
    };
    Ok((mean, se))
}

pub fn qehvi<S: Surrogate + ?Sized>(
    ctx: &AcquisitionContext,
    model: &S,
    zs: &[Vec<f64>],
) -> Result<f64> {
    qehvi_with_se(ctx, model, zs).map(|r| r.0)
}

/// Whether the pending point `x_star` (original units) sits on the design
/// space boundary or duplicates a training input, at threshold `eps` in
/// unit-cube coordinates.
pub fn al_activation(
    x_star: &[f64],
    x_train: &DMatrix<f64>,
    space: &DesignSpace,
    eps: f64,
) -> bool {
    let z = space.to_unit(x_star);
    let train: Vec<Vec<f64>> = (0..x_train.nrows())
        .map(|i| space.to_unit(&x_train.row(i).iter().copied().collect::<Vec<_>>()))
        .collect();
    al_activation_unit(&z, &train, eps)
}

pub fn al_activation_unit(z: &[f64], train: &[Vec<f64>], eps: f64) -> bool {
    let min_dist = train
        .iter()
        .map(|x| {
            x.iter()
                .zip(z)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(f64::INFINITY, f64::min);
    let lower_margin = z.iter().copied().fold(f64::INFINITY, f64::min);
    let upper_margin = z.iter().map(|v| 1.0 - v).fold(f64::INFINITY, f64::min);
    min_dist < eps || lower_margin < eps || upper_margin < eps
}

/// Active-learning acquisition around a pending point: half the log ratio of
/// the product of `J` variances at the pending point before and after a
/// fantasized observation at the candidate.
pub struct AlAcquisition<'a> {
    fantasy: crate::robust_gp::FantasyContext<'a>,
    rgp: &'a RobustGp,
}

impl<'a> AlAcquisition<'a> {
    pub fn new(rgp: &'a RobustGp, z_star: &[f64]) -> Self {
        Self {
            fantasy: rgp.fantasy_at(z_star),
            rgp,
        }
    }

    /// Value at unit-cube candidate `z`.
    pub fn value(&self, z: &[f64]) -> f64 {
        (0..self.rgp.n_objectives())
            .map(|o| {
                let floor = self.rgp.base[o].jitter();
                let before = self.fantasy.prior_variance(o).max(floor);
                let after = self.fantasy.posterior_variance(o, z).max(floor);
                // independent sample sets can put the update's sign a hair
                // negative when the coupling vanishes
                (0.5 * (before / after).ln()).max(0.0)
            })
            .sum()
    }
}

/// `alpha_AL` at candidate `x` for pending point `x_star`, original units.
pub fn al_acquisition(rgp: &RobustGp, x_star: &[f64], x: &[f64]) -> f64 {
    let space = rgp.space();
    AlAcquisition::new(rgp, &space.to_unit(x_star)).value(&space.to_unit(x))
}

/// Candidate-screening and refinement budget for [`optimize_acquisition`].
#[derive(Debug, Clone, PartialEq)]
pub struct AcqBudget {
    /// Raw candidates per search dimension.
    pub raw_per_dim: usize,
    pub starts: usize,
    pub max_iters: usize,
}

impl Default for AcqBudget {
    fn default() -> Self {
        Self {
            raw_per_dim: 1024,
            starts: 8,
            max_iters: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AcqOptimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub best_raw_value: f64,
    /// False when every refinement start failed and the best raw candidate
    /// was returned as is.
    pub refined: bool,
}

/// Value-and-gradient callback used by the optimizer.
pub type ValueGrad<'a> = dyn Fn(&[f64]) -> (f64, Vec<f64>) + Sync + 'a;

/// Maximizes `objective` over the box `[lo, hi]`.
///
/// Screens a shifted Halton set of `raw_per_dim * dim` candidates, then
/// refines the best `starts` of them with bounded quasi-Newton ascent using
/// `gradient` when given and central differences otherwise.
pub fn optimize_acquisition<F, R>(
    objective: F,
    gradient: Option<&ValueGrad<'_>>,
    lo: &[f64],
    hi: &[f64],
    budget: &AcqBudget,
    rng: &mut R,
) -> AcqOptimum
where
    F: Fn(&[f64]) -> f64 + Sync,
    R: Rng,
{
    let dim = lo.len();
    let n_raw = (budget.raw_per_dim * dim).max(1);
    let raw: Vec<Vec<f64>> = shifted_halton(n_raw, dim, rng)
        .into_iter()
        .map(|u| {
            u.iter()
                .enumerate()
                .map(|(k, t)| lo[k] + t * (hi[k] - lo[k]))
                .collect()
        })
        .collect();
    let values: Vec<f64> = raw.par_iter().map(|x| objective(x)).collect();
    let mut order: Vec<usize> = (0..n_raw).filter(|&i| values[i].is_finite()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let best_raw = order.first().copied().unwrap_or(0);
    let best_raw_value = values.get(best_raw).copied().unwrap_or(f64::NEG_INFINITY);

    let opts = LbfgsOptions {
        max_iters: budget.max_iters,
        pg_tol: 1e-9,
        f_tol: 1e-10,
        ..LbfgsOptions::default()
    };
    let starts: Vec<usize> = order.iter().copied().take(budget.starts).collect();
    let widths: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| b - a).collect();
    let h = 1e-6
        * widths
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
            .max(1e-12);
    let refined: Vec<Option<(f64, Vec<f64>)>> = starts
        .par_iter()
        .map(|&i| {
            let neg = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
                match gradient {
                    Some(g) => {
                        let (v, gr) = g(x);
                        Some((-v, gr.into_iter().map(|t| -t).collect()))
                    }
                    None => {
                        let mut f = |p: &[f64]| objective(p);
                        let v = f(x);
                        let gr = fd_gradient(&mut f, x, lo, hi, h)?;
                        Some((-v, gr.into_iter().map(|t| -t).collect()))
                    }
                }
            };
            minimize_bounded(neg, &raw[i], lo, hi, &opts).map(|m| (-m.f, m.x))
        })
        .collect();

    let mut best = AcqOptimum {
        x: raw[best_raw].clone(),
        value: best_raw_value,
        best_raw_value,
        refined: false,
    };
    for (v, x) in refined.into_iter().flatten() {
        best.refined = true;
        // re-evaluate so the reported value matches the objective exactly
        let v_exact = objective(&x);
        let v = if v_exact.is_finite() { v_exact } else { v };
        if v > best.value {
            best.value = v;
            best.x = x;
        }
    }
    if !best.refined {
        log::warn!("acquisition refinement failed from every start; returning best raw candidate");
    }
    best
}
