//! Design spaces, additive input-noise distributions and the bi-objective
//! benchmark registry.
//!
//! All objectives are exposed in maximization form: the registry returns the
//! negated textbook expressions, so that "larger is better" holds for every
//! component of every problem.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};

use crate::error::{Error, Result};

/// Retry budget per draw of the truncated-normal rejection sampler.
pub const TRUNCATED_NORMAL_RETRIES: usize = 1000;

/// Seeded random stream `stream` derived from `master`.
///
/// Every stochastic component takes its randomness from a stream obtained
/// here, so a run is a pure function of its master seed.
pub fn rng_stream(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Axis-aligned box `[lower, upper]` in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DesignSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidArgument("design space needs d >= 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidArgument(
                "design space requires lower < upper in every dimension".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(d: usize) -> Self {
        Self::new(vec![0.0; d], vec![1.0; d]).expect("unit cube is valid")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .collect()
    }

    /// Box grown by `margin` on every side.
    pub fn enlarged(&self, margin: &[f64]) -> Self {
        Self {
            lower: self.lower.iter().zip(margin).map(|(l, m)| l - m).collect(),
            upper: self.upper.iter().zip(margin).map(|(u, m)| u + m).collect(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Affine map into the unit cube.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (v - l) / (u - l))
            .collect()
    }

    pub fn from_unit(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| l + v * (u - l))
            .collect()
    }

    /// Uniform random design of `n` points.
    pub fn sample_uniform<R: Rng>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(n, d);
        for i in 0..n {
            for k in 0..d {
                out[(i, k)] = self.lower[k] + rng.random::<f64>() * (self.upper[k] - self.lower[k]);
            }
        }
        out
    }
}

/// Distribution of the additive input perturbation. Dimensions are independent.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseDistribution {
    /// Point mass at zero: the perturbation vanishes and the Bayes risk is the
    /// objective itself.
    Zero {
        dim: usize,
    },
    Gaussian {
        mean: Vec<f64>,
        std: Vec<f64>,
    },
    /// Location-scale Student-t: `loc + scale * T(dof)`.
    StudentT {
        dof: f64,
        loc: Vec<f64>,
        scale: Vec<f64>,
    },
    TruncatedNormal {
        mean: Vec<f64>,
        std: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Uniform {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

impl NoiseDistribution {
    pub fn dim(&self) -> usize {
        match self {
            Self::Zero { dim } => *dim,
            Self::Gaussian { mean, .. } => mean.len(),
            Self::StudentT { loc, .. } => loc.len(),
            Self::TruncatedNormal { mean, .. } => mean.len(),
            Self::Uniform { lower, .. } => lower.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let same = |v: &[f64]| -> Result<()> {
            if v.len() != d {
                Err(Error::DimensionMismatch {
                    expected: d,
                    got: v.len(),
                })
            } else {
                Ok(())
            }
        };
        let positive = |v: &[f64], what: &str| -> Result<()> {
            if v.iter().all(|s| *s > 0.0 && s.is_finite()) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{what} must be positive")))
            }
        };
        let ordered = |lo: &[f64], hi: &[f64]| -> Result<()> {
            if lo.iter().zip(hi).all(|(a, b)| a < b) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(
                    "noise bounds need lower < upper".into(),
                ))
            }
        };
        if d == 0 {
            return Err(Error::InvalidArgument(
                "noise dimension must be >= 1".into(),
            ));
        }
        match self {
            Self::Zero { .. } => Ok(()),
            Self::Gaussian { std, .. } => {
                same(std)?;
                positive(std, "gaussian std")
            }
            Self::StudentT { dof, scale, .. } => {
                same(scale)?;
                if !(*dof > 0.0) {
                    return Err(Error::InvalidArgument("student-t dof must be > 0".into()));
                }
                positive(scale, "student-t scale")
            }
            Self::TruncatedNormal {
                std, lower, upper, ..
            } => {
                same(std)?;
                same(lower)?;
                same(upper)?;
                positive(std, "truncated normal std")?;
                ordered(lower, upper)
            }
            Self::Uniform { lower, upper } => {
                same(upper)?;
                ordered(lower, upper)
            }
        }
    }

    /// Per-dimension half-width of the 97.5% marginal quantile about the
    /// centre, for the distributions where that is meaningful. Bounded
    /// distributions report their support half-width.
    pub fn quantile_halfwidth(&self) -> Vec<f64> {
        const Z975: f64 = 1.959_963_984_540_054;
        match self {
            Self::Zero { dim } => vec![0.0; *dim],
            Self::Gaussian { std, .. } => std.iter().map(|s| Z975 * s).collect(),
            Self::StudentT { dof, scale, .. } => {
                use statrs::distribution::{ContinuousCDF, StudentsT};
                let q = StudentsT::new(0.0, 1.0, *dof)
                    .map(|t| t.inverse_cdf(0.975))
                    .unwrap_or(Z975);
                scale.iter().map(|s| q * s).collect()
            }
            Self::TruncatedNormal { lower, upper, .. } | Self::Uniform { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| 0.5 * (u - l))
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Zero { .. })
    }
}

/// Draws `n` i.i.d. perturbations as the rows of an `n x d` matrix.
pub fn sample_noise<R: Rng>(
    dist: &NoiseDistribution,
    n: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "need at least one noise sample".into(),
        ));
    }
    dist.validate()?;
    let d = dist.dim();
    let mut out = DMatrix::zeros(n, d);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    match dist {
        NoiseDistribution::Zero { .. } => {}
        NoiseDistribution::Gaussian { mean, std } => {
            for i in 0..n {
                for k in 0..d {
                    out[(i, k)] = mean[k] + std[k] * std_normal.sample(rng);
                }
            }
        }
        NoiseDistribution::StudentT { dof, loc, scale } => {
            let t = StudentT::new(*dof).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            for i in 0..n {
                for k in 0..d {
                    out[(i, k)] = loc[k] + scale[k] * t.sample(rng);
                }
            }
        }
        NoiseDistribution::TruncatedNormal {
            mean,
            std,
            lower,
            upper,
        } => {
            for i in 0..n {
                for k in 0..d {
                    let mut accepted = None;
                    for _ in 0..TRUNCATED_NORMAL_RETRIES {
                        let v = mean[k] + std[k] * std_normal.sample(rng);
                        if v >= lower[k] && v <= upper[k] {
                            accepted = Some(v);
                            break;
                        }
                    }
                    out[(i, k)] =
                        accepted.ok_or(Error::SamplerExhausted(TRUNCATED_NORMAL_RETRIES))?;
                }
            }
        }
        NoiseDistribution::Uniform { lower, upper } => {
            for i in 0..n {
                for k in 0..d {
                    out[(i, k)] = lower[k] + rng.random::<f64>() * (upper[k] - lower[k]);
                }
            }
        }
    }
    Ok(out)
}

/// A deterministic vector-valued objective, in maximization form.
pub trait Objective: Send + Sync {
    fn n_objectives(&self) -> usize;

    /// Writes the objective vector at `x` into `out` (length `n_objectives`).
    fn evaluate_into(&self, x: &[f64], out: &mut [f64]);

    fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_objectives()];
        self.evaluate_into(x, &mut out);
        out
    }
}

/// The five synthetic benchmark objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Benchmark {
    Vlmop2,
    SinLinForrester,
    Mdtp2,
    Mdtp3,
    BraninGmm,
}

impl Benchmark {
    pub const ALL: [Benchmark; 5] = [
        Benchmark::Vlmop2,
        Benchmark::SinLinForrester,
        Benchmark::Mdtp2,
        Benchmark::Mdtp3,
        Benchmark::BraninGmm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Vlmop2 => "vlmop2",
            Self::SinLinForrester => "sinlinforrester",
            Self::Mdtp2 => "mdtp2",
            Self::Mdtp3 => "mdtp3",
            Self::BraninGmm => "braningmm",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.name() == name.to_ascii_lowercase())
            .ok_or_else(|| Error::UnknownProblem(name.to_string()))
    }

    /// Raw (minimization-form) objective values as tabulated for the problem.
    pub fn raw(self, x: &[f64], out: &mut [f64]) {
        match self {
            Self::Vlmop2 => {
                let (mut a, mut b) = (0.0, 0.0);
                for v in &x[..2] {
                    a += (v - FRAC_1_SQRT_2).powi(2);
                    b += (v + FRAC_1_SQRT_2).powi(2);
                }
                out[0] = 1.0 - (-a).exp();
                out[1] = 1.0 - (-b).exp();
            }
            Self::SinLinForrester => {
                let v = x[0];
                out[0] = (5.0 * PI * v * v).sin() + 0.5 * v;
                out[1] = (6.0 * v - 2.0).powi(2) * (12.0 * v - 4.0).sin();
            }
            Self::Mdtp2 => {
                let (x1, x2) = (x[0], x[1]);
                out[0] = x1;
                out[1] = (1.0 - x1 * x1)
                    + (10.0 + x2 * x2 - 10.0 * (4.0 * PI * x2).cos())
                        * (1.0 / (0.2 + x1) + 10.0 * x1 * x1);
            }
            Self::Mdtp3 => {
                let (x1, x2) = (x[0], x[1]);
                out[0] = x1;
                out[1] = 1.0
                    - 0.9 * (-((x2 - 0.8) / 0.1).powi(2)).exp()
                    - 1.3 * (-((x2 - 0.3) / 0.03).powi(2)).exp();
            }
            Self::BraninGmm => {
                out[0] = branin_rescaled(x[0], x[1]);
                out[1] = gmm_density(x[0], x[1]);
            }
        }
    }
}

/// Branin on the unit square (inputs mapped to [-5, 10] x [0, 15]),
/// centred and scaled to roughly unit variance.
fn branin_rescaled(x1: f64, x2: f64) -> f64 {
    let a = 15.0 * x1 - 5.0;
    let b = 15.0 * x2;
    let term = b - 5.1 * a * a / (4.0 * PI * PI) + 5.0 * a / PI - 6.0;
    (term * term + (10.0 - 10.0 / (8.0 * PI)) * a.cos() - 44.81) / 51.95
}

/// Three-component isotropic Gaussian mixture density in 2-d.
fn gmm_density(x1: f64, x2: f64) -> f64 {
    const COMPONENTS: [(f64, [f64; 2], f64); 3] = [
        (0.04 * PI, [0.2, 0.2], 0.2),
        (0.014 * PI, [0.8, 0.2], 0.1),
        (0.014 * PI, [0.5, 0.7], 0.1),
    ];
    COMPONENTS
        .iter()
        .map(|(w, mu, s)| {
            let r2 = (x1 - mu[0]).powi(2) + (x2 - mu[1]).powi(2);
            w * (-0.5 * r2 / (s * s)).exp() / (2.0 * PI * s * s)
        })
        .sum()
}

impl Objective for Benchmark {
    fn n_objectives(&self) -> usize {
        2
    }

    fn evaluate_into(&self, x: &[f64], out: &mut [f64]) {
        self.raw(x, out);
        for v in out.iter_mut() {
            *v = -*v;
        }
    }
}

/// Wraps a closure as an [`Objective`].
pub struct FnObjective<F> {
    m: usize,
    f: F,
}

impl<F> FnObjective<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(m: usize, f: F) -> Self {
        Self { m, f }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn n_objectives(&self) -> usize {
        self.m
    }

    fn evaluate_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// An optimization problem: objective, design space, input noise and the
/// half-width of the active-learning search box.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub space: DesignSpace,
    pub objective: Arc<dyn Objective>,
    pub noise: NoiseDistribution,
    pub al_box_halfwidth: Vec<f64>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("space", &self.space)
            .field("n_objectives", &self.n_objectives())
            .field("noise", &self.noise)
            .field("al_box_halfwidth", &self.al_box_halfwidth)
            .finish()
    }
}

impl Problem {
    /// Builds a problem. When `al_box_halfwidth` is `None` the 97.5% marginal
    /// quantile of the noise is used.
    pub fn new(
        name: impl Into<String>,
        space: DesignSpace,
        objective: Arc<dyn Objective>,
        noise: NoiseDistribution,
        al_box_halfwidth: Option<Vec<f64>>,
    ) -> Result<Self> {
        noise.validate()?;
        let d = space.dim();
        if noise.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: noise.dim(),
            });
        }
        let al_box_halfwidth = al_box_halfwidth.unwrap_or_else(|| noise.quantile_halfwidth());
        if al_box_halfwidth.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: al_box_halfwidth.len(),
            });
        }
        Ok(Self {
            name: name.into(),
            space,
            objective,
            noise,
            al_box_halfwidth,
        })
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn n_objectives(&self) -> usize {
        self.objective.n_objectives()
    }

    /// Design space grown by the active-learning half-width.
    pub fn enlarged_space(&self) -> DesignSpace {
        self.space.enlarged(&self.al_box_halfwidth)
    }

    /// Same problem with the input noise removed.
    pub fn without_noise(&self) -> Self {
        let mut p = self.clone();
        p.noise = NoiseDistribution::Zero { dim: self.dim() };
        p
    }

    pub fn with_noise(&self, noise: NoiseDistribution) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.space.clone(),
            self.objective.clone(),
            noise,
            Some(self.al_box_halfwidth.clone()),
        )
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        self.objective.evaluate(x)
    }

    /// Bayes risk averaged over a given set of perturbations (rows of `samples`).
    pub fn bayes_risk_with_samples(&self, x: &[f64], samples: &DMatrix<f64>) -> Vec<f64> {
        bayes_risk_stats(self.objective.as_ref(), x, samples).0
    }

    /// Registry lookup by lowercase name.
    pub fn benchmark(name: &str) -> Result<Self> {
        Ok(Self::from_benchmark(Benchmark::from_name(name)?))
    }

    pub fn from_benchmark(b: Benchmark) -> Self {
        let (space, noise, delta) = match b {
            Benchmark::Vlmop2 => (
                DesignSpace::new(vec![-2.0; 2], vec![2.0; 2]),
                NoiseDistribution::StudentT {
                    dof: 200.0,
                    loc: vec![0.0; 2],
                    scale: vec![0.01; 2],
                },
                vec![0.0166, 0.0166],
            ),
            Benchmark::SinLinForrester => (
                DesignSpace::new(vec![0.0], vec![1.0]),
                NoiseDistribution::Gaussian {
                    mean: vec![0.0],
                    std: vec![0.05],
                },
                vec![0.098],
            ),
            Benchmark::Mdtp2 => (
                DesignSpace::new(vec![0.0, -1.0], vec![1.0, 1.0]),
                NoiseDistribution::TruncatedNormal {
                    mean: vec![0.0; 2],
                    std: vec![0.02, 0.04],
                    lower: vec![-0.05; 2],
                    upper: vec![0.05; 2],
                },
                vec![0.05, 0.05],
            ),
            Benchmark::Mdtp3 => (
                DesignSpace::new(vec![0.0; 2], vec![1.0; 2]),
                NoiseDistribution::Uniform {
                    lower: vec![-0.02, -0.1],
                    upper: vec![0.02, 0.1],
                },
                vec![0.02, 0.1],
            ),
            Benchmark::BraninGmm => (
                DesignSpace::new(vec![0.0; 2], vec![1.0; 2]),
                NoiseDistribution::Uniform {
                    lower: vec![-0.2; 2],
                    upper: vec![0.2; 2],
                },
                vec![0.02, 0.02],
            ),
        };
        Self::new(
            b.name(),
            space.expect("registry bounds are valid"),
            Arc::new(b),
            noise,
            Some(delta),
        )
        .expect("registry entries are valid")
    }

    pub fn all_benchmarks() -> Vec<Self> {
        Benchmark::ALL
            .into_iter()
            .map(Self::from_benchmark)
            .collect()
    }
}

/// Objective vector at `x`.
pub fn evaluate_objectives(problem: &Problem, x: &[f64]) -> Vec<f64> {
    problem.evaluate(x)
}

/// Monte Carlo estimate of the Bayes risk `E[f(x + xi)]` of the true objective.
pub fn bayes_risk_oracle<R: Rng>(
    problem: &Problem,
    x: &[f64],
    n_mc: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let samples = sample_noise(&problem.noise, n_mc, rng)?;
    Ok(problem.bayes_risk_with_samples(x, &samples))
}

/// Sample mean and standard error of `f(x + xi)` over the rows of `samples`.
pub fn bayes_risk_stats(
    objective: &dyn Objective,
    x: &[f64],
    samples: &DMatrix<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let m = objective.n_objectives();
    let n = samples.nrows();
    let d = x.len();
    let mut sum = vec![0.0; m];
    let mut sum_sq = vec![0.0; m];
    let mut xp = vec![0.0; d];
    let mut y = vec![0.0; m];
    for i in 0..n {
        for k in 0..d {
            xp[k] = x[k] + samples[(i, k)];
        }
        objective.evaluate_into(&xp, &mut y);
        for j in 0..m {
            sum[j] += y[j];
            sum_sq[j] += y[j] * y[j];
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let se = if n > 1 {
        mean.iter()
            .zip(&sum_sq)
            .map(|(mu, s2)| ((s2 / nf - mu * mu).max(0.0) * nf / (nf - 1.0) / nf).sqrt())
            .collect()
    } else {
        vec![f64::INFINITY; m]
    };
    (mean, se)
}
