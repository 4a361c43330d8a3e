#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use rmobo::acquisition::Surrogate;
use rmobo::gp::{GpModel, PointPrediction, SeArdKernel};
use rmobo::problem::{rng_stream, DesignSpace};

/// Gauss-Hermite nodes and weights for `int exp(-t^2) g(t) dt`
/// (Golub-Welsch on the Jacobi matrix).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            (
                eig.eigenvalues[i],
                std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, i)].powi(2),
            )
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Tensor-product expectation of `g` under independent `N(mean_k, std_k^2)`.
pub fn gh_expect(mean: &[f64], std: &[f64], order: usize, g: &mut dyn FnMut(&[f64]) -> f64) -> f64 {
    let (t, w) = gauss_hermite(order);
    let d = mean.len();
    let mut idx = vec![0usize; d];
    let mut total = 0.0;
    let mut point = vec![0.0; d];
    loop {
        let mut weight = 1.0;
        for k in 0..d {
            point[k] = mean[k] + std::f64::consts::SQRT_2 * std[k] * t[idx[k]];
            weight *= w[idx[k]] / std::f64::consts::PI.sqrt();
        }
        total += weight * g(&point);
        let mut k = 0;
        loop {
            if k == d {
                return total;
            }
            idx[k] += 1;
            if idx[k] < order {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let c = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j])
}

/// A GP at fixed hyperparameters on smooth synthetic data.
pub fn fixture_gp(space: &DesignSpace, n: usize, lengthscale: f64, seed: u64) -> GpModel {
    let d = space.dim();
    let mut rng = rng_stream(seed, 77);
    let x = space.sample_uniform(n, &mut rng);
    let phase: f64 = rng.random();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let z = space.to_unit(&x.row(i).iter().copied().collect::<Vec<_>>());
            (0..d)
                .map(|k| (3.0 * z[k] + phase + k as f64).sin())
                .sum::<f64>()
                + 0.3 * z[0] * z[0]
        })
        .collect();
    let kernel = SeArdKernel::new(1.3, vec![lengthscale; d]).unwrap();
    GpModel::with_kernel(space, &x, &y, kernel).unwrap()
}

/// Independent Gaussian outputs with known means and standard deviations.
pub struct FixedGaussian {
    pub space: DesignSpace,
    pub mean: Box<dyn Fn(&[f64]) -> [f64; 2] + Sync>,
    pub std: [f64; 2],
}

impl Surrogate for FixedGaussian {
    fn n_objectives(&self) -> usize {
        2
    }

    fn space(&self) -> &DesignSpace {
        &self.space
    }

    fn predict(&self, z: &[f64], _grad: bool) -> Vec<PointPrediction> {
        let m = (self.mean)(z);
        (0..2)
            .map(|o| PointPrediction {
                mean: m[o],
                var: self.std[o] * self.std[o],
                dmean: vec![0.0; z.len()],
                dvar: vec![0.0; z.len()],
            })
            .collect()
    }

    fn joint(&self, zs: &[Vec<f64>]) -> rmobo::Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
        Ok((0..2)
            .map(|o| {
                let mean = DVector::from_iterator(zs.len(), zs.iter().map(|z| (self.mean)(z)[o]));
                (
                    mean,
                    DMatrix::identity(zs.len(), zs.len()) * self.std[o] * self.std[o],
                )
            })
            .collect())
    }
}
