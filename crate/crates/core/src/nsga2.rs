//! NSGA-II with simulated binary crossover and polynomial mutation.
//!
//! Variation works in unit-cube coordinates; objectives are maximized.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pareto::{extract_front, non_dominated_sort, ParetoFront};
use crate::problem::{rng_stream, DesignSpace};

const NSGA2_STREAM: u64 = 0x6e53_4741;

#[derive(Debug, Clone, PartialEq)]
pub struct EaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub crossover_eta: f64,
    /// Per-variable mutation probability; `None` means `1/d`.
    pub mutation_prob: Option<f64>,
    pub mutation_eta: f64,
    pub seed: u64,
}

impl EaConfig {
    pub fn new(population: usize, generations: usize, seed: u64) -> Self {
        Self {
            population,
            generations,
            crossover_prob: 0.9,
            crossover_eta: 15.0,
            mutation_prob: None,
            mutation_eta: 20.0,
            seed,
        }
    }

    /// Population 60, 500 generations.
    pub fn reference_front(seed: u64) -> Self {
        Self::new(60, 500, seed)
    }

    /// Population 20, 200 generations.
    pub fn out_of_sample(seed: u64) -> Self {
        Self::new(20, 200, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 4 || !self.population.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "population must be even and at least 4, got {}",
                self.population
            )));
        }
        if self.generations == 0 {
            return Err(Error::InvalidArgument(
                "generations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Final population of a run in original units with objective values.
#[derive(Debug, Clone)]
pub struct Population {
    pub inputs: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
}

/// Runs NSGA-II and returns the first front of the final population.
pub fn nsga2_run<F>(objective: F, space: &DesignSpace, cfg: &EaConfig) -> Result<ParetoFront>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    nsga2_run_observed(objective, space, cfg, |_, _| {})
}

/// As [`nsga2_run`], calling `observer(generation, values)` with the
/// objective values of the surviving population after every generation
/// (generation 0 is the initial population).
pub fn nsga2_run_observed<F, O>(
    objective: F,
    space: &DesignSpace,
    cfg: &EaConfig,
    mut observer: O,
) -> Result<ParetoFront>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
    O: FnMut(usize, &[Vec<f64>]),
{
    let pop = evolve(&objective, space, cfg, &mut observer)?;
    Ok(extract_front(&pop.values, &pop.inputs))
}

fn evaluate<F>(objective: &F, space: &DesignSpace, zs: &[Vec<f64>]) -> Vec<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    zs.par_iter()
        .map(|z| objective(&space.from_unit(z)))
        .collect()
}

fn evolve<F, O>(
    objective: &F,
    space: &DesignSpace,
    cfg: &EaConfig,
    observer: &mut O,
) -> Result<Population>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
    O: FnMut(usize, &[Vec<f64>]),
{
    cfg.validate()?;
    let d = space.dim();
    let n = cfg.population;
    let pm = cfg.mutation_prob.unwrap_or(1.0 / d as f64);
    let mut rng = rng_stream(cfg.seed, NSGA2_STREAM);

    let mut zs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut values = evaluate(objective, space, &zs);
    let (mut rank, mut crowd) = rank_and_crowd(&values);
    observer(0, &values);

    for generation in 1..=cfg.generations {
        let mut children = Vec::with_capacity(n);
        while children.len() < n {
            let a = tournament(&rank, &crowd, &mut rng);
            let b = tournament(&rank, &crowd, &mut rng);
            let (mut c1, mut c2) = (zs[a].clone(), zs[b].clone());
            if rng.random::<f64>() < cfg.crossover_prob {
                sbx(&mut c1, &mut c2, cfg.crossover_eta, &mut rng);
            }
            polynomial_mutation(&mut c1, pm, cfg.mutation_eta, &mut rng);
            polynomial_mutation(&mut c2, pm, cfg.mutation_eta, &mut rng);
            children.push(c1);
            children.push(c2);
        }
        let child_values = evaluate(objective, space, &children);
        zs.extend(children);
        values.extend(child_values);

        let keep = survivors(&values, n);
        zs = keep.iter().map(|&i| zs[i].clone()).collect();
        values = keep.iter().map(|&i| values[i].clone()).collect();
        (rank, crowd) = rank_and_crowd(&values);
        observer(generation, &values);
    }
    Ok(Population {
        inputs: zs.iter().map(|z| space.from_unit(z)).collect(),
        values,
    })
}

fn fronts_of(rank: &[usize]) -> Vec<Vec<usize>> {
    let n_fronts = rank.iter().copied().max().map_or(0, |r| r + 1);
    let mut fronts = vec![Vec::new(); n_fronts];
    for (i, &r) in rank.iter().enumerate() {
        fronts[r].push(i);
    }
    fronts
}

fn rank_and_crowd(values: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    let rank = non_dominated_sort(values);
    let mut crowd = vec![0.0; values.len()];
    for front in fronts_of(&rank) {
        for (k, c) in crowding_distance(values, &front).into_iter().enumerate() {
            crowd[front[k]] = c;
        }
    }
    (rank, crowd)
}

/// Crowding distance of each member of `front` (indices into `values`).
pub fn crowding_distance(values: &[Vec<f64>], front: &[usize]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = values[front[0]].len();
    for j in 0..m {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            values[front[a]][j]
                .total_cmp(&values[front[b]][j])
                .then(a.cmp(&b))
        });
        let lo = values[front[order[0]]][j];
        let hi = values[front[order[n - 1]]][j];
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        if hi > lo {
            for k in 1..n - 1 {
                let gap = values[front[order[k + 1]]][j] - values[front[order[k - 1]]][j];
                dist[order[k]] += gap / (hi - lo);
            }
        }
    }
    dist
}

/// Indices of the `n` survivors: whole fronts first, the last partial front
/// by decreasing crowding distance.
fn survivors(values: &[Vec<f64>], n: usize) -> Vec<usize> {
    let rank = non_dominated_sort(values);
    let mut keep = Vec::with_capacity(n);
    for front in fronts_of(&rank) {
        if keep.len() + front.len() <= n {
            keep.extend(front);
            if keep.len() == n {
                break;
            }
        } else {
            let cd = crowding_distance(values, &front);
            let mut order: Vec<usize> = (0..front.len()).collect();
            order.sort_by(|&a, &b| cd[b].total_cmp(&cd[a]).then(a.cmp(&b)));
            keep.extend(order.into_iter().take(n - keep.len()).map(|k| front[k]));
            break;
        }
    }
    keep
}

fn tournament(rank: &[usize], crowd: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let a = rng.random_range(0..rank.len());
    let b = rng.random_range(0..rank.len());
    if rank[a] != rank[b] {
        return if rank[a] < rank[b] { a } else { b };
    }
    if crowd[a] != crowd[b] {
        return if crowd[a] > crowd[b] { a } else { b };
    }
    if rng.random::<bool>() {
        a
    } else {
        b
    }
}

/// Bounded simulated binary crossover on `[0, 1]`.
fn sbx(c1: &mut [f64], c2: &mut [f64], eta: f64, rng: &mut ChaCha8Rng) {
    for k in 0..c1.len() {
        if rng.random::<f64>() > 0.5 || (c1[k] - c2[k]).abs() <= 1e-14 {
            continue;
        }
        let (y1, y2) = if c1[k] < c2[k] {
            (c1[k], c2[k])
        } else {
            (c2[k], c1[k])
        };
        let u: f64 = rng.random();
        let spread = |beta: f64| {
            let alpha = 2.0 - beta.powf(-(eta + 1.0));
            if u <= 1.0 / alpha {
                (u * alpha).powf(1.0 / (eta + 1.0))
            } else {
                (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
            }
        };
        let bq1 = spread(1.0 + 2.0 * y1 / (y2 - y1));
        let bq2 = spread(1.0 + 2.0 * (1.0 - y2) / (y2 - y1));
        let a = (0.5 * ((y1 + y2) - bq1 * (y2 - y1))).clamp(0.0, 1.0);
        let b = (0.5 * ((y1 + y2) + bq2 * (y2 - y1))).clamp(0.0, 1.0);
        if rng.random::<bool>() {
            c1[k] = b;
            c2[k] = a;
        } else {
            c1[k] = a;
            c2[k] = b;
        }
    }
}

/// Bounded polynomial mutation on `[0, 1]`.
fn polynomial_mutation(z: &mut [f64], prob: f64, eta: f64, rng: &mut ChaCha8Rng) {
    let pow = 1.0 / (eta + 1.0);
    for v in z.iter_mut() {
        if rng.random::<f64>() >= prob {
            continue;
        }
        let r: f64 = rng.random();
        let dq = if r < 0.5 {
            let xy = 1.0 - *v;
            let val = 2.0 * r + (1.0 - 2.0 * r) * xy.powf(eta + 1.0);
            val.powf(pow) - 1.0
        } else {
            let xy = *v;
            let val = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * xy.powf(eta + 1.0);
            1.0 - val.powf(pow)
        };
        *v = (*v + dq).clamp(0.0, 1.0);
    }
}
