//! Pareto dominance (maximization), non-dominated sorting, exact 2-d
//! hypervolume and the averaged Hausdorff distance.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Coordinates closer than this are treated as equal when collapsing duplicates.
pub const DUPLICATE_TOL: f64 = 1e-12;

/// `a` dominates `b`: no worse everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Front index per row, 0 for the first (non-dominated) front.
pub fn non_dominated_sort(points: &[Vec<f64>]) -> Vec<usize> {
    let n = points.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominating: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&points[i], &points[j]) {
                dominating[i].push(j);
                dominated_by[j] += 1;
            } else if dominates(&points[j], &points[i]) {
                dominating[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut rank = vec![usize::MAX; n];
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    let mut r = 0;
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            rank[i] = r;
            for &j in &dominating[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        current = next;
        r += 1;
    }
    rank
}

/// A mutually non-dominated set of objective vectors with the inputs that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoFront {
    pub points: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
}

impl ParetoFront {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points_matrix(&self) -> DMatrix<f64> {
        to_matrix(&self.points)
    }

    pub fn inputs_matrix(&self) -> DMatrix<f64> {
        to_matrix(&self.inputs)
    }
}

pub(crate) fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let c = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j])
}

fn near_equal(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= DUPLICATE_TOL)
}

/// Rank-0 rows of `points`, duplicates collapsed (first occurrence kept).
pub fn extract_front(points: &[Vec<f64>], inputs: &[Vec<f64>]) -> ParetoFront {
    let ranks = non_dominated_sort(points);
    let mut front = ParetoFront {
        points: Vec::new(),
        inputs: Vec::new(),
    };
    for (i, r) in ranks.iter().enumerate() {
        if *r == 0 && !front.points.iter().any(|p| near_equal(p, &points[i])) {
            front.points.push(points[i].clone());
            front
                .inputs
                .push(inputs.get(i).cloned().unwrap_or_default());
        }
    }
    front
}

/// Exact area dominated by `points` and bounded below by `reference`.
/// Points that do not strictly dominate the reference contribute nothing.
pub fn hypervolume_2d(points: &[Vec<f64>], reference: &[f64]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p[0] > reference[0] && p[1] > reference[1])
        .map(|p| (p[0], p[1]))
        .collect();
    // sweep from the largest first objective downwards
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut area = 0.0;
    let mut top = reference[1];
    for (x, y) in pts {
        if y > top {
            area += (x - reference[0]) * (y - top);
            top = y;
        }
    }
    area
}

/// Reference point below the front: per-objective minimum minus 10% of the
/// range. Objectives with zero range fall back to `fallback_range`.
pub fn reference_point(front: &[Vec<f64>], fallback_range: &[f64]) -> Vec<f64> {
    let m = front[0].len();
    (0..m)
        .map(|j| {
            let lo = front.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min);
            let hi = front.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max);
            let mut range = hi - lo;
            if !(range > 1e-12 * (1.0 + lo.abs())) {
                range = fallback_range
                    .get(j)
                    .copied()
                    .filter(|r| *r > 0.0)
                    .unwrap_or(1.0);
            }
            lo - 0.1 * range
        })
        .collect()
}

fn gd_p(from: &[Vec<f64>], to: &[Vec<f64>], p: f64) -> f64 {
    let sum: f64 = from
        .iter()
        .map(|a| {
            to.iter()
                .map(|b| {
                    a.iter()
                        .zip(b)
                        .map(|(x, y)| (x - y).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min)
                .powf(p)
        })
        .sum();
    (sum / from.len() as f64).powf(1.0 / p)
}

/// Generational distance of `f` to `f_star` and inverted generational
/// distance, both with power 2.
pub fn gd_igd(f: &[Vec<f64>], f_star: &[Vec<f64>]) -> Result<(f64, f64)> {
    if f.is_empty() || f_star.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok((gd_p(f, f_star, 2.0), gd_p(f_star, f, 2.0)))
}

/// Averaged Hausdorff distance `max(GD_2, IGD_2)`.
pub fn avd(f: &[Vec<f64>], f_star: &[Vec<f64>]) -> Result<f64> {
    let (gd, igd) = gd_igd(f, f_star)?;
    Ok(gd.max(igd))
}

/// Per-objective affine map sending the reference set's min/max to 0/1.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ObjectiveScaler {
    pub fn from_reference(reference: &[Vec<f64>]) -> Result<Self> {
        let first = reference.first().ok_or(Error::EmptySet)?;
        let m = first.len();
        let mut min = vec![f64::INFINITY; m];
        let mut max = vec![f64::NEG_INFINITY; m];
        for p in reference {
            for j in 0..m {
                min[j] = min[j].min(p[j]);
                max[j] = max[j].max(p[j]);
            }
        }
        if let Some(j) = (0..m).find(|&j| !(max[j] > min[j])) {
            return Err(Error::ZeroRange(j));
        }
        Ok(Self { min, max })
    }

    /// As [`ObjectiveScaler::from_reference`], but an objective with zero
    /// range is only shifted (unit width) instead of rejected.
    pub fn from_reference_or_shift(reference: &[Vec<f64>]) -> Result<Self> {
        match Self::from_reference(reference) {
            Err(Error::ZeroRange(_)) => {
                let mut s = Self {
                    min: reference[0].clone(),
                    max: reference[0].clone(),
                };
                for p in reference {
                    for j in 0..p.len() {
                        s.min[j] = s.min[j].min(p[j]);
                        s.max[j] = s.max[j].max(p[j]);
                    }
                }
                for j in 0..s.min.len() {
                    if !(s.max[j] > s.min[j]) {
                        s.max[j] = s.min[j] + 1.0;
                    }
                }
                Ok(s)
            }
            other => other,
        }
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(j, v)| (v - self.min[j]) / (self.max[j] - self.min[j]))
            .collect()
    }

    pub fn apply_all(&self, ys: &[Vec<f64>]) -> Vec<Vec<f64>> {
        ys.iter().map(|y| self.apply(y)).collect()
    }
}

/// Scales `y` to the unit box spanned by `f_star_raw`.
pub fn scale_objectives(y: &[Vec<f64>], f_star_raw: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    Ok(ObjectiveScaler::from_reference(f_star_raw)?.apply_all(y))
}
