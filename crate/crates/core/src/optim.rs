//! Box-constrained limited-memory quasi-Newton minimization and a shifted
//! Halton sequence for candidate screening.

use std::collections::VecDeque;

use rand::Rng;

/// Settings for [`minimize_bounded`].
#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when the infinity norm of the projected gradient drops below this.
    pub pg_tol: f64,
    /// Stop when the relative decrease of the objective drops below this.
    pub f_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iters: 200,
            pg_tol: 1e-8,
            f_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iters: usize,
    pub evals: usize,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn projected_grad_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..x.len() {
        let step = (x[i] - g[i]).clamp(lo[i], hi[i]) - x[i];
        m = m.max(step.abs());
    }
    m
}

/// Minimizes `fg` (value and gradient) over the box `[lo, hi]` starting at `x0`.
///
/// Projected L-BFGS: the two-loop direction is restricted to the free
/// variables, steps follow the projected path, and an Armijo backtracking
/// search guarantees monotone decrease. A non-finite value is treated as an
/// infeasible trial point and shortens the step. Returns `None` only when the
/// starting point itself evaluates to a non-finite value.
pub fn minimize_bounded<F>(
    mut fg: F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &LbfgsOptions,
) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let (mut f, mut g) = fg(&x)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut evals = 1;
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iters = 0;

    while iters < opts.max_iters {
        if projected_grad_norm(&x, &g, lo, hi) < opts.pg_tol {
            break;
        }
        iters += 1;

        // variables pinned at a bound by the gradient stay fixed this iteration
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        let gf: Vec<f64> = (0..n).map(|i| if free[i] { g[i] } else { 0.0 }).collect();

        let mut q = gf.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..n {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            for v in q.iter_mut() {
                *v *= gamma;
            }
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..n {
                q[i] += s[i] * (a - b);
            }
        }
        let mut dir: Vec<f64> = (0..n).map(|i| if free[i] { -q[i] } else { 0.0 }).collect();
        if dot(&dir, &g) >= 0.0 {
            hist.clear();
            dir = gf.iter().map(|v| -v).collect();
        }
        if hist.is_empty() {
            // first step: scale to a unit move in the largest coordinate
            let m = dir.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if m > 0.0 {
                let scale = (1.0 / m).min(1.0);
                for v in dir.iter_mut() {
                    *v *= scale;
                }
            }
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut xt: Vec<f64> = (0..n).map(|i| x[i] + t * dir[i]).collect();
            project(&mut xt, lo, hi);
            let step: Vec<f64> = (0..n).map(|i| xt[i] - x[i]).collect();
            let decrease = dot(&g, &step);
            if step.iter().all(|v| *v == 0.0) {
                break;
            }
            evals += 1;
            if let Some((ft, gt)) = fg(&xt) {
                if ft.is_finite()
                    && gt.iter().all(|v| v.is_finite())
                    && ft <= f + 1e-4 * decrease.min(0.0)
                    && decrease < 0.0
                {
                    accepted = Some((xt, ft, gt, step));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gn, s)) = accepted else {
            if hist.is_empty() {
                break;
            }
            hist.clear();
            continue;
        };
        let yv: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&yv, &yv).max(1e-300) && sy > 0.0 {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, yv, 1.0 / sy));
        }
        let rel = (f - fnew).abs() / f.abs().max(fnew.abs()).max(1.0);
        x = xn;
        f = fnew;
        g = gn;
        if rel < opts.f_tol {
            break;
        }
    }
    Some(Minimum { x, f, iters, evals })
}

/// Central finite-difference gradient with the step clipped into the box.
pub fn fd_gradient<F>(f: &mut F, x: &[f64], lo: &[f64], hi: &[f64], h: f64) -> Option<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let up = (x[i] + h).min(hi[i]);
        let dn = (x[i] - h).max(lo[i]);
        if up <= dn {
            continue;
        }
        xp[i] = up;
        let fu = f(&xp);
        xp[i] = dn;
        let fd = f(&xp);
        xp[i] = x[i];
        if !fu.is_finite() || !fd.is_finite() {
            return None;
        }
        g[i] = (fu - fd) / (up - dn);
    }
    Some(g)
}

const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// `n` points of a Halton sequence in `[0, 1)^d` with a random
/// Cranley-Patterson shift drawn from `rng`.
pub fn shifted_halton<R: Rng>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    assert!(
        d <= PRIMES.len(),
        "halton sequence supports d <= {}",
        PRIMES.len()
    );
    let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    (0..n)
        .map(|i| {
            (0..d)
                .map(|k| (radical_inverse(i as u64 + 1, PRIMES[k] as u64) + shift[k]).fract())
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::rng_stream;

    #[test]
    fn rosenbrock_unconstrained() {
        let fg = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            Some((f, g))
        };
        let m = minimize_bounded(
            fg,
            &[-1.2, 1.0],
            &[-5.0; 2],
            &[5.0; 2],
            &LbfgsOptions::default(),
        )
        .unwrap();
        assert!(
            (m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5,
            "{:?}",
            m
        );
    }

    #[test]
    fn active_bound_is_respected() {
        // minimum of (x-2)^2 + (y+1)^2 over [0,1]^2 sits at (1, 0)
        let fg = |x: &[f64]| {
            Some((
                (x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2),
                vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] + 1.0)],
            ))
        };
        let m = minimize_bounded(
            fg,
            &[0.5, 0.5],
            &[0.0; 2],
            &[1.0; 2],
            &LbfgsOptions::default(),
        )
        .unwrap();
        assert_eq!(m.x, vec![1.0, 0.0]);
    }

    #[test]
    fn monotone_from_start() {
        let fg = |x: &[f64]| {
            Some((
                (x[0] * 3.0).sin() + x[0] * x[0],
                vec![3.0 * (x[0] * 3.0).cos() + 2.0 * x[0]],
            ))
        };
        for s in [-2.0, -0.3, 0.7, 1.9] {
            let f0 = fg(&[s]).unwrap().0;
            let m = minimize_bounded(fg, &[s], &[-2.0], &[2.0], &LbfgsOptions::default()).unwrap();
            assert!(m.f <= f0);
        }
    }

    #[test]
    fn halton_is_in_unit_cube_and_deterministic() {
        let a = shifted_halton(100, 3, &mut rng_stream(1, 1));
        let b = shifted_halton(100, 3, &mut rng_stream(1, 1));
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|v| (0.0..1.0).contains(v)));
    }
}
