use proptest::prelude::*;

use rmobo::nsga2::{nsga2_run, nsga2_run_observed, EaConfig};
use rmobo::pareto::{hypervolume_2d, non_dominated_sort};
use rmobo::problem::DesignSpace;

/// Two parabolas, maximized: the Pareto set is the segment between 0 and 2.
fn parabolas(x: &[f64]) -> Vec<f64> {
    vec![-(x[0] * x[0]), -((x[0] - 2.0).powi(2))]
}

/// Distance from `y` to the analytic front `{(-t^2, -(t-2)^2) : t in [0, 2]}`.
fn gap_to_front(y: &[f64]) -> f64 {
    (0..=2000)
        .map(|i| {
            let t = 2.0 * i as f64 / 2000.0;
            ((y[0] + t * t).powi(2) + (y[1] + (t - 2.0).powi(2)).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn converges_to_the_two_parabola_front() {
    let space = DesignSpace::new(vec![-5.0], vec![5.0]).unwrap();
    let front = nsga2_run(parabolas, &space, &EaConfig::new(60, 100, 1)).unwrap();
    assert!(front.len() > 20);
    let worst = front
        .points
        .iter()
        .map(|p| gap_to_front(p))
        .fold(0.0, f64::max);
    assert!(worst < 0.05, "{worst}");
    for x in &front.inputs {
        assert!(x[0] > -0.05 && x[0] < 2.05);
    }
}

#[test]
fn identical_objectives_collapse_to_the_optimum() {
    let space = DesignSpace::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
    let f = |x: &[f64]| {
        let v = -(x[0] - 0.3).powi(2) - (x[1] + 0.4).powi(2);
        vec![v, v]
    };
    let front = nsga2_run(f, &space, &EaConfig::new(20, 150, 2)).unwrap();
    for x in &front.inputs {
        assert!(
            (x[0] - 0.3).abs() < 0.05 && (x[1] + 0.4).abs() < 0.05,
            "{x:?}"
        );
    }
}

#[test]
fn runs_are_seed_deterministic() {
    let space = DesignSpace::new(vec![-5.0], vec![5.0]).unwrap();
    let a = nsga2_run(parabolas, &space, &EaConfig::new(20, 30, 9)).unwrap();
    let b = nsga2_run(parabolas, &space, &EaConfig::new(20, 30, 9)).unwrap();
    assert_eq!(a, b);
    let c = nsga2_run(parabolas, &space, &EaConfig::new(20, 30, 10)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn hypervolume_grows_until_the_front_fills_the_population() {
    let space = DesignSpace::new(vec![-5.0], vec![5.0]).unwrap();
    let r = [-60.0, -60.0];
    let mut hv = Vec::new();
    let mut saturated = None;
    nsga2_run_observed(parabolas, &space, &EaConfig::new(40, 60, 3), |g, values| {
        let rank = non_dominated_sort(values);
        if saturated.is_none() && rank.iter().all(|r| *r == 0) {
            saturated = Some(g);
        }
        let first: Vec<Vec<f64>> = values
            .iter()
            .zip(&rank)
            .filter(|(_, r)| **r == 0)
            .map(|(v, _)| v.clone())
            .collect();
        hv.push(hypervolume_2d(&first, &r));
    })
    .unwrap();
    let stop = saturated.unwrap_or(hv.len() - 1);
    for g in 1..=stop {
        assert!(
            hv[g] >= hv[g - 1] - 1e-12,
            "generation {g}: {} < {}",
            hv[g],
            hv[g - 1]
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn front_stays_in_bounds(seed in 0u64..1000, lo in -3.0f64..0.0, w in 0.1f64..4.0) {
        let space = DesignSpace::new(vec![lo, lo], vec![lo + w, lo + 2.0 * w]).unwrap();
        let f = |x: &[f64]| vec![x[0].sin() + x[1], x[1].cos() - x[0]];
        let front = nsga2_run(f, &space, &EaConfig::new(12, 10, seed)).unwrap();
        for x in &front.inputs {
            prop_assert!(space.contains(x));
        }
    }
}
