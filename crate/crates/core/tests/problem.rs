mod common;

use common::gh_expect;
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use rmobo::problem::{
    bayes_risk_oracle, bayes_risk_stats, rng_stream, sample_noise, NoiseDistribution, Problem,
};

#[test]
fn sinlin_bayes_risk_matches_quadrature() {
    let p = Problem::benchmark("sinlinforrester").unwrap();
    for x in [0.1, 0.5, 0.75] {
        let oracle: Vec<f64> = (0..2)
            .map(|j| {
                gh_expect(&[0.0], &[0.05], 60, &mut |xi: &[f64]| {
                    p.evaluate(&[x + xi[0]])[j]
                })
            })
            .collect();
        let mut rng = rng_stream(1, 0);
        let samples = sample_noise(&p.noise, 200_000, &mut rng).unwrap();
        let (mc, se) = bayes_risk_stats(p.objective.as_ref(), &[x], &samples);
        for j in 0..2 {
            assert!(
                (mc[j] - oracle[j]).abs() < 4.0 * se[j],
                "x={x} j={j}: {} vs {}",
                mc[j],
                oracle[j]
            );
        }
    }
}

#[test]
fn linear_objective_risk_is_shifted_by_noise_mean() {
    let p = Problem::benchmark("mdtp3").unwrap();
    let noise = NoiseDistribution::Gaussian {
        mean: vec![0.01, 0.0],
        std: vec![0.02, 0.05],
    };
    let p = p.with_noise(noise).unwrap();
    let mut rng = rng_stream(2, 0);
    let j = bayes_risk_oracle(&p, &[0.4, 0.5], 100_000, &mut rng).unwrap();
    // first objective is -x1, so its risk is -(x1 + mean)
    assert!((j[0] + 0.41).abs() < 5e-4);
}

#[test]
fn monte_carlo_error_shrinks_with_samples() {
    let p = Problem::benchmark("braningmm").unwrap();
    let x = [0.3, 0.6];
    let mut rng = rng_stream(3, 0);
    let reference = bayes_risk_oracle(&p, &x, 400_000, &mut rng).unwrap();
    let err = |n: usize, rng: &mut _| -> f64 {
        (0..20)
            .map(|_| {
                let j = bayes_risk_oracle(&p, &x, n, rng).unwrap();
                (j[0] - reference[0]).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    };
    let (small, large) = (err(100, &mut rng), err(10_000, &mut rng));
    assert!(large < small / 4.0, "{small} -> {large}");
}

#[test]
fn standard_error_matches_spread_of_repeats() {
    let p = Problem::benchmark("vlmop2").unwrap();
    let x = [0.2, -0.3];
    let mut rng = rng_stream(4, 0);
    let wide = p
        .with_noise(NoiseDistribution::Gaussian {
            mean: vec![0.0; 2],
            std: vec![0.3; 2],
        })
        .unwrap();
    let reps: Vec<f64> = (0..200)
        .map(|_| {
            let s = sample_noise(&wide.noise, 50, &mut rng).unwrap();
            bayes_risk_stats(wide.objective.as_ref(), &x, &s).0[0]
        })
        .collect();
    let mean = reps.iter().sum::<f64>() / reps.len() as f64;
    let spread =
        (reps.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps.len() - 1) as f64).sqrt();
    let s = sample_noise(&wide.noise, 50, &mut rng).unwrap();
    let se = bayes_risk_stats(wide.objective.as_ref(), &x, &s).1[0];
    assert!((se / spread - 1.0).abs() < 0.35, "se {se} spread {spread}");
}

#[test]
fn truncated_normal_matches_its_cdf() {
    let noise = NoiseDistribution::TruncatedNormal {
        mean: vec![0.0],
        std: vec![0.04],
        lower: vec![-0.05],
        upper: vec![0.05],
    };
    let mut rng = rng_stream(5, 0);
    let s = sample_noise(&noise, 50_000, &mut rng).unwrap();
    let n = Normal::new(0.0, 0.04).unwrap();
    let (a, b) = (n.cdf(-0.05), n.cdf(0.05));
    for t in [-0.03, 0.0, 0.02] {
        let expected = (n.cdf(t) - a) / (b - a);
        let got = s.column(0).iter().filter(|v| **v <= t).count() as f64 / s.nrows() as f64;
        assert!((got - expected).abs() < 0.01, "t={t}: {got} vs {expected}");
    }
}

#[test]
fn student_t_with_many_dof_is_nearly_gaussian() {
    let noise = NoiseDistribution::StudentT {
        dof: 200.0,
        loc: vec![0.0],
        scale: vec![0.01],
    };
    let mut rng = rng_stream(6, 0);
    let s = sample_noise(&noise, 100_000, &mut rng).unwrap();
    let var = s.column(0).iter().map(|v| v * v).sum::<f64>() / s.nrows() as f64;
    // t variance is scale^2 dof / (dof - 2)
    assert!((var / (1e-4 * 200.0 / 198.0) - 1.0).abs() < 0.02);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn noise_samples_stay_in_support(seed in 0u64..1000, lo in 0.01f64..0.2, hi in 0.01f64..0.2) {
        let mut rng = rng_stream(seed, 0);
        let u = NoiseDistribution::Uniform { lower: vec![-lo], upper: vec![hi] };
        let s = sample_noise(&u, 200, &mut rng).unwrap();
        prop_assert!(s.iter().all(|v| *v >= -lo && *v <= hi));
        let t = NoiseDistribution::TruncatedNormal { mean: vec![0.0], std: vec![0.1], lower: vec![-lo], upper: vec![hi] };
        let s = sample_noise(&t, 200, &mut rng).unwrap();
        prop_assert!(s.iter().all(|v| *v >= -lo && *v <= hi));
    }

    #[test]
    fn unit_map_round_trips(z in prop::collection::vec(0.0f64..1.0, 2)) {
        let p = Problem::benchmark("mdtp2").unwrap();
        let x = p.space.from_unit(&z);
        prop_assert!(p.space.contains(&x));
        let back = p.space.to_unit(&x);
        prop_assert!((back[0] - z[0]).abs() < 1e-12 && (back[1] - z[1]).abs() < 1e-12);
    }

    #[test]
    fn objectives_finite_on_enlarged_space(z in prop::collection::vec(0.0f64..1.0, 2)) {
        for p in Problem::all_benchmarks() {
            let e = p.enlarged_space();
            let x = e.from_unit(&z[..p.dim()]);
            prop_assert!(p.evaluate(&x).iter().all(|v| v.is_finite()));
        }
    }
}
