//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! `RMOBO_CRITERIA=1,4,9` restricts the run to a subset.

mod common;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use common::{fixture_gp, gh_expect, FixedGaussian};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Binomial, DiscreteCDF};

use rmobo::acquisition::{ehvi, ehvi_gaussian, qehvi_with_se, AcqBudget, AcquisitionContext};
use rmobo::driver::{
    cached_reference_front, check_proposition1, quantile_sorted, run_problem, score_final, AcqKind,
    Method, ReferenceSettings, RunConfig, RunRecord, SCORE_MC_SAMPLES,
};
use rmobo::gp::{fit_map, map_objective, FitOptions, GpModel, LengthscalePrior, PosteriorCov};
use rmobo::pareto::{extract_front, hypervolume_2d};
use rmobo::problem::{rng_stream, DesignSpace, NoiseDistribution, Problem};
use rmobo::robust_gp::{nearest_pd, FixedNoiseSamples, KeMode, RobustGp};

type Outcome = (bool, String);

/// Acquisition budget of the loop-level criteria (6, 7, 8).
fn loop_budget() -> AcqBudget {
    AcqBudget {
        raw_per_dim: 64,
        starts: 4,
        max_iters: 30,
    }
}

const SEEDS: u64 = 30;
const ITERS: usize = 40;

fn work_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn gaussian(mean: Vec<f64>, std: Vec<f64>) -> NoiseDistribution {
    NoiseDistribution::Gaussian { mean, std }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst_mean: f64 = 0.0;
    let mut worst_std: f64 = 0.0;
    let mut worst_gh: f64 = 0.0;
    let fixtures = [
        (DesignSpace::unit(1), vec![0.0], vec![0.05]),
        (
            DesignSpace::new(vec![-2.0, 0.0], vec![2.0, 1.0]).unwrap(),
            vec![0.0, 0.01],
            vec![0.1, 0.03],
        ),
    ];
    for (f, (space, mean, std)) in fixtures.into_iter().enumerate() {
        let noise = gaussian(mean.clone(), std.clone());
        let gp = fixture_gp(&space, 15, 0.3, 100 + f as u64);
        let an = RobustGp::new(
            vec![gp.clone()],
            &noise,
            FixedNoiseSamples::draw(&noise, 10, 1).unwrap(),
            KeMode::Analytic,
        )
        .unwrap();
        let mc = RobustGp::new(
            vec![gp.clone()],
            &noise,
            FixedNoiseSamples::draw(&noise, 2000, 2).unwrap(),
            KeMode::SaaMc,
        )
        .unwrap();
        let mut rng = rng_stream(1, f as u64);
        let x = space.sample_uniform(50, &mut rng);
        // analytic kernel expectation against quadrature on the same points
        let ke = &an.ke_cross(&x)[0];
        for i in 0..x.nrows() {
            let xi: Vec<f64> = x.row(i).iter().copied().collect();
            for (j, xj) in gp.x_unit.iter().enumerate() {
                let q = gh_expect(&mean, &std, 30, &mut |e: &[f64]| {
                    let s: Vec<f64> = xi.iter().zip(e).map(|(a, b)| a + b).collect();
                    gp.kernel.eval(&space.to_unit(&s), xj)
                });
                worst_gh = worst_gh.max((ke[(i, j)] - q).abs());
            }
        }
        let pa = &an.robust_posterior(&x, false).unwrap()[0];
        let pm = &mc.robust_posterior(&x, false).unwrap()[0];
        let (va, vm) = (pa.variances(), pm.variances());
        for i in 0..x.nrows() {
            worst_mean = worst_mean.max((pa.mean[i] - pm.mean[i]).abs() / gp.y_std);
            worst_std = worst_std.max((va[i].sqrt() - vm[i].sqrt()).abs() / gp.y_std);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_gh < 1e-6 && worst_mean < 0.02 && worst_std < 0.05 && secs < 10.0;
    (
        pass,
        format!(
            "quadrature gap {worst_gh:.1e}, max mean gap {:.3}% and max std gap {:.3}% of output std, {secs:.2} s",
            100.0 * worst_mean,
            100.0 * worst_std
        ),
    )
}

fn criterion_2() -> Outcome {
    let space = DesignSpace::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
    let gp = fixture_gp(&space, 20, 0.3, 7);
    let noise = NoiseDistribution::Zero { dim: 2 };
    let mut rng = rng_stream(2, 0);
    let zs: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.random(), rng.random()]).collect();
    let std_post = gp.posterior_unit(&zs, true);
    let PosteriorCov::Full(c_std) = &std_post.cov else {
        unreachable!()
    };
    let (mut mean_gap, mut cov_gap, mut repaired_gap) = (0.0f64, 0.0f64, 0.0f64);
    for mode in [KeMode::SaaMc, KeMode::Analytic] {
        let samples = FixedNoiseSamples::draw(&noise, 64, 3).unwrap();
        let rgp = RobustGp::new(vec![gp.clone()], &noise, samples, mode).unwrap();
        let (mean, cov) = rgp.covariance_raw_unit(0, &zs);
        mean_gap = mean_gap.max((mean - &std_post.mean).amax());
        for i in 0..zs.len() {
            for j in 0..zs.len() {
                // the standard posterior clamps negative diagonal round-off at zero
                if i != j || c_std[(i, j)] > 0.0 {
                    cov_gap = cov_gap.max((cov[(i, j)] - c_std[(i, j)]).abs());
                }
            }
        }
        let full = &rgp.robust_posterior_unit(&zs, true).unwrap()[0];
        let PosteriorCov::Full(c_rob) = &full.cov else {
            unreachable!()
        };
        repaired_gap = repaired_gap.max((c_rob - nearest_pd(c_std).unwrap()).amax());
    }
    let pass = mean_gap < 1e-10 && cov_gap < 1e-10 && repaired_gap < 1e-10;
    (
        pass,
        format!("max mean gap {mean_gap:.1e}, covariance gap {cov_gap:.1e}, repaired covariance gap {repaired_gap:.1e}"),
    )
}

fn criterion_3() -> Outcome {
    let p = Problem::benchmark("sinlinforrester")
        .unwrap()
        .with_noise(gaussian(vec![0.0], vec![0.05]))
        .unwrap();
    let mut rng = rng_stream(3, 0);
    let x = p.space.sample_uniform(10, &mut rng);
    let models: Vec<GpModel> = (0..2)
        .map(|o| {
            let y: Vec<f64> = (0..10).map(|i| p.evaluate(&[x[(i, 0)]])[o]).collect();
            fit_map(&p.space, &x, &y, &FitOptions::default(), &mut rng).unwrap()
        })
        .collect();
    let rgp = RobustGp::new(
        models.clone(),
        &p.noise,
        FixedNoiseSamples::draw(&p.noise, 2000, 3).unwrap(),
        KeMode::SaaMc,
    )
    .unwrap();
    let mut worst_ratio = f64::INFINITY;
    for i in 0..10 {
        let xi = [x[(i, 0)]];
        for (o, pred) in rgp
            .predict_all_unit(&p.space.to_unit(&xi), false)
            .iter()
            .enumerate()
        {
            worst_ratio = worst_ratio.min(pred.var / models[o].jitter_original());
        }
    }
    (
        worst_ratio > 10.0,
        format!("smallest J variance at a training input is {worst_ratio:.3e} x jitter"),
    )
}

fn random_front(rng: &mut impl Rng, max: usize) -> Vec<Vec<f64>> {
    let n = rng.random_range(1..=max);
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    extract_front(&pts, &vec![Vec::new(); n]).points
}

fn criterion_4() -> Outcome {
    let mut rng = rng_stream(4, 0);
    let r = vec![0.0, 0.0];
    let (mut worst_mc, mut worst_q) = (0.0f64, 0.0f64);
    for f in 0..25 {
        // redraw fixtures whose improvement is too rare for 512 samples to see
        let (front, mean, std, exact) = loop {
            let front = random_front(&mut rng, 8);
            let mean = [rng.random_range(-0.2..1.2), rng.random_range(-0.2..1.2)];
            let std = [rng.random_range(0.05..0.5), rng.random_range(0.05..0.5)];
            let (exact, _, _) = ehvi_gaussian(&front, &r, mean, std);
            if exact > 1e-3 {
                break (front, mean, std, exact);
            }
        };

        let base = hypervolume_2d(&front, &r);
        let mut pts = front.clone();
        pts.push(vec![0.0; 2]);
        let last = pts.len() - 1;
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let e0: f64 = StandardNormal.sample(&mut rng);
            let e1: f64 = StandardNormal.sample(&mut rng);
            pts[last] = vec![mean[0] + std[0] * e0, mean[1] + std[1] * e1];
            let hvi = hypervolume_2d(&pts, &r) - base;
            s += hvi;
            s2 += hvi * hvi;
        }
        let mc = s / n as f64;
        let se = ((s2 / n as f64 - mc * mc).max(0.0) / (n - 1) as f64).sqrt();
        worst_mc = worst_mc.max((exact - mc).abs() / se.max(1e-300));

        let model = FixedGaussian {
            space: DesignSpace::unit(1),
            mean: Box::new(move |_| mean),
            std,
        };
        let ctx = AcquisitionContext::new(front, r.clone()).with_base_samples(
            512,
            1,
            &mut rng_stream(4, 1 + f),
        );
        let analytic = ehvi(&ctx, &model, &[0.5]);
        let (q, qse) = qehvi_with_se(&ctx, &model, &[vec![0.5]]).unwrap();
        worst_q = worst_q.max((q - analytic).abs() / qse.max(1e-300));
    }
    (
        worst_mc < 3.0 && worst_q < 3.0,
        format!("worst EHVI gap {worst_mc:.2} MC standard errors, worst qEHVI gap {worst_q:.2} SAA standard errors"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = rng_stream(5, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let front = random_front(&mut rng, 10);
        let r = [-0.1, -0.2];
        let exact = hypervolume_2d(&front, &r);
        let (w, h) = (1.0 - r[0], 1.0 - r[1]);
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| {
                let u = [
                    r[0] + w * rng.random::<f64>(),
                    r[1] + h * rng.random::<f64>(),
                ];
                front.iter().any(|p| p[0] >= u[0] && p[1] >= u[1])
            })
            .count();
        let mc = hits as f64 / n as f64 * w * h;
        worst = worst.max((exact - mc).abs() / exact);
    }
    (
        worst < 0.01,
        format!("worst relative gap {:.3}%", 100.0 * worst),
    )
}

fn loop_config(problem: &str, method: Method, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::new(problem, method, AcqKind::Ehvi, 1, ITERS, seed);
    cfg.acq_budget = loop_budget();
    cfg
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let p = Problem::benchmark("sinlinforrester").unwrap();
    let big = p.enlarged_space();
    let (mut dup_violations, mut box_violations, mut budget_violations, mut fired) = (0, 0, 0, 0);
    for seed in 0..SEEDS {
        let rec = run_problem(&p, &loop_config("sinlinforrester", Method::Rmobo, seed)).unwrap();
        if rec.x.len() != 5 * p.dim() + ITERS || !rec.is_complete() {
            budget_violations += 1;
        }
        // relocation iteration of every evaluated input, if any
        let mut relocated: Vec<Option<usize>> = vec![None; rec.n_initial];
        for it in &rec.iterations {
            for (j, xq) in it.queried.iter().enumerate() {
                relocated.push(it.al_fired[j].then_some(it.iteration));
                if it.al_fired[j] {
                    fired += 1;
                    let xs = &it.pending[j];
                    let inside = big.contains(xq)
                        && (0..p.dim())
                            .all(|k| (xq[k] - xs[k]).abs() <= p.al_box_halfwidth[k] + 1e-12);
                    if !inside {
                        box_violations += 1;
                    }
                }
            }
        }
        let z: Vec<Vec<f64>> = rec.x.iter().map(|x| p.space.to_unit(x)).collect();
        for a in 0..z.len() {
            for b in a + 1..z.len() {
                let d = z[a]
                    .iter()
                    .zip(&z[b])
                    .map(|(u, v)| (u - v).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let allowed = matches!((relocated[a], relocated[b]), (Some(i), Some(j)) if i != j);
                if d < 1e-3 && !allowed {
                    dup_violations += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass =
        dup_violations == 0 && box_violations == 0 && budget_violations == 0 && secs < 1800.0;
    (
        pass,
        format!(
            "{SEEDS} runs: {dup_violations} near-duplicate pairs, {fired} relocations with {box_violations} outside the box, \
             {budget_violations} budget mismatches, {secs:.0} s"
        ),
    )
}

/// Runs `cfg` or loads its record from an earlier identical execution.
fn cached_run(problem: &Problem, cfg: &RunConfig) -> RunRecord {
    let dir = work_dir().join("runs").join(format!(
        "{}_{}_seed{}_{}_{}",
        cfg.problem,
        cfg.method,
        cfg.seed,
        env!("CARGO_PKG_VERSION"),
        &cfg.hash()[..12]
    ));
    if dir.join("manifest.json").exists() {
        if let Ok(rec) = RunRecord::load(&dir) {
            return rec;
        }
    }
    let mut cfg = cfg.clone();
    cfg.out = Some(dir);
    run_problem(problem, &cfg).unwrap()
}

struct Comparison {
    robust: Vec<f64>,
    standard: Vec<f64>,
}

fn compare_methods(name: &str) -> Comparison {
    let p = Problem::benchmark(name).unwrap();
    let (reference, _) = cached_reference_front(
        &p,
        &ReferenceSettings::new(0),
        &work_dir().join("reference"),
    )
    .unwrap();
    let mut out = Comparison {
        robust: Vec::new(),
        standard: Vec::new(),
    };
    for seed in 0..SEEDS {
        for (method, sink) in [
            (Method::Rmobo, &mut out.robust),
            (Method::MoboNonrobust, &mut out.standard),
        ] {
            let rec = cached_run(&p, &loop_config(name, method, seed));
            sink.push(score_final(&p, &rec, &reference).unwrap());
        }
    }
    out
}

fn median_and_iqr(v: &[f64]) -> (f64, f64) {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    (
        quantile_sorted(&s, 0.5),
        quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25),
    )
}

fn criterion_7() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for name in ["mdtp3", "braningmm"] {
        let c = compare_methods(name);
        let wins = c
            .robust
            .iter()
            .zip(&c.standard)
            .filter(|(r, m)| r < m)
            .count() as u64;
        let ties = c
            .robust
            .iter()
            .zip(&c.standard)
            .filter(|(r, m)| r == m)
            .count() as u64;
        let n = SEEDS - ties;
        let p_value = if wins == 0 {
            1.0
        } else {
            Binomial::new(0.5, n).unwrap().sf(wins - 1)
        };
        let (mr, _) = median_and_iqr(&c.robust);
        let (mm, _) = median_and_iqr(&c.standard);
        let ok = mr < mm && p_value < 0.05;
        pass &= ok;
        detail.push(format!(
            "{name}: median AVD rmobo {mr:.4} vs mobo {mm:.4}, rmobo better on {wins}/{n}, sign test p = {p_value:.2e}"
        ));
    }
    (pass, detail.join("; "))
}

fn criterion_8() -> Outcome {
    let c = compare_methods("vlmop2");
    let (mr, iqr_r) = median_and_iqr(&c.robust);
    let (mm, iqr_m) = median_and_iqr(&c.standard);
    let gap = (mr - mm).abs();
    (
        gap < iqr_r.min(iqr_m),
        format!("median AVD rmobo {mr:.4} vs mobo {mm:.4} (gap {gap:.4}); IQR rmobo {iqr_r:.4}, mobo {iqr_m:.4}"),
    )
}

fn criterion_9() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, expect) in [("mdtp3", true), ("braningmm", true), ("vlmop2", false)] {
        let report =
            check_proposition1(&Problem::benchmark(name).unwrap(), SCORE_MC_SAMPLES).unwrap();
        pass &= report.certified == expect;
        detail.push(format!(
            "{name} certified {} (expected {expect})",
            report.certified
        ));
    }
    (pass, detail.join(", "))
}

fn criterion_10() -> Outcome {
    let space = DesignSpace::unit(2);
    let noise = gaussian(vec![0.0, 0.0], vec![0.03, 0.03]);
    let gp = fixture_gp(&space, 40, 0.3, 10);
    let x = space.sample_uniform(200, &mut rng_stream(10, 0));
    let time = |n: usize| -> f64 {
        let rgp = RobustGp::new(
            vec![gp.clone()],
            &noise,
            FixedNoiseSamples::draw(&noise, n, 10).unwrap(),
            KeMode::SaaMc,
        )
        .unwrap()
        .with_parallel(false);
        rgp.robust_posterior(&x, false).unwrap();
        let mut best = f64::INFINITY;
        for _ in 0..5 {
            let t = Instant::now();
            rgp.robust_posterior(&x, false).unwrap();
            best = best.min(t.elapsed().as_secs_f64());
        }
        best
    };
    let (t1, t4) = (time(1000), time(4000));
    let ratio = t4 / t1;
    (
        ratio <= 5.0,
        format!(
            "N=1000 {:.1} ms, N=4000 {:.1} ms, ratio {ratio:.2}",
            1e3 * t1,
            1e3 * t4
        ),
    )
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

fn criterion_11() -> Outcome {
    let root = work_dir().join("determinism");
    let _ = fs::remove_dir_all(&root);
    fs::create_dir_all(&root).unwrap();
    let config = root.join("run.txt");
    fs::write(
        &config,
        "problem = mdtp3\nmethod = rmobo\nn_iter = 3\nseed = 11\nke_samples = 500\nraw_per_dim = 32\nstarts = 2\nmax_iters = 20\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = root.join(format!("run{k}"));
        let status = Command::new(env!("CARGO_BIN_EXE_rmobo"))
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        if !status.status.success() {
            return (
                false,
                format!(
                    "rmobo run failed: {}",
                    String::from_utf8_lossy(&status.stderr)
                ),
            );
        }
        outputs.push(csv_files(&out));
    }
    let same = !outputs[0].is_empty() && outputs[0] == outputs[1];
    (
        same,
        format!("{} CSV files compared, identical: {same}", outputs[0].len()),
    )
}

fn criterion_12() -> Outcome {
    let mut rng = rng_stream(12, 0);
    let space = DesignSpace::unit(2);
    let x: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random(), rng.random()]).collect();
    let y: Vec<f64> = x.iter().map(|r| (5.0 * r[0]).sin() * r[1] + r[0]).collect();
    let prior = LengthscalePrior::default();
    let h = 1e-6;
    let mut worst_map: f64 = 0.0;
    for _ in 0..20 {
        let theta: Vec<f64> = vec![
            rng.random_range(-1.0..1.0),
            rng.random_range(-2.5..0.5),
            rng.random_range(-2.5..0.5),
        ];
        let (_, g) = map_objective(&theta, &x, &y, &prior).unwrap();
        for k in 0..3 {
            let (mut a, mut b) = (theta.clone(), theta.clone());
            a[k] += h;
            b[k] -= h;
            let fd = (map_objective(&a, &x, &y, &prior).unwrap().0
                - map_objective(&b, &x, &y, &prior).unwrap().0)
                / (2.0 * h);
            worst_map = worst_map.max((fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1.0));
        }
    }
    let noise = gaussian(vec![0.0, 0.0], vec![0.02, 0.05]);
    let xm = DMatrix::from_fn(20, 2, |i, j| x[i][j]);
    let gp = fit_map(&space, &xm, &y, &FitOptions::default(), &mut rng).unwrap();
    let rgp = RobustGp::new(
        vec![gp],
        &noise,
        FixedNoiseSamples::draw(&noise, 2000, 12).unwrap(),
        KeMode::SaaMc,
    )
    .unwrap();
    let mut worst_mj: f64 = 0.0;
    for _ in 0..20 {
        let z: Vec<f64> = vec![rng.random(), rng.random()];
        let g = rgp.predict_unit(0, &z, true).dmean;
        for k in 0..2 {
            let (mut a, mut b) = (z.clone(), z.clone());
            a[k] += h;
            b[k] -= h;
            let fd = (rgp.predict_unit(0, &a, false).mean - rgp.predict_unit(0, &b, false).mean)
                / (2.0 * h);
            worst_mj = worst_mj.max((fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1.0));
        }
    }
    (
        close(worst_map, 0.0, 1e-4) && close(worst_mj, 0.0, 1e-4),
        format!("worst relative gap: MAP objective {worst_map:.1e}, m_J {worst_mj:.1e}"),
    )
}

#[test]
fn acceptance() {
    let criteria: [(u32, fn() -> Outcome); 12] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
        (12, criterion_12),
    ];
    let only: Option<Vec<u32>> = std::env::var("RMOBO_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (k, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&k)) {
            continue;
        }
        let (pass, detail) = check();
        // direct write, so the line shows even when the harness captures output
        let _ = writeln!(
            std::io::stderr(),
            "criterion {k}: {} {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            failed.push(k);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
