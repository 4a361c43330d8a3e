//! Hypervolume acquisitions and the active-learning second stage on a
//! robust model.

use rmobo::acquisition::{
    al_activation, ehvi, optimize_acquisition, qehvi, AcqBudget, AcquisitionContext, AlAcquisition,
};
use rmobo::gp::{fit_map, FitOptions};
use rmobo::pareto::{extract_front, reference_point};
use rmobo::problem::{rng_stream, Problem};
use rmobo::robust_gp::{FixedNoiseSamples, KeMode, RobustGp};

fn main() -> rmobo::Result<()> {
    let p = Problem::benchmark("sinlinforrester")?;
    let mut rng = rng_stream(4, 0);
    let x = p.space.sample_uniform(6, &mut rng);
    let xs: Vec<Vec<f64>> = (0..x.nrows()).map(|i| vec![x[(i, 0)]]).collect();
    let models = (0..2)
        .map(|o| {
            let y: Vec<f64> = xs.iter().map(|xi| p.evaluate(xi)[o]).collect();
            fit_map(&p.space, &x, &y, &FitOptions::default(), &mut rng)
        })
        .collect::<rmobo::Result<Vec<_>>>()?;
    let rgp = RobustGp::new(
        models,
        &p.noise,
        FixedNoiseSamples::draw(&p.noise, 2000, 4)?,
        KeMode::SaaMc,
    )?;

    let means: Vec<Vec<f64>> = xs.iter().map(|xi| rgp.mean_j(xi)).collect();
    let front = extract_front(&means, &xs).points;
    let r = reference_point(&front, &[1.0, 1.0]);
    let ctx = AcquisitionContext::new(front, r).with_base_samples(512, 2, &mut rng);
    for z in [0.1, 0.5, 0.9] {
        println!("EHVI({z}) = {:.4e}", ehvi(&ctx, &rgp, &[z]));
    }
    println!(
        "qEHVI({{0.2, 0.8}}) = {:.4e}",
        qehvi(&ctx, &rgp, &[vec![0.2], vec![0.8]])?
    );

    let budget = AcqBudget::default();
    let best = optimize_acquisition(
        |z| ehvi(&ctx, &rgp, z),
        None,
        &[0.0],
        &[1.0],
        &budget,
        &mut rng,
    );
    let x_star = p.space.from_unit(&best.x);
    println!(
        "EHVI maximizer x* = {:.4} (value {:.4e})",
        x_star[0], best.value
    );

    let fires = al_activation(&x_star, &x, &p.space, 1e-3);
    println!("relocation triggered: {fires}");
    let al = AlAcquisition::new(&rgp, &best.x);
    for dx in [-0.09, -0.05, 0.0, 0.05, 0.09] {
        let z = p.space.to_unit(&[x_star[0] + dx]);
        println!("  alpha_AL(x* {dx:+.2}) = {:.4}", al.value(&z));
    }
    Ok(())
}
