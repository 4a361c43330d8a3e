//! Posterior of the Bayes risk: sample-average kernel expectations against
//! the closed form, and the variance left at training inputs.

use rmobo::gp::{fit_map, FitOptions};
use rmobo::problem::{rng_stream, Problem};
use rmobo::robust_gp::{FixedNoiseSamples, KeMode, RobustGp};

fn main() -> rmobo::Result<()> {
    let p = Problem::benchmark("sinlinforrester")?;
    let mut rng = rng_stream(2, 0);
    let x = p.space.sample_uniform(8, &mut rng);
    let y: Vec<f64> = (0..x.nrows())
        .map(|i| p.evaluate(&[x[(i, 0)]])[0])
        .collect();
    let gp = fit_map(&p.space, &x, &y, &FitOptions::default(), &mut rng)?;

    let mc = RobustGp::new(
        vec![gp.clone()],
        &p.noise,
        FixedNoiseSamples::draw(&p.noise, 2000, 2)?,
        KeMode::SaaMc,
    )?;
    let an = RobustGp::new(
        vec![gp.clone()],
        &p.noise,
        FixedNoiseSamples::draw(&p.noise, 1, 2)?,
        KeMode::Analytic,
    )?;
    println!(
        "{:>6} {:>10} {:>10} {:>10} {:>10}",
        "x", "m_J (MC)", "m_J (cf)", "s_J (MC)", "s_J (cf)"
    );
    for i in 0..=10 {
        let z = [i as f64 / 10.0];
        let (a, b) = (mc.predict_unit(0, &z, false), an.predict_unit(0, &z, false));
        println!(
            "{:>6.2} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            z[0],
            a.mean,
            b.mean,
            a.var.sqrt(),
            b.var.sqrt()
        );
    }
    println!("standard deviation of J at the training inputs:");
    for i in 0..x.nrows() {
        let z = p.space.to_unit(&[x[(i, 0)]]);
        println!(
            "  x = {:.3}: {:.4e} (f: {:.4e})",
            x[(i, 0)],
            mc.predict_unit(0, &z, false).var.sqrt(),
            gp.predict_unit(&z).var.sqrt()
        );
    }
    Ok(())
}
