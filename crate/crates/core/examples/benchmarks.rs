//! Benchmark problems: objectives, input noise and Monte Carlo Bayes risk.

use rmobo::problem::{bayes_risk_stats, rng_stream, sample_noise, Problem};

fn main() -> rmobo::Result<()> {
    let mut rng = rng_stream(0, 0);
    for p in Problem::all_benchmarks() {
        let centre: Vec<f64> = p
            .space
            .lower()
            .iter()
            .zip(p.space.upper())
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let samples = sample_noise(&p.noise, 10_000, &mut rng)?;
        let (j, se) = bayes_risk_stats(p.objective.as_ref(), &centre, &samples);
        println!("{} (d = {})", p.name, p.dim());
        println!("  noise          {:?}", p.noise);
        println!("  relocation box +/- {:?}", p.al_box_halfwidth);
        println!("  f(centre)      {:?}", p.evaluate(&centre));
        println!("  J(centre)      {:?} +/- {:?}", j, se);
    }
    Ok(())
}
