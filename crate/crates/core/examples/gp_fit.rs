//! MAP fit of an SE-ARD Gaussian process to one objective of a benchmark.

use rmobo::gp::{fit_map, FitOptions};
use rmobo::problem::{rng_stream, Problem};

fn main() -> rmobo::Result<()> {
    let p = Problem::benchmark("sinlinforrester")?;
    let mut rng = rng_stream(1, 0);
    let x = p.space.sample_uniform(12, &mut rng);
    let y: Vec<f64> = (0..x.nrows())
        .map(|i| p.evaluate(&[x[(i, 0)]])[1])
        .collect();
    let gp = fit_map(&p.space, &x, &y, &FitOptions::default(), &mut rng)?;
    println!(
        "variance {:.4}, lengthscale {:.4}, log posterior {:.3}",
        gp.kernel.variance, gp.kernel.lengthscales[0], gp.map_value
    );
    println!("{:>6} {:>10} {:>10} {:>10}", "x", "f", "mean", "std");
    for i in 0..=10 {
        let xi = i as f64 / 10.0;
        let pred = gp.predict_unit(&p.space.to_unit(&[xi]));
        println!(
            "{xi:>6.2} {:>10.4} {:>10.4} {:>10.4}",
            p.evaluate(&[xi])[1],
            pred.mean,
            pred.var.sqrt()
        );
    }
    Ok(())
}
