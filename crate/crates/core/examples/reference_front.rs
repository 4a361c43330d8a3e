//! NSGA-II on the Monte Carlo Bayes risk of a benchmark.

use rmobo::driver::{reference_front, ReferenceSettings};
use rmobo::nsga2::EaConfig;
use rmobo::pareto::hypervolume_2d;
use rmobo::problem::Problem;

fn main() -> rmobo::Result<()> {
    let name = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "braningmm".into());
    let p = Problem::benchmark(&name)?;
    let settings = ReferenceSettings {
        ea: EaConfig::new(40, 150, 0),
        n_mc: 2000,
        ..ReferenceSettings::new(0)
    };
    let front = reference_front(&p, &settings)?;
    let lo: Vec<f64> = (0..2)
        .map(|o| {
            front
                .points
                .iter()
                .map(|q| q[o])
                .fold(f64::INFINITY, f64::min)
                - 0.1
        })
        .collect();
    println!(
        "{}: {} points, hypervolume above {:?} = {:.4}",
        p.name,
        front.len(),
        lo,
        hypervolume_2d(&front.points, &lo)
    );
    for (x, j) in front.inputs.iter().zip(&front.points).take(10) {
        println!("  x = {x:.4?}  J = {j:.4?}");
    }
    Ok(())
}
