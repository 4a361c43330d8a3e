//! Non-dominated sorting, hypervolume and averaged Hausdorff distance.

use rand::Rng;
use rmobo::pareto::{
    avd, extract_front, gd_igd, hypervolume_2d, non_dominated_sort, reference_point,
};
use rmobo::problem::rng_stream;

fn main() -> rmobo::Result<()> {
    let mut rng = rng_stream(3, 0);
    let pts: Vec<Vec<f64>> = (0..12)
        .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let ranks = non_dominated_sort(&pts);
    for (p, r) in pts.iter().zip(&ranks) {
        println!("({:.3}, {:.3}) rank {r}", p[0], p[1]);
    }
    let front = extract_front(&pts, &vec![Vec::new(); pts.len()]).points;
    let r = reference_point(&front, &[1.0, 1.0]);
    println!(
        "front of {} points, reference {:?}, hypervolume {:.4}",
        front.len(),
        r,
        hypervolume_2d(&front, &r)
    );

    let target: Vec<Vec<f64>> = (0..=20)
        .map(|i| {
            let t = i as f64 / 20.0;
            vec![t, (1.0 - t * t).sqrt()]
        })
        .collect();
    let (gd, igd) = gd_igd(&front, &target)?;
    println!(
        "to the quarter circle: GD {gd:.4}, IGD {igd:.4}, AVD {:.4}",
        avd(&front, &target)?
    );
    Ok(())
}
