//! Robust and standard Bayesian optimization on one benchmark, scored
//! against a robust reference front.

use rmobo::acquisition::AcqBudget;
use rmobo::driver::{
    reference_front, run_problem, score_run, AcqKind, Method, ReferenceSettings, RunConfig,
};
use rmobo::nsga2::EaConfig;
use rmobo::problem::Problem;

fn main() -> rmobo::Result<()> {
    env_logger::init();
    let name = std::env::args().nth(1).unwrap_or_else(|| "mdtp3".into());
    let p = Problem::benchmark(&name)?;
    let settings = ReferenceSettings {
        ea: EaConfig::new(40, 200, 0),
        ..ReferenceSettings::new(0)
    };
    let reference = reference_front(&p, &settings)?;
    for method in [Method::Rmobo, Method::MoboNonrobust] {
        let mut cfg = RunConfig::new(&name, method, AcqKind::Ehvi, 1, 15, 0);
        cfg.acq_budget = AcqBudget {
            raw_per_dim: 64,
            starts: 4,
            max_iters: 30,
        };
        let rec = run_problem(&p, &cfg)?;
        let history = score_run(&p, &rec, &reference)?;
        let fired = rec
            .iterations
            .iter()
            .flat_map(|it| &it.al_fired)
            .filter(|f| **f)
            .count();
        println!(
            "{method}: {} evaluations, {fired} relocations, {:.1} s",
            rec.n_evaluations(),
            rec.total_wall_time
        );
        for e in history.iter().step_by(5).chain(history.last()) {
            println!(
                "  after {:>3} evaluations: AVD {:.4}",
                e.n_evaluations, e.avd
            );
        }
    }
    Ok(())
}
