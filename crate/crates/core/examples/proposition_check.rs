//! Grid check of whether each benchmark's robust front differs from its
//! noise-free front.

use rmobo::driver::check_proposition1;
use rmobo::problem::Problem;

fn main() -> rmobo::Result<()> {
    for p in Problem::all_benchmarks() {
        println!("{}", check_proposition1(&p, 2000)?);
    }
    Ok(())
}
