pub mod acquisition;
pub mod driver;
pub mod error;
pub mod gp;
pub mod io;
pub mod nsga2;
pub mod optim;
pub mod pareto;
pub mod problem;
pub mod robust_gp;

pub use error::{Error, Result};
