//! Numerical laboratory for Brownian occupation and intersection functionals,
//! their Gibbs tiltings, and the Gagliardo-Nirenberg variational problems that
//! govern their large deviations.

pub mod error;
pub mod gibbs_mcmc;
pub mod gn_variational;
pub mod grid;
pub mod kernel_estimates;
pub mod lab;
pub mod local_time;
pub mod measures;
pub mod mv_topology;
pub mod path_sim;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{GridField, GridSpec};
pub use path_sim::{BrownianPath, PathConfig};
