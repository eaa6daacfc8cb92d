//! Approximate Pareto optimality certificates for nonsmooth semi-infinite
//! vector optimization problems on ℝⁿ.

pub mod certificates;
pub mod cli;
pub mod conic;
pub mod convexsets;
pub mod error;
pub mod functions;
pub mod oracle;
pub mod par;
pub mod problem;
pub mod tolerances;

pub use error::{Error, Result};
pub use tolerances::Tolerances;
