//! Polynomial trajectory fitting with order-regularized least squares.

pub mod assignment;
pub mod bench;
pub mod error;
pub mod fit;
pub mod l0;
pub mod l1;
pub mod measurement;
pub mod metrics;
pub mod multitarget;
pub mod orls;
pub mod poly_model;
pub mod scenario;
pub mod wls;

pub use error::{Error, Result};
pub use fit::{FitResult, LambdaPolicy, Solver, SolverTag};
pub use poly_model::{Polynomial, TimeWindow};
pub use wls::{FitWindow, Variance, WhitenedSystem};
