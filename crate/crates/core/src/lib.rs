//! Optimal control of discrete-time systems driven by fractional Gaussian
//! noise: noise generation through the innovation (Cholesky) representation,
//! weighted sequence spaces, forward and backward stochastic difference
//! equations, maximum-principle diagnostics, and an investment application.

pub mod backward;
pub mod cli;
pub mod error;
pub mod forward;
pub mod fracnoise;
pub mod invest;
pub mod io;
pub mod linalg;
pub mod par;
pub mod smp;
pub mod spaces;

pub use error::{Error, Result};
pub use fracnoise::{HurstParam, InnovationSystem, NoiseEnsemble};
