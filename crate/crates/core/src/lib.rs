//! Discrete-time saddle-point dynamics for two-player zero-sum games.
//!
//! The crate provides five simultaneous update rules (SGA, OMD, PM, IU,
//! CO), closed-form learning rates and iteration bounds for them, runtime
//! checks of the per-step contraction inequalities those bounds rest on,
//! and an experiment harness that writes trajectories as CSV.

pub mod affine;
pub mod checks;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod games;
pub mod harness;
pub mod linalg;
pub mod par;
pub mod rates;
pub mod rng;

pub use dynamics::{run, Algorithm, DynamicsConfig, State, Termination, Trajectory};
pub use error::{Error, Result};
pub use games::{BilinearGame, CovarianceGame, Game, QuadraticGame};
pub use linalg::Matrix;
pub use rng::Rng64;
