//! Frequency-domain LQG policy optimization: state-space algebra, matrix-equation solvers,
//! LQG/LQR synthesis and gradients, a global-optimality certificate, Youla-space gradient
//! descent, and the data-driven estimators that feed it.

pub mod certificate;
pub mod error;
pub mod linalg;
pub mod lqg;
pub mod rational;
pub mod solvers;
pub mod ss;
pub mod sysid;
pub mod youla;

pub use error::{Error, Result};
pub use linalg::{CMat, Mat};
pub use lqg::{DynController, LqgPlant};
pub use rational::RationalScalar;
pub use ss::{Sign, StateSpace};
