//! Learning rules viewed as optimal trajectories through loss landscapes.
//!
//! The crate evaluates a discounted variational objective over parameter
//! trajectories, optimizes trajectories directly, solves the associated
//! Euler-Lagrange equations in closed form for quadratic losses (momentum,
//! ballistic, natural-gradient and drift-biased rules), derives adaptive and
//! continual-learning dynamics from belief models, and ships a small training
//! harness plus a CLI for reproducing the experiments end to end.

pub mod error;
pub mod matfun;
pub mod landscape;
pub mod geometry;
pub mod objective;
pub mod closedform;
pub mod variational;
pub mod ode;
pub mod adaptive;
pub mod continual;
pub mod optim;

pub use error::{Error, Result};
