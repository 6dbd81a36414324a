//! Synthesis, verification, and simulation tools for switched linear systems
//! `x'(t) = A_{sigma(t)} x(t)` where `sigma(t)` picks one of M mode matrices.
//!
//! The crate builds pointwise-minimum piecewise-quadratic Lyapunov functions
//! `V(x) = min_j x' P_j x` by value iteration on the sampled discrete-time
//! system, checks the discrete and continuous decrease conditions on unit
//! sphere grids, and closes the loop with a sampled min-derivative switching
//! law. A chattering construction approximates relaxed (convex-combination)
//! trajectories by fast pure switching with a computable error budget.
//!
//! Module map:
//! - [`linalg`]: dense kernels (matrix exponential, Lyapunov stability test,
//!   symmetric eigenvalues) for the small matrices used everywhere else.
//! - [`model`]: systems, switching signals, exact trajectory propagation.
//! - [`chatter`]: pure-switching approximation of relaxed trajectories.
//! - [`pmq`]: pointwise-minimum quadratic functions and their derivatives.
//! - [`grid`]: deterministic unit-sphere sample grids.
//! - [`synthesis`]: value iteration, pruning, decrease verification,
//!   sampling-period bounds, order diagnostics, test-system generation.
//! - [`feedback`]: sample-and-hold closed-loop simulation and reporting.
//! - [`io`]: stable JSON/CSV formats with reproducible float formatting.
//! - [`cli`]: the `swistab` command-line front end.

pub mod chatter;
pub mod cli;
pub mod config;
pub mod feedback;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod model;
pub mod pmq;
pub mod synthesis;

mod error;

pub use error::{Error, Result};
