//! Numerical solvers for semilinear second-order stochastic PDEs
//!
//! This crate discretises equations of the form
//!
//! ```text
//!     du = (Laplace u + f(u)) dt + g(u) dW     on (0,1) x (0,T],
//!      u = 0                                   on {0,1},
//!      u(0) = u_0,
//! ```
//!
//! where `f` is a one-sided Lipschitz (possibly non-globally-Lipschitz)
//! reaction term such as the cubic `f(u) = u - u^3`, `g` acts as a pointwise
//! Nemytskii multiplier, and `W` is a trace-class Q-Wiener process expanded in
//! the Dirichlet eigenbasis of the Laplacian.
//!
//! Space is discretised either by a spectral Galerkin truncation or by
//! piecewise-linear finite elements; time stepping uses the drift-implicit
//! Euler scheme or its Milstein variant (which adds the commutative-noise
//! second-order correction).  The [`experiments`] module measures strong
//! convergence rates with coupled-path Monte Carlo and produces
//! machine-readable reports.
//!
//! Module map:
//! * [`basis`] — spectral / finite-element spaces, projections, transfers;
//! * [`noise`] — Q-Wiener increments on nested time grids, reproducible
//!   counter-based sampling, Milstein bracket;
//! * [`coefficients`] — drift and diffusion catalogues, Nemytskii application,
//!   assumption checker;
//! * [`schemes`] — damped-Newton implicit stepping, trajectory runner;
//! * [`experiments`] — strong-error studies, rate fits, reports.

pub mod basis;
pub mod coefficients;
pub mod error;
pub mod experiments;
pub mod noise;
pub mod schemes;

pub use error::{Error, Result};
