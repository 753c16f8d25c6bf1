//! Semi-static hedging and utility-indifference pricing in illiquid markets.
//!
//! Static buy-and-hold positions in quoted options (with bid/ask spreads and
//! finite quantities) are combined with dynamic trading of the underlying
//! index and cash. The hedging problem is discretized with an indicator
//! basis for the dynamic strategy and a strike-grid quadrature for the
//! expectation, and the resulting convex program is solved with an in-crate
//! log-barrier interior-point method.
//!
//! Module map:
//! - [`instruments`]: quotes, acquisition costs, position boxes, payoffs.
//! - [`claims`]: payoffs of the claims being priced.
//! - [`scenario`]: variance-gamma index model, quadrature grid, simulation.
//! - [`galerkin`]: assembly of the finite-dimensional program.
//! - [`solver`]: barrier Newton method for exponential-sum objectives and LPs.
//! - [`pricing`]: optimal values, indifference prices, super/subhedging,
//!   arbitrage detection.
//! - [`synthetic`]: deterministic synthetic option chains used as fixtures.

pub mod claims;
pub mod error;
pub mod galerkin;
pub mod instruments;
pub mod pricing;
pub mod quadrature;
pub mod scenario;
pub mod solver;
pub mod synthetic;

pub use error::{Error, Result};
