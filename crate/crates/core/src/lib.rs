//! Joint survival probabilities of the cumulated components of a multinomial
//! vector, `P(X_1 + ... + X_i >= k_1 + ... + k_i for all i)`, computed four
//! ways:
//!
//! - exact enumeration of the multinomial pmf ([`survival::survival_exact`]),
//! - the equivalent Dirichlet-type integral over the nested region `R_d`
//!   ([`survival::survival_dirichlet`]),
//! - the same integral rewritten as a correction factor times a multivariate
//!   normal density ([`survival::survival_gaussian`]),
//! - Monte Carlo over uniform order statistics ([`survival::survival_mc`]).
//!
//! [`expansions`] holds the scalar kernels of the Gaussian form and
//! [`checks`] runs the algebraic identities that tie the routes together.

pub mod checks;
pub mod covariance;
pub mod error;
pub mod expansions;
pub mod model;
pub mod quadrature;
pub mod report;
pub mod survival;

pub use covariance::CovarianceStructure;
pub use error::{Error, Result};
pub use expansions::ExpansionContext;
pub use model::{build_instance, reduce_thresholds, ProbabilityWeights, SurvivalInstance, Thresholds};
pub use quadrature::{McEstimate, MonteCarloSpec, QuadratureSpec};
pub use survival::{compare_routes, evaluate_routes, RouteReport, RouteSelection, RouteValue};
