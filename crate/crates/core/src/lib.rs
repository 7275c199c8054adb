//! Stochastic variance-reduced policy gradient (SVRPG).
//!
//! The crate bundles the pieces needed to train and to audit variance-reduced
//! policy-gradient methods:
//!
//! * [`trajectory`]: rollouts, discounted returns, trajectory log-densities and
//!   exhaustive enumeration of finite MDPs.
//! * [`tabular`] and [`env`]: a JSON-loadable tabular MDP plus continuous
//!   cart-pole and mountain-car simulators.
//! * [`policy`]: Gaussian (linear and one-hidden-layer) and tabular softmax
//!   policies with exact score functions.
//! * [`estimator`]: REINFORCE and GPOMDP estimators and the exact
//!   enumeration gradient.
//! * [`variance_reduction`]: importance weights, the semi-stochastic gradient
//!   and the SVRPG / plain stochastic-gradient training loops.
//! * [`theory`]: smoothness constants, the epoch condition, the
//!   accuracy-driven batch schedule and exact Rényi-divergence diagnostics.
//! * [`harness`]: run configuration, experiments, sweeps, CSV metrics and
//!   the self-check report.

pub mod env;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod policy;
pub mod rng;
pub mod tabular;
pub mod theory;
pub mod trajectory;
pub mod variance_reduction;

pub use env::Environment;
pub use error::{Error, Result};
pub use estimator::{GradientEstimate, GradientEstimator};
pub use policy::Policy;
pub use tabular::TabularMdp;
pub use theory::TheoryConstants;
pub use trajectory::Trajectory;
pub use variance_reduction::{SvrpgConfig, VariantFlags};
