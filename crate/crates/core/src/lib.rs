//! Simultaneous inference on sets of candidate edges in Gaussian graphical
//! models.
//!
//! Nuisance regressions are fitted with a weighted lasso (or post-lasso /
//! square-root lasso), each candidate edge gets a Neyman-orthogonal
//! Z-estimate, and a Gaussian multiplier bootstrap supplies simultaneous
//! critical values for the null hypothesis that none of the edges is present.
//!
//! Module map:
//!
//! * [`numeric`]: Cholesky, Jacobi eigenvalues, least squares, normal quantile.
//! * [`graph`]: synthetic precision-matrix designs and multivariate normal data.
//! * [`lasso`]: weighted lasso with iterated penalty loadings, post-lasso, sqrt-lasso.
//! * [`inference`]: orthogonal scores, edge estimates, bootstrap, regions, cross-fitting.
//! * [`sim`]: Monte Carlo acceptance-rate harness.
//! * [`rng`]: seeded, stream-split random number generation.

pub mod error;
pub mod graph;
pub mod inference;
pub mod lasso;
pub mod numeric;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use graph::{Adjacency, Dataset, Design, PrecisionModel};
pub use inference::{Edge, EdgeSet, RegionKind, RegionSpec, Tail, TestConfig, TestReport};
pub use lasso::{LassoFit, PenaltyConfig};
pub use numeric::SymMatrix;
