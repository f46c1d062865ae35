//! Orthogonal-score inference on a set of candidate edges.
//!
//! For an edge `(j, k)` the nuisance pair holds the coefficients of
//! `X_{−{j,k}}` in the regression of `X_j` on `X_{−j}` and in the regression
//! of `X_k` on `X_{−{j,k}}`. The target `θ` is the coefficient of `X_k` in
//! the `X_j` regression, estimated from the score
//!
//! ```text
//! ψ(X, θ, η) = (X_j − θX_k − η¹X_{−m})·(X_k − η²X_{−m})
//! ```
//!
//! which is linear in `θ`, so the moment equation is solved exactly.

mod bootstrap;
mod estimate;
mod nuisance;
mod region;
mod score;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap_sup, empirical_quantile, multiplier_bootstrap, BootstrapDraws, MIN_BOOTSTRAP};
pub use estimate::{cross_fit_estimates, estimate_edges, solve_theta, EdgeEstimates, EdgeStat, FoldAssignment};
pub use nuisance::{fit_nuisance, NuisanceEngine, NuisancePair};
pub use region::{critical_values, region_decide, sparse_sum, Criticals, RegionDecision, RegionKind, RegionSpec, Statistic, Tail};
pub use score::{non_orthogonal_score, orthogonality_sensitivity, score, score_parts, Sensitivity};

use crate::error::{Error, Result};
use crate::graph::Dataset;
use crate::lasso::{PenaltyConfig, SolverOptions};
use crate::rng::{cells, stream};

pub const DEFAULT_BOOTSTRAP: usize = 500;
pub const DEFAULT_ALPHA: f64 = 0.05;

/// A candidate edge between nodes `j > k` (zero-based). Displayed one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    j: usize,
    k: usize,
}

impl Edge {
    /// Orders the pair so that `j > k`.
    pub fn new(a: usize, b: usize) -> Result<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Equal => Err(Error::InvalidEdge(format!("({0},{0}): self-loop not a valid edge", a + 1))),
            std::cmp::Ordering::Greater => Ok(Edge { j: a, k: b }),
            std::cmp::Ordering::Less => Ok(Edge { j: b, k: a }),
        }
    }

    pub fn j(self) -> usize {
        self.j
    }

    pub fn k(self) -> usize {
        self.k
    }

    /// One-based `[j, k]`.
    pub fn one_based(self) -> [usize; 2] {
        [self.j + 1, self.k + 1]
    }

    /// Ascending indices of `X_{−{j,k}}` among `p` variables.
    pub fn complement(self, p: usize) -> Vec<usize> {
        (0..p).filter(|&l| l != self.j && l != self.k).collect()
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.j + 1, self.k + 1)
    }
}

/// Ordered list of distinct candidate edges over `p` variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSet {
    edges: Vec<Edge>,
    p: usize,
}

impl EdgeSet {
    pub fn new(edges: Vec<Edge>, p: usize) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::InvalidEdge("edge set is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for &e in &edges {
            if e.j >= p {
                return Err(Error::InvalidEdge(format!("{e} refers to a node beyond p = {p}")));
            }
            if !seen.insert(e) {
                return Err(Error::InvalidEdge(format!("{e} listed twice")));
            }
        }
        Ok(EdgeSet { edges, p })
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuisanceSolver {
    Lasso,
    PostLasso,
    SqrtLasso,
    /// Unpenalized least squares; needs `n > p − 1`.
    Ols,
}

impl NuisanceSolver {
    pub fn name(self) -> &'static str {
        match self {
            NuisanceSolver::Lasso => "lasso",
            NuisanceSolver::PostLasso => "post-lasso",
            NuisanceSolver::SqrtLasso => "sqrt-lasso",
            NuisanceSolver::Ols => "ols",
        }
    }
}

impl fmt::Display for NuisanceSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for NuisanceSolver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "lasso" => Ok(NuisanceSolver::Lasso),
            "post-lasso" | "postlasso" => Ok(NuisanceSolver::PostLasso),
            "sqrt-lasso" | "sqrtlasso" => Ok(NuisanceSolver::SqrtLasso),
            "ols" => Ok(NuisanceSolver::Ols),
            other => Err(Error::InvalidConfig(format!("unknown solver '{other}'"))),
        }
    }
}

/// How nuisance regressions are fitted. `penalty.d_total` and
/// `penalty.p_total` are overwritten with the edge count and the number of
/// variables of the data being tested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub solver: NuisanceSolver,
    pub penalty: PenaltyConfig,
    pub solver_options: SolverOptions,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            solver: NuisanceSolver::Lasso,
            penalty: PenaltyConfig::default(),
            solver_options: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub inference: InferenceConfig,
    pub bootstrap_b: usize,
    pub seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            inference: InferenceConfig::default(),
            bootstrap_b: DEFAULT_BOOTSTRAP,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    /// One-based node indices, `j > k`.
    pub edge: [usize; 2],
    pub names: [String; 2],
    pub theta_hat: f64,
    pub sigma_hat: f64,
    pub jacobian_hat: f64,
    /// Coefficient of `X_k` in the first nuisance regression (diagnostic).
    pub theta_init: f64,
    pub t_stat: f64,
    /// Simultaneous interval from the first rectangle region, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub folds: usize,
    pub edges: Vec<EdgeReport>,
    pub decisions: Vec<RegionDecision>,
    /// Penalty level of the nuisance regressions, one per fold.
    pub lambda: Vec<f64>,
    pub config: TestConfig,
    pub warnings: Vec<String>,
}

impl TestReport {
    /// Decision of the first region, which drives scripted use.
    pub fn primary_reject(&self) -> Option<bool> {
        self.decisions.first().map(|d| d.reject)
    }
}

fn assemble_report(data: &Dataset, edges: &EdgeSet, folds: usize, est: EdgeEstimates, cfg: &TestConfig, regions: &[RegionSpec]) -> Result<TestReport> {
    let mut rng = stream(cfg.seed, 0, cells::BOOTSTRAP);
    let draws = multiplier_bootstrap(est.psi_matrix().view(), cfg.bootstrap_b, &mut rng)?;
    let mut decisions = Vec::with_capacity(regions.len());
    for spec in regions {
        let crit = critical_values(&draws, spec)?;
        decisions.push(region_decide(&est.stats, est.n, spec, &crit)?);
    }
    let rect = decisions.iter().find_map(|d| d.intervals.as_ref());
    let names = data.names();
    let edge_reports = est
        .stats
        .iter()
        .enumerate()
        .map(|(r, s)| EdgeReport {
            edge: s.edge.one_based(),
            names: [names[s.edge.j()].clone(), names[s.edge.k()].clone()],
            theta_hat: s.theta_hat,
            sigma_hat: s.sigma_hat,
            jacobian_hat: s.jacobian_hat,
            theta_init: s.theta_init,
            t_stat: s.t_stat(est.n),
            interval: rect.map(|iv| iv[r]),
        })
        .collect();
    let mut config = cfg.clone();
    config.inference.penalty.d_total = edges.len();
    config.inference.penalty.p_total = Some(data.p());
    Ok(TestReport {
        n: data.n(),
        p: data.p(),
        d: edges.len(),
        folds,
        edges: edge_reports,
        decisions,
        lambda: est.lambda,
        config,
        warnings: est.warnings,
    })
}

fn check_regions(regions: &[RegionSpec], d: usize) -> Result<()> {
    if regions.is_empty() {
        return Err(Error::InvalidConfig("no confidence region requested".into()));
    }
    regions.iter().try_for_each(|r| r.validate(d))
}

/// Full-sample test of `H₀: none of the edges is present`: nuisance fits and
/// moment equations on all observations, one shared bootstrap, one decision
/// per region.
pub fn test_edges(data: &Dataset, edges: &EdgeSet, cfg: &TestConfig, regions: &[RegionSpec]) -> Result<TestReport> {
    check_regions(regions, edges.len())?;
    let est = estimate_edges(data, edges, &cfg.inference)?;
    assemble_report(data, edges, 1, est, cfg, regions)
}

/// K-fold cross-fitted test. `folds = 1` is the full-sample test.
pub fn cross_fit_inference(data: &Dataset, edges: &EdgeSet, folds: usize, cfg: &TestConfig, regions: &[RegionSpec]) -> Result<TestReport> {
    if folds <= 1 {
        return test_edges(data, edges, cfg, regions);
    }
    check_regions(regions, edges.len())?;
    let mut rng = stream(cfg.seed, 0, cells::PARTITION);
    let assignment = FoldAssignment::random(data.n(), folds, &mut rng)?;
    let est = cross_fit_estimates(data, edges, &assignment, &cfg.inference)?;
    assemble_report(data, edges, folds, est, cfg, regions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_normalization() {
        let e = Edge::new(2, 5).unwrap();
        assert_eq!((e.j(), e.k()), (5, 2));
        assert_eq!(e, Edge::new(5, 2).unwrap());
        assert_eq!(e.to_string(), "(6,3)");
        assert!(Edge::new(0, 0).unwrap_err().to_string().contains("self-loop not a valid edge"));
        assert_eq!(Edge::new(1, 3).unwrap().complement(5), vec![0, 2, 4]);
    }

    #[test]
    fn edge_set_validation() {
        let e = |a, b| Edge::new(a, b).unwrap();
        assert!(EdgeSet::new(vec![e(0, 1), e(2, 1)], 3).is_ok());
        assert!(EdgeSet::new(vec![e(0, 3)], 3).is_err());
        assert!(EdgeSet::new(vec![e(0, 1), e(1, 0)], 3).is_err());
        assert!(EdgeSet::new(vec![], 3).is_err());
    }

    #[test]
    fn solver_names_round_trip() {
        for s in [NuisanceSolver::Lasso, NuisanceSolver::PostLasso, NuisanceSolver::SqrtLasso, NuisanceSolver::Ols] {
            assert_eq!(s.name().parse::<NuisanceSolver>().unwrap(), s);
        }
    }
}
