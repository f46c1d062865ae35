use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView2, ShapeBuilder};

use super::{Edge, InferenceConfig, NuisanceSolver};
use crate::error::{Error, Result};
use crate::graph::Dataset;
use crate::lasso::{lasso_with_loadings_gram, penalty_level, post_lasso, sqrt_lasso_with_loadings_gram, GramSystem, PenaltyConfig, SolverOptions};
use crate::numeric::solve_ols;

/// Estimated nuisance pair for one edge. Both vectors are indexed by the
/// ascending indices of `X_{−{j,k}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisancePair {
    pub eta1: Array1<f64>,
    pub eta2: Array1<f64>,
    /// Coefficient of `X_k` in the regression of `X_j` on `X_{−j}`.
    pub theta_init: f64,
}

/// `u = X_j − X_{−m}η¹` and `v = X_k − X_{−m}η²` for every row of `x`.
pub(crate) fn edge_residuals(x: ArrayView2<'_, f64>, edge: Edge, eta: &NuisancePair) -> Result<(Array1<f64>, Array1<f64>)> {
    let p = x.ncols();
    if edge.j() >= p || eta.eta1.len() + 2 != p || eta.eta2.len() + 2 != p {
        return Err(Error::DimensionMismatch(format!("edge {edge} and nuisance lengths do not fit p = {p}")));
    }
    let cols = edge.complement(p);
    let mut u = x.column(edge.j()).to_owned();
    let mut v = x.column(edge.k()).to_owned();
    for (a, &c) in cols.iter().enumerate() {
        if eta.eta1[a] != 0.0 {
            u.scaled_add(-eta.eta1[a], &x.column(c));
        }
        if eta.eta2[a] != 0.0 {
            v.scaled_add(-eta.eta2[a], &x.column(c));
        }
    }
    Ok((u, v))
}

/// Fits nuisance regressions on one training sample. The regression of `X_j`
/// on `X_{−j}` is shared by every edge with the same `j` and is fitted once.
pub struct NuisanceEngine {
    x: Array2<f64>,
    gram: Array2<f64>,
    solver: NuisanceSolver,
    penalty: PenaltyConfig,
    opts: SolverOptions,
    cache: HashMap<(usize, Option<usize>), Array1<f64>>,
    nonconverged: usize,
}

impl NuisanceEngine {
    /// `d_total` is the number of edges sharing the penalty level.
    pub fn new(x: ArrayView2<'_, f64>, cfg: &InferenceConfig, d_total: usize) -> Result<Self> {
        let (n, p) = x.dim();
        if p < 3 {
            return Err(Error::DimensionMismatch(format!("edge inference needs p >= 3, got {p}")));
        }
        if n < 2 {
            return Err(Error::DimensionMismatch(format!("need at least 2 training rows, got {n}")));
        }
        let x = x.to_owned();
        let gram = x.t().dot(&x) / n as f64;
        let mut penalty = cfg.penalty.clone();
        penalty.d_total = d_total.max(1);
        penalty.p_total = Some(p);
        Ok(NuisanceEngine {
            x,
            gram,
            solver: cfg.solver,
            penalty,
            opts: cfg.solver_options,
            cache: HashMap::new(),
            nonconverged: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Penalty level of the penalized solvers; `None` for least squares.
    pub fn lambda(&self) -> Result<Option<f64>> {
        match self.solver {
            NuisanceSolver::Ols => Ok(None),
            _ => penalty_level(self.n(), self.x.ncols(), self.penalty.d_total, &self.penalty).map(Some),
        }
    }

    /// Number of penalized fits that stopped at the sweep cap.
    pub fn nonconverged(&self) -> usize {
        self.nonconverged
    }

    fn fit(&mut self, response: usize, excluded: Option<usize>) -> Result<Array1<f64>> {
        if let Some(beta) = self.cache.get(&(response, excluded)) {
            return Ok(beta.clone());
        }
        let (n, p) = self.x.dim();
        let cols: Vec<usize> = (0..p).filter(|&c| c != response && Some(c) != excluded).collect();
        let q = cols.len();
        let y = self.x.column(response).to_owned();
        let xs = Array2::from_shape_fn((n, q).f(), |(i, a)| self.x[[i, cols[a]]]);
        let beta = match self.solver {
            NuisanceSolver::Ols => solve_ols(y.view(), xs.view())?,
            solver => {
                let sys = GramSystem {
                    gram: Array2::from_shape_fn((q, q), |(a, b)| self.gram[[cols[a], cols[b]]]),
                    xty: Array1::from_shape_fn(q, |a| self.gram[[cols[a], response]]),
                    yy: self.gram[[response, response]],
                    n,
                };
                let fit = if solver == NuisanceSolver::SqrtLasso {
                    sqrt_lasso_with_loadings_gram(y.view(), xs.view(), &sys, &self.penalty, &self.opts)?
                } else {
                    lasso_with_loadings_gram(y.view(), xs.view(), &sys, &self.penalty, &self.opts)?
                };
                if !fit.converged {
                    self.nonconverged += 1;
                }
                if solver == NuisanceSolver::PostLasso {
                    post_lasso(y.view(), xs.view(), &fit.support)?.coefficients
                } else {
                    fit.coefficients
                }
            }
        };
        self.cache.insert((response, excluded), beta.clone());
        Ok(beta)
    }

    pub fn nuisance(&mut self, edge: Edge) -> Result<NuisancePair> {
        let (j, k) = (edge.j(), edge.k());
        if j >= self.x.ncols() {
            return Err(Error::InvalidEdge(format!("{edge} beyond p = {}", self.x.ncols())));
        }
        let full = self.fit(j, None).map_err(|e| e.at_edge(edge))?;
        // Regressors of X_j are X_{−j}; X_k sits at position k because k < j.
        let theta_init = full[k];
        let eta1 = Array1::from_iter(full.iter().enumerate().filter(|(a, _)| *a != k).map(|(_, b)| *b));
        let eta2 = self.fit(k, Some(j)).map_err(|e| e.at_edge(edge))?;
        Ok(NuisancePair { eta1, eta2, theta_init })
    }
}

/// Nuisance pair of a single edge fitted on all of `data`, with the penalty
/// level shared by `cfg.penalty.d_total` edges.
pub fn fit_nuisance(data: &Dataset, edge: Edge, cfg: &InferenceConfig) -> Result<NuisancePair> {
    NuisanceEngine::new(data.matrix(), cfg, cfg.penalty.d_total)?.nuisance(edge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn data(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::from_matrix(Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))).unwrap()
    }

    fn ols_cfg() -> InferenceConfig {
        InferenceConfig {
            solver: NuisanceSolver::Ols,
            ..Default::default()
        }
    }

    #[test]
    fn ols_nuisance_matches_direct_regressions() {
        let d = data(60, 5, 1);
        let e = Edge::new(3, 1).unwrap();
        let pair = fit_nuisance(&d, e, &ols_cfg()).unwrap();
        let x = d.matrix();
        let full = solve_ols(x.column(3), x.select(ndarray::Axis(1), &[0, 1, 2, 4]).view()).unwrap();
        assert_abs_diff_eq!(pair.theta_init, full[1], epsilon = 1e-12);
        assert_abs_diff_eq!(pair.eta1[0], full[0], epsilon = 1e-12);
        assert_abs_diff_eq!(pair.eta1[1], full[2], epsilon = 1e-12);
        assert_abs_diff_eq!(pair.eta1[2], full[3], epsilon = 1e-12);
        let second = solve_ols(x.column(1), x.select(ndarray::Axis(1), &[0, 2, 4]).view()).unwrap();
        for a in 0..3 {
            assert_abs_diff_eq!(pair.eta2[a], second[a], epsilon = 1e-12);
        }
    }

    #[test]
    fn residuals_are_orthogonal_for_ols() {
        let d = data(80, 6, 2);
        let e = Edge::new(5, 2).unwrap();
        let pair = fit_nuisance(&d, e, &ols_cfg()).unwrap();
        let (_, v) = edge_residuals(d.matrix(), e, &pair).unwrap();
        for c in e.complement(6) {
            assert!(v.dot(&d.column(c)).abs() < 1e-9);
        }
    }

    #[test]
    fn penalized_fits_are_cached_per_response() {
        let d = data(100, 8, 3);
        let mut eng = NuisanceEngine::new(d.matrix(), &InferenceConfig::default(), 7).unwrap();
        for k in 0..7 {
            eng.nuisance(Edge::new(7, k).unwrap()).unwrap();
        }
        // One shared fit for X8 plus one per X_k.
        assert_eq!(eng.cache.len(), 8);
        assert!(eng.lambda().unwrap().unwrap() > 0.0);
        assert_eq!(eng.nonconverged(), 0);
    }

    #[test]
    fn small_p_rejected() {
        let d = data(10, 2, 4);
        assert!(NuisanceEngine::new(d.matrix(), &InferenceConfig::default(), 1).is_err());
    }
}
