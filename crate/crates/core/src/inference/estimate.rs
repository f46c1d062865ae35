use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;

use super::nuisance::{edge_residuals, NuisanceEngine, NuisancePair};
use super::{Edge, EdgeSet, InferenceConfig};
use crate::error::{Error, Result};
use crate::graph::Dataset;

const JACOBIAN_FLOOR: f64 = 1e-12;

/// Estimate, Jacobian, standard deviation and standardized scores of one edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeStat {
    pub edge: Edge,
    pub theta_hat: f64,
    pub jacobian_hat: f64,
    pub sigma_hat: f64,
    /// `ψ̂ = −ψ/(σ̂Ĵ)`, one entry per observation.
    pub psi_std: Array1<f64>,
    pub theta_init: f64,
}

impl EdgeStat {
    /// `√n·θ̂/σ̂`.
    pub fn t_stat(&self, n: usize) -> f64 {
        (n as f64).sqrt() * self.theta_hat / self.sigma_hat
    }

    /// From per-observation `u`, `v`, `X_k` and a given `θ̂`.
    fn from_residuals(edge: Edge, u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>, xk: ArrayView1<'_, f64>, theta: f64, theta_init: f64) -> Result<Self> {
        let n = u.len() as f64;
        let jac = -xk.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / n;
        if !(jac.abs() >= JACOBIAN_FLOOR) {
            return Err(Error::DegenerateJacobian { value: jac }.at_edge(edge));
        }
        let psi: Array1<f64> = Array1::from_iter(u.iter().zip(v).zip(xk).map(|((u, v), x)| (u - theta * x) * v));
        let sigma = (psi.dot(&psi) / n).sqrt() / jac.abs();
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::DegenerateVariance.at_edge(edge));
        }
        let scale = -1.0 / (sigma * jac);
        Ok(EdgeStat {
            edge,
            theta_hat: theta,
            jacobian_hat: jac,
            sigma_hat: sigma,
            psi_std: psi * scale,
            theta_init,
        })
    }
}

fn exact_root(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>, xk: ArrayView1<'_, f64>) -> Option<f64> {
    let num: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let den: f64 = xk.iter().zip(v).map(|(a, b)| a * b).sum();
    (den.abs() / u.len() as f64 >= JACOBIAN_FLOOR).then(|| num / den)
}

/// Exact root of the empirical moment equation
/// `θ̂ = 𝔼_n[(X_j − η¹X_{−m})(X_k − η²X_{−m})] / 𝔼_n[X_k(X_k − η²X_{−m})]`.
pub fn solve_theta(data: &Dataset, edge: Edge, eta: &NuisancePair) -> Result<EdgeStat> {
    let x = data.matrix();
    let (u, v) = edge_residuals(x, edge, eta)?;
    let xk = x.column(edge.k());
    let theta = exact_root(u.view(), v.view(), xk).ok_or_else(|| {
        let value = -xk.dot(&v) / data.n() as f64;
        Error::DegenerateJacobian { value }.at_edge(edge)
    })?;
    EdgeStat::from_residuals(edge, u.view(), v.view(), xk, theta, eta.theta_init)
}

/// Per-edge statistics sharing one sample of `n` observations.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeEstimates {
    pub stats: Vec<EdgeStat>,
    pub n: usize,
    /// Nuisance penalty level per fold (empty for least squares).
    pub lambda: Vec<f64>,
    pub warnings: Vec<String>,
}

impl EdgeEstimates {
    /// `n × d` matrix of standardized scores.
    pub fn psi_matrix(&self) -> Array2<f64> {
        let d = self.stats.len();
        let mut m = Array2::zeros((self.n, d));
        for (r, s) in self.stats.iter().enumerate() {
            m.column_mut(r).assign(&s.psi_std);
        }
        m
    }

    pub fn t_stats(&self) -> Vec<f64> {
        self.stats.iter().map(|s| s.t_stat(self.n)).collect()
    }
}

fn check_fit(data: &Dataset, edges: &EdgeSet) -> Result<()> {
    if edges.p() != data.p() {
        return Err(Error::DimensionMismatch(format!("edge set built for p = {} but data has {} columns", edges.p(), data.p())));
    }
    Ok(())
}

fn engine_warnings(engine: &NuisanceEngine, fold: Option<usize>, warnings: &mut Vec<String>) {
    if engine.nonconverged() > 0 {
        let at = fold.map(|f| format!(" in fold {}", f + 1)).unwrap_or_default();
        warnings.push(format!("{} nuisance fit(s){at} stopped at the sweep cap", engine.nonconverged()));
    }
}

/// Nuisance fits and moment equations on the full sample.
pub fn estimate_edges(data: &Dataset, edges: &EdgeSet, cfg: &InferenceConfig) -> Result<EdgeEstimates> {
    check_fit(data, edges)?;
    let mut engine = NuisanceEngine::new(data.matrix(), cfg, edges.len())?;
    let stats = edges
        .edges()
        .iter()
        .map(|&e| engine.nuisance(e).and_then(|eta| solve_theta(data, e, &eta)))
        .collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    engine_warnings(&engine, None, &mut warnings);
    Ok(EdgeEstimates {
        stats,
        n: data.n(),
        lambda: engine.lambda()?.into_iter().collect(),
        warnings,
    })
}

/// Assignment of observations to `K` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    folds: usize,
    fold_of: Vec<usize>,
}

impl FoldAssignment {
    /// Random partition: a uniform permutation cut into contiguous chunks
    /// whose sizes differ by at most one (the larger chunks first).
    pub fn random<R: Rng + ?Sized>(n: usize, folds: usize, rng: &mut R) -> Result<Self> {
        if folds == 0 || folds > n {
            return Err(Error::InvalidConfig(format!("cannot split {n} observations into {folds} folds")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let (base, extra) = (n / folds, n % folds);
        let mut fold_of = vec![0; n];
        let mut pos = 0;
        for f in 0..folds {
            let size = base + usize::from(f < extra);
            for &i in &order[pos..pos + size] {
                fold_of[i] = f;
            }
            pos += size;
        }
        Ok(FoldAssignment { folds, fold_of })
    }

    /// Explicit labels in `0..folds`; every fold must be non-empty.
    pub fn from_labels(fold_of: Vec<usize>, folds: usize) -> Result<Self> {
        let mut counts = vec![0usize; folds];
        for &f in &fold_of {
            if f >= folds {
                return Err(Error::InvalidConfig(format!("fold label {f} out of range for {folds} folds")));
            }
            counts[f] += 1;
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidConfig("every fold needs at least one observation".into()));
        }
        Ok(FoldAssignment { folds, fold_of })
    }

    pub fn folds(&self) -> usize {
        self.folds
    }

    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    pub fn fold_of(&self, i: usize) -> usize {
        self.fold_of[i]
    }

    /// Ascending observation indices in `fold`.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    /// Ascending observation indices outside `fold`.
    pub fn complement(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        (0..self.folds).map(|f| self.fold_of.iter().filter(|&&g| g == f).count()).collect()
    }
}

/// Cross-fitted estimates. Each fold's nuisances are fitted on the other
/// folds, `θ̂_k` solves the fold's own moment equation, and `θ̂^K` is their
/// average. `Ĵ^K`, `σ̂^K` and the standardized scores are then evaluated at
/// `θ̂^K` over all observations, each with its own fold's nuisances.
pub fn cross_fit_estimates(data: &Dataset, edges: &EdgeSet, folds: &FoldAssignment, cfg: &InferenceConfig) -> Result<EdgeEstimates> {
    check_fit(data, edges)?;
    if folds.n() != data.n() {
        return Err(Error::DimensionMismatch(format!("fold map covers {} rows, data has {}", folds.n(), data.n())));
    }
    let (n, p) = (data.n(), data.p());
    let k_folds = folds.folds();
    let d = edges.len();
    let mut warnings = Vec::new();
    let sizes = folds.sizes();
    if sizes.iter().any(|&s| s != sizes[0]) {
        warnings.push(format!("n = {n} is not divisible by K = {k_folds}; fold sizes are {sizes:?}"));
    }
    let mut u_all = vec![Array1::<f64>::zeros(n); d];
    let mut v_all = vec![Array1::<f64>::zeros(n); d];
    let mut theta_sum = vec![0.0; d];
    let mut theta_init = vec![0.0; d];
    let mut lambda = Vec::new();

    for f in 0..k_folds {
        let eval_rows = folds.members(f);
        let train_rows = folds.complement(f);
        if train_rows.len() < p {
            warnings.push(format!(
                "{}",
                Error::FoldTooSmall {
                    n,
                    folds: k_folds,
                    fold_size: train_rows.len()
                }
            ));
        }
        let train = data.select_rows(&train_rows)?;
        let eval = data.select_rows(&eval_rows)?;
        let mut engine = NuisanceEngine::new(train.matrix(), cfg, d)?;
        for (r, &edge) in edges.edges().iter().enumerate() {
            let eta = engine.nuisance(edge)?;
            let (u, v) = edge_residuals(eval.matrix(), edge, &eta)?;
            let xk = eval.column(edge.k());
            let theta = exact_root(u.view(), v.view(), xk).ok_or_else(|| {
                let value = -xk.dot(&v) / eval_rows.len() as f64;
                Error::DegenerateJacobian { value }.at_edge(edge)
            })?;
            theta_sum[r] += theta;
            theta_init[r] += eta.theta_init / k_folds as f64;
            for (pos, &i) in eval_rows.iter().enumerate() {
                u_all[r][i] = u[pos];
                v_all[r][i] = v[pos];
            }
        }
        engine_warnings(&engine, Some(f), &mut warnings);
        lambda.extend(engine.lambda()?);
    }

    let stats = edges
        .edges()
        .iter()
        .enumerate()
        .map(|(r, &edge)| {
            let theta = theta_sum[r] / k_folds as f64;
            EdgeStat::from_residuals(edge, u_all[r].view(), v_all[r].view(), data.column(edge.k()), theta, theta_init[r])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EdgeEstimates { stats, n, lambda, warnings })
}
