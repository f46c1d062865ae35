//! Weighted lasso with a data-driven penalty level and iterated penalty
//! loadings, post-lasso refits, and a square-root lasso.
//!
//! The lasso minimizes
//!
//! ```text
//! ½·𝔼_n[(y − Xβ)²] + (λ/n)·Σ_j l_j·|β_j|
//! ```
//!
//! with `λ = c_λ·√n·Φ⁻¹(1 − γ/(2pd))`. All solvers work on the sufficient
//! statistics `G = XᵀX/n`, `c = Xᵀy/n` and `𝔼_n[y²]` ([`GramSystem`]), which
//! lets many regressions on column subsets of one data set share a single Gram
//! matrix.
//!
//! Coordinate descent is cyclic with exact coordinate minimization, so the
//! penalized objective never increases from one sweep to the next. A fit is
//! reported as converged only after the KKT conditions have been re-checked
//! from freshly recomputed residual correlations.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{least_squares_independent, std_normal_quantile};

pub const DEFAULT_C_LAMBDA: f64 = 1.1;
pub const DEFAULT_M_ITERATIONS: usize = 2;
pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const LOADING_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    /// Multiplier on the penalty level, must exceed 1.
    pub c_lambda: f64,
    /// Tail probability of the union bound; `None` means `0.1 / ln n`.
    pub gamma: Option<f64>,
    /// Rounds of loading refinement before the final fit.
    pub m_iterations: usize,
    /// Number of regressions `d` sharing the penalty level.
    pub d_total: usize,
    /// Dimension `p` entering the penalty level; `None` uses the number of
    /// regressors of the fit at hand.
    pub p_total: Option<usize>,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            c_lambda: DEFAULT_C_LAMBDA,
            gamma: None,
            m_iterations: DEFAULT_M_ITERATIONS,
            d_total: 1,
            p_total: None,
        }
    }
}

impl PenaltyConfig {
    pub fn gamma_for(&self, n: usize) -> f64 {
        self.gamma.unwrap_or_else(|| 0.1 / (n as f64).ln())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Bound on the standardized coefficient change per sweep and on the KKT
    /// residual of a converged fit.
    pub tol: f64,
    /// Cap on coordinate-descent sweeps.
    pub max_iter: usize,
    /// Record the penalized objective after every sweep.
    #[serde(default)]
    pub record_objective: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            record_objective: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coefficients: Array1<f64>,
    /// `{ j : coefficients[j] ≠ 0 }`, ascending.
    pub support: Vec<usize>,
    pub lambda: f64,
    pub loadings: Array1<f64>,
    /// Coordinate-descent sweeps, summed over all rounds that produced the fit.
    pub iterations_used: usize,
    pub converged: bool,
    /// Objective after each sweep of the final solve, when requested.
    pub objective_trace: Vec<f64>,
}

impl LassoFit {
    fn from_parts(coefficients: Array1<f64>, lambda: f64, loadings: Array1<f64>, sweeps: usize, converged: bool, trace: Vec<f64>) -> Self {
        let support = support_of(coefficients.view());
        LassoFit {
            coefficients,
            support,
            lambda,
            loadings,
            iterations_used: sweeps,
            converged,
            objective_trace: trace,
        }
    }
}

fn support_of(beta: ArrayView1<'_, f64>) -> Vec<usize> {
    beta.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(j, _)| j).collect()
}

/// `λ = c_λ·√n·Φ⁻¹(1 − γ/(2pd))`.
pub fn penalty_level(n: usize, p: usize, d: usize, cfg: &PenaltyConfig) -> Result<f64> {
    if n == 0 || p == 0 || d == 0 {
        return Err(Error::InvalidConfig(format!("penalty level needs n, p, d >= 1 (got {n}, {p}, {d})")));
    }
    if !(cfg.c_lambda > 1.0) {
        return Err(Error::InvalidConfig(format!("c_lambda must exceed 1, got {}", cfg.c_lambda)));
    }
    let gamma = cfg.gamma_for(n);
    let tail = gamma / (2.0 * p as f64 * d as f64);
    if !(tail > 0.0 && tail < 0.5) {
        return Err(Error::InvalidGamma(tail));
    }
    Ok(cfg.c_lambda * (n as f64).sqrt() * std_normal_quantile(1.0 - tail)?)
}

/// Sufficient statistics of the least-squares loss.
#[derive(Debug, Clone)]
pub struct GramSystem {
    /// `XᵀX / n`
    pub gram: Array2<f64>,
    /// `Xᵀy / n`
    pub xty: Array1<f64>,
    /// `𝔼_n[y²]`
    pub yy: f64,
    pub n: usize,
}

impl GramSystem {
    pub fn from_data(y: ArrayView1<'_, f64>, x: ArrayView2<'_, f64>) -> Result<Self> {
        let n = check_dims(y, x)?;
        let nf = n as f64;
        Ok(GramSystem {
            gram: x.t().dot(&x) / nf,
            xty: x.t().dot(&y) / nf,
            yy: y.dot(&y) / nf,
            n,
        })
    }

    pub fn dim(&self) -> usize {
        self.xty.len()
    }

    /// `½·𝔼_n[(y − Xβ)²]`
    pub fn loss(&self, beta: ArrayView1<'_, f64>) -> f64 {
        0.5 * (self.yy - 2.0 * self.xty.dot(&beta) + beta.dot(&self.gram.dot(&beta)))
    }

    /// `𝔼_n[(y − Xβ)·X_j]` for every `j`.
    pub fn residual_correlations(&self, beta: ArrayView1<'_, f64>) -> Array1<f64> {
        &self.xty - &self.gram.dot(&beta)
    }
}

fn check_dims(y: ArrayView1<'_, f64>, x: ArrayView2<'_, f64>) -> Result<usize> {
    let (n, _) = x.dim();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("response has {} rows, design has {n}", y.len())));
    }
    if n < 2 {
        return Err(Error::DimensionMismatch(format!("need n >= 2, got {n}")));
    }
    Ok(n)
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn penalized_objective(sys: &GramSystem, beta: ArrayView1<'_, f64>, penalties: &[f64]) -> f64 {
    sys.loss(beta) + beta.iter().zip(penalties).map(|(b, w)| w * b.abs()).sum::<f64>()
}

/// Largest violation of the lasso stationarity conditions given residual
/// correlations `r`.
fn kkt_from_correlations(r: ArrayView1<'_, f64>, beta: ArrayView1<'_, f64>, penalties: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..beta.len() {
        let v = if beta[j] != 0.0 {
            (r[j] - penalties[j] * beta[j].signum()).abs()
        } else {
            (r[j].abs() - penalties[j]).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// KKT violation of a lasso fit, computed from raw residuals `y − Xβ`.
pub fn kkt_violation(y: ArrayView1<'_, f64>, x: ArrayView2<'_, f64>, fit: &LassoFit) -> f64 {
    let n = y.len() as f64;
    let resid = &y - &x.dot(&fit.coefficients);
    let r = x.t().dot(&resid) / n;
    let penalties: Vec<f64> = fit.loadings.iter().map(|l| fit.lambda / n * l).collect();
    kkt_from_correlations(r.view(), fit.coefficients.view(), &penalties)
}

struct CdOutcome {
    sweeps: usize,
    converged: bool,
    trace: Vec<f64>,
}

/// Cyclic coordinate descent for `loss(β) + Σ penalties_j |β_j|`, starting at
/// `beta`. Alternates full sweeps with sweeps over the active set.
fn coordinate_descent(sys: &GramSystem, penalties: &[f64], beta: &mut Array1<f64>, opts: &SolverOptions) -> CdOutcome {
    let q = sys.dim();
    let g = &sys.gram;
    let scale: Vec<f64> = (0..q).map(|j| g[[j, j]].max(0.0).sqrt()).collect();
    let mut r = sys.residual_correlations(beta.view());
    let mut trace = Vec::new();
    let mut sweeps = 0;
    let mut inner_tol = opts.tol;

    let update = |j: usize, beta: &mut Array1<f64>, r: &mut Array1<f64>| -> f64 {
        let gjj = g[[j, j]];
        let new = if gjj > 0.0 {
            soft_threshold(r[j] + gjj * beta[j], penalties[j]) / gjj
        } else {
            0.0
        };
        let delta = new - beta[j];
        if delta != 0.0 {
            beta[j] = new;
            r.scaled_add(-delta, &g.row(j));
        }
        delta.abs() * scale[j]
    };

    loop {
        if sweeps >= opts.max_iter {
            return CdOutcome { sweeps, converged: false, trace };
        }
        let mut max_change: f64 = 0.0;
        for j in 0..q {
            max_change = max_change.max(update(j, beta, &mut r));
        }
        sweeps += 1;
        if opts.record_objective {
            trace.push(penalized_objective(sys, beta.view(), penalties));
        }

        if max_change < inner_tol {
            r = sys.residual_correlations(beta.view());
            if kkt_from_correlations(r.view(), beta.view(), penalties) <= opts.tol {
                return CdOutcome { sweeps, converged: true, trace };
            }
            inner_tol = (inner_tol * 0.01).max(f64::MIN_POSITIVE);
            continue;
        }

        let active: Vec<usize> = (0..q).filter(|&j| beta[j] != 0.0).collect();
        while sweeps < opts.max_iter {
            let mut change: f64 = 0.0;
            for &j in &active {
                change = change.max(update(j, beta, &mut r));
            }
            sweeps += 1;
            if opts.record_objective {
                trace.push(penalized_objective(sys, beta.view(), penalties));
            }
            if change < inner_tol {
                break;
            }
        }
    }
}

fn check_loadings(loadings: ArrayView1<'_, f64>, q: usize) -> Result<()> {
    if loadings.len() != q {
        return Err(Error::DimensionMismatch(format!("{} loadings for {q} regressors", loadings.len())));
    }
    if let Some((j, l)) = loadings.iter().enumerate().find(|(_, l)| !(**l > 0.0)) {
        return Err(Error::InvalidConfig(format!("loading {j} must be positive, got {l}")));
    }
    Ok(())
}

/// Weighted lasso on precomputed sufficient statistics, optionally warm-started.
pub fn weighted_lasso_gram(
    sys: &GramSystem,
    lambda: f64,
    loadings: ArrayView1<'_, f64>,
    opts: &SolverOptions,
    warm_start: Option<ArrayView1<'_, f64>>,
) -> Result<LassoFit> {
    let q = sys.dim();
    check_loadings(loadings, q)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    let n = sys.n as f64;
    let penalties: Vec<f64> = loadings.iter().map(|l| lambda / n * l).collect();
    let mut beta = match warm_start {
        Some(w) if w.len() == q => w.to_owned(),
        Some(w) => return Err(Error::DimensionMismatch(format!("warm start of length {} for {q} regressors", w.len()))),
        None => Array1::zeros(q),
    };
    let out = coordinate_descent(sys, &penalties, &mut beta, opts);
    Ok(LassoFit::from_parts(beta, lambda, loadings.to_owned(), out.sweeps, out.converged, out.trace))
}

/// `argmin ½𝔼_n[(y − Xβ)²] + (λ/n)·Σ l_j|β_j|`. A fit that hits the sweep
/// cap is returned with `converged = false`.
pub fn weighted_lasso(
    y: ArrayView1<'_, f64>,
    x: ArrayView2<'_, f64>,
    lambda: f64,
    loadings: ArrayView1<'_, f64>,
    opts: &SolverOptions,
) -> Result<LassoFit> {
    let sys = GramSystem::from_data(y, x)?;
    weighted_lasso_gram(&sys, lambda, loadings, opts, None)
}

/// `max_i ‖X⁽ⁱ⁾‖_∞ · (𝔼_n[y²])^{1/2}`, the same value for every regressor.
pub fn initial_loadings(y: ArrayView1<'_, f64>, x: ArrayView2<'_, f64>) -> Array1<f64> {
    let max_abs = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rms = (y.dot(&y) / y.len() as f64).sqrt();
    Array1::from_elem(x.ncols(), max_abs * rms)
}

fn residuals(y: ArrayView1<'_, f64>, x: ArrayView2<'_, f64>, beta: ArrayView1<'_, f64>) -> Array1<f64> {
    let mut e = y.to_owned();
    for (j, b) in beta.iter().enumerate() {
        if *b != 0.0 {
            e.scaled_add(-b, &x.column(j));
        }
    }
    e
}

fn residual_product_rms(e: ArrayView1<'_, f64>, x: ArrayView2<'_, f64>) -> Array1<f64> {
    let n = e.len() as f64;
    let e2: Array1<f64> = e.mapv(|v| v * v);
    Array1::from_iter(x.columns().into_iter().map(|c| {
        let s: f64 = c.iter().zip(e2.iter()).map(|(xv, ev)| xv * xv * ev).sum();
        (s / n).sqrt()
    }))
}

/// `l_j = 𝔼_n[((y − Xβ̂)·X_j)²]^{1/2}`. Fails with `DegenerateLoading` when a
/// component falls below [`LOADING_FLOOR`].
pub fn refine_loadings(y: ArrayView1<'_, f64>, x: ArrayView2<'_, f64>, fit: &LassoFit) -> Result<Array1<f64>> {
    let e = residuals(y, x, fit.coefficients.view());
    let l = residual_product_rms(e.view(), x);
    match l.iter().enumerate().find(|(_, v)| **v < LOADING_FLOOR) {
        Some((index, &value)) => Err(Error::DegenerateLoading { index, value }),
        None => Ok(l),
    }
}

fn floored(mut l: Array1<f64>) -> Array1<f64> {
    l.mapv_inplace(|v| if v < LOADING_FLOOR || !v.is_finite() { LOADING_FLOOR } else { v });
    l
}

/// Full loading iteration: initial loadings, `m` rounds of (fit, refine), then
/// one final fit. Uses `sys` as the sufficient statistics of `(y, x)`.
pub fn lasso_with_loadings_gram(
    y: ArrayView1<'_, f64>,
    x: ArrayView2<'_, f64>,
    sys: &GramSystem,
    cfg: &PenaltyConfig,
    opts: &SolverOptions,
) -> Result<LassoFit> {
    let (n, q) = x.dim();
    let lambda = penalty_level(n, cfg.p_total.unwrap_or(q), cfg.d_total, cfg)?;
    let mut loadings = floored(initial_loadings(y, x));
    let mut warm: Option<Array1<f64>> = None;
    let mut sweeps = 0;
    for _ in 0..cfg.m_iterations {
        let fit = weighted_lasso_gram(sys, lambda, loadings.view(), opts, warm.as_ref().map(|w| w.view()))?;
        sweeps += fit.iterations_used;
        let e = residuals(y, x, fit.coefficients.view());
        loadings = floored(residual_product_rms(e.view(), x));
        warm = Some(fit.coefficients);
    }
    let mut fit = weighted_lasso_gram(sys, lambda, loadings.view(), opts, warm.as_ref().map(|w| w.view()))?;
    fit.iterations_used += sweeps;
    Ok(fit)
}

pub fn lasso_with_loadings(y: ArrayView1<'_, f64>, x: ArrayView2<'_, f64>, cfg: &PenaltyConfig, opts: &SolverOptions) -> Result<LassoFit> {
    let sys = GramSystem::from_data(y, x)?;
    lasso_with_loadings_gram(y, x, &sys, cfg, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostLassoFit {
    pub coefficients: Array1<f64>,
    /// Support columns dropped as collinear with lower-indexed ones.
    pub dropped: Vec<usize>,
}

/// Least squares restricted to `support`; zero elsewhere.
pub fn post_lasso(y: ArrayView1<'_, f64>, x: ArrayView2<'_, f64>, support: &[usize]) -> Result<PostLassoFit> {
    check_dims(y, x)?;
    let q = x.ncols();
    if let Some(&bad) = support.iter().find(|&&j| j >= q) {
        return Err(Error::DimensionMismatch(format!("support index {bad} out of range for {q} columns")));
    }
    let mut cols = support.to_vec();
    cols.sort_unstable();
    cols.dedup();
    let mut coefficients = Array1::zeros(q);
    if cols.is_empty() {
        return Ok(PostLassoFit { coefficients, dropped: Vec::new() });
    }
    let sub = x.select(ndarray::Axis(1), &cols);
    let ls = least_squares_independent(y, sub.view())?;
    for (pos, &c) in cols.iter().enumerate() {
        coefficients[c] = ls.coefficients[pos];
    }
    Ok(PostLassoFit {
        coefficients,
        dropped: ls.dropped.iter().map(|&pos| cols[pos]).collect(),
    })
}

/// Square-root lasso `argmin (𝔼_n[(y − Xβ)²])^{1/2} + (λ/n)·Σ l_j|β_j|`.
///
/// Solved as the scaled lasso: alternate a weighted lasso with penalties
/// `(λ/n)·l_j·σ` and the update `σ = (𝔼_n[(y − Xβ)²])^{1/2}` until `σ` settles.
/// Both steps minimize the jointly convex `Q(β)/(2σ) + σ/2 + (λ/n)‖Ψβ‖₁`.
pub fn sqrt_lasso_gram(
    sys: &GramSystem,
    lambda: f64,
    loadings: ArrayView1<'_, f64>,
    opts: &SolverOptions,
    warm_start: Option<ArrayView1<'_, f64>>,
) -> Result<LassoFit> {
    let q = sys.dim();
    check_loadings(loadings, q)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    let mut beta = match warm_start {
        Some(w) => w.to_owned(),
        None => Array1::zeros(q),
    };
    if sys.yy == 0.0 {
        return Ok(LassoFit::from_parts(Array1::zeros(q), lambda, loadings.to_owned(), 0, true, Vec::new()));
    }
    let sigma_of = |b: &Array1<f64>| (2.0 * sys.loss(b.view())).max(0.0).sqrt();
    let sigma_floor = 1e-12 * sys.yy.sqrt();
    let n = sys.n as f64;
    let mut sigma = sigma_of(&beta).max(sigma_floor);
    let mut sweeps = 0;
    let mut trace = Vec::new();
    loop {
        let penalties: Vec<f64> = loadings.iter().map(|l| lambda / n * l * sigma).collect();
        let budget = SolverOptions {
            max_iter: opts.max_iter.saturating_sub(sweeps).max(1),
            ..*opts
        };
        let out = coordinate_descent(sys, &penalties, &mut beta, &budget);
        sweeps += out.sweeps;
        trace.extend(out.trace);
        let next = sigma_of(&beta);
        if !out.converged || sweeps >= opts.max_iter {
            return Ok(LassoFit::from_parts(beta, lambda, loadings.to_owned(), sweeps, false, trace));
        }
        if next <= sigma_floor || (next - sigma).abs() <= opts.tol * sigma {
            return Ok(LassoFit::from_parts(beta, lambda, loadings.to_owned(), sweeps, true, trace));
        }
        sigma = next;
    }
}

pub fn sqrt_lasso(
    y: ArrayView1<'_, f64>,
    x: ArrayView2<'_, f64>,
    lambda: f64,
    loadings: ArrayView1<'_, f64>,
    opts: &SolverOptions,
) -> Result<LassoFit> {
    let sys = GramSystem::from_data(y, x)?;
    sqrt_lasso_gram(&sys, lambda, loadings, opts, None)
}

/// Square-root lasso with scale-free loadings: column root-mean-squares to
/// start, then `m` rounds of `l_j = (𝔼_n[e²X_j²] / 𝔼_n[e²])^{1/2}`.
pub fn sqrt_lasso_with_loadings_gram(
    y: ArrayView1<'_, f64>,
    x: ArrayView2<'_, f64>,
    sys: &GramSystem,
    cfg: &PenaltyConfig,
    opts: &SolverOptions,
) -> Result<LassoFit> {
    let (n, q) = x.dim();
    let lambda = penalty_level(n, cfg.p_total.unwrap_or(q), cfg.d_total, cfg)?;
    let mut loadings = floored(Array1::from_shape_fn(q, |j| sys.gram[[j, j]].max(0.0).sqrt()));
    let mut warm: Option<Array1<f64>> = None;
    let mut sweeps = 0;
    for _ in 0..cfg.m_iterations {
        let fit = sqrt_lasso_gram(sys, lambda, loadings.view(), opts, warm.as_ref().map(|w| w.view()))?;
        sweeps += fit.iterations_used;
        let e = residuals(y, x, fit.coefficients.view());
        let ms = e.dot(&e) / n as f64;
        if ms > 0.0 {
            loadings = floored(residual_product_rms(e.view(), x) / ms.sqrt());
        }
        warm = Some(fit.coefficients);
    }
    let mut fit = sqrt_lasso_gram(sys, lambda, loadings.view(), opts, warm.as_ref().map(|w| w.view()))?;
    fit.iterations_used += sweeps;
    Ok(fit)
}
