use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const MIN_BOOTSTRAP: usize = 100;

/// Per-draw Gaussian multiplier vectors `𝒩̂_b = n^{−1/2}·Σ_i ξ_{bi}ψ̂(X⁽ⁱ⁾)`,
/// kept before any reduction so one pass serves every region and level.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraws {
    draws: Array2<f64>,
}

impl BootstrapDraws {
    /// `B × d`.
    pub fn draws(&self) -> ArrayView2<'_, f64> {
        self.draws.view()
    }

    pub fn b(&self) -> usize {
        self.draws.nrows()
    }

    pub fn d(&self) -> usize {
        self.draws.ncols()
    }

    /// `sup_r |𝒩̂_{b,r}|` for each draw.
    pub fn sup_abs(&self) -> Vec<f64> {
        self.draws.axis_iter(Axis(0)).map(|row| row.iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect()
    }
}

/// Draws `B × n` independent standard normal multipliers (row by row) and
/// forms `Ξ·Ψ/√n` for the `n × d` standardized score matrix `Ψ`.
pub fn multiplier_bootstrap<R: Rng + ?Sized>(psi: ArrayView2<'_, f64>, b: usize, rng: &mut R) -> Result<BootstrapDraws> {
    if b < MIN_BOOTSTRAP {
        return Err(Error::InvalidConfig(format!("bootstrap needs B >= {MIN_BOOTSTRAP}, got {b}")));
    }
    let (n, d) = psi.dim();
    if n == 0 || d == 0 {
        return Err(Error::DimensionMismatch(format!("score matrix is {n} x {d}")));
    }
    let mut xi = Array2::<f64>::zeros((b, n));
    for v in xi.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let draws = xi.dot(&psi) / (n as f64).sqrt();
    Ok(BootstrapDraws { draws })
}

/// The `q`-quantile as the `⌈q·B⌉`-th order statistic of `sorted`.
/// A slack of `1e-9` keeps `q·B` values that are integers up to rounding
/// from moving to the next order statistic.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::DimensionMismatch("quantile of an empty sample".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidProb(q));
    }
    let b = sorted.len();
    let rank = ((q * b as f64) - 1e-9).ceil().clamp(1.0, b as f64) as usize;
    Ok(sorted[rank - 1])
}

pub(crate) fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// `(1 − α)`-quantiles of `sup_r |𝒩̂_r|` for each requested `α`.
pub fn bootstrap_sup<R: Rng + ?Sized>(psi: ArrayView2<'_, f64>, alpha_levels: &[f64], b: usize, rng: &mut R) -> Result<Vec<f64>> {
    let draws = multiplier_bootstrap(psi, b, rng)?;
    let sups = sorted(draws.sup_abs());
    alpha_levels.iter().map(|&a| empirical_quantile(&sups, 1.0 - a)).collect()
}
