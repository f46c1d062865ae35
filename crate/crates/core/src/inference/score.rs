use ndarray::{Array1, ArrayView1, ArrayView2};

use super::nuisance::{edge_residuals, NuisancePair};
use super::Edge;
use crate::error::{Error, Result};

fn projection(x: ArrayView1<'_, f64>, cols: &[usize], coef: &Array1<f64>) -> f64 {
    cols.iter().zip(coef.iter()).map(|(&c, b)| x[c] * b).sum()
}

fn check_pair(p: usize, eta: &NuisancePair) -> Result<()> {
    if eta.eta1.len() + 2 != p || eta.eta2.len() + 2 != p {
        return Err(Error::DimensionMismatch(format!(
            "nuisance vectors of length {}/{} for p = {p}",
            eta.eta1.len(),
            eta.eta2.len()
        )));
    }
    Ok(())
}

/// `(ψ^a, ψ^b)` for one observation, with `ψ = ψ^a·θ + ψ^b`.
pub fn score_parts(x: ArrayView1<'_, f64>, edge: Edge, eta: &NuisancePair) -> Result<(f64, f64)> {
    let p = x.len();
    check_pair(p, eta)?;
    if edge.j() >= p {
        return Err(Error::InvalidEdge(format!("{edge} beyond p = {p}")));
    }
    let cols = edge.complement(p);
    let u = x[edge.j()] - projection(x, &cols, &eta.eta1);
    let v = x[edge.k()] - projection(x, &cols, &eta.eta2);
    Ok((-x[edge.k()] * v, u * v))
}

/// `ψ(X, θ, η) = (X_j − θX_k − η¹X_{−m})·(X_k − η²X_{−m})` for one observation.
pub fn score(x: ArrayView1<'_, f64>, edge: Edge, theta: f64, eta: &NuisancePair) -> Result<f64> {
    let (a, b) = score_parts(x, edge, eta)?;
    Ok(a * theta + b)
}

/// The score without the second nuisance: `(X_j − θX_k − η¹X_{−m})·X_k`.
pub fn non_orthogonal_score(x: ArrayView1<'_, f64>, edge: Edge, theta: f64, eta1: &Array1<f64>) -> Result<f64> {
    let p = x.len();
    if eta1.len() + 2 != p {
        return Err(Error::DimensionMismatch(format!("eta1 of length {} for p = {p}", eta1.len())));
    }
    let cols = edge.complement(p);
    Ok((x[edge.j()] - theta * x[edge.k()] - projection(x, &cols, eta1)) * x[edge.k()])
}

/// Finite-difference sensitivity of the empirical moment to a nuisance
/// perturbation, for the orthogonal score and for the non-orthogonal one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivity {
    pub orthogonal: f64,
    pub non_orthogonal: f64,
}

impl Sensitivity {
    pub fn ratio(&self) -> f64 {
        self.non_orthogonal / self.orthogonal
    }
}

fn mean(v: &Array1<f64>) -> f64 {
    v.sum() / v.len() as f64
}

/// Each score is evaluated at its own root `θ̂` under `eta`; the reported
/// value is `|𝔼_n ψ(θ̂, η + tδ) − 𝔼_n ψ(θ̂, η)| / t`. The non-orthogonal
/// score only sees `delta.eta1`.
pub fn orthogonality_sensitivity(x: ArrayView2<'_, f64>, edge: Edge, eta: &NuisancePair, delta: &NuisancePair, t: f64) -> Result<Sensitivity> {
    if !(t > 0.0) {
        return Err(Error::OutOfRange(t));
    }
    let p = x.ncols();
    check_pair(p, eta)?;
    check_pair(p, delta)?;
    let shifted = NuisancePair {
        eta1: &eta.eta1 + &(&delta.eta1 * t),
        eta2: &eta.eta2 + &(&delta.eta2 * t),
        theta_init: eta.theta_init,
    };
    let xk = x.column(edge.k()).to_owned();

    let (u0, v0) = edge_residuals(x, edge, eta)?;
    let (u1, v1) = edge_residuals(x, edge, &shifted)?;
    let jac = mean(&(&xk * &v0));
    if jac.abs() < 1e-12 {
        return Err(Error::DegenerateJacobian { value: jac });
    }
    let theta = mean(&(&u0 * &v0)) / jac;
    let moment = |u: &Array1<f64>, v: &Array1<f64>| mean(&((u - &(&xk * theta)) * v));
    let orthogonal = (moment(&u1, &v1) - moment(&u0, &v0)).abs() / t;

    let kk = mean(&(&xk * &xk));
    let theta_n = mean(&(&u0 * &xk)) / kk;
    let naive = |u: &Array1<f64>| mean(&((u - &(&xk * theta_n)) * &xk));
    let non_orthogonal = (naive(&u1) - naive(&u0)).abs() / t;
    Ok(Sensitivity { orthogonal, non_orthogonal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn pair(e1: Array1<f64>, e2: Array1<f64>) -> NuisancePair {
        NuisancePair { eta1: e1, eta2: e2, theta_init: 0.0 }
    }

    #[test]
    fn hand_computed_score() {
        // p = 4, edge (4,1): X_{-m} = (X2, X3).
        let x = array![1.0, 2.0, -1.0, 3.0];
        let e = Edge::new(3, 0).unwrap();
        let eta = pair(array![0.5, 1.0], array![-1.0, 2.0]);
        // u = 3 - (1 - 1) = 3; v = 1 - (-2 - 2) = 5.
        let (a, b) = score_parts(x.view(), e, &eta).unwrap();
        assert_abs_diff_eq!(a, -5.0);
        assert_abs_diff_eq!(b, 15.0);
        assert_abs_diff_eq!(score(x.view(), e, 0.7, &eta).unwrap(), (3.0 - 0.7) * 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(non_orthogonal_score(x.view(), e, 0.7, &eta.eta1).unwrap(), (3.0 - 0.7) * 1.0, epsilon = 1e-14);
    }

    #[test]
    fn score_is_affine_in_theta() {
        let x = array![0.3, -1.2, 2.5, 0.8, -0.4];
        let e = Edge::new(1, 3).unwrap();
        let eta = pair(array![0.1, -0.2, 0.3], array![0.4, 0.0, -0.5]);
        let (a, b) = score_parts(x.view(), e, &eta).unwrap();
        for th in [-2.0, 0.0, 0.5, 3.0] {
            assert_abs_diff_eq!(score(x.view(), e, th, &eta).unwrap(), a * th + b, epsilon = 1e-13);
        }
    }

    #[test]
    fn dimension_checks() {
        let x = array![1.0, 2.0, 3.0];
        let e = Edge::new(1, 0).unwrap();
        assert!(score(x.view(), e, 0.0, &pair(array![1.0, 2.0], array![1.0])).is_err());
        assert!(score(x.view(), Edge::new(5, 0).unwrap(), 0.0, &pair(array![1.0], array![1.0])).is_err());
    }
}
