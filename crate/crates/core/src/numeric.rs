//! Dense linear-algebra primitives.
//!
//! Everything here is a pure function of its inputs. Reductions run in a fixed
//! left-to-right order so results are bit-reproducible.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pivots at or below this value are treated as a loss of definiteness.
pub const CHOLESKY_PIVOT_FLOOR: f64 = 1e-12;

/// Sweep cap for the cyclic Jacobi eigenvalue iteration.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Relative tolerance under which a column is considered collinear with the
/// columns accepted before it.
pub const RANK_TOL: f64 = 1e-10;

/// A dense symmetric matrix. Symmetry is exact as stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Array2<f64>", into = "Array2<f64>")]
pub struct SymMatrix(Array2<f64>);

impl SymMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r == 0 || r != c {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix must be square and non-empty, got {r}x{c}"
            )));
        }
        for i in 0..r {
            for j in (i + 1)..r {
                if entries[[i, j]] != entries[[j, i]] {
                    return Err(Error::DimensionMismatch(format!(
                        "entries ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        Ok(SymMatrix(entries))
    }

    /// Averages `a` with its transpose, which makes it exactly symmetric.
    pub fn symmetrize(a: &Array2<f64>) -> Result<Self> {
        let (r, c) = a.dim();
        if r == 0 || r != c {
            return Err(Error::DimensionMismatch(format!("cannot symmetrize a {r}x{c} matrix")));
        }
        let mut out = a.clone();
        for i in 0..r {
            for j in (i + 1)..r {
                let avg = 0.5 * (a[[i, j]] + a[[j, i]]);
                out[[i, j]] = avg;
                out[[j, i]] = avg;
            }
        }
        Ok(SymMatrix(out))
    }

    pub fn identity(order: usize) -> Self {
        SymMatrix(Array2::eye(order.max(1)))
    }

    pub fn zeros(order: usize) -> Self {
        SymMatrix(Array2::zeros((order.max(1), order.max(1))))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[[i, j]]
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// `self + c·I`
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.0.clone();
        for i in 0..out.nrows() {
            out[[i, i]] += c;
        }
        SymMatrix(out)
    }

    pub fn scaled(&self, c: f64) -> Self {
        SymMatrix(&self.0 * c)
    }
}

impl TryFrom<Array2<f64>> for SymMatrix {
    type Error = Error;
    fn try_from(a: Array2<f64>) -> Result<Self> {
        SymMatrix::new(a)
    }
}

impl From<SymMatrix> for Array2<f64> {
    fn from(m: SymMatrix) -> Self {
        m.0
    }
}

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular(Array2<f64>);

impl LowerTriangular {
    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        self.0.dot(&self.0.t())
    }

    /// `L·z`
    pub fn apply(&self, z: ArrayView1<'_, f64>) -> Array1<f64> {
        let n = self.order();
        let mut out = Array1::zeros(n);
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += self.0[[i, j]] * z[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Solves `L·Lᵀ·x = b`.
    pub fn solve(&self, b: ArrayView1<'_, f64>) -> Array1<f64> {
        let n = self.order();
        let l = &self.0;
        let mut z = Array1::zeros(n);
        for i in 0..n {
            let mut acc = b[i];
            for j in 0..i {
                acc -= l[[i, j]] * z[j];
            }
            z[i] = acc / l[[i, i]];
        }
        let mut x = Array1::zeros(n);
        for i in (0..n).rev() {
            let mut acc = z[i];
            for j in (i + 1)..n {
                acc -= l[[j, i]] * x[j];
            }
            x[i] = acc / l[[i, i]];
        }
        x
    }

    /// Inverse of the factored matrix, symmetrized.
    pub fn inverse(&self) -> SymMatrix {
        let n = self.order();
        let mut inv = Array2::zeros((n, n));
        let mut e = Array1::zeros(n);
        for c in 0..n {
            e.fill(0.0);
            e[c] = 1.0;
            let col = self.solve(e.view());
            inv.column_mut(c).assign(&col);
        }
        SymMatrix::symmetrize(&inv).expect("square by construction")
    }
}

pub fn cholesky(m: &SymMatrix) -> Result<LowerTriangular> {
    let n = m.order();
    let a = &m.0;
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > CHOLESKY_PIVOT_FLOOR) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: diag });
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut acc = a[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = acc / ljj;
        }
    }
    Ok(LowerTriangular(l))
}

/// Inverse of a symmetric positive definite matrix through its Cholesky factor.
pub fn inverse_spd(m: &SymMatrix) -> Result<SymMatrix> {
    Ok(cholesky(m)?.inverse())
}

/// All eigenvalues of `m` in ascending order, by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(m: &SymMatrix) -> Result<Vec<f64>> {
    let n = m.order();
    let mut a = m.0.clone();
    let scale = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let off_norm = |a: &Array2<f64>| {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += a[[i, j]] * a[[i, j]];
            }
        }
        s.sqrt()
    };

    let mut converged = scale == 0.0 || off_norm(&a) <= 1e-15 * scale;
    let mut sweeps = 0;
    while !converged {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NonConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
            }
        }
        converged = off_norm(&a) <= 1e-15 * scale;
    }

    let mut eig: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

pub fn min_eigenvalue(m: &SymMatrix) -> Result<f64> {
    Ok(symmetric_eigenvalues(m)?[0])
}

/// Least-squares solution restricted to a maximal set of linearly independent
/// columns, chosen greedily left to right.
#[derive(Debug, Clone)]
pub struct RestrictedLeastSquares {
    /// Indices of the columns that were kept, ascending.
    pub kept: Vec<usize>,
    /// Indices of the columns dropped as collinear with earlier ones.
    pub dropped: Vec<usize>,
    /// Coefficients for every column; dropped columns get zero.
    pub coefficients: Array1<f64>,
}

/// Householder QR that accepts columns in order and skips any column whose
/// component orthogonal to the accepted ones is below [`RANK_TOL`] relative
/// to its own norm. Later-indexed collinear columns are the ones dropped.
pub fn least_squares_independent(
    y: ArrayView1<'_, f64>,
    x: ArrayView2<'_, f64>,
) -> Result<RestrictedLeastSquares> {
    let (n, q) = x.dim();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "response has {} rows, design has {n}",
            y.len()
        )));
    }
    let mut reflectors: Vec<Vec<f64>> = Vec::new();
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();

    let apply = |refl: &[Vec<f64>], col: &mut [f64]| {
        for (k, v) in refl.iter().enumerate() {
            let mut dot = 0.0;
            for (i, vi) in v.iter().enumerate() {
                dot += vi * col[k + i];
            }
            for (i, vi) in v.iter().enumerate() {
                col[k + i] -= 2.0 * dot * vi;
            }
        }
    };

    for c in 0..q {
        let mut col: Vec<f64> = x.column(c).to_vec();
        let orig = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        apply(&reflectors, &mut col);
        let k = reflectors.len();
        let tail = if k < n {
            col[k..].iter().map(|v| v * v).sum::<f64>().sqrt()
        } else {
            0.0
        };
        if orig == 0.0 || tail <= RANK_TOL * orig {
            dropped.push(c);
            continue;
        }
        let alpha = if col[k] > 0.0 { -tail } else { tail };
        let mut v: Vec<f64> = col[k..].to_vec();
        v[0] -= alpha;
        let vnorm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        for t in v.iter_mut() {
            *t /= vnorm;
        }
        col[k] = alpha;
        for t in col[(k + 1)..].iter_mut() {
            *t = 0.0;
        }
        reflectors.push(v);
        r_cols.push(col[..=k].to_vec());
        kept.push(c);
    }

    let mut qty = y.to_vec();
    apply(&reflectors, &mut qty);
    let r = kept.len();
    let mut beta_kept = vec![0.0; r];
    for i in (0..r).rev() {
        let mut acc = qty[i];
        for j in (i + 1)..r {
            acc -= r_cols[j][i] * beta_kept[j];
        }
        beta_kept[i] = acc / r_cols[i][i];
    }
    let mut coefficients = Array1::zeros(q);
    for (pos, &c) in kept.iter().enumerate() {
        coefficients[c] = beta_kept[pos];
    }
    Ok(RestrictedLeastSquares {
        kept,
        dropped,
        coefficients,
    })
}

/// Ordinary least squares `argmin ‖y − Xβ‖²`. Fails with `RankDeficient`
/// naming the first column that is collinear with earlier ones.
pub fn solve_ols(y: ArrayView1<'_, f64>, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    let fit = least_squares_independent(y, x)?;
    match fit.dropped.first() {
        Some(&column) => Err(Error::RankDeficient { column }),
        None => Ok(fit.coefficients),
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF: rational approximation followed by one
/// Halley step against the exact CDF.
pub fn std_normal_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::OutOfRange(q));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if q < P_LOW {
        let t = (-2.0 * q.ln()).sqrt();
        (((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    } else if q <= 1.0 - P_LOW {
        let u = q - 0.5;
        let r = u * u;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * u
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let t = (-2.0 * (1.0 - q).ln()).sqrt();
        -(((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    };

    let e = std_normal_cdf(x) - q;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    Ok(x - u / (1.0 + 0.5 * x * u))
}
