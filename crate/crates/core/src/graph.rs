//! Synthetic Gaussian graphical model designs and multivariate normal data.
//!
//! A design is an adjacency pattern `A`. It becomes a precision matrix through
//! `Φ_pre = v·A + (|λ_min(v·A)| + 0.1 + u)·I`, whose inverse is rescaled to
//! unit variances to give `Σ`, and `Φ = Σ⁻¹`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::Edge;
use crate::numeric::{cholesky, inverse_spd, min_eigenvalue, SymMatrix};

pub const DEFAULT_V: f64 = 0.3;
pub const DEFAULT_U: f64 = 0.1;
pub const DEFAULT_GROUPS: usize = 4;
pub const DEFAULT_APPROX_A: f64 = 1.0 / 20.0;
pub const DEFAULT_N: usize = 200;

/// Entries of `Φ` smaller than this are treated as structural zeros.
pub const EDGE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    Random,
    Cluster,
    Approx,
    Independent,
}

impl Design {
    pub const ALL: [Design; 4] = [Design::Random, Design::Cluster, Design::Approx, Design::Independent];

    pub fn name(self) -> &'static str {
        match self {
            Design::Random => "random",
            Design::Cluster => "cluster",
            Design::Approx => "approx",
            Design::Independent => "independent",
        }
    }

    /// Edge probability used by the random, cluster and approx designs.
    pub fn default_prob(p: usize) -> f64 {
        (5.0 / p as f64).min(1.0)
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Design {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Design::Random),
            "cluster" => Ok(Design::Cluster),
            "approx" => Ok(Design::Approx),
            "independent" | "identity" => Ok(Design::Independent),
            other => Err(Error::InvalidConfig(format!("unknown design '{other}'"))),
        }
    }
}

/// Symmetric weighted adjacency with an exactly zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency(SymMatrix);

impl Adjacency {
    pub fn new(entries: SymMatrix) -> Result<Self> {
        for i in 0..entries.order() {
            if entries.get(i, i) != 0.0 {
                return Err(Error::DimensionMismatch(format!(
                    "adjacency diagonal entry {i} is {}",
                    entries.get(i, i)
                )));
            }
        }
        Ok(Adjacency(entries))
    }

    pub fn empty(p: usize) -> Self {
        Adjacency(SymMatrix::zeros(p))
    }

    pub fn order(&self) -> usize {
        self.0.order()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.0
    }

    /// Number of unordered pairs with a nonzero entry.
    pub fn edge_count(&self) -> usize {
        let p = self.order();
        (0..p)
            .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
            .filter(|&(i, j)| self.get(i, j) != 0.0)
            .count()
    }
}

fn check_prob(prob: f64) -> Result<()> {
    if (0.0..=1.0).contains(&prob) {
        Ok(())
    } else {
        Err(Error::InvalidProb(prob))
    }
}

fn set_pair(a: &mut Array2<f64>, i: usize, j: usize, v: f64) {
    a[[i, j]] = v;
    a[[j, i]] = v;
}

/// Bernoulli(prob) pattern over pairs of the first `p − 1` variables, drawn in
/// lexicographic pair order with one uniform draw per pair.
fn random_pattern<R: Rng + ?Sized>(p: usize, prob: f64, rng: &mut R) -> Array2<f64> {
    let mut a = Array2::zeros((p, p));
    for i in 0..p - 1 {
        for j in (i + 1)..p - 1 {
            if rng.random::<f64>() < prob {
                set_pair(&mut a, i, j, 1.0);
            }
        }
    }
    a
}

/// Random graph on the first `p − 1` variables; variable `p` stays isolated.
pub fn random_graph<R: Rng + ?Sized>(p: usize, prob: f64, rng: &mut R) -> Result<Adjacency> {
    check_prob(prob)?;
    if p < 3 {
        return Err(Error::IncompatibleP {
            design: "random".into(),
            p,
            reason: "need p >= 3".into(),
        });
    }
    Adjacency::new(SymMatrix::new(random_pattern(p, prob, rng))?)
}

/// Edges only inside `groups` equal consecutive blocks.
pub fn cluster_graph<R: Rng + ?Sized>(p: usize, groups: usize, prob: f64, rng: &mut R) -> Result<Adjacency> {
    check_prob(prob)?;
    if groups == 0 || p == 0 || p % groups != 0 {
        return Err(Error::InvalidPartition { p, groups });
    }
    let size = p / groups;
    let mut a = Array2::zeros((p, p));
    for i in 0..p {
        for j in (i + 1)..p {
            if i / size == j / size && rng.random::<f64>() < prob {
                set_pair(&mut a, i, j, 1.0);
            }
        }
    }
    Adjacency::new(SymMatrix::new(a)?)
}

/// Random-graph pattern with every other pair of the first `p − 1` variables
/// drawn from `U[−a, a]`. The last variable stays isolated so that the
/// last-row null hypothesis holds exactly.
pub fn approx_graph<R: Rng + ?Sized>(p: usize, prob: f64, a: f64, rng: &mut R) -> Result<Adjacency> {
    check_prob(prob)?;
    if p < 3 {
        return Err(Error::IncompatibleP {
            design: "approx".into(),
            p,
            reason: "need p >= 3".into(),
        });
    }
    if !(a >= 0.0) {
        return Err(Error::InvalidConfig(format!("uniform half-width must be >= 0, got {a}")));
    }
    let mut m = random_pattern(p, prob, rng);
    for i in 0..p - 1 {
        for j in (i + 1)..p - 1 {
            let u: f64 = rng.random();
            if m[[i, j]] == 0.0 {
                set_pair(&mut m, i, j, a * (2.0 * u - 1.0));
            }
        }
    }
    Adjacency::new(SymMatrix::new(m)?)
}

/// Parameters a model was generated with, echoed into model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub design: Option<Design>,
    pub p: usize,
    pub v: f64,
    pub u: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub groups: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PrecisionModel {
    pub adjacency: Adjacency,
    /// `Φ_pre` before rescaling; absent for the identity design.
    pub phi_pre: Option<SymMatrix>,
    pub phi: SymMatrix,
    pub sigma: SymMatrix,
    /// Off-diagonal nonzeros of `Φ`, each pair once, sorted.
    pub true_edges: Vec<Edge>,
    pub params: GeneratorParams,
}

impl PrecisionModel {
    pub fn p(&self) -> usize {
        self.phi.order()
    }

    /// Population coefficient of `X_k` in the regression of `X_j` on all other
    /// variables, `−Φ[j][k] / Φ[j][j]`.
    pub fn regression_coefficient(&self, j: usize, k: usize) -> f64 {
        -self.phi.get(j, k) / self.phi.get(j, j)
    }

    /// Full population coefficient vector of `X_j` on `X_{−j}` (length `p`,
    /// zero at position `j`).
    pub fn regression_vector(&self, j: usize) -> Array1<f64> {
        Array1::from_shape_fn(self.p(), |k| if k == j { 0.0 } else { self.regression_coefficient(j, k) })
    }

    pub fn has_edge(&self, edge: Edge) -> bool {
        self.true_edges.binary_search(&edge).is_ok()
    }
}

fn edges_of(phi: &SymMatrix) -> Vec<Edge> {
    let p = phi.order();
    let mut out = Vec::new();
    for j in 0..p {
        for k in 0..j {
            if phi.get(j, k).abs() > EDGE_TOL {
                out.push(Edge::new(j, k).expect("j > k"));
            }
        }
    }
    out.sort();
    out
}

pub fn identity_graph(p: usize) -> Result<PrecisionModel> {
    if p < 2 {
        return Err(Error::IncompatibleP {
            design: "independent".into(),
            p,
            reason: "need p >= 2".into(),
        });
    }
    Ok(PrecisionModel {
        adjacency: Adjacency::empty(p),
        phi_pre: None,
        phi: SymMatrix::identity(p),
        sigma: SymMatrix::identity(p),
        true_edges: Vec::new(),
        params: GeneratorParams {
            design: Some(Design::Independent),
            p,
            v: 0.0,
            u: 0.0,
            prob: None,
            groups: None,
            a: None,
        },
    })
}

pub fn build_precision(adj: &Adjacency, v: f64, u: f64) -> Result<PrecisionModel> {
    let p = adj.order();
    let va = adj.matrix().scaled(v);
    let shift = min_eigenvalue(&va)?.abs() + 0.1 + u;
    let phi_pre = va.shifted(shift);
    let pre_inv = inverse_spd(&phi_pre).map_err(|e| Error::SingularPrecision(e.to_string()))?;
    let d: Vec<f64> = (0..p).map(|i| pre_inv.get(i, i).sqrt()).collect();
    let mut sigma = Array2::from_shape_fn((p, p), |(i, j)| pre_inv.get(i, j) / (d[i] * d[j]));
    for i in 0..p {
        sigma[[i, i]] = 1.0;
    }
    let sigma = SymMatrix::symmetrize(&sigma)?;
    let phi = inverse_spd(&sigma).map_err(|e| Error::SingularPrecision(e.to_string()))?;
    let true_edges = edges_of(&phi);
    Ok(PrecisionModel {
        adjacency: adj.clone(),
        phi_pre: Some(phi_pre),
        phi,
        sigma,
        true_edges,
        params: GeneratorParams {
            design: None,
            p,
            v,
            u,
            prob: None,
            groups: None,
            a: None,
        },
    })
}

/// One model of the named design with the default generator parameters.
pub fn generate_model<R: Rng + ?Sized>(design: Design, p: usize, rng: &mut R) -> Result<PrecisionModel> {
    let prob = Design::default_prob(p);
    let mut model = match design {
        Design::Independent => return identity_graph(p),
        Design::Random => build_precision(&random_graph(p, prob, rng)?, DEFAULT_V, DEFAULT_U)?,
        Design::Cluster => {
            if p % DEFAULT_GROUPS != 0 {
                return Err(Error::IncompatibleP {
                    design: design.name().into(),
                    p,
                    reason: format!("{DEFAULT_GROUPS} must divide p"),
                });
            }
            build_precision(&cluster_graph(p, DEFAULT_GROUPS, prob, rng)?, DEFAULT_V, DEFAULT_U)?
        }
        Design::Approx => build_precision(&approx_graph(p, prob, DEFAULT_APPROX_A, rng)?, DEFAULT_V, DEFAULT_U)?,
    };
    model.params.design = Some(design);
    model.params.prob = Some(prob);
    if design == Design::Cluster {
        model.params.groups = Some(DEFAULT_GROUPS);
    }
    if design == Design::Approx {
        model.params.a = Some(DEFAULT_APPROX_A);
    }
    Ok(model)
}

/// `n × p` observation matrix with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    data: Array2<f64>,
}

impl Dataset {
    pub fn new(names: Vec<String>, data: Array2<f64>) -> Result<Self> {
        let (n, p) = data.dim();
        if n < 2 {
            return Err(Error::DimensionMismatch(format!("need at least 2 observations, got {n}")));
        }
        if names.len() != p {
            return Err(Error::DimensionMismatch(format!("{} names for {p} columns", names.len())));
        }
        if let Some(((i, j), v)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::DimensionMismatch(format!("non-finite entry {v} at row {}, column {}", i + 1, j + 1)));
        }
        Ok(Dataset { names, data })
    }

    /// Columns named `X1 … Xp`.
    pub fn from_matrix(data: Array2<f64>) -> Result<Self> {
        let names = (1..=data.ncols()).map(|j| format!("X{j}")).collect();
        Dataset::new(names, data)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.data.column(j)
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        Dataset::new(self.names.clone(), self.data.select(ndarray::Axis(0), rows))
    }

    /// Copy with every column shifted to mean zero.
    pub fn centered(&self) -> Dataset {
        let mean = self.data.mean_axis(ndarray::Axis(0)).expect("n >= 2");
        Dataset {
            names: self.names.clone(),
            data: &self.data - &mean,
        }
    }
}

/// `n` i.i.d. draws from `N(0, Σ)` as `L·z` with `Σ = L·Lᵀ` and `z` standard
/// normal, drawn row by row.
pub fn sample_mvn<R: Rng + ?Sized>(model: &PrecisionModel, n: usize, rng: &mut R) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::DimensionMismatch(format!("need n >= 2, got {n}")));
    }
    let l = cholesky(&model.sigma)?;
    let p = model.p();
    let mut data = Array2::zeros((n, p));
    let mut z = Array1::zeros(p);
    for mut row in data.rows_mut() {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        row.assign(&l.apply(z.view()));
    }
    Dataset::from_matrix(data)
}
