//! Monte Carlo acceptance rates under the null hypothesis.
//!
//! Every replication draws a fresh graph and data set from the `DATA` stream
//! of `(seed, replication)`, checks that the candidate edges are absent from
//! the generating model, and evaluates every (folds, solver, region) cell on
//! that one data set. Bootstrap and partition streams are keyed by labelled
//! cells so that adding cells never changes existing ones.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{generate_model, sample_mvn, Dataset, Design, PrecisionModel, DEFAULT_GROUPS, DEFAULT_N};
use crate::inference::{
    critical_values, cross_fit_estimates, estimate_edges, multiplier_bootstrap, region_decide, Edge, EdgeSet, FoldAssignment, InferenceConfig, NuisanceSolver,
    RegionSpec, Tail, DEFAULT_ALPHA,
};
use crate::lasso::{PenaltyConfig, SolverOptions};
use crate::rng::{cell_id, cells, stream};

pub const DESK_REPLICATIONS: usize = 200;
pub const DESK_BOOTSTRAP: usize = 300;
pub const FULL_REPLICATIONS: usize = 1000;
pub const FULL_BOOTSTRAP: usize = 500;

/// Environment variable capping the replication work pool.
pub const THREADS_ENV: &str = "GGM_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub design: Design,
    pub p: usize,
    pub n: usize,
    pub replications: usize,
    pub bootstrap_b: usize,
    pub solvers: Vec<NuisanceSolver>,
    pub regions: Vec<RegionSpec>,
    pub folds: Vec<usize>,
    pub seed: u64,
    pub penalty: PenaltyConfig,
    pub solver_options: SolverOptions,
}

impl SimConfig {
    /// Desk-scale defaults: one solver (lasso), rectangle region at 5%, no
    /// cross-fitting.
    pub fn new(design: Design, p: usize) -> Self {
        SimConfig {
            design,
            p,
            n: DEFAULT_N,
            replications: DESK_REPLICATIONS,
            bootstrap_b: DESK_BOOTSTRAP,
            solvers: vec![NuisanceSolver::Lasso],
            regions: vec![RegionSpec::rectangle(DEFAULT_ALPHA)],
            folds: vec![1],
            seed: 0,
            penalty: PenaltyConfig::default(),
            solver_options: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 || self.n < 2 {
            return Err(Error::InvalidConfig("replications and n must be positive (n >= 2)".into()));
        }
        if self.solvers.is_empty() || self.regions.is_empty() || self.folds.is_empty() {
            return Err(Error::InvalidConfig("empty grid: need at least one solver, region and fold count".into()));
        }
        if let Some(&k) = self.folds.iter().find(|&&k| k == 0 || k > self.n) {
            return Err(Error::InvalidConfig(format!("invalid fold count {k}")));
        }
        let d = null_edge_set(self.design, self.p)?.len();
        self.regions.iter().try_for_each(|r| r.validate(d))
    }

    /// Cells in evaluation order: folds, then solver, then region.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &folds in &self.folds {
            for &solver in &self.solvers {
                for &region in &self.regions {
                    out.push(Cell { folds, solver, region });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub folds: usize,
    pub solver: NuisanceSolver,
    pub region: RegionSpec,
}

/// Candidate edges that satisfy the null hypothesis for `design`.
///
/// * random, approx: `{(p,1), …, (p,p−1)}`
/// * cluster: `{(a, b) : a ≤ p/4 < b ≤ p/2}` (one-based)
/// * independent: all pairs
pub fn null_edge_set(design: Design, p: usize) -> Result<EdgeSet> {
    let incompatible = |reason: &str| Error::IncompatibleP {
        design: design.name().into(),
        p,
        reason: reason.into(),
    };
    if p < 3 {
        return Err(incompatible("need at least 3 variables"));
    }
    let edges: Vec<Edge> = match design {
        Design::Random | Design::Approx => (0..p - 1).map(|k| Edge::new(p - 1, k)).collect::<Result<_>>()?,
        Design::Cluster => {
            if p % DEFAULT_GROUPS != 0 {
                return Err(incompatible("cluster design needs p divisible by 4"));
            }
            let q = p / DEFAULT_GROUPS;
            let mut v = Vec::with_capacity(q * q);
            for a in 0..q {
                for b in q..2 * q {
                    v.push(Edge::new(a, b)?);
                }
            }
            v
        }
        Design::Independent => {
            let mut v = Vec::with_capacity(p * (p - 1) / 2);
            for a in 0..p {
                for b in a + 1..p {
                    v.push(Edge::new(a, b)?);
                }
            }
            v
        }
    };
    EdgeSet::new(edges, p)
}

/// The generating model and data set of one replication.
pub fn replication_data(cfg: &SimConfig, replication: u64) -> Result<(PrecisionModel, Dataset)> {
    let mut rng = stream(cfg.seed, replication, cells::DATA);
    let model = generate_model(cfg.design, cfg.p, &mut rng)?;
    let data = sample_mvn(&model, cfg.n, &mut rng)?;
    Ok((model, data))
}

fn inference_config(cfg: &SimConfig, solver: NuisanceSolver) -> InferenceConfig {
    InferenceConfig {
        solver,
        penalty: cfg.penalty.clone(),
        solver_options: cfg.solver_options,
    }
}

/// Accept flags (`true` = null not rejected) in [`SimConfig::cells`] order.
pub fn run_replication(cfg: &SimConfig, replication: u64) -> Result<Vec<bool>> {
    let (model, data) = replication_data(cfg, replication)?;
    let edges = null_edge_set(cfg.design, cfg.p)?;
    if let Some(&e) = edges.edges().iter().find(|&&e| model.has_edge(e)) {
        return Err(Error::NullViolated(e));
    }
    let mut flags = Vec::with_capacity(cfg.folds.len() * cfg.solvers.len() * cfg.regions.len());
    for &k in &cfg.folds {
        let partition = if k > 1 {
            let mut rng = stream(cfg.seed, replication, cell_id(&format!("fold/K{k}")));
            Some(FoldAssignment::random(cfg.n, k, &mut rng)?)
        } else {
            None
        };
        for &solver in &cfg.solvers {
            let icfg = inference_config(cfg, solver);
            let est = match &partition {
                Some(fa) => cross_fit_estimates(&data, &edges, fa, &icfg)?,
                None => estimate_edges(&data, &edges, &icfg)?,
            };
            let mut rng = stream(cfg.seed, replication, cell_id(&format!("boot/{solver}/K{k}")));
            let draws = multiplier_bootstrap(est.psi_matrix().view(), cfg.bootstrap_b, &mut rng)?;
            for region in &cfg.regions {
                let crit = critical_values(&draws, region)?;
                flags.push(!region_decide(&est.stats, est.n, region, &crit)?.reject);
            }
        }
    }
    Ok(flags)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub accepted: usize,
    pub replications: usize,
    pub rate: f64,
    /// `√(r(1 − r)/l)`.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: SimConfig,
    pub d: usize,
    pub cells: Vec<CellResult>,
    pub wall_seconds: f64,
}

/// One line of the CSV output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub design: String,
    pub p: usize,
    pub d: usize,
    pub solver: String,
    pub region: String,
    #[serde(rename = "S")]
    pub s: usize,
    pub exp: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub rate: f64,
    pub se: f64,
    pub l: usize,
}

impl SimResult {
    pub fn rows(&self) -> Vec<CsvRow> {
        self.cells
            .iter()
            .map(|c| CsvRow {
                design: self.config.design.name().into(),
                p: self.config.p,
                d: self.d,
                solver: c.cell.solver.name().into(),
                region: if c.cell.region.region_number() == 1 { "I" } else { "II" }.into(),
                s: c.cell.region.s(),
                exp: c.cell.region.exp(),
                k: c.cell.folds,
                rate: c.rate,
                se: c.se,
                l: c.replications,
            })
            .collect()
    }

    /// The cell matching all given coordinates, if present.
    pub fn find(&self, solver: NuisanceSolver, region: &RegionSpec, folds: usize) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.cell.solver == solver && c.cell.region == *region && c.cell.folds == folds)
    }
}

/// Thread pool sized by [`THREADS_ENV`] when set, else rayon's default.
pub fn work_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder.build().map_err(|e| Error::InvalidConfig(format!("cannot start work pool: {e}")))
}

/// Acceptance rates of every cell over `cfg.replications` replications,
/// run in parallel over replications.
pub fn acceptance_table(cfg: &SimConfig) -> Result<SimResult> {
    let start = Instant::now();
    let flags = replication_flags(cfg)?;
    Ok(summarize(cfg, &flags, start.elapsed().as_secs_f64()))
}

/// Accept flags of every replication, in replication order.
pub fn replication_flags(cfg: &SimConfig) -> Result<Vec<Vec<bool>>> {
    cfg.validate()?;
    let pool = work_pool()?;
    pool.install(|| (0..cfg.replications as u64).into_par_iter().map(|r| run_replication(cfg, r)).collect())
}

/// Same result as [`acceptance_table`], one replication after another.
pub fn acceptance_table_serial(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let start = Instant::now();
    let flags: Vec<Vec<bool>> = (0..cfg.replications as u64).map(|r| run_replication(cfg, r)).collect::<Result<_>>()?;
    Ok(summarize(cfg, &flags, start.elapsed().as_secs_f64()))
}

/// Aggregates flags produced by [`replication_flags`] for `cfg`.
pub fn summarize(cfg: &SimConfig, flags: &[Vec<bool>], wall_seconds: f64) -> SimResult {
    let l = flags.len();
    let cells = cfg
        .cells()
        .into_iter()
        .enumerate()
        .map(|(c, cell)| {
            let accepted = flags.iter().filter(|f| f[c]).count();
            let rate = accepted as f64 / l as f64;
            CellResult {
                cell,
                accepted,
                replications: l,
                rate,
                se: (rate * (1.0 - rate) / l as f64).sqrt(),
            }
        })
        .collect();
    SimResult {
        config: cfg.clone(),
        d: null_edge_set(cfg.design, cfg.p).map(|e| e.len()).unwrap_or(0),
        cells,
        wall_seconds,
    }
}

/// The `(design, p)` rows shared by all reference tables.
pub const TABLE_ROWS: [(Design, usize); 12] = [
    (Design::Random, 20),
    (Design::Random, 50),
    (Design::Random, 100),
    (Design::Cluster, 20),
    (Design::Cluster, 40),
    (Design::Cluster, 60),
    (Design::Approx, 20),
    (Design::Approx, 50),
    (Design::Approx, 100),
    (Design::Independent, 5),
    (Design::Independent, 10),
    (Design::Independent, 20),
];

/// `(S, exp, K)` of tables 1 to 6.
pub fn table_layout(table: u8) -> Result<(usize, u32, usize)> {
    match table {
        1 => Ok((1, 1, 1)),
        2 => Ok((5, 1, 1)),
        3 => Ok((5, 2, 1)),
        4 => Ok((1, 1, 3)),
        5 => Ok((5, 1, 3)),
        6 => Ok((5, 2, 3)),
        other => Err(Error::InvalidConfig(format!("no table {other}; tables are numbered 1 to 6"))),
    }
}

/// Regions I and II for a given `(S, exp)`. `S = 1, exp = 1` uses the plain
/// rectangle and two-sided regions.
pub fn regions_for(s: usize, exp: u32, alpha: f64) -> [RegionSpec; 2] {
    if s == 1 && exp == 1 {
        [RegionSpec::rectangle(alpha), RegionSpec::two_sided(alpha)]
    } else {
        [RegionSpec::s_sparse(s, exp, Tail::Upper, alpha), RegionSpec::s_sparse(s, exp, Tail::EqualTailed, alpha)]
    }
}

/// One configuration per table row with all three solvers and both regions.
pub fn table_configs(table: u8, full: bool, seed: u64) -> Result<Vec<SimConfig>> {
    let (s, exp, k) = table_layout(table)?;
    Ok(TABLE_ROWS
        .iter()
        .map(|&(design, p)| SimConfig {
            replications: if full { FULL_REPLICATIONS } else { DESK_REPLICATIONS },
            bootstrap_b: if full { FULL_BOOTSTRAP } else { DESK_BOOTSTRAP },
            solvers: vec![NuisanceSolver::Lasso, NuisanceSolver::PostLasso, NuisanceSolver::SqrtLasso],
            regions: regions_for(s, exp, DEFAULT_ALPHA).to_vec(),
            folds: vec![k],
            seed,
            ..SimConfig::new(design, p)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_sets_have_reference_sizes() {
        let d = |design, p| null_edge_set(design, p).unwrap().len();
        assert_eq!(d(Design::Random, 20), 19);
        assert_eq!(d(Design::Approx, 100), 99);
        assert_eq!(d(Design::Cluster, 20), 25);
        assert_eq!(d(Design::Cluster, 40), 100);
        assert_eq!(d(Design::Cluster, 60), 225);
        assert_eq!(d(Design::Independent, 5), 10);
        assert_eq!(d(Design::Independent, 20), 190);
        assert!(null_edge_set(Design::Cluster, 22).is_err());
    }

    #[test]
    fn cluster_null_set_spans_first_two_groups() {
        let s = null_edge_set(Design::Cluster, 20).unwrap();
        for e in s.edges() {
            assert!(e.k() < 5 && (5..10).contains(&e.j()), "{e}");
        }
    }

    #[test]
    fn null_sets_avoid_true_edges() {
        for design in Design::ALL {
            let p = if design == Design::Independent { 6 } else { 20 };
            let cfg = SimConfig { n: 20, ..SimConfig::new(design, p) };
            for rep in 0..5 {
                let (model, _) = replication_data(&cfg, rep).unwrap();
                assert!(null_edge_set(design, p).unwrap().edges().iter().all(|&e| !model.has_edge(e)));
            }
        }
    }

    #[test]
    fn replication_is_deterministic() {
        let cfg = SimConfig {
            replications: 2,
            regions: vec![RegionSpec::rectangle(0.05), RegionSpec::two_sided(0.05)],
            folds: vec![1, 2],
            ..SimConfig::new(Design::Independent, 5)
        };
        let a = run_replication(&cfg, 3).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!(a, run_replication(&cfg, 3).unwrap());
    }

    #[test]
    fn empty_grid_rejected() {
        let cfg = SimConfig {
            solvers: vec![],
            ..SimConfig::new(Design::Independent, 5)
        };
        assert!(acceptance_table(&cfg).is_err());
    }

    #[test]
    fn parallel_matches_serial() {
        let cfg = SimConfig {
            replications: 6,
            n: 60,
            bootstrap_b: 100,
            ..SimConfig::new(Design::Random, 8)
        };
        let a = acceptance_table(&cfg).unwrap();
        let b = acceptance_table_serial(&cfg).unwrap();
        assert_eq!(a.cells, b.cells);
        assert_eq!(a.rows().len(), 1);
    }

    #[test]
    fn table_layouts() {
        assert_eq!(table_layout(5).unwrap(), (5, 1, 3));
        assert!(table_layout(7).is_err());
        let cfgs = table_configs(1, false, 0).unwrap();
        assert_eq!(cfgs.len(), 12);
        assert_eq!(cfgs[0].cells().len(), 6);
        assert_eq!(cfgs[0].replications, DESK_REPLICATIONS);
    }
}
