//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any failed.

use std::time::Instant;

use ggmtest_core::graph::{build_precision, generate_model, identity_graph, sample_mvn, Adjacency, Design};
use ggmtest_core::inference::{
    bootstrap_sup, fit_nuisance, orthogonality_sensitivity, test_edges, Edge, EdgeSet, InferenceConfig, NuisancePair, NuisanceSolver,
    RegionSpec, Tail, TestConfig,
};
use ggmtest_core::lasso::{kkt_violation, lasso_with_loadings, post_lasso, weighted_lasso, PenaltyConfig, SolverOptions};
use ggmtest_core::numeric::SymMatrix;
use ggmtest_core::sim::{null_edge_set, replication_data, replication_flags, summarize, SimConfig, TABLE_ROWS};
use ndarray::{array, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    summary: String,
}

fn outcome(pass: bool, summary: impl Into<String>) -> Outcome {
    Outcome { pass, summary: summary.into() }
}

// Reference Table 1 acceptance rates: (lasso I, post-lasso I, lasso II, post-lasso II).
const TABLE1: [(Design, usize, [f64; 4]); 12] = [
    (Design::Random, 20, [0.929, 0.936, 0.923, 0.931]),
    (Design::Random, 50, [0.909, 0.914, 0.920, 0.918]),
    (Design::Random, 100, [0.915, 0.918, 0.924, 0.926]),
    (Design::Cluster, 20, [0.909, 0.940, 0.911, 0.932]),
    (Design::Cluster, 40, [0.914, 0.918, 0.930, 0.938]),
    (Design::Cluster, 60, [0.895, 0.893, 0.917, 0.922]),
    (Design::Approx, 20, [0.929, 0.929, 0.942, 0.942]),
    (Design::Approx, 50, [0.906, 0.906, 0.919, 0.919]),
    (Design::Approx, 100, [0.897, 0.897, 0.933, 0.933]),
    (Design::Independent, 5, [0.929, 0.929, 0.929, 0.929]),
    (Design::Independent, 10, [0.926, 0.926, 0.931, 0.931]),
    (Design::Independent, 20, [0.899, 0.899, 0.919, 0.919]),
];

const SOLVERS: [NuisanceSolver; 2] = [NuisanceSolver::Lasso, NuisanceSolver::PostLasso];

fn table1_regions() -> Vec<RegionSpec> {
    vec![
        RegionSpec::rectangle(0.05),
        RegionSpec::two_sided(0.05),
        RegionSpec::s_sparse(1, 1, Tail::Upper, 0.05),
        RegionSpec::s_sparse(1, 1, Tail::EqualTailed, 0.05),
    ]
}

struct Table1Run {
    design: Design,
    p: usize,
    /// Rates indexed `[solver][region]` over [`table1_regions`].
    rates: [[f64; 4]; 2],
    mismatches: usize,
    flags_compared: usize,
}

fn run_table1() -> Vec<Table1Run> {
    TABLE_ROWS
        .iter()
        .map(|&(design, p)| {
            let cfg = SimConfig {
                solvers: SOLVERS.to_vec(),
                regions: table1_regions(),
                ..SimConfig::new(design, p)
            };
            let start = Instant::now();
            let flags = replication_flags(&cfg).expect("table 1 replications");
            let res = summarize(&cfg, &flags, start.elapsed().as_secs_f64());
            let mut rates = [[0.0; 4]; 2];
            for (c, cell) in res.cells.iter().enumerate() {
                rates[c / 4][c % 4] = cell.rate;
            }
            let mut mismatches = 0;
            let mut flags_compared = 0;
            for f in &flags {
                for s in 0..2 {
                    for (plain, sparse) in [(0, 2), (1, 3)] {
                        flags_compared += 1;
                        if f[4 * s + plain] != f[4 * s + sparse] {
                            mismatches += 1;
                        }
                    }
                }
            }
            eprintln!("  ran {design} p={p} in {:.1}s", res.wall_seconds);
            Table1Run {
                design,
                p,
                rates,
                mismatches,
                flags_compared,
            }
        })
        .collect()
}

fn criterion1(runs: &[Table1Run]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let (mut sum_i, mut sum_ii) = (0.0, 0.0);
    for (run, (design, p, reference)) in runs.iter().zip(TABLE1.iter()) {
        assert_eq!((run.design, run.p), (*design, *p));
        // Reference order: lasso I, post-lasso I, lasso II, post-lasso II.
        let ours = [run.rates[0][0], run.rates[1][0], run.rates[0][1], run.rates[1][1]];
        let labels = ["lasso I", "post-lasso I", "lasso II", "post-lasso II"];
        for i in 0..4 {
            let dev = (ours[i] - reference[i]).abs();
            worst = worst.max(dev);
            eprintln!("  {design:<11} p={p:<3} {:<13} rate {:.3} reference {:.3} |diff| {:.3}", labels[i], ours[i], reference[i], dev);
            if dev > 0.055 + 1e-12 {
                failures.push(format!("{design} p={p} {}", labels[i]));
            }
        }
        sum_i += (ours[0] - 0.95).abs() + (ours[1] - 0.95).abs();
        sum_ii += (ours[2] - 0.95).abs() + (ours[3] - 0.95).abs();
    }
    let cells = (runs.len() * 2) as f64;
    let (mad_i, mad_ii) = (sum_i / cells, sum_ii / cells);
    eprintln!("  mean |rate - 0.95|: region I {mad_i:.4}, region II {mad_ii:.4}");
    let directional = mad_ii <= mad_i + 0.01;
    eprintln!("  region II at least as close to nominal as region I (within 0.01): {directional}");
    let pass = failures.is_empty() && directional;
    outcome(
        pass,
        format!("48 cells, worst |diff| {worst:.3} (tol 0.055), {} outside; region II vs I deviation {mad_ii:.4} vs {mad_i:.4}", failures.len()),
    )
}

fn criterion2() -> Outcome {
    let random = SimConfig {
        regions: vec![RegionSpec::two_sided(0.05)],
        folds: vec![3],
        ..SimConfig::new(Design::Random, 20)
    };
    let cluster = SimConfig {
        regions: vec![RegionSpec::s_sparse(5, 1, Tail::Upper, 0.05)],
        folds: vec![3],
        ..SimConfig::new(Design::Cluster, 20)
    };
    let rate = |cfg: &SimConfig| {
        let flags = replication_flags(cfg).expect("cross-fit replications");
        summarize(cfg, &flags, 0.0).cells[0].rate
    };
    let r1 = rate(&random);
    let r2 = rate(&cluster);
    let pass = (r1 - 0.945).abs() <= 0.055 + 1e-12 && (r2 - 0.951).abs() <= 0.06 + 1e-12;
    outcome(
        pass,
        format!("random p=20 K=3 region II: {r1:.3} (0.945 +- 0.055); cluster p=20 K=3 S=5 region I: {r2:.3} (0.951 +- 0.06)"),
    )
}

fn criterion3(runs: &[Table1Run]) -> Outcome {
    let compared: usize = runs.iter().map(|r| r.flags_compared).sum();
    let mismatches: usize = runs.iter().map(|r| r.mismatches).sum();
    outcome(mismatches == 0, format!("{compared} replication-level decisions compared, {mismatches} differ"))
}

/// Gaussian elimination with partial pivoting on the normal equations.
fn normal_equations(y: &Array1<f64>, x: &Array2<f64>) -> Vec<f64> {
    let q = x.ncols();
    let mut a = vec![vec![0.0; q + 1]; q];
    for r in 0..q {
        for c in 0..q {
            a[r][c] = x.column(r).dot(&x.column(c));
        }
        a[r][q] = x.column(r).dot(y);
    }
    for col in 0..q {
        let piv = (col..q).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..q {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=q {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..q).map(|r| a[r][q] / a[r][r]).collect()
}

fn criterion4() -> Outcome {
    let cfg = TestConfig {
        inference: InferenceConfig {
            solver: NuisanceSolver::Ols,
            ..Default::default()
        },
        bootstrap_b: 100,
        seed: 0,
    };
    let mut matched = 0;
    let mut worst: f64 = 0.0;
    for instance in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + instance);
        let model = generate_model(Design::Random, 5, &mut rng).unwrap();
        let data = sample_mvn(&model, 100, &mut rng).unwrap();
        let edges: Vec<Edge> = (0..5).flat_map(|j| (0..j).map(move |k| Edge::new(j, k).unwrap())).collect();
        let set = EdgeSet::new(edges.clone(), 5).unwrap();
        let report = test_edges(&data, &set, &cfg, &[RegionSpec::rectangle(0.05)]).unwrap();
        let mut ok = true;
        for (e, r) in edges.iter().zip(&report.edges) {
            let others: Vec<usize> = (0..5).filter(|&c| c != e.j()).collect();
            let x = data.matrix().select(Axis(1), &others);
            let beta = normal_equations(&data.column(e.j()).to_owned(), &x);
            let oracle = beta[others.iter().position(|&c| c == e.k()).unwrap()];
            let dev = (r.theta_hat - oracle).abs();
            worst = worst.max(dev);
            ok &= dev <= 1e-8;
        }
        matched += usize::from(ok);
    }
    outcome(matched == 50, format!("{matched}/50 instances within 1e-8 of the full-regression coefficient (worst {worst:.2e})"))
}

/// Columns rescaled and orthogonalized so that `ΨᵀΨ/n = I` exactly.
fn orthonormal_scores(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    for c in 0..d {
        for prev in 0..c {
            let proj = m.column(c).dot(&m.column(prev)) / n as f64;
            let p = m.column(prev).to_owned();
            m.column_mut(c).scaled_add(-proj, &p);
        }
        let norm = (m.column(c).dot(&m.column(c)) / n as f64).sqrt();
        m.column_mut(c).mapv_inplace(|v| v / norm);
    }
    m
}

fn criterion5() -> Outcome {
    let psi1 = orthonormal_scores(500, 1, 1);
    let c1 = bootstrap_sup(psi1.view(), &[0.05], 5000, &mut ChaCha8Rng::seed_from_u64(11)).unwrap()[0];
    let psi10 = orthonormal_scores(2000, 10, 2);
    let c10 = bootstrap_sup(psi10.view(), &[0.05], 5000, &mut ChaCha8Rng::seed_from_u64(12)).unwrap()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut sups: Vec<f64> = (0..1_000_000)
        .map(|_| (0..10).fold(0.0f64, |m, _| m.max(rng.sample::<f64, _>(StandardNormal).abs())))
        .collect();
    sups.sort_by(f64::total_cmp);
    let oracle = sups[(0.95 * sups.len() as f64).ceil() as usize - 1];
    let pass = (1.86..=2.06).contains(&c1) && (c10 - oracle).abs() <= 0.1;
    outcome(pass, format!("d=1: c = {c1:.4} in [1.86, 2.06]; d=10: c = {c10:.4}, Monte Carlo oracle {oracle:.4} (tol 0.1)"))
}

/// `n × q` matrix of ±1 Walsh columns, so `XᵀX/n = I`.
fn walsh(n: usize, q: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, q), |(i, j)| if (i & (j + 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
}

fn criterion6() -> Outcome {
    let mut fits = 0;
    let mut converged = 0;
    let mut worst: f64 = 0.0;
    for &(design, p) in TABLE_ROWS.iter() {
        let cfg = SimConfig::new(design, p);
        let edges = null_edge_set(design, p).unwrap();
        let penalty = PenaltyConfig {
            d_total: edges.len(),
            p_total: Some(p),
            ..Default::default()
        };
        for rep in 0..10 {
            let (_, data) = replication_data(&cfg, rep).unwrap();
            let mut regressions: Vec<(usize, Option<usize>)> = Vec::new();
            for e in edges.edges() {
                regressions.push((e.j(), None));
                regressions.push((e.k(), Some(e.j())));
            }
            regressions.sort_unstable();
            regressions.dedup();
            for (response, excluded) in regressions {
                let cols: Vec<usize> = (0..p).filter(|&c| c != response && Some(c) != excluded).collect();
                let x = data.matrix().select(Axis(1), &cols);
                let y = data.column(response);
                let fit = lasso_with_loadings(y, x.view(), &penalty, &SolverOptions::default()).unwrap();
                fits += 1;
                if fit.converged {
                    converged += 1;
                    worst = worst.max(kkt_violation(y, x.view(), &fit));
                }
            }
        }
    }
    let kkt_ok = worst <= 1e-7;

    // Orthonormal design: soft-thresholding of the raw inner products.
    let n = 64;
    let x = walsh(n, 6);
    let beta = array![2.0, -1.5, 0.3, 0.0, -0.05, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let y: Array1<f64> = x.dot(&beta) + Array1::from_shape_fn(n, |_| 0.2 * rng.sample::<f64, _>(StandardNormal));
    let lambda = 12.0;
    let tight = SolverOptions {
        tol: 1e-12,
        ..Default::default()
    };
    let fit = weighted_lasso(y.view(), x.view(), lambda, Array1::ones(6).view(), &tight).unwrap();
    let mut st_worst: f64 = 0.0;
    for j in 0..6 {
        let z = x.column(j).dot(&y) / n as f64;
        let t = lambda / n as f64;
        let oracle = z.signum() * (z.abs() - t).max(0.0);
        st_worst = st_worst.max((fit.coefficients[j] - oracle).abs());
    }
    let post = post_lasso(y.view(), x.view(), &fit.support).unwrap();
    let post_ok = fit.support.iter().all(|&j| (post.coefficients[j] - x.column(j).dot(&y) / n as f64).abs() <= 1e-8);
    let pass = kkt_ok && st_worst <= 1e-8 && post_ok;
    outcome(
        pass,
        format!("{converged}/{fits} grid fits converged, worst KKT violation {worst:.2e} (tol 1e-7); soft-threshold error {st_worst:.2e} (tol 1e-8)"),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn criterion7() -> Outcome {
    let p = 50;
    let sizes = [100, 400, 1600];
    let mut med_lasso = Vec::new();
    let mut med_post = Vec::new();
    for &n in &sizes {
        let mut err_l = Vec::new();
        let mut err_p = Vec::new();
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
            let model = generate_model(Design::Random, p, &mut rng).unwrap();
            // Response: the variable with the most neighbours.
            let j = (0..p).max_by_key(|&v| (0..p).filter(|&u| u != v && model.adjacency.get(v, u) != 0.0).count()).unwrap();
            let mut data_rng = ChaCha8Rng::seed_from_u64(900 + seed * 7 + n as u64);
            let data = sample_mvn(&model, n, &mut data_rng).unwrap();
            let cols: Vec<usize> = (0..p).filter(|&c| c != j).collect();
            let x = data.matrix().select(Axis(1), &cols);
            let y = data.column(j);
            let truth: Array1<f64> = cols.iter().map(|&c| model.regression_coefficient(j, c)).collect();
            let penalty = PenaltyConfig {
                p_total: Some(p),
                ..Default::default()
            };
            let fit = lasso_with_loadings(y, x.view(), &penalty, &SolverOptions::default()).unwrap();
            let post = post_lasso(y, x.view(), &fit.support).unwrap();
            let dist = |b: &Array1<f64>| (b - &truth).mapv(|v| v * v).sum().sqrt();
            err_l.push(dist(&fit.coefficients));
            err_p.push(dist(&post.coefficients));
        }
        med_lasso.push(median(err_l));
        med_post.push(median(err_p));
    }
    let decreasing = |m: &[f64]| m.windows(2).all(|w| w[1] < w[0]);
    let pass = decreasing(&med_lasso) && decreasing(&med_post);
    outcome(
        pass,
        format!(
            "median error at n = 100/400/1600: lasso {:.4}/{:.4}/{:.4}, post-lasso {:.4}/{:.4}/{:.4}",
            med_lasso[0], med_lasso[1], med_lasso[2], med_post[0], med_post[1], med_post[2]
        ),
    )
}

fn criterion8() -> Outcome {
    let adj = Adjacency::new(SymMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap()).unwrap();
    let m = build_precision(&adj, 0.3, 0.1).unwrap();
    let sigma = [[1.0, -0.6], [-0.6, 1.0]];
    let phi = [[1.5625, 0.9375], [0.9375, 1.5625]];
    let mut exchange: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            exchange = exchange.max((m.sigma.get(i, j) - sigma[i][j]).abs()).max((m.phi.get(i, j) - phi[i][j]).abs());
        }
    }
    let mut inv_worst: f64 = 0.0;
    let mut diag_worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let design = Design::ALL[(seed % 4) as usize];
        let p = [20, 40, 30, 12][(seed % 4) as usize];
        let model = generate_model(design, p, &mut rng).unwrap();
        let prod = model.phi.view().dot(&model.sigma.view());
        for i in 0..p {
            diag_worst = diag_worst.max((model.sigma.get(i, i) - 1.0).abs());
            for j in 0..p {
                let target = if i == j { 1.0 } else { 0.0 };
                inv_worst = inv_worst.max((prod[[i, j]] - target).abs());
            }
        }
    }
    let id = identity_graph(5).unwrap();
    let id_ok = (0..5).all(|i| (0..5).all(|j| id.sigma.get(i, j) == if i == j { 1.0 } else { 0.0 }));
    let pass = exchange <= 1e-9 && inv_worst <= 1e-8 && diag_worst <= 1e-10 && id_ok;
    outcome(
        pass,
        format!("exchange pair error {exchange:.2e} (tol 1e-9); max |Phi Sigma - I| {inv_worst:.2e} (tol 1e-8); max |diag Sigma - 1| {diag_worst:.2e} (tol 1e-10)"),
    )
}

fn sparse_direction(len: usize, nonzero: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let mut v = Array1::zeros(len);
    for _ in 0..nonzero {
        let i = rng.random_range(0..len);
        v[i] = rng.sample::<f64, _>(StandardNormal);
    }
    v
}

fn criterion9() -> Outcome {
    let (p, n) = (20, 2000);
    let model = identity_graph(p).unwrap();
    let edge = Edge::new(p - 1, 0).unwrap();
    let cfg = InferenceConfig::default();
    let mut wins = 0;
    let mut ratios = Vec::new();
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
        let data = sample_mvn(&model, n, &mut rng).unwrap();
        let eta = fit_nuisance(&data, edge, &cfg).unwrap();
        let delta = NuisancePair {
            eta1: sparse_direction(p - 2, 3, &mut rng),
            eta2: sparse_direction(p - 2, 3, &mut rng),
            theta_init: 0.0,
        };
        let s = orthogonality_sensitivity(data.matrix(), edge, &eta, &delta, 1e-4).unwrap();
        ratios.push(s.ratio());
        if s.non_orthogonal >= 5.0 * s.orthogonal {
            wins += 1;
        }
    }
    outcome(
        wins >= 45,
        format!("orthogonal score at least 5x less sensitive in {wins}/50 seeds (need 45); median ratio {:.3}", median(ratios)),
    )
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    eprintln!("running Table 1 grid (12 rows x 2 solvers x 4 regions, l=200, B=300)");
    let runs = run_table1();
    results.push((1, "Table 1 reproduction at desk scale", criterion1(&runs)));
    results.push((2, "cross-fit spot checks", criterion2()));
    results.push((3, "S=1, exp=1 decisions equal rectangle decisions", criterion3(&runs)));
    results.push((4, "OLS nuisance equals full regression", criterion4()));
    results.push((5, "bootstrap calibration", criterion5()));
    results.push((6, "lasso certificates", criterion6()));
    results.push((7, "estimation error decreases with n", criterion7()));
    results.push((8, "generator oracles", criterion8()));
    results.push((9, "orthogonality diagnostic", criterion9()));

    println!();
    for (i, name, o) in &results {
        println!("criterion {i} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.summary);
    }
    let failed = results.iter().filter(|(_, _, o)| !o.pass).count();
    println!("{} of {} criteria passed ({:.0}s)", results.len() - failed, results.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
