use std::fmt;

use serde::{Deserialize, Serialize};

use super::bootstrap::{empirical_quantile, sorted, BootstrapDraws};
use super::estimate::EdgeStat;
use crate::error::{Error, Result};

/// Which side(s) of the bootstrap sup distribution reject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tail {
    /// Reject above the `1 − α` quantile.
    Upper,
    /// Reject below the `α/2` or above the `1 − α/2` quantile.
    EqualTailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegionKind {
    /// `sup_r |t_r| > c_{1−α}`, with simultaneous intervals.
    Rectangle,
    /// `sup_r |t_r|` outside `[c_{α/2}, c_{1−α/2}]`.
    TwoSidedSup,
    /// `sup_r |t*_r|` with `t*_r = Σ_{s=1..S} t_{r−s}^{exp}` (indices circular).
    SSparse { s: usize, exp: u32, tail: Tail },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    #[serde(flatten)]
    pub kind: RegionKind,
    pub alpha: f64,
}

/// The statistic a set of critical values was computed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Statistic {
    Plain,
    Sparse { s: usize, exp: u32 },
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statistic::Plain => f.write_str("sup |t|"),
            Statistic::Sparse { s, exp } => write!(f, "sup |t*| with S = {s}, exp = {exp}"),
        }
    }
}

impl RegionSpec {
    pub fn rectangle(alpha: f64) -> Self {
        RegionSpec { kind: RegionKind::Rectangle, alpha }
    }

    pub fn two_sided(alpha: f64) -> Self {
        RegionSpec { kind: RegionKind::TwoSidedSup, alpha }
    }

    pub fn s_sparse(s: usize, exp: u32, tail: Tail, alpha: f64) -> Self {
        RegionSpec {
            kind: RegionKind::SSparse { s, exp, tail },
            alpha,
        }
    }

    pub fn statistic(&self) -> Statistic {
        match self.kind {
            RegionKind::Rectangle | RegionKind::TwoSidedSup => Statistic::Plain,
            RegionKind::SSparse { s, exp, .. } => Statistic::Sparse { s, exp },
        }
    }

    pub fn tail(&self) -> Tail {
        match self.kind {
            RegionKind::Rectangle => Tail::Upper,
            RegionKind::TwoSidedSup => Tail::EqualTailed,
            RegionKind::SSparse { tail, .. } => tail,
        }
    }

    /// `1` for upper-tail regions, `2` for equal-tailed ones.
    pub fn region_number(&self) -> u8 {
        match self.tail() {
            Tail::Upper => 1,
            Tail::EqualTailed => 2,
        }
    }

    pub fn s(&self) -> usize {
        match self.kind {
            RegionKind::SSparse { s, .. } => s,
            _ => 1,
        }
    }

    pub fn exp(&self) -> u32 {
        match self.kind {
            RegionKind::SSparse { exp, .. } => exp,
            _ => 1,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::OutOfRange(self.alpha));
        }
        if let RegionKind::SSparse { s, exp, .. } = self.kind {
            if s == 0 || s > d {
                return Err(Error::InvalidConfig(format!("S = {s} must lie in 1..={d}")));
            }
            if exp != 1 && exp != 2 {
                return Err(Error::InvalidConfig(format!("exp must be 1 or 2, got {exp}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for RegionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            RegionKind::Rectangle => write!(f, "rectangle (alpha = {})", self.alpha),
            RegionKind::TwoSidedSup => write!(f, "two-sided sup (alpha = {})", self.alpha),
            RegionKind::SSparse { s, exp, tail } => {
                let t = if tail == Tail::Upper { "upper" } else { "equal-tailed" };
                write!(f, "s-sparse S = {s}, exp = {exp}, {t} (alpha = {})", self.alpha)
            }
        }
    }
}

/// `v*_r = Σ_{s=1..S} v_{(r−s) mod d}^{exp}`.
pub fn sparse_sum(values: &[f64], s: usize, exp: u32) -> Vec<f64> {
    let d = values.len();
    (0..d)
        .map(|r| {
            (1..=s)
                .map(|lag| {
                    let v = values[(r + d * s - lag) % d];
                    if exp == 1 {
                        v
                    } else {
                        v.powi(exp as i32)
                    }
                })
                .sum()
        })
        .collect()
}

fn sup_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn reduce(values: &[f64], statistic: Statistic) -> f64 {
    match statistic {
        Statistic::Plain => sup_abs(values),
        Statistic::Sparse { s, exp } => sup_abs(&sparse_sum(values, s, exp)),
    }
}

/// Bootstrap quantiles of one sup statistic at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criticals {
    pub statistic: Statistic,
    pub alpha: f64,
    /// `α/2` quantile.
    pub lower: f64,
    /// `1 − α/2` quantile.
    pub upper_half: f64,
    /// `1 − α` quantile.
    pub upper: f64,
}

pub fn critical_values(draws: &BootstrapDraws, spec: &RegionSpec) -> Result<Criticals> {
    spec.validate(draws.d())?;
    let statistic = spec.statistic();
    let sups = match statistic {
        Statistic::Plain => draws.sup_abs(),
        _ => draws
            .draws()
            .rows()
            .into_iter()
            .map(|row| reduce(row.as_slice().expect("bootstrap draws are row-major"), statistic))
            .collect(),
    };
    let sups = sorted(sups);
    let a = spec.alpha;
    Ok(Criticals {
        statistic,
        alpha: a,
        lower: empirical_quantile(&sups, a / 2.0)?,
        upper_half: empirical_quantile(&sups, 1.0 - a / 2.0)?,
        upper: empirical_quantile(&sups, 1.0 - a)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDecision {
    pub region: RegionSpec,
    /// Observed sup statistic.
    pub statistic: f64,
    pub criticals: Criticals,
    pub reject: bool,
    /// `θ̂_r ± c_{1−α}·σ̂_r/√n`, rectangle regions only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<[f64; 2]>>,
}

pub fn region_decide(stats: &[EdgeStat], n: usize, spec: &RegionSpec, criticals: &Criticals) -> Result<RegionDecision> {
    spec.validate(stats.len())?;
    if criticals.statistic != spec.statistic() || criticals.alpha != spec.alpha {
        return Err(Error::SpecMismatch {
            built: format!("{} at alpha = {}", criticals.statistic, criticals.alpha),
            wanted: format!("{} at alpha = {}", spec.statistic(), spec.alpha),
        });
    }
    let t: Vec<f64> = stats.iter().map(|s| s.t_stat(n)).collect();
    let statistic = reduce(&t, spec.statistic());
    let reject = match spec.tail() {
        Tail::Upper => statistic > criticals.upper,
        Tail::EqualTailed => statistic < criticals.lower || statistic > criticals.upper_half,
    };
    let intervals = (spec.kind == RegionKind::Rectangle).then(|| {
        let root_n = (n as f64).sqrt();
        stats
            .iter()
            .map(|s| {
                let half = criticals.upper * s.sigma_hat / root_n;
                [s.theta_hat - half, s.theta_hat + half]
            })
            .collect()
    });
    Ok(RegionDecision {
        region: *spec,
        statistic,
        criticals: *criticals,
        reject,
        intervals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{multiplier_bootstrap, Edge};
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn circular_index_rule() {
        let t = [1.0, 10.0, 100.0];
        // One-based: t*_1 = t_3 + t_2, t*_2 = t_1 + t_3, t*_3 = t_2 + t_1.
        assert_eq!(sparse_sum(&t, 2, 1), vec![110.0, 101.0, 11.0]);
        assert_eq!(sparse_sum(&t, 1, 1), vec![100.0, 1.0, 10.0]);
        assert_eq!(sparse_sum(&t, 3, 2), vec![10101.0; 3]);
    }

    #[test]
    fn validation() {
        assert!(RegionSpec::rectangle(0.0).validate(3).is_err());
        assert!(RegionSpec::s_sparse(4, 1, Tail::Upper, 0.05).validate(3).is_err());
        assert!(RegionSpec::s_sparse(2, 3, Tail::Upper, 0.05).validate(3).is_err());
        assert!(RegionSpec::s_sparse(3, 2, Tail::EqualTailed, 0.05).validate(3).is_ok());
    }

    fn stats_from(t: &[f64], sigma: &[f64], n: usize) -> Vec<EdgeStat> {
        t.iter()
            .zip(sigma)
            .enumerate()
            .map(|(r, (&t, &s))| EdgeStat {
                edge: Edge::new(r + 1, 0).unwrap(),
                theta_hat: t * s / (n as f64).sqrt(),
                jacobian_hat: -1.0,
                sigma_hat: s,
                psi_std: ndarray::Array1::zeros(1),
                theta_init: 0.0,
            })
            .collect()
    }

    fn crit(statistic: Statistic, lower: f64, upper_half: f64, upper: f64) -> Criticals {
        Criticals {
            statistic,
            alpha: 0.05,
            lower,
            upper_half,
            upper,
        }
    }

    #[test]
    fn rules_per_region() {
        let st = stats_from(&[0.5, -2.5], &[1.0, 2.0], 100);
        let rect = region_decide(&st, 100, &RegionSpec::rectangle(0.05), &crit(Statistic::Plain, 1.0, 2.8, 2.4)).unwrap();
        assert!(rect.reject);
        assert!((rect.statistic - 2.5).abs() < 1e-12);
        let iv = rect.intervals.unwrap();
        assert!(iv[1][1] < 0.0 && iv[0][0] < 0.0 && iv[0][1] > 0.0);
        let two = region_decide(&st, 100, &RegionSpec::two_sided(0.05), &crit(Statistic::Plain, 1.0, 2.8, 2.4)).unwrap();
        assert!(!two.reject && two.intervals.is_none());
        let low = region_decide(&st, 100, &RegionSpec::two_sided(0.05), &crit(Statistic::Plain, 2.6, 2.8, 2.4)).unwrap();
        assert!(low.reject);
    }

    #[test]
    fn mismatched_criticals_rejected() {
        let st = stats_from(&[0.5, -2.5], &[1.0, 1.0], 100);
        let c = crit(Statistic::Plain, 1.0, 2.8, 2.4);
        let err = region_decide(&st, 100, &RegionSpec::s_sparse(2, 1, Tail::Upper, 0.05), &c).unwrap_err();
        assert!(matches!(err, Error::SpecMismatch { .. }));
        let err = region_decide(&st, 100, &RegionSpec::rectangle(0.1), &c).unwrap_err();
        assert!(matches!(err, Error::SpecMismatch { .. }));
    }

    #[test]
    fn quantiles_are_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = Array2::from_shape_fn((60, 5), |_| rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal));
        let draws = multiplier_bootstrap(psi.view(), 400, &mut rng).unwrap();
        for spec in [RegionSpec::rectangle(0.05), RegionSpec::s_sparse(3, 2, Tail::Upper, 0.1)] {
            let c = critical_values(&draws, &spec).unwrap();
            assert!(c.lower <= c.upper && c.upper <= c.upper_half);
        }
    }

    proptest! {
        #[test]
        fn rectangle_decision_matches_intervals(
            t in proptest::collection::vec(-4.0f64..4.0, 1..12),
            c in 0.5f64..3.5,
        ) {
            let sigma: Vec<f64> = t.iter().enumerate().map(|(i, _)| 0.5 + i as f64 * 0.25).collect();
            let st = stats_from(&t, &sigma, 200);
            let dec = region_decide(&st, 200, &RegionSpec::rectangle(0.05), &crit(Statistic::Plain, 0.0, c + 1.0, c)).unwrap();
            let excludes = dec.intervals.unwrap().iter().any(|iv| iv[0] > 0.0 || iv[1] < 0.0);
            prop_assert_eq!(dec.reject, excludes);
        }

        #[test]
        fn unit_sparse_statistic_equals_plain(t in proptest::collection::vec(-5.0f64..5.0, 1..20)) {
            prop_assert_eq!(reduce(&t, Statistic::Sparse { s: 1, exp: 1 }), reduce(&t, Statistic::Plain));
        }
    }
}
