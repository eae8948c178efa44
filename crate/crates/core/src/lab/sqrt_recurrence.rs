use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{echo, Check, Context, ExperimentKind, ExperimentReport, Table};
use crate::arith::{self, rat, serde_rat, Rational};
use crate::bohr::{sqrt_set_enumerate, BohrHammingBall, Frequency, IntSet};
use crate::error::{LabError, Result};
use crate::harmonic::RationalGrid;
use crate::irrational::Surd;
use crate::torus::{ApproxHammingBall, TorusPoint};
use crate::weyl::{min_triple_intersection, FiniteSystem};

pub type SystemSpec = FiniteSystem;

/// The set `A` on the grid of the model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Whole,
    /// Each grid point independently with probability `density` (seeded).
    Random {
        #[serde(with = "serde_rat")]
        density: Rational,
    },
    /// `{ z : z_0 < fraction * q }`.
    Interval {
        #[serde(with = "serde_rat")]
        fraction: Rational,
    },
}

impl SetSpec {
    pub fn build(&self, sys: &FiniteSystem, seed: u64) -> Result<RationalGrid> {
        let q = sys.modulus() as usize;
        let d = sys.grid_dim();
        match self {
            SetSpec::Whole => RationalGrid::indicator(d, q, |_| true),
            SetSpec::Random { density } => {
                if density.is_negative() || *density > Rational::one() {
                    return Err(LabError::InvalidInput("density outside [0, 1]".into()));
                }
                let p = arith::to_f64(density);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let size = q.checked_pow(d as u32).ok_or_else(|| LabError::InvalidInput("grid too large".into()))?;
                let bits: Vec<bool> = (0..size).map(|_| rng.random_bool(p)).collect();
                let mut i = 0;
                RationalGrid::indicator(d, q, |_| {
                    i += 1;
                    bits[i - 1]
                })
            }
            SetSpec::Interval { fraction } => {
                let f = fraction.clone();
                RationalGrid::indicator(d, q, |z| {
                    Rational::from_integer((z[0] as i64).into()) < &f * Rational::from_integer((q as i64).into())
                })
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SqrtRecurrenceParams {
    pub system: SystemSpec,
    pub set: SetSpec,
    /// Required lower bound on `mu(A)`.
    #[serde(with = "serde_rat")]
    pub delta: Rational,
    pub beta: Vec<Surd>,
    /// Denominator budget for irrational `beta`.
    pub max_q: u64,
    pub center: Option<TorusPoint>,
    pub k: usize,
    #[serde(with = "serde_rat")]
    pub eps: Rational,
    pub n_max: u64,
}

impl Default for SqrtRecurrenceParams {
    fn default() -> Self {
        SqrtRecurrenceParams {
            system: FiniteSystem::Rotation { q: 101, shift: vec![7] },
            set: SetSpec::Random { density: rat(2, 5) },
            delta: rat(3, 10),
            beta: vec![Surd::sqrt(2), Surd::sqrt(3)],
            max_q: 10_007,
            center: None,
            k: 1,
            eps: rat(1, 10),
            n_max: 2000,
        }
    }
}

/// Exact rational point when every entry is rational, else convergents.
pub(crate) fn frequency_of(beta: &[Surd], max_q: u64) -> Result<Frequency> {
    if beta.iter().all(Surd::is_rational) {
        let p = TorusPoint::new(beta.iter().map(|s| s.rational_part()).collect())?;
        Frequency::from_point(&p, false)
    } else {
        Frequency::from_surds(beta, max_q)
    }
}

/// Triple-intersection scan of `A` along `set`; pushes the positivity check.
pub(crate) fn recurrence_scan(
    label: &str,
    sys: &FiniteSystem,
    a: &RationalGrid,
    set: &IntSet,
    n_max: u64,
    report: &mut ExperimentReport,
    ctx: &Context,
) -> Result<()> {
    let scan = match min_triple_intersection(sys, a, set, n_max, ctx.strategy) {
        Ok(s) => s,
        Err(LabError::EmptyDomain(msg)) => {
            report
                .checks
                .push(Check::holds(format!("{label}: set meets [1, N]"), false, false, msg));
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    let best = arith::to_f64(&scan.best);
    report.checks.push(
        Check::holds(
            format!("{label}: some n has mu(A & T^-n A & T^-2n A) > 0"),
            true,
            scan.best.is_positive(),
            format!("n = {}, value = {}", scan.best_n, arith::format_rational(&scan.best)),
        ),
    );
    let period = sys.period();
    let moving: Vec<i64> = set.elems.iter().copied().filter(|&n| n as u64 % period != 0).collect();
    match min_triple_intersection(sys, a, &IntSet::new(set.horizon, moving), n_max, ctx.strategy) {
        Ok(m) => {
            report.checks.push(Check::holds(
                format!("{label}: some n with T^n != id has mu(A & T^-n A & T^-2n A) > 0"),
                true,
                m.best.is_positive(),
                format!("n = {}, value = {}", m.best_n, arith::format_rational(&m.best)),
            ));
            report.metric(&format!("{label}_best_moving"), arith::to_f64(&m.best));
            report.metric(&format!("{label}_best_moving_n"), m.best_n);
        }
        Err(LabError::EmptyDomain(_)) => report.checks.push(Check::holds(
            format!("{label}: set has n in [1, N] with T^n != id"),
            false,
            false,
            format!("every element is a multiple of the period {period}"),
        )),
        Err(e) => return Err(e),
    }
    let mut t = Table::new(&["set", "count", "best_n", "best", "worst_n", "worst", "mean"]);
    t.push(vec![
        label.to_string(),
        scan.count.to_string(),
        scan.best_n.to_string(),
        arith::format_rational(&scan.best),
        scan.worst_n.to_string(),
        arith::format_rational(&scan.worst),
        arith::format_rational(&scan.mean),
    ]);
    report.tables.insert(format!("{label}_intersections"), t);
    report.metric(&format!("{label}_best"), best);
    report.metric(&format!("{label}_worst"), arith::to_f64(&scan.worst));
    report.metric(&format!("{label}_mean_empirical"), arith::to_f64(&scan.mean));
    report.metric(&format!("{label}_count"), scan.count);
    Ok(())
}

pub fn exp_sqrt_recurrence(p: &SqrtRecurrenceParams, ctx: &Context) -> Result<ExperimentReport> {
    let sys = match &p.system {
        FiniteSystem::Rotation { q, shift } => FiniteSystem::rotation(*q, shift.clone())?,
        FiniteSystem::Weyl { q, alpha } => FiniteSystem::weyl(*q, alpha.clone())?,
    };
    let mut report = ExperimentReport::new(ExperimentKind::SqrtRecurrence, echo(ExperimentKind::SqrtRecurrence, p));
    let a = p.set.build(&sys, ctx.seed)?;
    let mu = a.mean();
    report.metric("measure_A", arith::format_rational(&mu));
    if mu <= p.delta {
        return Err(LabError::Precondition(format!(
            "mu(A) = {} does not exceed delta = {}",
            arith::format_rational(&mu),
            arith::format_rational(&p.delta)
        )));
    }
    if p.beta.is_empty() {
        return Err(LabError::InvalidInput("beta must be nonempty".into()));
    }
    let freq = frequency_of(&p.beta, p.max_q).map_err(LabError::at_stage("frequency"))?;
    let r = freq.dim();
    let center = p.center.clone().unwrap_or_else(|| TorusPoint::zero(r));
    let ball = ApproxHammingBall::new(center, p.k, p.eps.clone()).map_err(LabError::at_stage("ball"))?;
    report.metric("ball_measure", arith::to_f64(&ball.measure()));
    report.metric("beta", format!("{:?}", freq.point()));
    let bh = BohrHammingBall::new(freq, ball)?;
    report.metric("proper", bh.is_proper());
    let roots = sqrt_set_enumerate(&bh, p.n_max, ctx.strategy).map_err(LabError::at_stage("enumerate"))?;
    report.metric("sqrt_bh_count", roots.set.len());
    report.metric("sqrt_bh_density", roots.density);
    recurrence_scan("sqrt_bh", &sys, &a, &roots.set, p.n_max, &mut report, ctx)?;
    if matches!(p.set, SetSpec::Whole) && !roots.set.is_empty() {
        let one = report.metrics.get("sqrt_bh_worst").and_then(|v| v.as_f64()) == Some(1.0);
        report
            .checks
            .push(Check::holds("whole space: every intersection is 1", true, one, ""));
    }
    if mu.is_zero() {
        report.notes.push("A is empty".into());
    }
    report
        .notes
        .push("the mean over sqrt(BH) is an empirical stand-in for c(delta)/2, not the constant itself".into());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::super::Outcome;
    use super::*;
    use crate::Strategy;

    fn ctx() -> Context<'static> {
        Context {
            seed: 11,
            strategy: Strategy::Sequential,
            output: None,
        }
    }

    #[test]
    fn rotation_model_positive() {
        let mut rep = exp_sqrt_recurrence(&SqrtRecurrenceParams::default(), &ctx()).unwrap();
        rep.settle();
        assert_eq!(rep.outcome, Outcome::Pass, "{:?}", rep.checks);
    }

    #[test]
    fn whole_space_and_precondition() {
        let p = SqrtRecurrenceParams {
            set: SetSpec::Whole,
            ..Default::default()
        };
        let mut rep = exp_sqrt_recurrence(&p, &ctx()).unwrap();
        rep.settle();
        assert_eq!(rep.outcome, Outcome::Pass);
        let p = SqrtRecurrenceParams {
            set: SetSpec::Interval { fraction: rat(1, 5) },
            ..Default::default()
        };
        assert!(matches!(exp_sqrt_recurrence(&p, &ctx()), Err(LabError::Precondition(_))));
    }

    #[test]
    fn weyl_model_positive() {
        let p = SqrtRecurrenceParams {
            system: FiniteSystem::Weyl { q: 23, alpha: vec![5] },
            set: SetSpec::Random { density: rat(1, 2) },
            ..Default::default()
        };
        let mut rep = exp_sqrt_recurrence(&p, &ctx()).unwrap();
        rep.settle();
        assert_eq!(rep.outcome, Outcome::Pass, "{:?}", rep.checks);
    }
}
