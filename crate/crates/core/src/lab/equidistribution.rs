use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::{echo, Check, Context, ExperimentKind, ExperimentReport, Table};
use crate::arith::{self, Rational};
use crate::cyclotomic::QCyclo;
use crate::error::{LabError, Result};
use crate::irrational::{best_convergent, Surd};
use crate::weyl::{ladder, running_average};

/// Largest period summed exactly for characters where Kronecker's criterion fails.
const PERIOD_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquidistributionParams {
    pub alpha: Vec<Surd>,
    pub beta: Vec<Surd>,
    pub max_q: u64,
    pub n_max: u64,
    pub ladder_points: usize,
    pub characters: Vec<Vec<i64>>,
    /// Required `|average|` at `n_max` for equidistributed characters.
    pub tolerance: f64,
}

impl Default for EquidistributionParams {
    fn default() -> Self {
        EquidistributionParams {
            alpha: vec![Surd::int(0)],
            beta: vec![Surd::sqrt(2)],
            max_q: 1_000_000_000,
            n_max: 1_000_000,
            ladder_points: 12,
            characters: vec![vec![0], vec![1], vec![2], vec![3]],
            tolerance: 0.02,
        }
    }
}

/// A coordinate `num / den` of the model.
#[derive(Debug, Clone, Copy)]
struct Coord {
    num: u64,
    den: u64,
}

fn model_coord(s: &Surd, max_q: u64) -> Result<Coord> {
    let r = if s.is_rational() {
        arith::frac(&s.rational_part())
    } else {
        best_convergent(s, max_q)?
    };
    match (r.numer().to_u64(), r.denom().to_u64()) {
        (Some(num), Some(den)) if den <= arith::MAX_MODULUS => Ok(Coord { num, den }),
        _ => Err(LabError::InvalidInput(format!(
            "coordinate {} has too large a denominator",
            arith::format_rational(&r)
        ))),
    }
}

/// `frac(m . (n alpha + n^2 beta))` in double precision, each coordinate
/// reduced exactly first.
fn phase(m: &[i64], alpha: &[Coord], beta: &[Coord], n: u64) -> f64 {
    let mut acc = 0.0f64;
    for (i, &mi) in m.iter().enumerate() {
        if mi == 0 {
            continue;
        }
        let a = alpha[i];
        let b = beta[i];
        let na = (n as u128 % a.den as u128) * a.num as u128 % a.den as u128;
        let nb = n as u128 % b.den as u128;
        let n2b = nb * nb % b.den as u128 * b.num as u128 % b.den as u128;
        let ma = (mi as i128).rem_euclid(a.den as i128) as u128 * na % a.den as u128;
        let mb = (mi as i128).rem_euclid(b.den as i128) as u128 * n2b % b.den as u128;
        acc += ma as f64 / a.den as f64 + mb as f64 / b.den as f64;
        acc -= acc.floor();
    }
    acc
}

fn dot(m: &[i64], v: &[Surd]) -> Surd {
    m.iter()
        .zip(v)
        .fold(Surd::int(0), |acc, (&mi, s)| acc.add(&s.scale_int(mi)))
}

/// Exact limit `(1/P) sum_{n < P} e(n l + n^2 u)` for rational `l`, `u`.
fn periodic_limit(l: &Rational, u: &Rational) -> Result<(u64, QCyclo)> {
    let l = arith::frac(l);
    let u = arith::frac(u);
    let p = num_integer::Integer::lcm(l.denom(), u.denom())
        .to_u64()
        .filter(|&p| p <= PERIOD_CAP)
        .ok_or_else(|| LabError::InvalidInput("period of the degenerate character too large".into()))?;
    let mut acc = QCyclo::new(p)?;
    let w = Rational::new(BigInt::from(1), BigInt::from(p));
    for n in 0..p {
        let nb = Rational::from_integer(BigInt::from(n));
        let ph = &l * &nb + &u * &nb * &nb;
        acc.add_phase(&arith::frac(&ph), &w)?;
    }
    Ok((p, acc))
}

pub fn exp_equidistribution(p: &EquidistributionParams, ctx: &Context) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(ExperimentKind::Equidistribution, echo(ExperimentKind::Equidistribution, p));
    let d = p.beta.len();
    if d == 0 || p.alpha.len() != d {
        return Err(LabError::InvalidInput("alpha and beta must have the same positive length".into()));
    }
    if p.n_max == 0 {
        return Err(LabError::InvalidInput("n_max must be positive".into()));
    }
    let alpha: Vec<Coord> = p.alpha.iter().map(|s| model_coord(s, p.max_q)).collect::<Result<_>>()?;
    let beta: Vec<Coord> = p.beta.iter().map(|s| model_coord(s, p.max_q)).collect::<Result<_>>()?;
    report.metric(
        "model_denominators",
        alpha.iter().chain(&beta).map(|c| c.den).collect::<Vec<_>>(),
    );
    let checkpoints = ladder(p.n_max, p.ladder_points.max(1));
    let mut table = Table::new(&["character", "N", "abs_average", "re", "im"]);
    let mut flagged = Vec::new();
    for m in &p.characters {
        if m.len() != d {
            return Err(LabError::DimMismatch { expected: d, got: m.len() });
        }
        let label = format!("{m:?}");
        let re = running_average(&checkpoints, ctx.strategy, |n| {
            (std::f64::consts::TAU * phase(m, &alpha, &beta, n)).cos()
        })?;
        let im = running_average(&checkpoints, ctx.strategy, |n| {
            (std::f64::consts::TAU * phase(m, &alpha, &beta, n)).sin()
        })?;
        for ((n, x), (_, y)) in re.iter().zip(&im) {
            table.push(vec![
                label.clone(),
                n.to_string(),
                format!("{:.12e}", Complex64::new(*x, *y).norm()),
                format!("{x:.12e}"),
                format!("{y:.12e}"),
            ]);
        }
        let last = Complex64::new(re.last().map_or(0.0, |v| v.1), im.last().map_or(0.0, |v| v.1));
        let la = dot(m, &p.alpha);
        let lb = dot(m, &p.beta);
        if la.is_rational() && lb.is_rational() {
            flagged.push(label.clone());
            let (period, limit) = periodic_limit(&la.rational_part(), &lb.rational_part())?;
            let lim = limit.to_complex();
            let nonzero = !limit.is_zero();
            report.checks.push(Check::holds(
                format!("{label}: periodic limit is nonzero (no decay)"),
                true,
                nonzero,
                format!("period {period}, limit {:.6}{:+.6}i", lim.re, lim.im),
            ));
            let slack = 2.0 * period as f64 / p.n_max as f64 + 1e-9;
            let dev = (last - lim).norm();
            report.checks.push(Check::at_most(
                format!("{label}: average at N within 2P/N of the limit"),
                false,
                dev,
                slack,
                dev <= slack,
            ));
            if m.iter().all(Zero::is_zero) {
                let ones = re.iter().all(|v| (v.1 - 1.0).abs() < 1e-12) && im.iter().all(|v| v.1.abs() < 1e-12);
                report
                    .checks
                    .push(Check::holds("trivial character: average is 1", true, ones, ""));
            }
        } else {
            let v = last.norm();
            report.checks.push(
                Check::at_most(format!("{label}: |average| at N"), false, v, p.tolerance, v < p.tolerance)
                    .with_detail("empirical tolerance"),
            );
        }
    }
    report.metric("kronecker_fails", flagged);
    report.tables.insert("decay".into(), table);
    Ok(report)
}
