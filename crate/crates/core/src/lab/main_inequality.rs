use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{echo, Check, Context, ExperimentKind, ExperimentReport, Table};
use crate::arith::{self, rat, serde_rat, Rational};
use crate::bohr::Frequency;
use crate::error::{LabError, Result};
use crate::harmonic::{dft_with, Character, CoefficientTable, DftMethod, RationalGrid};
use crate::irrational::{common_denominator_approx, Surd};
use crate::joinings::{ideal_affine_joining, uniformize_over_joining, AffineJoining};
use crate::torus::{ApproxHammingBall, TorusPoint};
use crate::weyl::{self, FiniteSystem, WeylSystem, Weight};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MainInequalityParams {
    /// Modulus of the exact periodic model.
    pub q: u64,
    pub alpha: Surd,
    /// Frequencies of the Bohr-Hamming weight; defaults to `r = k + 1`
    /// entries, the first one rationally tied to `alpha`.
    pub beta: Vec<Surd>,
    pub k: usize,
    #[serde(with = "serde_rat")]
    pub eps: Rational,
    pub center: Option<TorusPoint>,
    pub ell: u64,
    /// Number of battery functions (at most 10).
    pub functions: usize,
    pub convergent: Option<ConvergentCheck>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergentCheck {
    pub max_q: u64,
    pub n: u64,
    pub functions: usize,
}

impl Default for ConvergentCheck {
    fn default() -> Self {
        ConvergentCheck {
            max_q: 1_000_000_000,
            n: 1_000_000,
            functions: 4,
        }
    }
}

impl Default for MainInequalityParams {
    fn default() -> Self {
        MainInequalityParams {
            q: 101,
            alpha: Surd::sqrt(2),
            beta: Vec::new(),
            k: 4,
            eps: rat(1, 4),
            center: None,
            ell: 1,
            functions: 10,
            convergent: None,
        }
    }
}

const PRIMES: [u64; 12] = [3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41];

impl MainInequalityParams {
    fn resolved_beta(&self) -> Vec<Surd> {
        if !self.beta.is_empty() {
            return self.beta.clone();
        }
        let r = self.k + 1;
        let mut out = vec![self.alpha.scale_int(3)];
        out.extend(PRIMES.iter().take(r - 1).map(|&p| Surd::sqrt(p)));
        out
    }

    fn validate(&self) -> Result<()> {
        if !(3..=2000).contains(&self.q) {
            return Err(LabError::InvalidInput(format!("q = {} outside [3, 2000]", self.q)));
        }
        if self.k == 0 || self.k >= PRIMES.len() {
            return Err(LabError::InvalidInput(format!("k = {} outside [1, {}]", self.k, PRIMES.len() - 1)));
        }
        if self.alpha.is_rational() {
            return Err(LabError::InvalidInput("alpha must be irrational".into()));
        }
        if self.ell == 0 {
            return Err(LabError::InvalidInput("ell must be positive".into()));
        }
        if self.functions == 0 || self.functions > 10 {
            return Err(LabError::InvalidInput("functions must lie in [1, 10]".into()));
        }
        if !self.eps.is_positive() || self.eps > rat(1, 2) {
            return Err(LabError::InvalidInput("eps must lie in (0, 1/2]".into()));
        }
        Ok(())
    }
}

/// Fourier coefficients of a grid function as characters of `T^d` with
/// representatives in `(-q/2, q/2]`.
pub(crate) fn grid_coefficients(f: &RationalGrid) -> Result<CoefficientTable> {
    let h = dft_with(&f.to_grid_function(), DftMethod::Auto, crate::Strategy::Sequential);
    let q = f.modulus() as i64;
    let mut t = CoefficientTable::new(f.dim());
    for (i, &v) in h.values().iter().enumerate() {
        if v.norm() < 1e-14 {
            continue;
        }
        let c: Vec<i64> = h
            .unindex(i)
            .into_iter()
            .map(|n| {
                let n = n as i64;
                if 2 * n > q {
                    n - q
                } else {
                    n
                }
            })
            .collect();
        t.insert(Character::new(c), v)?;
    }
    Ok(t)
}

/// Ten functions on `Z_q x Z_q` with values in `[-1, 1]`: constants,
/// functions of `x` alone, sets aligned with the skew structure and random
/// ones.
pub fn function_battery(q: u64, alpha_num: u64, seed: u64) -> Result<Vec<(String, RationalGrid)>> {
    let qs = q as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inv = |a: u64| (1..q).find(|&b| a * b % q == 1).unwrap_or(1);
    let ia = inv(alpha_num % q);
    let mut out = Vec::new();
    out.push(("constant".to_string(), RationalGrid::constant(2, qs, &rat(1, 2))?));
    out.push((
        "x-interval".to_string(),
        RationalGrid::indicator(2, qs, |x| 3 * x[0] < qs)?,
    ));
    out.push((
        "x-staircase".to_string(),
        RationalGrid::from_fn(2, qs, |x| rat((x[0] % 5) as i64, 4))?,
    ));
    out.push((
        "y-half".to_string(),
        RationalGrid::indicator(2, qs, |x| 2 * x[1] < qs)?,
    ));
    out.push((
        "quadratic".to_string(),
        RationalGrid::indicator(2, qs, |x| 2 * ((x[0] * x[0] + 3 * x[1]) % qs) < qs)?,
    ));
    // y - x^2 / (2 alpha) is nearly invariant under the skew step
    out.push((
        "skew-aligned".to_string(),
        RationalGrid::indicator(2, qs, |x| {
            let x0 = x[0] as u64;
            let v = (x[1] as u64 + q * q - x0 * x0 % q * ia % q * ((q + 1) / 2) % q) % q;
            2 * v < q
        })?,
    ));
    out.push((
        "product".to_string(),
        RationalGrid::indicator(2, qs, |x| 3 * (x[0] * x[1] % qs) < qs)?,
    ));
    let bits: Vec<bool> = (0..qs * qs).map(|_| rng.random_bool(0.5)).collect();
    out.push((
        "random-set".to_string(),
        RationalGrid::indicator(2, qs, |x| bits[x[0] * qs + x[1]])?,
    ));
    let vals: Vec<i64> = (0..qs * qs).map(|_| rng.random_range(0..=64)).collect();
    out.push((
        "random-values".to_string(),
        RationalGrid::from_fn(2, qs, |x| rat(vals[x[0] * qs + x[1]], 64))?,
    ));
    let signs: Vec<i64> = (0..qs * qs).map(|_| rng.random_range(-1..=1)).collect();
    out.push((
        "random-signed".to_string(),
        RationalGrid::from_fn(2, qs, |x| rat(signs[x[0] * qs + x[1]], 1))?,
    ));
    Ok(out)
}

/// Real trigonometric polynomials `c0 + sum a (e(chi) + e(-chi)) / 2` on `T^2`.
fn trig_battery() -> Vec<(String, CoefficientTable)> {
    let specs: [(&str, f64, &[([i64; 2], f64)]); 5] = [
        ("kronecker", 0.3, &[([1, 0], 0.6)]),
        ("mixed", 0.4, &[([1, 0], 0.4), ([0, 1], 0.4), ([1, 1], 0.3)]),
        ("vertical", 0.2, &[([0, 1], 0.7)]),
        ("skew", 0.3, &[([0, 1], 0.5), ([2, 1], 0.5), ([1, -1], 0.3)]),
        ("high", 0.1, &[([3, 2], 0.6), ([0, 3], 0.5)]),
    ];
    specs
        .iter()
        .map(|(name, c0, terms)| {
            let mut t = CoefficientTable::new(2);
            t.insert(Character::trivial(2), Complex64::new(*c0, 0.0)).expect("dim 2");
            for (chi, a) in terms.iter() {
                let c = Character::new(chi.to_vec());
                t.add_to(c.neg(), Complex64::new(a / 2.0, 0.0)).expect("dim 2");
                t.add_to(c, Complex64::new(a / 2.0, 0.0)).expect("dim 2");
            }
            (name.to_string(), t)
        })
        .collect()
}

fn fmt_rat(r: &Rational) -> String {
    arith::format_rational(r)
}

fn f64_of(r: &Rational) -> f64 {
    arith::to_f64(r)
}

/// Weighted triple averages with a uniformizing Bohr-Hamming weight against
/// `L3`, on exact periodic Weyl models (asserted exactly) and on convergent
/// models (margin reported).
pub fn exp_main_inequality(p: &MainInequalityParams, ctx: &Context) -> Result<ExperimentReport> {
    p.validate()?;
    let beta = p.resolved_beta();
    let r = beta.len();
    let mut resolved = p.clone();
    resolved.beta = beta.clone();
    let mut report = ExperimentReport::new(ExperimentKind::MainInequality, echo(ExperimentKind::MainInequality, &resolved));
    if p.k >= r {
        return Err(LabError::InvalidInput(format!("k = {} needs at least k + 1 frequencies, got {r}", p.k)));
    }
    let center = p.center.clone().unwrap_or_else(|| TorusPoint::zero(r));
    let ball = ApproxHammingBall::new(center, p.k, p.eps.clone()).map_err(LabError::at_stage("ball"))?;

    let half_alpha = p.alpha.scale(&rat(1, 2));
    let ell2 = (p.ell * p.ell) as i64;
    let beta_ell: Vec<Surd> = beta.iter().map(|b| b.scale_int(ell2)).collect();
    let gamma = ideal_affine_joining(&[half_alpha], &beta_ell).map_err(LabError::at_stage("joining"))?;
    report.metric("joining_dimension", gamma.base().dimension());
    report.metric("joining_cosets", gamma.cosets().len());

    let kf = p.k as f64;
    let bound_factor = 2.0 / kf.sqrt();

    // exact periodic model
    let mut all = vec![p.alpha.clone()];
    all.extend(beta.iter().cloned());
    let approx = common_denominator_approx(&all, p.q);
    let qb = BigInt::from(p.q);
    let nums: Vec<u64> = approx
        .iter()
        .map(|x| (x * Rational::from_integer(qb.clone())).to_integer().to_u64().expect("reduced"))
        .collect();
    let sys = FiniteSystem::weyl(p.q, vec![nums[0]]).map_err(LabError::at_stage("model"))?;
    let beta_nums: Vec<i64> = nums[1..].iter().map(|&v| v as i64).collect();
    let freq = Frequency::from_numerators(&beta_nums, p.q, true).map_err(LabError::at_stage("model"))?;
    report.metric("model_alpha", format!("{}/{}", nums[0], p.q));
    report.metric("model_beta", beta_nums.iter().map(|v| format!("{v}/{}", p.q)).collect::<Vec<_>>());

    let battery = function_battery(p.q, nums[0], ctx.seed)?;
    let mut table = Table::new(&[
        "function", "norm_sq", "weighted", "l3", "kronecker_form", "gap", "bound", "margin", "weight_mean", "selected",
        "residual", "indices",
    ]);
    let mut worst_margin = f64::INFINITY;
    for (name, f) in battery.into_iter().take(p.functions) {
        let coeffs = grid_coefficients(&f)?;
        let (g, sel) = uniformize_over_joining(&coeffs, &ball, &gamma).map_err(LabError::at_stage("uniformize"))?;
        let weight = Weight::cylinder(freq.clone(), g.clone(), p.ell).map_err(LabError::at_stage("weight"))?;
        let summary = sys
            .weighted_summary_exact(&f, &weight, ctx.strategy)
            .map_err(LabError::at_stage("average"))?;
        let kron = weyl::kronecker_form_exact(&f, 1)?;
        let nsq = f.norm_sq();
        let Some(a) = summary.normalized() else {
            report.checks.push(Check::holds(
                format!("{name}: weight meets the model"),
                false,
                false,
                "the cylinder contains no point n^2 l^2 beta of the model",
            ));
            continue;
        };
        let gap = (&a - &summary.l3).abs();
        // gap <= 2 k^-1/2 ||f||^2  <=>  k gap^2 <= 4 ||f||^4
        let lhs = Rational::from_integer(BigInt::from(p.k)) * &gap * &gap;
        let rhs = Rational::from_integer(BigInt::from(4)) * &nsq * &nsq;
        let ok = lhs <= rhs;
        let bound = bound_factor * f64_of(&nsq);
        let gap_f = f64_of(&gap);
        worst_margin = worst_margin.min(bound - gap_f);
        report
            .checks
            .push(Check::at_most(format!("{name}: |A - L3| <= 2 k^-1/2 ||f||^2"), true, gap_f, bound, ok));
        if name == "constant" {
            report.checks.push(Check::holds(
                "constant: A = L3 = c^3",
                true,
                gap.is_zero() && summary.l3 == rat(1, 8),
                format!("A = {}, L3 = {}", fmt_rat(&a), fmt_rat(&summary.l3)),
            ));
        }
        table.push(vec![
            name,
            fmt_rat(&nsq),
            fmt_rat(&a),
            fmt_rat(&summary.l3),
            fmt_rat(&kron),
            format!("{gap_f:.6e}"),
            format!("{bound:.6e}"),
            format!("{:.6e}", bound - gap_f),
            fmt_rat(&summary.weight_mean),
            sel.selection.chosen.len().to_string(),
            format!("{:.6e}", sel.selection.residual),
            format!("{:?}", g.indices()),
        ]);
    }
    report.metric("exact_worst_margin", worst_margin);
    report.tables.insert("exact_models".into(), table);

    if let Some(cv) = &p.convergent {
        convergent_models(p, cv, &beta, &ball, &gamma, &mut report, ctx)?;
    }
    report.notes.push(
        "exact rows use the weight renormalized to mean one on the model; the bound is asserted in rational arithmetic"
            .into(),
    );
    Ok(report)
}

fn convergent_models(
    p: &MainInequalityParams,
    cv: &ConvergentCheck,
    beta: &[Surd],
    ball: &ApproxHammingBall,
    gamma: &AffineJoining,
    report: &mut ExperimentReport,
    ctx: &Context,
) -> Result<()> {
    if cv.n == 0 || cv.functions == 0 {
        return Err(LabError::InvalidInput("convergent check needs n >= 1 and functions >= 1".into()));
    }
    let alpha = Frequency::from_surds(std::slice::from_ref(&p.alpha), cv.max_q).map_err(LabError::at_stage("convergent"))?;
    let bfreq = Frequency::from_surds(beta, cv.max_q).map_err(LabError::at_stage("convergent"))?;
    let w = WeylSystem::new(alpha.clone());
    report.metric("convergent_alpha_q", alpha.denominator());
    report.metric("convergent_beta_q", bfreq.denominator());
    let checkpoints = weyl::ladder(cv.n, 12);
    let mut table = Table::new(&["function", "N", "weighted", "l3", "gap", "bound", "margin"]);
    let kf = p.k as f64;
    for (name, f) in trig_battery().into_iter().take(cv.functions) {
        let (g, _) = uniformize_over_joining(&f, ball, gamma).map_err(LabError::at_stage("uniformize"))?;
        let weight = Weight::cylinder(bfreq.clone(), g, p.ell).map_err(LabError::at_stage("weight"))?;
        let trace = weyl::weighted_average(&w, &f, &weight, &checkpoints, ctx.strategy)
            .map_err(LabError::at_stage("average"))?;
        let l3 = trace.closed_form.unwrap_or(f64::NAN);
        let bound = 2.0 / kf.sqrt() * f.norm_sq();
        for &(n, v) in &trace.checkpoints {
            let gap = (v - l3).abs();
            table.push(vec![
                name.clone(),
                n.to_string(),
                format!("{v:.12e}"),
                format!("{l3:.12e}"),
                format!("{gap:.6e}"),
                format!("{bound:.6e}"),
                format!("{:.6e}", bound - gap),
            ]);
        }
        let v = trace.final_value().unwrap_or(f64::NAN);
        let gap = (v - l3).abs();
        report.checks.push(
            Check::at_most(format!("{name} (convergent): margin at N = {}", cv.n), false, gap, bound, gap < bound)
                .with_detail("empirical: finite N on a convergent model"),
        );
    }
    report.tables.insert("convergent_models".into(), table);
    Ok(())
}
