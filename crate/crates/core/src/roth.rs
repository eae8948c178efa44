//! The 3AP form `I(f0,f1,f2) = int int f0(z) f1(z+t) f2(z+2t) dz dt` on
//! `Z_q^d`, projections onto quotients `Z/K`, and the Fourier gap bound.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::arith::Rational;
use crate::error::{LabError, Result};
use crate::exec::{self, Strategy};
use crate::harmonic::{dft, GridFunction, RationalGrid};

/// A subgroup `K` of `Z_q^d`, listed element by element; characters of the
/// quotient `W = Z/K` are the characters of `Z` trivial on `K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuotientSpec {
    q: usize,
    d: usize,
    generators: Vec<Vec<usize>>,
    elements: Vec<Vec<usize>>,
}

impl QuotientSpec {
    pub fn from_generators(q: usize, d: usize, generators: Vec<Vec<usize>>) -> Result<Self> {
        if q < 2 || d == 0 {
            return Err(LabError::InvalidInput("need q >= 2 and d >= 1".into()));
        }
        let generators: Vec<Vec<usize>> = generators
            .into_iter()
            .map(|g| {
                if g.len() != d {
                    Err(LabError::DimMismatch { expected: d, got: g.len() })
                } else {
                    Ok(g.into_iter().map(|v| v % q).collect())
                }
            })
            .collect::<Result<_>>()?;
        let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
        let mut frontier = vec![vec![0; d]];
        seen.insert(vec![0; d]);
        while let Some(x) = frontier.pop() {
            for g in &generators {
                let y: Vec<usize> = x.iter().zip(g).map(|(a, b)| (a + b) % q).collect();
                if seen.insert(y.clone()) {
                    frontier.push(y);
                }
            }
        }
        Ok(QuotientSpec {
            q,
            d,
            generators,
            elements: seen.into_iter().collect(),
        })
    }

    /// `K` spanned by the listed coordinate axes.
    pub fn axes(q: usize, d: usize, axes: &[usize]) -> Result<Self> {
        let gens = axes
            .iter()
            .map(|&a| {
                if a >= d {
                    return Err(LabError::InvalidInput(format!("axis {a} out of range")));
                }
                let mut g = vec![0; d];
                g[a] = 1;
                Ok(g)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_generators(q, d, gens)
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Vec<usize>] {
        &self.elements
    }

    /// Whether the character indexed by `chi` (grid coordinates) is trivial on `K`.
    pub fn in_dual_of_quotient(&self, chi: &[usize]) -> bool {
        self.generators
            .iter()
            .all(|g| g.iter().zip(chi).map(|(a, b)| a * b).sum::<usize>() % self.q == 0)
    }

    fn check(&self, f: &GridFunction) -> Result<()> {
        if f.dim() != self.d || f.modulus() != self.q {
            return Err(LabError::InvalidInput(format!(
                "grid Z_{}^{} does not match quotient of Z_{}^{}",
                f.modulus(),
                f.dim(),
                self.q,
                self.d
            )));
        }
        Ok(())
    }
}

/// `f'(z) = int_K f(z + y) dm_K(y)`.
pub fn quotient_project(f: &GridFunction, k: &QuotientSpec) -> Result<GridFunction> {
    k.check(f)?;
    let q = f.modulus();
    let mut shifted = vec![0usize; f.dim()];
    let mut z = vec![0usize; f.dim()];
    let values = (0..f.len())
        .map(|i| {
            f.unindex_into(i, &mut z);
            let mut acc = Complex64::new(0.0, 0.0);
            for y in k.elements() {
                for ((s, a), b) in shifted.iter_mut().zip(&z).zip(y) {
                    *s = (a + b) % q;
                }
                acc += f.at(&shifted);
            }
            acc / k.order() as f64
        })
        .collect();
    GridFunction::new(f.dim(), q, values)
}

fn same_group(fs: &[&GridFunction]) -> Result<()> {
    for f in &fs[1..] {
        fs[0].same_shape(f)?;
    }
    Ok(())
}

/// `I` by direct double summation, `O(|G|^2)`.
pub fn roth_form_direct(f0: &GridFunction, f1: &GridFunction, f2: &GridFunction, strategy: Strategy) -> Result<Complex64> {
    same_group(&[f0, f1, f2])?;
    let n = f0.len();
    let q = f0.modulus();
    let d = f0.dim();
    let parts = exec::map_chunks(strategy, n, |range| {
        let mut z = vec![0usize; d];
        let mut t = vec![0usize; d];
        let mut a = vec![0usize; d];
        let mut b = vec![0usize; d];
        let mut acc = Complex64::new(0.0, 0.0);
        for i in range {
            let v0 = f0.values()[i];
            if v0 == Complex64::new(0.0, 0.0) {
                continue;
            }
            f0.unindex_into(i, &mut z);
            for j in 0..n {
                f0.unindex_into(j, &mut t);
                for c in 0..d {
                    a[c] = (z[c] + t[c]) % q;
                    b[c] = (z[c] + 2 * t[c]) % q;
                }
                acc += v0 * f1.at(&a) * f2.at(&b);
            }
        }
        acc
    });
    Ok(parts.into_iter().sum::<Complex64>() / (n as f64 * n as f64))
}

fn reject_even(q: usize) -> Result<()> {
    if q % 2 == 0 {
        return Err(LabError::UnsupportedModulus {
            q: q as u64,
            reason: "tau -> tau^2 is not injective on characters of even order".into(),
        });
    }
    Ok(())
}

/// `I = sum_tau f0^(tau) f1^(-2 tau) f2^(tau)`. Odd `q` only.
pub fn roth_form_spectral(f0: &GridFunction, f1: &GridFunction, f2: &GridFunction) -> Result<Complex64> {
    same_group(&[f0, f1, f2])?;
    reject_even(f0.modulus())?;
    let (h0, h1, h2) = (dft(f0), dft(f1), dft(f2));
    let q = f0.modulus() as i64;
    let mut tau = vec![0usize; f0.dim()];
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..h0.len() {
        h0.unindex_into(i, &mut tau);
        let neg2: Vec<i64> = tau.iter().map(|&t| (-2 * t as i64).rem_euclid(q)).collect();
        acc += h0.values()[i] * h1.at_signed(&neg2) * h2.values()[i];
    }
    Ok(acc)
}

/// Both paths, returning `(direct, spectral)`.
pub fn roth_form(f0: &GridFunction, f1: &GridFunction, f2: &GridFunction) -> Result<(Complex64, Complex64)> {
    let direct = roth_form_direct(f0, f1, f2, Strategy::Parallel)?;
    let spectral = roth_form_spectral(f0, f1, f2)?;
    Ok((direct, spectral))
}

/// `I` for rational grids, exactly.
pub fn roth_form_exact(f0: &RationalGrid, f1: &RationalGrid, f2: &RationalGrid) -> Result<Rational> {
    for f in [f1, f2] {
        if f.dim() != f0.dim() || f.modulus() != f0.modulus() {
            return Err(LabError::InvalidInput("forms need a common group".into()));
        }
    }
    let n = f0.len();
    let q = f0.modulus();
    let d = f0.dim();
    let parts = exec::map_chunks(Strategy::Parallel, n, |range| {
        let mut z = vec![0usize; d];
        let mut t = vec![0usize; d];
        let mut a = vec![0usize; d];
        let mut b = vec![0usize; d];
        let mut acc = 0i128;
        for i in range {
            let v0 = f0.numerators()[i];
            if v0 == 0 {
                continue;
            }
            f0.unindex_into(i, &mut z);
            for j in 0..n {
                f0.unindex_into(j, &mut t);
                for c in 0..d {
                    a[c] = (z[c] + t[c]) % q;
                    b[c] = (z[c] + 2 * t[c]) % q;
                }
                acc += v0 as i128 * f1.numerators()[f1.index(&a)] as i128 * f2.numerators()[f2.index(&b)] as i128;
            }
        }
        acc
    });
    let s: i128 = parts.into_iter().sum();
    let den = BigInt::from(f0.denominator()) * BigInt::from(f1.denominator()) * BigInt::from(f2.denominator());
    Ok(Rational::new(BigInt::from(s), den * BigInt::from(n) * BigInt::from(n)))
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub i: f64,
    pub i_w: f64,
    /// The intermediate form with only `f2` projected.
    pub i_2: f64,
    pub gap: f64,
    pub kappa: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Largest `|f2^(chi)|` over characters not trivial on `K`, with its index.
pub fn measured_kappa(f2: &GridFunction, k: &QuotientSpec) -> Result<(f64, Option<Vec<usize>>)> {
    k.check(f2)?;
    let h = dft(f2);
    let mut chi = vec![0usize; f2.dim()];
    let mut best = (0.0, None);
    for i in 0..h.len() {
        h.unindex_into(i, &mut chi);
        if !k.in_dual_of_quotient(&chi) && h.values()[i].norm() > best.0 {
            best = (h.values()[i].norm(), Some(chi.clone()));
        }
    }
    Ok(best)
}

/// All quantities of the gap bound, without asserting it.
pub fn gap_report(f0: &GridFunction, f1: &GridFunction, f2: &GridFunction, k: &QuotientSpec, kappa: f64) -> Result<GapReport> {
    same_group(&[f0, f1, f2])?;
    k.check(f0)?;
    let i = roth_form_direct(f0, f1, f2, Strategy::Parallel)?;
    let (p0, p1, p2) = (quotient_project(f0, k)?, quotient_project(f1, k)?, quotient_project(f2, k)?);
    let i_w = roth_form_direct(&p0, &p1, &p2, Strategy::Parallel)?;
    let i_2 = roth_form_direct(f0, f1, &p2, Strategy::Parallel)?;
    let gap = (i - i_w).norm();
    let bound = kappa * f0.norm() * f1.norm();
    Ok(GapReport {
        i: i.re,
        i_w: i_w.re,
        i_2: i_2.re,
        gap,
        kappa,
        bound,
        ok: gap <= bound + 1e-9,
    })
}

/// `|I - I_W| <= kappa ||f0|| ||f1||`, after checking `|f2^(chi)| <= kappa`
/// off the dual of the quotient. Odd `q` only.
pub fn quotient_gap_bound(
    f0: &GridFunction,
    f1: &GridFunction,
    f2: &GridFunction,
    k: &QuotientSpec,
    kappa: f64,
) -> Result<GapReport> {
    reject_even(f0.modulus())?;
    let (measured, chi) = measured_kappa(f2, k)?;
    if measured > kappa + 1e-12 {
        return Err(LabError::Precondition(format!(
            "|f2^({:?})| = {measured} exceeds kappa = {kappa}",
            chi.unwrap_or_default()
        )));
    }
    let report = gap_report(f0, f1, f2, k, kappa)?;
    if !report.ok {
        return Err(LabError::Verification(format!(
            "gap {} exceeds bound {}",
            report.gap, report.bound
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    #[serde(flatten)]
    pub report: GapReport,
}

fn random_grid(rng: &mut ChaCha8Rng, d: usize, q: usize) -> GridFunction {
    GridFunction::from_fn(d, q, |_| Complex64::new(rng.random_range(0.0..1.0), 0.0)).expect("valid shape")
}

/// Random trials on `Z_q^d` with `K` the last coordinate axis and measured `kappa`.
pub fn gap_trials(q: usize, d: usize, trials: usize, seed: u64, strategy: Strategy) -> Result<Vec<TrialRow>> {
    if d < 2 {
        return Err(LabError::InvalidInput("the quotient check needs d >= 2".into()));
    }
    reject_even(q)?;
    let k = QuotientSpec::axes(q, d, &[d - 1])?;
    let idx: Vec<usize> = (0..trials).collect();
    exec::map_items(strategy, &idx, |&t| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let (f0, f1, f2) = (random_grid(&mut rng, d, q), random_grid(&mut rng, d, q), random_grid(&mut rng, d, q));
        let (kappa, _) = measured_kappa(&f2, &k)?;
        Ok(TrialRow {
            trial: t,
            report: quotient_gap_bound(&f0, &f1, &f2, &k, kappa)?,
        })
    })
    .into_iter()
    .collect()
}

pub fn trials_csv(rows: &[TrialRow]) -> String {
    let mut out = String::from("trial,I,I_W,gap,kappa,bound,ok\n");
    for r in rows {
        let g = &r.report;
        writeln!(
            out,
            "{},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{}",
            r.trial, g.i, g.i_w, g.gap, g.kappa, g.bound, g.ok
        )
        .expect("write to string");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn complex_grid(r: &mut ChaCha8Rng, d: usize, q: usize) -> GridFunction {
        GridFunction::from_fn(d, q, |_| Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn small_examples() {
        let one = GridFunction::from_real(1, 5, &[1.0; 5]).unwrap();
        let (a, b) = roth_form(&one, &one, &one).unwrap();
        assert!((a - 1.0).norm() < 1e-12 && (b - 1.0).norm() < 1e-12);
        let delta = GridFunction::from_real(1, 5, &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let (a, b) = roth_form(&delta, &delta, &delta).unwrap();
        assert!((a - 0.04).norm() < 1e-12 && (b - 0.04).norm() < 1e-12);
        let e = RationalGrid::indicator(1, 5, |x| x[0] == 0).unwrap();
        assert_eq!(roth_form_exact(&e, &e, &e).unwrap(), rat(1, 25));
    }

    #[test]
    fn spectral_matches_direct() {
        let mut r = rng(11);
        for q in [3, 5, 7, 9] {
            for d in [1, 2] {
                for _ in 0..5 {
                    let (f0, f1, f2) = (complex_grid(&mut r, d, q), complex_grid(&mut r, d, q), complex_grid(&mut r, d, q));
                    let (a, b) = roth_form(&f0, &f1, &f2).unwrap();
                    assert!((a - b).norm() < 1e-9, "q={q} d={d}");
                }
            }
        }
    }

    #[test]
    fn even_modulus_rejected() {
        let f = GridFunction::from_real(1, 4, &[1.0; 4]).unwrap();
        assert!(matches!(roth_form_spectral(&f, &f, &f), Err(LabError::UnsupportedModulus { q: 4, .. })));
    }

    #[test]
    fn even_modulus_breaks_gap_bound() {
        // Z_2 x Z_2, K = {0} x Z_2, f1 = 1 and f0 = f2 carried by the two
        // characters outside the dual of the quotient.
        let k = QuotientSpec::axes(2, 2, &[1]).unwrap();
        let one = GridFunction::from_real(2, 2, &[1.0; 4]).unwrap();
        let f = GridFunction::from_fn(2, 2, |z| {
            let c1 = if z[1] == 1 { -1.0 } else { 1.0 };
            let c2 = if (z[0] + z[1]) % 2 == 1 { -1.0 } else { 1.0 };
            Complex64::new(c1 + c2, 0.0)
        })
        .unwrap();
        let (kappa, _) = measured_kappa(&f, &k).unwrap();
        let rep = gap_report(&f, &one, &f, &k, kappa).unwrap();
        assert!((rep.gap - 2.0).abs() < 1e-12);
        assert!(!rep.ok);
        assert!(quotient_gap_bound(&f, &one, &f, &k, kappa).is_err());
    }

    #[test]
    fn projection_properties() {
        let mut r = rng(2);
        let f = complex_grid(&mut r, 2, 5);
        let all = QuotientSpec::axes(5, 2, &[0, 1]).unwrap();
        let p = quotient_project(&f, &all).unwrap();
        assert!(p.values().iter().all(|v| (v - f.mean()).norm() < 1e-12));
        let none = QuotientSpec::from_generators(5, 2, vec![]).unwrap();
        assert!(quotient_project(&f, &none).unwrap().max_abs_diff(&f) < 1e-15);
        let k = QuotientSpec::axes(5, 2, &[1]).unwrap();
        let p = quotient_project(&f, &k).unwrap();
        assert!(quotient_project(&p, &k).unwrap().max_abs_diff(&p) < 1e-12);
        assert!((p.mean() - f.mean()).norm() < 1e-12);
        let (hf, hp) = (dft(&f), dft(&p));
        let mut chi = vec![0; 2];
        for i in 0..hf.len() {
            hf.unindex_into(i, &mut chi);
            let want = if k.in_dual_of_quotient(&chi) { hf.values()[i] } else { Complex64::new(0.0, 0.0) };
            assert!((hp.values()[i] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn gap_trials_hold() {
        let rows = gap_trials(5, 2, 20, 7, Strategy::Parallel).unwrap();
        for row in &rows {
            assert!(row.report.ok);
            assert!((row.report.i_w - row.report.i_2).abs() < 1e-9);
        }
        assert!(trials_csv(&rows).lines().count() == 21);
        let k = QuotientSpec::axes(5, 2, &[1]).unwrap();
        let mut r = rng(3);
        let f0 = random_grid(&mut r, 2, 5);
        let f2 = quotient_project(&random_grid(&mut r, 2, 5), &k).unwrap();
        let rep = quotient_gap_bound(&f0, &f0, &f2, &k, 0.0).unwrap();
        assert!(rep.gap < 1e-12);
        assert!(quotient_gap_bound(&f0, &f0, &f0, &k, 0.0).is_err());
    }
}
