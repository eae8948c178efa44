//! Exact arithmetic with rational combinations of `M`-th roots of unity.
//!
//! A sum `sum_k w_k e(k/M)` is reduced to coordinates in a fixed basis of
//! `Q(zeta_M)`: for each prime power `p^e || M`, exponents whose `p`-component
//! has top digit `p - 1` are rewritten with `1 + zeta_p + ... + zeta_p^(p-1) = 0`.
//! The sum vanishes exactly when every remaining coordinate is zero.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

use crate::arith::{self, Rational};
use crate::error::{LabError, Result};

/// Largest modulus handled by the dense representation.
pub const MAX_ORDER: u64 = 1 << 26;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycloSum {
    m: u64,
    coeffs: Vec<BigInt>,
}

fn prime_powers(mut m: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= m {
        let mut e = 0;
        while m % p == 0 {
            m /= p;
            e += 1;
        }
        if e > 0 {
            out.push((p, e));
        }
        p += 1;
    }
    if m > 1 {
        out.push((m, 1));
    }
    out
}

fn mod_inverse(a: u64, m: u64) -> u64 {
    let g = (a as i128).extended_gcd(&(m as i128));
    debug_assert_eq!(g.gcd, 1);
    g.x.rem_euclid(m as i128) as u64
}

impl CycloSum {
    pub fn new(m: u64) -> Result<Self> {
        if m == 0 || m > MAX_ORDER {
            return Err(LabError::InvalidInput(format!("root-of-unity order {m} out of range")));
        }
        Ok(CycloSum {
            m,
            coeffs: vec![BigInt::zero(); m as usize],
        })
    }

    pub fn order(&self) -> u64 {
        self.m
    }

    /// Add `w * e(k / m)`.
    pub fn add(&mut self, k: u64, w: &BigInt) {
        self.coeffs[(k % self.m) as usize] += w;
    }

    pub fn add_i64(&mut self, k: u64, w: i64) {
        self.coeffs[(k % self.m) as usize] += w;
    }

    /// Re-express over a multiple `m2` of the current order.
    pub fn lift(&self, m2: u64) -> Result<CycloSum> {
        if m2 % self.m != 0 {
            return Err(LabError::InvalidInput(format!("{m2} is not a multiple of {}", self.m)));
        }
        let mut out = CycloSum::new(m2)?;
        let f = m2 / self.m;
        for (k, w) in self.coeffs.iter().enumerate() {
            if !w.is_zero() {
                out.coeffs[k * f as usize] = w.clone();
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &CycloSum) -> Result<CycloSum> {
        let m = arith::lcm_u64(self.m, other.m)
            .filter(|&m| m <= MAX_ORDER)
            .ok_or_else(|| LabError::InvalidInput("combined root-of-unity order too large".into()))?;
        let mut a = self.lift(m)?;
        let b = other.lift(m)?;
        for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
            *x -= y;
        }
        Ok(a)
    }

    /// Coordinates in the reduced basis (all other entries zero).
    pub fn reduced(&self) -> Vec<BigInt> {
        let m = self.m;
        let mut c = self.coeffs.clone();
        for (p, e) in prime_powers(m) {
            let pp = p.pow(e);
            let low = pp / p;
            let rest = m / pp;
            let unit = ((rest as u128 * mod_inverse(rest % pp, pp) as u128) % m as u128) as u64;
            for k in 0..m {
                let comp = k % pp;
                if comp / low != p - 1 || c[k as usize].is_zero() {
                    continue;
                }
                let w = std::mem::take(&mut c[k as usize]);
                for t in 0..p - 1 {
                    // move the p-component from j + (p-1) low to j + t low
                    let back = (p - 1 - t) * low;
                    let shift = ((back as u128 * unit as u128) % m as u128) as u64;
                    let k2 = (k + m - shift) % m;
                    c[k2 as usize] -= &w;
                }
            }
        }
        c
    }

    pub fn is_zero(&self) -> bool {
        self.reduced().iter().all(Zero::is_zero)
    }

    pub fn to_complex(&self) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, w) in self.coeffs.iter().enumerate() {
            if !w.is_zero() {
                acc += arith::e_mod(k as u64, self.m) * w.to_f64().unwrap_or(f64::NAN);
            }
        }
        acc
    }
}

/// Sparse rational combination `sum_k w_k e(k / m)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QCyclo {
    m: u64,
    terms: BTreeMap<u64, Rational>,
}

impl QCyclo {
    pub fn new(m: u64) -> Result<Self> {
        if m == 0 || m > MAX_ORDER {
            return Err(LabError::InvalidInput(format!("root-of-unity order {m} out of range")));
        }
        Ok(QCyclo { m, terms: BTreeMap::new() })
    }

    pub fn order(&self) -> u64 {
        self.m
    }

    pub fn add(&mut self, k: u64, w: &Rational) {
        if w.is_zero() {
            return;
        }
        let slot = self.terms.entry(k % self.m).or_insert_with(Rational::zero);
        *slot += w;
    }

    /// Add `w * e(phase)` for a rational phase whose denominator divides `m`.
    pub fn add_phase(&mut self, phase: &Rational, w: &Rational) -> Result<()> {
        let f = arith::frac(phase);
        let m = BigInt::from(self.m);
        if !(&m % f.denom()).is_zero() {
            return Err(LabError::InvalidInput(format!(
                "phase {} is not a multiple of 1/{}",
                arith::format_rational(&f),
                self.m
            )));
        }
        let k = (f.numer() * (m / f.denom())).to_u64().expect("below m");
        self.add(k, w);
        Ok(())
    }

    pub fn lift(&self, m2: u64) -> Result<QCyclo> {
        if m2 % self.m != 0 {
            return Err(LabError::InvalidInput(format!("{m2} is not a multiple of {}", self.m)));
        }
        let f = m2 / self.m;
        let mut out = QCyclo::new(m2)?;
        for (k, w) in &self.terms {
            out.add(k * f, w);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &QCyclo) -> Result<QCyclo> {
        let m = arith::lcm_u64(self.m, other.m)
            .filter(|&m| m <= MAX_ORDER)
            .ok_or_else(|| LabError::InvalidInput("combined root-of-unity order too large".into()))?;
        let mut a = self.lift(m)?;
        for (k, w) in &other.lift(m)?.terms {
            a.add(*k, &-w.clone());
        }
        Ok(a)
    }

    pub fn is_zero(&self) -> bool {
        let den = self.terms.values().fold(BigInt::one(), |acc, w| acc.lcm(w.denom()));
        let mut dense = CycloSum::new(self.m).expect("order checked");
        for (k, w) in &self.terms {
            dense.add(*k, &(w.numer() * (&den / w.denom())));
        }
        dense.is_zero()
    }

    pub fn to_complex(&self) -> Complex64 {
        self.terms
            .iter()
            .map(|(k, w)| arith::e_mod(*k, self.m) * arith::to_f64(w))
            .sum()
    }
}

/// Exact equality of two root-of-unity sums.
pub fn equal(a: &CycloSum, b: &CycloSum) -> Result<bool> {
    Ok(a.sub(b)?.is_zero())
}
