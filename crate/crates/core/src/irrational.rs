//! Real numbers of the form `c_0 + sum_p c_p sqrt(p)` with rational `c` and
//! squarefree `p > 1`, their high-precision rational approximations and
//! continued-fraction convergents.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::{self, Rational};
use crate::error::{LabError, Result};

const PRECISION_BITS: u64 = 256;

/// Element of `Q(sqrt 2, sqrt 3, ...)` restricted to linear combinations of
/// square roots. The key `1` holds the rational part.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct Surd {
    terms: BTreeMap<u64, Rational>,
}

fn squarefree_split(mut n: u64) -> (u64, u64) {
    // n = a^2 * p with p squarefree
    let mut a = 1u64;
    let mut p = 1u64;
    let mut f = 2u64;
    while f * f <= n {
        let mut e = 0;
        while n % f == 0 {
            n /= f;
            e += 1;
        }
        a *= f.pow(e / 2);
        if e % 2 == 1 {
            p *= f;
        }
        f += 1;
    }
    (a, p * n)
}

impl Surd {
    pub fn rational(r: Rational) -> Self {
        let mut s = Surd::default();
        s.add_term(1, r);
        s
    }

    pub fn int(n: i64) -> Self {
        Self::rational(arith::rat_int(n))
    }

    /// `sqrt(n)` for a positive integer `n`.
    pub fn sqrt(n: u64) -> Self {
        let (a, p) = squarefree_split(n);
        let mut s = Surd::default();
        s.add_term(p, arith::rat_int(a as i64));
        s
    }

    /// `(1 + sqrt 5) / 2`.
    pub fn golden() -> Self {
        Surd::rational(arith::rat(1, 2)).add(&Surd::sqrt(5).scale(&arith::rat(1, 2)))
    }

    fn add_term(&mut self, p: u64, c: Rational) {
        let e = self.terms.entry(p).or_insert_with(Rational::zero);
        *e += c;
        if e.is_zero() {
            self.terms.remove(&p);
        }
    }

    pub fn add(&self, other: &Surd) -> Surd {
        let mut out = self.clone();
        for (p, c) in &other.terms {
            out.add_term(*p, c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Surd) -> Surd {
        self.add(&other.scale(&arith::rat_int(-1)))
    }

    pub fn scale(&self, r: &Rational) -> Surd {
        let mut out = Surd::default();
        for (p, c) in &self.terms {
            out.add_term(*p, c * r);
        }
        out
    }

    pub fn scale_int(&self, n: i64) -> Surd {
        self.scale(&arith::rat_int(n))
    }

    pub fn is_rational(&self) -> bool {
        self.terms.keys().all(|&p| p == 1)
    }

    pub fn rational_part(&self) -> Rational {
        self.terms.get(&1).cloned().unwrap_or_else(Rational::zero)
    }

    /// Radicands `p > 1` with nonzero coefficient.
    pub fn radicands(&self) -> Vec<u64> {
        self.terms.keys().copied().filter(|&p| p > 1).collect()
    }

    pub fn coefficient(&self, p: u64) -> Rational {
        self.terms.get(&p).cloned().unwrap_or_else(Rational::zero)
    }

    /// Reduce the rational part into `[0, 1)`; the surd changes by an integer.
    pub fn mod_one(&self) -> Surd {
        let mut out = self.clone();
        let r = self.rational_part();
        out.add_term(1, -r.floor());
        out
    }

    /// `floor(self * 2^bits)` up to one unit, computed with integer square roots.
    fn scaled_floor(&self, bits: u64) -> BigInt {
        let scale = BigInt::one() << bits;
        let mut acc = Rational::zero();
        for (p, c) in &self.terms {
            let v = if *p == 1 {
                Rational::from_integer(scale.clone())
            } else {
                let sq: BigInt = (BigInt::from(*p) * &scale * &scale).sqrt();
                Rational::from_integer(sq)
            };
            acc += c * v;
        }
        acc.floor().to_integer()
    }

    /// Rational approximation `A / 2^bits` with error below `(1 + sum |c_p|) 2^-bits`.
    pub fn approx(&self, bits: u64) -> Rational {
        Rational::new(self.scaled_floor(bits), BigInt::one() << bits)
    }

    pub fn to_f64(&self) -> f64 {
        arith::to_f64(&self.approx(80))
    }

    /// Nearest integer to `q * self` (ties resolved by the high-precision approximation).
    pub fn round_scaled(&self, q: &BigInt) -> BigInt {
        let a = self.approx(PRECISION_BITS) * Rational::from_integer(q.clone());
        (a + arith::rat(1, 2)).floor().to_integer()
    }

    /// Continued-fraction convergents `p/q` with `q <= max_q`.
    pub fn convergents(&self, max_q: &BigInt) -> Vec<Rational> {
        if self.is_rational() {
            return rational_convergents(&self.rational_part(), max_q);
        }
        // the expansion of the approximation agrees with the true one while q^2 << 2^bits
        let bits = PRECISION_BITS.max(4 * max_q.bits() + 64);
        let approx = self.approx(bits);
        let mut out = rational_convergents(&approx, max_q);
        let limit = BigInt::one() << (bits / 2 - 16);
        out.retain(|c| c.denom() < &limit);
        out
    }

    pub fn parse(s: &str) -> Result<Surd> {
        let t = s.trim().replace(' ', "");
        match t.as_str() {
            "golden" | "phi" => return Ok(Surd::golden()),
            _ => {}
        }
        let mut total = Surd::default();
        for raw in split_signed(&t) {
            let (neg, body) = match raw.strip_prefix('-') {
                Some(b) => (true, b.to_string()),
                None => (false, raw.trim_start_matches('+').to_string()),
            };
            let term = parse_term(&body)?;
            total = total.add(&if neg { term.scale_int(-1) } else { term });
        }
        Ok(total)
    }
}

fn split_signed(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut depth = 0;
    for ch in s.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
        if (ch == '+' || ch == '-') && depth == 0 && !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        cur.push(ch);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn parse_term(body: &str) -> Result<Surd> {
    // forms: r, sqrt(n), r*sqrt(n), sqrt(n)/m, r*sqrt(n)/m
    let bad = || LabError::Parse(format!("cannot parse surd term {body:?}"));
    if let Some(pos) = body.find("sqrt(") {
        let prefix = body[..pos].trim_end_matches('*');
        let rest = &body[pos + 5..];
        let close = rest.find(')').ok_or_else(bad)?;
        let n: u64 = rest[..close].parse().map_err(|_| bad())?;
        let suffix = &rest[close + 1..];
        let mut coef = if prefix.is_empty() {
            arith::rat_int(1)
        } else {
            arith::parse_rational(prefix)?
        };
        if let Some(den) = suffix.strip_prefix('/') {
            let d = arith::parse_rational(den)?;
            if d.is_zero() {
                return Err(bad());
            }
            coef /= d;
        } else if !suffix.is_empty() {
            return Err(bad());
        }
        Ok(Surd::sqrt(n).scale(&coef))
    } else {
        Ok(Surd::rational(arith::parse_rational(body)?))
    }
}

impl fmt::Debug for Surd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Surd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(p, c)| {
                let c = arith::format_rational(c);
                if *p == 1 {
                    c
                } else {
                    format!("{c}*sqrt({p})")
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl Serialize for Surd {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string().replace(" + -", " - "))
    }
}

impl<'de> Deserialize<'de> for Surd {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Surd::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Convergents of a rational number with denominators up to `max_q`.
pub fn rational_convergents(x: &Rational, max_q: &BigInt) -> Vec<Rational> {
    let mut out = Vec::new();
    let (mut num, mut den) = (x.numer().clone(), x.denom().clone());
    let (mut p0, mut q0) = (BigInt::one(), BigInt::zero());
    let (mut p1, mut q1) = (BigInt::zero(), BigInt::one());
    while !den.is_zero() {
        let (a, r) = num.div_mod_floor(&den);
        let p2 = &a * &p0 + &p1;
        let q2 = &a * &q0 + &q1;
        if &q2 > max_q {
            break;
        }
        out.push(Rational::new(p2.clone(), q2.clone()));
        p1 = std::mem::replace(&mut p0, p2);
        q1 = std::mem::replace(&mut q0, q2);
        num = std::mem::replace(&mut den, r);
    }
    out
}

/// Largest convergent denominator of `theta` not exceeding `max_q`, reduced mod 1.
pub fn best_convergent(theta: &Surd, max_q: u64) -> Result<Rational> {
    let cs = theta.convergents(&BigInt::from(max_q));
    cs.last()
        .map(arith::frac)
        .ok_or_else(|| LabError::InvalidInput(format!("no convergent with q <= {max_q}")))
}

/// Simultaneous approximation `p_i / Q` with `p_i = round(Q theta_i)`.
pub fn common_denominator_approx(thetas: &[Surd], q: u64) -> Vec<Rational> {
    let qb = BigInt::from(q);
    thetas
        .iter()
        .map(|t| arith::frac(&Rational::new(t.round_scaled(&qb), qb.clone())))
        .collect()
}

pub fn is_positive(s: &Surd) -> bool {
    s.approx(PRECISION_BITS).is_positive()
}

pub fn to_u64_checked(r: &Rational) -> Option<(u64, u64)> {
    Some((r.numer().abs().to_u64()?, r.denom().to_u64()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_normalizes() {
        assert_eq!(Surd::sqrt(8), Surd::sqrt(2).scale_int(2));
        assert_eq!(Surd::sqrt(9), Surd::int(3));
        assert!(Surd::sqrt(12).sub(&Surd::sqrt(3).scale_int(2)).terms.is_empty());
    }

    #[test]
    fn sqrt2_convergents() {
        let cs = Surd::sqrt(2).convergents(&BigInt::from(1000));
        let expect = ["1", "3/2", "7/5", "17/12", "41/29", "99/70", "239/169", "577/408", "1393/985"];
        let got: Vec<String> = cs.iter().map(arith::format_rational).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn golden_convergents_are_fibonacci() {
        let cs = Surd::golden().convergents(&BigInt::from(100));
        let dens: Vec<i64> = cs.iter().map(|c| c.denom().to_i64().unwrap()).collect();
        assert_eq!(dens, vec![1, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89]);
    }

    #[test]
    fn large_convergent_is_accurate() {
        let c = best_convergent(&Surd::sqrt(3), 1_000_000_000).unwrap();
        assert!(c.denom() <= &BigInt::from(1_000_000_000u64));
        assert!(c.denom() > &BigInt::from(10_000_000u64));
        let err = (arith::to_f64(&c) - (3f64.sqrt() - 1.0)).abs();
        assert!(err < 1e-15);
    }

    #[test]
    fn parse_forms() {
        assert_eq!(Surd::parse("sqrt(2)").unwrap(), Surd::sqrt(2));
        assert_eq!(Surd::parse("1/2+sqrt(5)/2").unwrap(), Surd::golden());
        assert_eq!(Surd::parse("golden").unwrap(), Surd::golden());
        assert_eq!(
            Surd::parse("3/7 - 2*sqrt(3)").unwrap(),
            Surd::rational(arith::rat(3, 7)).sub(&Surd::sqrt(3).scale_int(2))
        );
        assert!(Surd::parse("sqrt(x)").is_err());
        let s = Surd::golden();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<Surd>(&json).unwrap(), s);
    }

    #[test]
    fn common_denominator_rounding() {
        let v = common_denominator_approx(&[Surd::sqrt(2), Surd::sqrt(3)], 1_000_003);
        assert!((arith::to_f64(&v[0]) - (2f64.sqrt() - 1.0)).abs() < 1e-6);
        assert!((arith::to_f64(&v[1]) - (3f64.sqrt() - 1.0)).abs() < 1e-6);
    }
}
