//! Exact rational helpers, modular arithmetic on `u64` numerators and the
//! unit-circle map `e(t) = exp(2 pi i t)`.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{LabError, Result};

pub type Rational = BigRational;

/// Largest modulus accepted by the `u64` fast paths (products fit in `u128`).
pub const MAX_MODULUS: u64 = 1 << 62;

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parse `"p/q"`, `"p"` or a plain decimal like `"0.25"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || LabError::Parse(format!("not a rational: {s:?}"));
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(LabError::Parse(format!("zero denominator in {s:?}")));
        }
        return Ok(Rational::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.starts_with('-');
        let int_part: BigInt = if int.is_empty() || int == "-" {
            BigInt::zero()
        } else {
            int.parse().map_err(|_| bad())?
        };
        if !frac.chars().all(|c| c.is_ascii_digit()) || frac.is_empty() {
            return Err(bad());
        }
        let den = BigInt::from(10u32).pow(frac.len() as u32);
        let num: BigInt = frac.parse().map_err(|_| bad())?;
        let frac_r = Rational::new(num, den);
        let base = Rational::from_integer(int_part);
        return Ok(if neg { base - frac_r } else { base + frac_r });
    }
    let p: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Rational::from_integer(p))
}

pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Fractional part in `[0, 1)`.
pub fn frac(r: &Rational) -> Rational {
    r - r.floor()
}

/// `min(c, 1 - c)` for the representative of `r` in `[0, 1)`.
pub fn circle_dist(r: &Rational) -> Rational {
    let c = frac(r);
    let other = Rational::one() - &c;
    if other < c {
        other
    } else {
        c
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

pub fn lcm_big(a: &BigInt, b: &BigInt) -> BigInt {
    a.lcm(b)
}

pub fn gcd_u64(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

pub fn lcm_u64(a: u64, b: u64) -> Option<u64> {
    if a == 0 || b == 0 {
        return Some(0);
    }
    (a / a.gcd(&b)).checked_mul(b)
}

#[inline]
pub fn mulmod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

#[inline]
pub fn addmod(a: u64, b: u64, m: u64) -> u64 {
    let s = a as u128 + b as u128;
    (s % m as u128) as u64
}

/// `n mod m` for a signed integer.
#[inline]
pub fn reduce_i128(n: i128, m: u64) -> u64 {
    n.rem_euclid(m as i128) as u64
}

pub fn reduce_big(n: &BigInt, m: u64) -> u64 {
    let m_big = BigInt::from(m);
    let r = n.mod_floor(&m_big);
    r.to_u64().expect("residue fits in u64")
}

/// `n (n - 1) / 2 mod m`, exact for any `n`.
pub fn binom2_mod(n: &BigInt, m: u64) -> u64 {
    let v: BigInt = n * (n - BigInt::one()) / BigInt::from(2);
    reduce_big(&v, m)
}

/// `e(t) = exp(2 pi i t)`.
#[inline]
pub fn e(t: f64) -> Complex64 {
    let a = std::f64::consts::TAU * t;
    Complex64::new(a.cos(), a.sin())
}

/// `e(num / den)` with the argument reduced exactly before conversion.
pub fn e_frac(num: i128, den: u64) -> Complex64 {
    let r = num.rem_euclid(den as i128) as u64;
    e_mod(r, den)
}

/// `e(r / den)` for `0 <= r < den`, using the symmetric representative so the
/// float argument stays in `[-1/2, 1/2]`.
#[inline]
pub fn e_mod(r: u64, den: u64) -> Complex64 {
    if r == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let signed = if r > den / 2 {
        -((den - r) as f64)
    } else {
        r as f64
    };
    e(signed / den as f64)
}

pub fn e_rational(t: &Rational) -> Complex64 {
    let f = frac(t);
    match (f.numer().to_u64(), f.denom().to_u64()) {
        (Some(n), Some(d)) => e_mod(n, d),
        _ => e(to_f64(&f)),
    }
}

pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

pub fn pow_rat(r: &Rational, e: u64) -> Rational {
    let mut acc = Rational::one();
    for _ in 0..e {
        acc *= r;
    }
    acc
}

pub fn abs_rat(r: &Rational) -> Rational {
    r.abs()
}

/// Serde adapter storing a rational as a `"p/q"` string.
pub mod serde_rat {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
        let raw = RatRepr::deserialize(d)?;
        raw.into_rational().map_err(serde::de::Error::custom)
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    pub(crate) enum RatRepr {
        Str(String),
        Int(i64),
    }

    impl RatRepr {
        pub(crate) fn into_rational(self) -> Result<Rational> {
            match self {
                RatRepr::Str(s) => parse_rational(&s),
                RatRepr::Int(i) => Ok(rat_int(i)),
            }
        }
    }
}

/// Serde adapter for `Vec<Rational>` as a list of `"p/q"` strings.
pub mod serde_rat_vec {
    use super::serde_rat::RatRepr;
    use super::*;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for r in v {
            seq.serialize_element(&format_rational(r))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Rational>, D::Error> {
        let raw = Vec::<RatRepr>::deserialize(d)?;
        raw.into_iter()
            .map(|r| r.into_rational().map_err(serde::de::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rational("3/6").unwrap(), rat(1, 2));
        assert_eq!(parse_rational("-7").unwrap(), rat_int(-7));
        assert_eq!(parse_rational("0.25").unwrap(), rat(1, 4));
        assert_eq!(parse_rational("-1.5").unwrap(), rat(-3, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert_eq!(format_rational(&rat(4, 8)), "1/2");
        assert_eq!(format_rational(&rat(4, 2)), "2");
    }

    #[test]
    fn fractional_parts() {
        assert_eq!(frac(&rat(-1, 4)), rat(3, 4));
        assert_eq!(frac(&rat(9, 4)), rat(1, 4));
        assert_eq!(circle_dist(&rat(3, 4)), rat(1, 4));
        assert_eq!(circle_dist(&rat(9, 10)), rat(1, 10));
    }

    #[test]
    fn modular_helpers() {
        let m = (1u64 << 61) - 1;
        assert_eq!(mulmod(m - 1, m - 1, m), 1);
        assert_eq!(reduce_i128(-3, 5), 2);
        assert_eq!(binom2_mod(&BigInt::from(4), 7), 6);
        assert_eq!(binom2_mod(&BigInt::from(-2), 7), 3);
        assert_eq!(binomial(5, 2), BigInt::from(10));
    }

    #[test]
    fn unit_circle() {
        let z = e_mod(1, 4);
        assert!((z.re).abs() < 1e-15 && (z.im - 1.0).abs() < 1e-15);
        let w = e_frac(-1, 2);
        assert!((w.re + 1.0).abs() < 1e-15);
    }
}
