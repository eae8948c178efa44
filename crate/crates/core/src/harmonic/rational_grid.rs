use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::arith::Rational;
use crate::error::{LabError, Result};
use crate::harmonic::GridFunction;

/// Largest common denominator accepted, so that triple products of
/// numerators stay well inside `i128`.
pub const MAX_DENOMINATOR: u64 = 1 << 20;

/// A rational-valued function on `Z_q^d`, stored as integer numerators over
/// one common denominator. Layout matches [`GridFunction`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalGrid {
    d: usize,
    q: usize,
    den: i64,
    nums: Vec<i64>,
}

impl RationalGrid {
    pub fn new(d: usize, q: usize, den: u64, nums: Vec<i64>) -> Result<Self> {
        if q == 0 || d == 0 {
            return Err(LabError::InvalidInput("grid needs d >= 1 and q >= 1".into()));
        }
        if den == 0 || den > MAX_DENOMINATOR {
            return Err(LabError::InvalidInput(format!("denominator {den} out of range")));
        }
        let len = q
            .checked_pow(d as u32)
            .ok_or_else(|| LabError::InvalidInput("grid too large".into()))?;
        if nums.len() != len {
            return Err(LabError::DimMismatch {
                expected: len,
                got: nums.len(),
            });
        }
        if nums.iter().any(|v| v.unsigned_abs() > (1 << 40)) {
            return Err(LabError::InvalidInput("grid value too large".into()));
        }
        Ok(RationalGrid {
            d,
            q,
            den: den as i64,
            nums,
        })
    }

    pub fn from_rationals(d: usize, q: usize, values: &[Rational]) -> Result<Self> {
        let den = values.iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
        let den_u = den
            .to_u64()
            .filter(|&v| v <= MAX_DENOMINATOR)
            .ok_or_else(|| LabError::InvalidInput("common denominator too large".into()))?;
        let nums = values
            .iter()
            .map(|v| {
                (v.numer() * (&den / v.denom()))
                    .to_i64()
                    .ok_or_else(|| LabError::InvalidInput("grid value too large".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(d, q, den_u, nums)
    }

    pub fn from_fn(d: usize, q: usize, mut f: impl FnMut(&[usize]) -> Rational) -> Result<Self> {
        let len = q.pow(d as u32);
        let mut x = vec![0; d];
        let mut values = Vec::with_capacity(len);
        for i in 0..len {
            unindex_into(q, i, &mut x);
            values.push(f(&x));
        }
        Self::from_rationals(d, q, &values)
    }

    pub fn indicator(d: usize, q: usize, mut member: impl FnMut(&[usize]) -> bool) -> Result<Self> {
        let len = q.pow(d as u32);
        let mut x = vec![0; d];
        let nums = (0..len)
            .map(|i| {
                unindex_into(q, i, &mut x);
                i64::from(member(&x))
            })
            .collect();
        Self::new(d, q, 1, nums)
    }

    pub fn constant(d: usize, q: usize, c: &Rational) -> Result<Self> {
        Self::from_fn(d, q, |_| c.clone())
    }

    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn modulus(&self) -> usize {
        self.q
    }
    pub fn len(&self) -> usize {
        self.nums.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nums.is_empty()
    }
    pub fn denominator(&self) -> i64 {
        self.den
    }
    pub fn numerators(&self) -> &[i64] {
        &self.nums
    }

    pub fn index(&self, x: &[usize]) -> usize {
        x.iter().fold(0, |acc, &xi| acc * self.q + xi % self.q)
    }

    pub fn unindex_into(&self, i: usize, out: &mut [usize]) {
        unindex_into(self.q, i, out)
    }

    pub fn value(&self, i: usize) -> Rational {
        Rational::new(BigInt::from(self.nums[i]), BigInt::from(self.den))
    }

    pub fn at(&self, x: &[usize]) -> Rational {
        self.value(self.index(x))
    }

    /// Haar mean.
    pub fn mean(&self) -> Rational {
        let s: i128 = self.nums.iter().map(|&v| v as i128).sum();
        Rational::new(BigInt::from(s), BigInt::from(self.den) * BigInt::from(self.len()))
    }

    /// `||f||^2` in `L^2` of Haar measure.
    pub fn norm_sq(&self) -> Rational {
        let s: i128 = self.nums.iter().map(|&v| v as i128 * v as i128).sum();
        Rational::new(
            BigInt::from(s),
            BigInt::from(self.den) * BigInt::from(self.den) * BigInt::from(self.len()),
        )
    }

    pub fn in_unit_interval(&self) -> bool {
        self.nums.iter().all(|&v| (0..=self.den).contains(&v))
    }

    pub fn is_indicator(&self) -> bool {
        self.nums.iter().all(|&v| v == 0 || v == self.den)
    }

    pub fn to_grid_function(&self) -> GridFunction {
        let values = self
            .nums
            .iter()
            .map(|&v| Complex64::new(v as f64 / self.den as f64, 0.0))
            .collect();
        GridFunction::new(self.d, self.q, values).expect("shape checked")
    }

    /// Rescale so the denominator becomes `den` (a multiple of the current one).
    pub fn with_denominator(&self, den: i64) -> Result<Self> {
        if den % self.den != 0 {
            return Err(LabError::InvalidInput(format!("{den} is not a multiple of {}", self.den)));
        }
        let f = den / self.den;
        Self::new(self.d, self.q, den as u64, self.nums.iter().map(|v| v * f).collect())
    }

    /// Average over the last `d - d_keep` coordinates.
    pub fn average_trailing(&self, d_keep: usize) -> Result<Self> {
        if d_keep == 0 || d_keep > self.d {
            return Err(LabError::InvalidInput("bad projection dimension".into()));
        }
        let block = self.q.pow((self.d - d_keep) as u32);
        let vals: Vec<Rational> = self
            .nums
            .chunks(block)
            .map(|c| {
                let s: i128 = c.iter().map(|&v| v as i128).sum();
                Rational::new(BigInt::from(s), BigInt::from(self.den) * BigInt::from(block))
            })
            .collect();
        Self::from_rationals(d_keep, self.q, &vals)
    }

    pub fn max_abs(&self) -> Rational {
        let m = self.nums.iter().map(|v| v.abs()).max().unwrap_or(0);
        Rational::new(BigInt::from(m), BigInt::from(self.den))
    }

    pub fn is_zero(&self) -> bool {
        self.nums.iter().all(Zero::is_zero)
    }

    pub fn has_negative(&self) -> bool {
        self.nums.iter().any(|v| BigInt::from(*v).is_negative())
    }
}

pub(crate) fn unindex_into(q: usize, mut i: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = i % q;
        i /= q;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;

    #[test]
    fn moments_are_exact() {
        let g = RationalGrid::from_rationals(1, 4, &[rat(1, 2), rat(1, 3), rat(0, 1), rat(1, 1)]).unwrap();
        assert_eq!(g.denominator(), 6);
        assert_eq!(g.mean(), rat(11, 24));
        assert_eq!(g.norm_sq(), (rat(1, 4) + rat(1, 9) + rat(1, 1)) / rat(4, 1));
        assert!(g.in_unit_interval());
        assert!(!g.is_indicator());
    }

    #[test]
    fn trailing_average() {
        let g = RationalGrid::from_fn(2, 3, |x| rat(x[1] as i64, 1)).unwrap();
        let p = g.average_trailing(1).unwrap();
        assert_eq!(p.at(&[2]), rat(1, 1));
        let h = RationalGrid::indicator(2, 3, |x| x[0] == 0).unwrap();
        assert_eq!(h.average_trailing(1).unwrap().at(&[0]), rat(1, 1));
        assert_eq!(h.to_grid_function().mean().re, 1.0 / 3.0);
    }
}
