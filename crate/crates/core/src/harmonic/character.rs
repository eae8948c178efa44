use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::arith::{self, Rational};
use crate::error::{check_dim, LabError, Result};
use crate::torus::TorusPoint;

/// `chi(x) = e(sum_l n_l x_l)`. Ordering is lexicographic on the tuple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Character(pub Vec<i64>);

impl Character {
    pub fn new(n: Vec<i64>) -> Self {
        Character(n)
    }

    pub fn trivial(r: usize) -> Self {
        Character(vec![0; r])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn freq(&self) -> &[i64] {
        &self.0
    }

    pub fn is_trivial(&self) -> bool {
        self.0.iter().all(|&v| v == 0)
    }

    pub fn neg(&self) -> Character {
        Character(self.0.iter().map(|v| -v).collect())
    }

    pub fn scale(&self, m: i64) -> Character {
        Character(self.0.iter().map(|v| v * m).collect())
    }

    pub fn add(&self, other: &Character) -> Character {
        Character(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Concatenate into a character of a product group.
    pub fn join(&self, other: &Character) -> Character {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Character(v)
    }

    /// Split a product character after the first `d` coordinates.
    pub fn split(&self, d: usize) -> (Character, Character) {
        (Character(self.0[..d].to_vec()), Character(self.0[d..].to_vec()))
    }

    /// `n . x mod 1`, exactly.
    pub fn phase(&self, x: &TorusPoint) -> Result<Rational> {
        check_dim(self.dim(), x.dim())?;
        let mut acc = Rational::from_integer(BigInt::from(0));
        for (n, c) in self.0.iter().zip(x.coords()) {
            acc += Rational::from_integer(BigInt::from(*n)) * c;
        }
        Ok(arith::frac(&acc))
    }

    pub fn eval(&self, x: &TorusPoint) -> Result<Complex64> {
        Ok(arith::e_rational(&self.phase(x)?))
    }

    /// `n . a mod q` for a point with numerators `a` over `q`.
    pub fn phase_mod(&self, a: &[u64], q: u64) -> u64 {
        let mut acc = 0u64;
        for (n, &x) in self.0.iter().zip(a) {
            let nn = arith::reduce_i128(*n as i128, q);
            acc = arith::addmod(acc, arith::mulmod(nn, x % q, q), q);
        }
        acc
    }
}

/// Finitely supported map from characters to complex coefficients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoefficientTable {
    dim: usize,
    entries: BTreeMap<Character, Complex64>,
}

/// Serialized form of one table entry: `{n, re, im}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableEntry {
    pub n: Vec<i64>,
    pub re: f64,
    pub im: f64,
}

impl Serialize for CoefficientTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let list: Vec<TableEntry> = self
            .entries
            .iter()
            .map(|(c, v)| TableEntry {
                n: c.0.clone(),
                re: v.re,
                im: v.im,
            })
            .collect();
        list.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CoefficientTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let list = Vec::<TableEntry>::deserialize(d)?;
        let dim = list.first().map(|e| e.n.len()).unwrap_or(0);
        let mut t = CoefficientTable::new(dim);
        for e in list {
            t.insert(Character(e.n), Complex64::new(e.re, e.im))
                .map_err(serde::de::Error::custom)?;
        }
        Ok(t)
    }
}

impl CoefficientTable {
    pub fn new(dim: usize) -> Self {
        CoefficientTable {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = (Character, Complex64)>) -> Result<Self> {
        let mut t = CoefficientTable::new(dim);
        for (c, v) in entries {
            t.add_to(c, v)?;
        }
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, c: Character, v: Complex64) -> Result<()> {
        if self.entries.is_empty() && self.dim == 0 {
            self.dim = c.dim();
        }
        check_dim(self.dim, c.dim())?;
        self.entries.insert(c, v);
        Ok(())
    }

    pub fn add_to(&mut self, c: Character, v: Complex64) -> Result<()> {
        if self.entries.is_empty() && self.dim == 0 {
            self.dim = c.dim();
        }
        check_dim(self.dim, c.dim())?;
        *self.entries.entry(c).or_insert(Complex64::new(0.0, 0.0)) += v;
        Ok(())
    }

    pub fn get(&self, c: &Character) -> Complex64 {
        self.entries
            .get(c)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Character, &Complex64)> {
        self.entries.iter()
    }

    /// Entries with nonzero coefficient.
    pub fn support(&self) -> impl Iterator<Item = (&Character, &Complex64)> {
        self.entries.iter().filter(|(_, v)| v.norm() > 0.0)
    }

    /// `sum |c|^2`, the squared L2 norm by Plancherel.
    pub fn norm_sq(&self) -> f64 {
        self.entries.values().map(|v| v.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scaled(&self, s: f64) -> CoefficientTable {
        CoefficientTable {
            dim: self.dim,
            entries: self.entries.iter().map(|(c, v)| (c.clone(), v * s)).collect(),
        }
    }

    pub fn map_values(&self, f: impl Fn(&Character, Complex64) -> Complex64) -> CoefficientTable {
        CoefficientTable {
            dim: self.dim,
            entries: self.entries.iter().map(|(c, v)| (c.clone(), f(c, *v))).collect(),
        }
    }

    pub fn retain(&mut self, f: impl Fn(&Character) -> bool) {
        self.entries.retain(|c, _| f(c));
    }

    /// Evaluate the trigonometric polynomial at a point.
    pub fn eval(&self, x: &TorusPoint) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for (c, v) in &self.entries {
            acc += v * c.eval(x)?;
        }
        Ok(acc)
    }

    /// Evaluate at a point given by floats (for quadrature oracles).
    pub fn eval_f64(&self, x: &[f64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (c, v) in &self.entries {
            let t: f64 = c.0.iter().zip(x).map(|(n, xi)| *n as f64 * xi).sum();
            acc += v * arith::e(t);
        }
        acc
    }

    /// True when `c(-n) = conj(c(n))` within `tol`, i.e. the function is real.
    pub fn is_real_valued(&self, tol: f64) -> bool {
        self.entries
            .iter()
            .all(|(c, v)| (self.get(&c.neg()) - v.conj()).norm() <= tol)
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if !self.entries.is_empty() {
            check_dim(d, self.dim)?;
        }
        Ok(())
    }

    pub fn require_nonempty(&self) -> Result<()> {
        if self.entries.is_empty() {
            Err(LabError::EmptyDomain("coefficient table is empty".into()))
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn character_eval() {
        let c = Character::new(vec![1]);
        let s = TorusPoint::parse(&["1/4"]).unwrap();
        let v = c.eval(&s).unwrap();
        assert!(v.re.abs() < 1e-15 && (v.im - 1.0).abs() < 1e-15);
        assert!(Character::trivial(3).is_trivial());
        assert_eq!(c.phase_mod(&[3], 4), 3);
        assert_eq!(Character::new(vec![-1, 2]).phase_mod(&[1, 3], 5), 0);
    }

    #[test]
    fn table_json_round_trip() {
        let t = CoefficientTable::from_entries(
            2,
            [
                (Character::new(vec![0, 1]), Complex64::new(0.5, -0.25)),
                (Character::new(vec![-1, 0]), Complex64::new(1.0, 0.0)),
            ],
        )
        .unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.starts_with(r#"[{"n":[-1,0],"re":1.0,"im":0.0}"#));
        let back: CoefficientTable = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        assert!((t.norm_sq() - 1.3125).abs() < 1e-15);
    }
}
