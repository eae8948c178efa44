//! Points of the torus `T^r` with exact rational coordinates, the max-norm,
//! deviation counts, approximate Hamming balls, cylinders and their measures.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::arith::{self, circle_dist, frac, pow_rat, serde_rat, serde_rat_vec, Rational};
use crate::error::{check_dim, LabError, Result};

/// A point of `T^r`; every coordinate is stored reduced into `[0, 1)`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct TorusPoint {
    coords: Vec<Rational>,
}

impl TorusPoint {
    pub fn new(coords: Vec<Rational>) -> Result<Self> {
        if coords.is_empty() {
            return Err(LabError::InvalidInput("torus point needs dim >= 1".into()));
        }
        Ok(TorusPoint {
            coords: coords.iter().map(frac).collect(),
        })
    }

    pub fn zero(r: usize) -> Self {
        TorusPoint {
            coords: vec![Rational::zero(); r.max(1)],
        }
    }

    /// Point with all coordinates equal to `c`.
    pub fn constant(r: usize, c: Rational) -> Self {
        TorusPoint::new(vec![c; r.max(1)]).expect("non-empty")
    }

    /// Build from integer numerators over a common denominator `q`.
    pub fn from_numerators(nums: &[i64], q: u64) -> Result<Self> {
        if q == 0 {
            return Err(LabError::InvalidInput("denominator must be positive".into()));
        }
        let q = BigInt::from(q);
        Self::new(
            nums.iter()
                .map(|&n| Rational::new(BigInt::from(n), q.clone()))
                .collect(),
        )
    }

    pub fn parse(items: &[&str]) -> Result<Self> {
        let coords = items
            .iter()
            .map(|s| arith::parse_rational(s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(coords)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Rational] {
        &self.coords
    }

    pub fn coord(&self, i: usize) -> &Rational {
        &self.coords[i]
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(Zero::is_zero)
    }

    pub fn add(&self, other: &TorusPoint) -> Result<TorusPoint> {
        check_dim(self.dim(), other.dim())?;
        Ok(TorusPoint {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| frac(&(a + b)))
                .collect(),
        })
    }

    pub fn sub(&self, other: &TorusPoint) -> Result<TorusPoint> {
        check_dim(self.dim(), other.dim())?;
        Ok(TorusPoint {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| frac(&(a - b)))
                .collect(),
        })
    }

    pub fn neg(&self) -> TorusPoint {
        TorusPoint {
            coords: self.coords.iter().map(|c| frac(&-c)).collect(),
        }
    }

    /// `n * x` on the torus.
    pub fn scale(&self, n: &BigInt) -> TorusPoint {
        let n = Rational::from_integer(n.clone());
        TorusPoint {
            coords: self.coords.iter().map(|c| frac(&(c * &n))).collect(),
        }
    }

    pub fn scale_i64(&self, n: i64) -> TorusPoint {
        self.scale(&BigInt::from(n))
    }

    /// Least common denominator of the coordinates.
    pub fn common_denominator(&self) -> BigInt {
        self.coords
            .iter()
            .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()))
    }

    /// Numerators over the common denominator `q`, if `q` fits the fast path.
    pub fn numerators(&self) -> Option<(Vec<u64>, u64)> {
        let q = self.common_denominator().to_u64()?;
        if q > arith::MAX_MODULUS {
            return None;
        }
        let nums = self.numerators_over(q)?;
        Some((nums, q))
    }

    /// Numerators over a caller-chosen multiple `q` of the common denominator.
    pub fn numerators_over(&self, q: u64) -> Option<Vec<u64>> {
        let qb = BigInt::from(q);
        self.coords
            .iter()
            .map(|c| {
                let scaled = c * Rational::from_integer(qb.clone());
                if scaled.is_integer() {
                    scaled.to_integer().to_u64()
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.coords.iter().map(arith::to_f64).collect()
    }
}

impl fmt::Debug for TorusPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coords.iter().map(arith::format_rational).collect();
        write!(f, "({})", parts.join(", "))
    }
}

impl Serialize for TorusPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        serde_rat_vec::serialize(&self.coords, s)
    }
}

impl<'de> Deserialize<'de> for TorusPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let coords = serde_rat_vec::deserialize(d)?;
        TorusPoint::new(coords).map_err(serde::de::Error::custom)
    }
}

/// `max_j min(c_j, 1 - c_j)`.
pub fn torus_norm(x: &TorusPoint) -> Rational {
    x.coords
        .iter()
        .map(circle_dist)
        .max()
        .expect("dim >= 1")
}

/// Number of coordinates at distance at least `eps` from 0.
pub fn deviation_count(x: &TorusPoint, eps: &Rational) -> usize {
    x.coords.iter().filter(|c| circle_dist(c) >= *eps).count()
}

fn check_width(w: &Rational, what: &str) -> Result<()> {
    let half = arith::rat(1, 2);
    if *w <= Rational::zero() || *w > half {
        return Err(LabError::InvalidInput(format!(
            "{what} must lie in (0, 1/2], got {}",
            arith::format_rational(w)
        )));
    }
    Ok(())
}

/// The set of points with at most `k` coordinates at distance `>= eps` from
/// the center.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BallRepr", into = "BallRepr")]
pub struct ApproxHammingBall {
    center: TorusPoint,
    k: usize,
    eps: Rational,
}

#[derive(Serialize, Deserialize)]
struct BallRepr {
    r: usize,
    y: TorusPoint,
    k: usize,
    #[serde(with = "serde_rat")]
    eps: Rational,
}

impl TryFrom<BallRepr> for ApproxHammingBall {
    type Error = LabError;
    fn try_from(b: BallRepr) -> Result<Self> {
        check_dim(b.r, b.y.dim())?;
        ApproxHammingBall::new(b.y, b.k, b.eps)
    }
}

impl From<ApproxHammingBall> for BallRepr {
    fn from(b: ApproxHammingBall) -> Self {
        BallRepr {
            r: b.dim(),
            y: b.center,
            k: b.k,
            eps: b.eps,
        }
    }
}

impl ApproxHammingBall {
    pub fn new(center: TorusPoint, k: usize, eps: Rational) -> Result<Self> {
        check_width(&eps, "eps")?;
        if k >= center.dim() {
            return Err(LabError::InvalidInput(format!(
                "ball radius k = {k} must be below the dimension {}",
                center.dim()
            )));
        }
        Ok(ApproxHammingBall { center, k, eps })
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }
    pub fn center(&self) -> &TorusPoint {
        &self.center
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn eps(&self) -> &Rational {
        &self.eps
    }

    pub fn contains(&self, x: &TorusPoint) -> Result<bool> {
        let diff = self.center.sub(x)?;
        Ok(deviation_count(&diff, &self.eps) <= self.k)
    }

    /// `sum_{j<=k} C(r,j) (1-2 eps)^j (2 eps)^(r-j)`.
    pub fn measure(&self) -> Rational {
        let r = self.dim() as u64;
        let two_eps = &self.eps * Rational::from_integer(BigInt::from(2));
        let out = Rational::one() - &two_eps;
        (0..=self.k as u64)
            .map(|j| {
                Rational::from_integer(arith::binomial(r, j))
                    * pow_rat(&out, j)
                    * pow_rat(&two_eps, r - j)
            })
            .sum()
    }

    /// All cylinders `V_{I,y,eps}` with `|I| = r - k`; their union is the ball.
    pub fn subordinate_cylinders(&self) -> Vec<Cylinder> {
        let r = self.dim();
        subsets(r, r - self.k)
            .into_iter()
            .map(|idx| Cylinder {
                dim: r,
                indices: idx,
                center: self.center.clone(),
                eta: self.eps.clone(),
            })
            .collect()
    }

    /// Membership kernel for points given as numerators over `q`.
    pub fn modular_test(&self, q: u64) -> Option<ModularTest> {
        ModularTest::new(&self.center, &self.eps, (0..self.dim()).collect(), q)
    }
}

pub fn ball_contains(u: &ApproxHammingBall, x: &TorusPoint) -> Result<bool> {
    u.contains(x)
}

pub fn ball_measure(u: &ApproxHammingBall) -> Rational {
    u.measure()
}

pub fn subordinate_cylinders(u: &ApproxHammingBall) -> Vec<Cylinder> {
    u.subordinate_cylinders()
}

/// All `size`-element subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(size);
    fn rec(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < size - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, size, cur, out);
            cur.pop();
        }
    }
    rec(0, n, size, &mut cur, &mut out);
    out
}

/// `V_{I,y,eta} = { x : |x_i - y_i| < eta for i in I }`. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CylinderRepr", into = "CylinderRepr")]
pub struct Cylinder {
    dim: usize,
    indices: Vec<usize>,
    center: TorusPoint,
    eta: Rational,
}

#[derive(Serialize, Deserialize)]
struct CylinderRepr {
    r: usize,
    #[serde(rename = "I")]
    indices: Vec<usize>,
    y: TorusPoint,
    #[serde(with = "serde_rat")]
    eta: Rational,
}

impl TryFrom<CylinderRepr> for Cylinder {
    type Error = LabError;
    fn try_from(c: CylinderRepr) -> Result<Self> {
        Cylinder::new(c.r, c.indices, c.y, c.eta)
    }
}

impl From<Cylinder> for CylinderRepr {
    fn from(c: Cylinder) -> Self {
        CylinderRepr {
            r: c.dim,
            indices: c.indices,
            y: c.center,
            eta: c.eta,
        }
    }
}

impl Cylinder {
    pub fn new(dim: usize, mut indices: Vec<usize>, center: TorusPoint, eta: Rational) -> Result<Self> {
        check_dim(dim, center.dim())?;
        check_width(&eta, "eta")?;
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(LabError::InvalidInput("cylinder index set is empty".into()));
        }
        if indices.iter().any(|&i| i >= dim) {
            return Err(LabError::InvalidInput(format!(
                "cylinder index out of range for dim {dim}"
            )));
        }
        Ok(Cylinder {
            dim,
            indices,
            center,
            eta,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
    pub fn center(&self) -> &TorusPoint {
        &self.center
    }
    pub fn eta(&self) -> &Rational {
        &self.eta
    }

    pub fn contains(&self, x: &TorusPoint) -> Result<bool> {
        check_dim(self.dim, x.dim())?;
        Ok(self
            .indices
            .iter()
            .all(|&i| circle_dist(&(x.coord(i) - self.center.coord(i))) < self.eta))
    }

    /// `(2 eta)^|I|`.
    pub fn measure(&self) -> Rational {
        pow_rat(
            &(&self.eta * Rational::from_integer(BigInt::from(2))),
            self.indices.len() as u64,
        )
    }

    /// Whether the cylinder sits inside the ball as one of its constituents.
    pub fn is_subordinate_to(&self, u: &ApproxHammingBall) -> bool {
        self.dim == u.dim()
            && self.indices.len() == u.dim() - u.k()
            && self.center == *u.center()
            && self.eta == *u.eps()
    }

    /// `g = 1_V / m(V)` evaluated exactly.
    pub fn normalized_value(&self, x: &TorusPoint) -> Result<Rational> {
        if self.contains(x)? {
            Ok(Rational::one() / self.measure())
        } else {
            Ok(Rational::zero())
        }
    }

    pub fn modular_test(&self, q: u64) -> Option<ModularTest> {
        ModularTest::new(&self.center, &self.eta, self.indices.clone(), q).map(|mut t| {
            t.strict_inside = true;
            t
        })
    }
}

pub fn cylinder_measure(v: &Cylinder) -> Rational {
    v.measure()
}

#[derive(Debug, Clone)]
struct CoordKernel {
    index: usize,
    c: u128,
    b_times_q: u128,
    modulus: u128,
    threshold: u128,
}

/// Exact membership test for points `a / q` (numerators `a`), using integer
/// arithmetic only.
///
/// For a ball, counts coordinates with `||a_i/q - y_i|| >= eps` and compares
/// with `k`. For a cylinder, requires `||a_i/q - y_i|| < eta` on the index set.
#[derive(Debug, Clone)]
pub struct ModularTest {
    q: u64,
    kernels: Vec<CoordKernel>,
    eps_num: u128,
    eps_den: u128,
    k: usize,
    strict_inside: bool,
}

impl ModularTest {
    fn new(center: &TorusPoint, width: &Rational, indices: Vec<usize>, q: u64) -> Option<Self> {
        if q == 0 || q > arith::MAX_MODULUS {
            return None;
        }
        let eps_num = width.numer().to_u128()?;
        let eps_den = width.denom().to_u128()?;
        let mut kernels = Vec::with_capacity(indices.len());
        for &i in &indices {
            let y = center.coord(i);
            let c = y.denom().to_u128()?;
            let b = y.numer().to_u128()?;
            let modulus = (q as u128).checked_mul(c)?;
            // distances are at most modulus/2; products below must fit
            modulus.checked_mul(eps_den)?;
            let threshold = eps_num.checked_mul(modulus)?;
            kernels.push(CoordKernel {
                index: i,
                c,
                b_times_q: (b * q as u128) % modulus,
                modulus,
                threshold,
            });
        }
        Some(ModularTest {
            q,
            kernels,
            eps_num,
            eps_den,
            k: 0,
            strict_inside: false,
        })
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    pub(crate) fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    #[inline]
    fn deviates(&self, kern: &CoordKernel, a: u64) -> bool {
        let ac = (a as u128 % self.q as u128) * kern.c;
        let t = (ac + kern.modulus - kern.b_times_q) % kern.modulus;
        let dist = t.min(kern.modulus - t);
        // dist/modulus >= eps_num/eps_den
        dist * self.eps_den >= kern.threshold
    }

    /// Ball membership for the numerator vector `a` (all coordinates).
    #[inline]
    pub fn ball_contains(&self, a: &[u64]) -> bool {
        let mut bad = 0usize;
        for kern in &self.kernels {
            if self.deviates(kern, a[kern.index]) {
                bad += 1;
                if bad > self.k {
                    return false;
                }
            }
        }
        true
    }

    /// Cylinder membership (strict inequality on the index set).
    #[inline]
    pub fn cylinder_contains(&self, a: &[u64]) -> bool {
        debug_assert!(self.strict_inside);
        self.kernels.iter().all(|kern| !self.deviates(kern, a[kern.index]))
    }

    pub fn width(&self) -> (u128, u128) {
        (self.eps_num, self.eps_den)
    }
}

impl ApproxHammingBall {
    /// Fast kernel with the ball radius attached.
    pub fn kernel(&self, q: u64) -> Option<ModularTest> {
        self.modular_test(q).map(|t| t.with_k(self.k))
    }
}
