//! Bohr-Hamming balls `{n : n beta in U}`, square-root sets, dilations and
//! density diagnostics.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::arith::{self, Rational};
use crate::error::{check_dim, LabError, Result};
use crate::exec::{self, Strategy};
use crate::irrational::{self, Surd};
use crate::torus::{ApproxHammingBall, ModularTest, TorusPoint};

/// A rational point `beta = nums / q` of `T^r`, with `q` the least common
/// denominator. `generating` records that the point stands in for a
/// generating (irrational) frequency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FrequencyRepr", into = "FrequencyRepr")]
pub struct Frequency {
    nums: Vec<u64>,
    q: u64,
    generating: bool,
}

#[derive(Serialize, Deserialize)]
struct FrequencyRepr {
    beta: TorusPoint,
    #[serde(default)]
    generating: bool,
}

impl TryFrom<FrequencyRepr> for Frequency {
    type Error = LabError;
    fn try_from(r: FrequencyRepr) -> Result<Self> {
        Frequency::from_point(&r.beta, r.generating)
    }
}

impl From<Frequency> for FrequencyRepr {
    fn from(f: Frequency) -> Self {
        FrequencyRepr {
            beta: f.point(),
            generating: f.generating,
        }
    }
}

impl Frequency {
    pub fn from_point(beta: &TorusPoint, generating: bool) -> Result<Self> {
        let (nums, q) = beta.numerators().ok_or_else(|| {
            LabError::InvalidInput(format!("denominator of {beta:?} exceeds 2^62"))
        })?;
        Ok(Frequency { nums, q, generating })
    }

    /// `nums / q`, reduced to the least common denominator.
    pub fn from_numerators(nums: &[i64], q: u64, generating: bool) -> Result<Self> {
        let p = TorusPoint::from_numerators(nums, q)?;
        Self::from_point(&p, generating)
    }

    pub fn parse(items: &[&str], generating: bool) -> Result<Self> {
        Self::from_point(&TorusPoint::parse(items)?, generating)
    }

    /// Rational model of real frequencies: the best convergent in dimension
    /// one, and simultaneous rounding `round(Q theta_i) / Q` otherwise.
    pub fn from_surds(thetas: &[Surd], max_q: u64) -> Result<Self> {
        if thetas.is_empty() {
            return Err(LabError::InvalidInput("no frequencies given".into()));
        }
        let coords = if thetas.len() == 1 {
            vec![irrational::best_convergent(&thetas[0], max_q)?]
        } else {
            irrational::common_denominator_approx(thetas, max_q)
        };
        let generating = thetas.iter().all(|t| !t.is_rational());
        Self::from_point(&TorusPoint::new(coords)?, generating)
    }

    pub fn dim(&self) -> usize {
        self.nums.len()
    }
    pub fn denominator(&self) -> u64 {
        self.q
    }
    pub fn numerators(&self) -> &[u64] {
        &self.nums
    }
    pub fn is_generating(&self) -> bool {
        self.generating
    }

    pub fn point(&self) -> TorusPoint {
        TorusPoint::from_numerators(&self.nums.iter().map(|&v| v as i64).collect::<Vec<_>>(), self.q)
            .unwrap_or_else(|_| self.point_big())
    }

    fn point_big(&self) -> TorusPoint {
        let q = BigInt::from(self.q);
        TorusPoint::new(
            self.nums
                .iter()
                .map(|&v| Rational::new(BigInt::from(v), q.clone()))
                .collect(),
        )
        .expect("dim >= 1")
    }

    /// Numerators of `n * beta` over `q`, for `n` already reduced mod `q`.
    #[inline]
    pub fn multiple_into(&self, n_mod_q: u64, out: &mut [u64]) {
        for (o, &v) in out.iter_mut().zip(&self.nums) {
            *o = arith::mulmod(n_mod_q, v, self.q);
        }
    }

    pub fn multiple(&self, n: &BigInt) -> Vec<u64> {
        let r = arith::reduce_big(n, self.q);
        let mut out = vec![0; self.dim()];
        self.multiple_into(r, &mut out);
        out
    }

    /// `m * beta` as a new frequency (reduced).
    pub fn scaled(&self, m: i64) -> Frequency {
        let p = self.point().scale_i64(m);
        Frequency::from_point(&p, self.generating).expect("denominator shrinks")
    }
}

/// `BH(beta, y; k, eps) = { n : n beta in U }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BohrHammingBall {
    pub freq: Frequency,
    pub ball: ApproxHammingBall,
}

impl BohrHammingBall {
    pub fn new(freq: Frequency, ball: ApproxHammingBall) -> Result<Self> {
        check_dim(ball.dim(), freq.dim())?;
        Ok(BohrHammingBall { freq, ball })
    }

    pub fn is_proper(&self) -> bool {
        self.freq.is_generating()
    }

    fn kernel(&self) -> Option<ModularTest> {
        self.ball.kernel(self.freq.denominator())
    }

    pub fn contains(&self, n: &BigInt) -> bool {
        match self.kernel() {
            Some(k) => k.ball_contains(&self.freq.multiple(n)),
            None => self
                .ball
                .contains(&self.freq.point().scale(n))
                .expect("dims checked"),
        }
    }

    pub fn contains_i64(&self, n: i64) -> bool {
        self.contains(&BigInt::from(n))
    }

    /// Elements of `[lo, hi]` whose square lies in the ball set.
    fn sqrt_range(&self, kernel: Option<&ModularTest>, lo: u64, hi: u64) -> Vec<u64> {
        let q = self.freq.denominator();
        let mut buf = vec![0u64; self.freq.dim()];
        let mut out = Vec::new();
        for n in lo..=hi {
            let r = n % q;
            let sq = arith::mulmod(r, r, q);
            let hit = match kernel {
                Some(k) => {
                    self.freq.multiple_into(sq, &mut buf);
                    k.ball_contains(&buf)
                }
                None => self.contains(&(BigInt::from(n) * BigInt::from(n))),
            };
            if hit {
                out.push(n);
            }
        }
        out
    }
}

pub fn bh_contains(bh: &BohrHammingBall, n: &BigInt) -> bool {
    bh.contains(n)
}

/// Finite integer set with a horizon, serialized with run-length encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SetRepr", into = "SetRepr")]
pub struct IntSet {
    pub horizon: u64,
    pub elems: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
struct SetRepr {
    #[serde(rename = "N")]
    horizon: u64,
    /// `[start, length]` runs of consecutive integers.
    elems: Vec<[i64; 2]>,
}

impl From<IntSet> for SetRepr {
    fn from(s: IntSet) -> Self {
        let mut runs: Vec<[i64; 2]> = Vec::new();
        for &e in &s.elems {
            match runs.last_mut() {
                Some(run) if run[0] + run[1] == e => run[1] += 1,
                _ => runs.push([e, 1]),
            }
        }
        SetRepr {
            horizon: s.horizon,
            elems: runs,
        }
    }
}

impl TryFrom<SetRepr> for IntSet {
    type Error = LabError;
    fn try_from(r: SetRepr) -> Result<Self> {
        let mut elems = Vec::new();
        for [start, len] in r.elems {
            if len < 0 {
                return Err(LabError::Parse("negative run length".into()));
            }
            elems.extend(start..start + len);
        }
        Ok(IntSet::new(r.horizon, elems))
    }
}

impl IntSet {
    pub fn new(horizon: u64, mut elems: Vec<i64>) -> Self {
        elems.sort_unstable();
        elems.dedup();
        IntSet { horizon, elems }
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn contains(&self, n: i64) -> bool {
        self.elems.binary_search(&n).is_ok()
    }
}

/// Result of enumerating `sqrt(BH) cap [1, N]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SqrtSet {
    pub set: IntSet,
    pub density: f64,
}

pub fn sqrt_set_enumerate(bh: &BohrHammingBall, n_max: u64, strategy: Strategy) -> Result<SqrtSet> {
    if n_max < 1 {
        return Err(LabError::InvalidInput("N must be at least 1".into()));
    }
    let kernel = bh.kernel();
    let parts = exec::map_chunks(strategy, n_max as usize, |range| {
        if range.is_empty() {
            return Vec::new();
        }
        bh.sqrt_range(kernel.as_ref(), range.start as u64 + 1, range.end as u64)
    });
    let elems: Vec<i64> = parts.into_iter().flatten().map(|n| n as i64).collect();
    let density = elems.len() as f64 / n_max as f64;
    Ok(SqrtSet {
        set: IntSet {
            horizon: n_max,
            elems,
        },
        density,
    })
}

/// `{ m s : s in S }`.
pub fn dilate(s: &IntSet, m: i64) -> Result<IntSet> {
    if m == 0 {
        return Err(LabError::InvalidInput("dilation factor must be nonzero".into()));
    }
    let horizon = s.horizon.saturating_mul(m.unsigned_abs());
    Ok(IntSet::new(horizon, s.elems.iter().map(|&e| e * m).collect()))
}

/// `{ n : m n in S }`.
pub fn divide(s: &IntSet, m: i64) -> Result<IntSet> {
    if m == 0 {
        return Err(LabError::InvalidInput("divisor must be nonzero".into()));
    }
    Ok(IntSet::new(
        s.horizon / m.unsigned_abs(),
        s.elems.iter().filter(|&&e| e % m == 0).map(|&e| e / m).collect(),
    ))
}

/// `{ s^2 : s in S }`.
pub fn squares(s: &IntSet) -> IntSet {
    IntSet::new(
        s.horizon.saturating_mul(s.horizon),
        s.elems.iter().map(|&e| e * e).collect(),
    )
}

pub fn union(a: &IntSet, b: &IntSet) -> IntSet {
    let mut elems = a.elems.clone();
    elems.extend_from_slice(&b.elems);
    IntSet::new(a.horizon.max(b.horizon), elems)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityReport {
    pub n: u64,
    pub q: u64,
    pub density: f64,
    #[serde(with = "arith::serde_rat")]
    pub measure: Rational,
    pub gap: f64,
}

/// Empirical density of `sqrt(BH) cap [1,N]` against `m(U)`. Diagnostic only;
/// requires a proper ball and `N <= q / 100` so the rational model is far
/// from its period.
pub fn density_vs_measure(bh: &BohrHammingBall, n_max: u64, strategy: Strategy) -> Result<DensityReport> {
    if !bh.is_proper() {
        return Err(LabError::Precondition(
            "density diagnostics need a generating frequency".into(),
        ));
    }
    let q = bh.freq.denominator();
    if n_max.saturating_mul(100) > q {
        return Err(LabError::Precondition(format!(
            "N = {n_max} is too close to the model period q = {q} (need N <= q/100)"
        )));
    }
    let found = sqrt_set_enumerate(bh, n_max, strategy)?;
    let measure = bh.ball.measure();
    let gap = (found.density - arith::to_f64(&measure)).abs();
    Ok(DensityReport {
        n: n_max,
        q,
        density: found.density,
        measure,
        gap,
    })
}

/// Period of `n -> n beta` (the denominator), used by periodicity checks.
pub fn period(bh: &BohrHammingBall) -> u64 {
    bh.freq.denominator()
}

pub fn gcd_all(values: &[u64]) -> u64 {
    values.iter().fold(0u64, |acc, v| acc.gcd(v))
}

pub fn to_i64(n: &BigInt) -> Option<i64> {
    n.to_i64()
}
