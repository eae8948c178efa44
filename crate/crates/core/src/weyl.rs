//! Standard 2-step Weyl systems `S(x, y) = (x + alpha, y + x)` on
//! `T^d x T^d`: exact orbits, triple-correlation integrals, `L3` averages,
//! weighted averages along `n^2 l^2 beta`, and exact finite models.

use std::collections::HashMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::{self, Rational};
use crate::bohr::{Frequency, IntSet};
use crate::error::{check_dim, LabError, Result};
use crate::exec::{self, Strategy};
use crate::harmonic::{Character, CoefficientTable, GridFunction, RationalGrid};
use crate::torus::{Cylinder, ModularTest, TorusPoint};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeylSystem {
    alpha: Frequency,
}

impl WeylSystem {
    pub fn new(alpha: Frequency) -> Self {
        WeylSystem { alpha }
    }

    pub fn dim(&self) -> usize {
        self.alpha.dim()
    }

    pub fn alpha(&self) -> &Frequency {
        &self.alpha
    }

    /// Rational `alpha` that does not stand in for a generating frequency.
    pub fn is_periodic_model(&self) -> bool {
        !self.alpha.is_generating()
    }

    pub fn model_label(&self) -> &'static str {
        if self.is_periodic_model() {
            "periodic model"
        } else {
            "generating"
        }
    }

    pub fn step(&self, x: &TorusPoint, y: &TorusPoint) -> Result<(TorusPoint, TorusPoint)> {
        check_dim(self.dim(), x.dim())?;
        check_dim(self.dim(), y.dim())?;
        Ok((x.add(&self.alpha.point())?, y.add(x)?))
    }

    /// `S^n(x, y) = (x + n alpha, y + n x + C(n,2) alpha)`.
    pub fn orbit(&self, x: &TorusPoint, y: &TorusPoint, n: &BigInt) -> Result<(TorusPoint, TorusPoint)> {
        check_dim(self.dim(), x.dim())?;
        check_dim(self.dim(), y.dim())?;
        let a = self.alpha.point();
        let c2: BigInt = n * (n - BigInt::one()) / BigInt::from(2);
        let x_n = x.add(&a.scale(n))?;
        let y_n = y.add(&x.scale(n))?.add(&a.scale(&c2))?;
        Ok((x_n, y_n))
    }

    /// Checks `chi(S(x,y)) = e(chi . alpha) chi(x,y)` for a character of the
    /// first coordinate.
    pub fn eigenfunction_check(&self, chi: &Character, x: &TorusPoint, y: &TorusPoint) -> Result<bool> {
        check_dim(self.dim(), chi.dim())?;
        let (sx, _) = self.step(x, y)?;
        let lhs = chi.phase(&sx)?;
        let rhs = arith::frac(&(chi.phase(&self.alpha.point())? + chi.phase(x)?));
        Ok(lhs == rhs)
    }
}

pub fn orbit(w: &WeylSystem, x: &TorusPoint, y: &TorusPoint, n: &BigInt) -> Result<(TorusPoint, TorusPoint)> {
    w.orbit(x, y, n)
}

/// `f'(x) = int f(x, y) dy` for a coefficient table on `T^d x T^d`.
pub fn kronecker_projection(f: &CoefficientTable, d: usize) -> Result<CoefficientTable> {
    check_dim(2 * d, f.dim())?;
    CoefficientTable::from_entries(
        d,
        f.iter().filter_map(|(c, v)| {
            let (chi, psi) = c.split(d);
            psi.is_trivial().then_some((chi, *v))
        }),
    )
}

/// Average of a grid function on `Z_q^{2d}` over the second block.
pub fn kronecker_projection_grid(f: &GridFunction, d: usize) -> Result<GridFunction> {
    check_dim(2 * d, f.dim())?;
    let q = f.modulus();
    let block = q.pow(d as u32);
    let values: Vec<Complex64> = f
        .values()
        .chunks(block)
        .map(|c| c.iter().sum::<Complex64>() / block as f64)
        .collect();
    GridFunction::new(d, q, values)
}

/// `int int f'(x) f'(x+s) f'(x+2s) dx ds = sum_t f'^(t)^2 f'^(-2t)`.
pub fn l3_closed_form(f: &CoefficientTable, d: usize) -> Result<Complex64> {
    let fp = kronecker_projection(f, d)?;
    Ok(fp
        .iter()
        .map(|(t, v)| v * v * fp.get(&t.scale(-2)))
        .sum())
}

struct Transient {
    coef: Complex64,
    base: Vec<i64>,
    step: Vec<i64>,
    k1: Vec<i64>,
    n_max: u64,
    phase: [u64; 4],
}

/// Precomputed form of `n -> int f . f(S^n) . f(S^{2n})` for a trigonometric
/// polynomial `f` on `T^d x T^d`.
///
/// Writing `f = sum fhat(j,k) e(j.x + k.y)`, the integral collects the
/// triples with `k1+k2+k3 = 0` and `j1+j2+j3 + n(k2+2k3) = 0`, each with
/// phase `alpha . (n j2 + C(n,2) k2 + 2n j3 + C(2n,2) k3)`. Triples with
/// `k2 = -2 k3` occur for every `n` and reduce to `e(n A + n^2 B)`; the others
/// only for finitely many `n`.
pub struct TripleKernel {
    q: u64,
    stationary: Vec<(Complex64, u64, u64)>,
    transient: Vec<Transient>,
    lookup: HashMap<Vec<i64>, Complex64>,
}

fn dot_mod(a: &[u64], v: &[i64], q: u64) -> u64 {
    let mut acc = 0u64;
    for (&ai, &vi) in a.iter().zip(v) {
        let t = arith::mulmod(ai, arith::reduce_i128(vi as i128, q), q);
        acc = arith::addmod(acc, t, q);
    }
    acc
}

fn binom2_u64(n: u64, q: u64) -> u64 {
    let v = n as u128 * (n as u128).wrapping_sub(1) / 2;
    (v % q as u128) as u64
}

impl TripleKernel {
    pub fn new(alpha: &Frequency, f: &CoefficientTable) -> Result<Self> {
        let d = alpha.dim();
        check_dim(2 * d, f.dim())?;
        let q = alpha.denominator();
        let a = alpha.numerators();
        let terms: Vec<(Vec<i64>, Vec<i64>, Complex64)> = f
            .iter()
            .filter(|(_, v)| v.norm() > 0.0)
            .map(|(c, v)| (c.freq()[..d].to_vec(), c.freq()[d..].to_vec(), *v))
            .collect();
        let lookup: HashMap<Vec<i64>, Complex64> = terms
            .iter()
            .map(|(j, k, v)| {
                let mut key = j.clone();
                key.extend_from_slice(k);
                (key, *v)
            })
            .collect();
        let j_max = terms
            .iter()
            .flat_map(|(j, _, _)| j.iter().map(|v| v.unsigned_abs()))
            .max()
            .unwrap_or(0);
        let mut merged: HashMap<(u64, u64), Complex64> = HashMap::new();
        let mut transient = Vec::new();
        for (j2, k2, c2) in &terms {
            for (j3, k3, c3) in &terms {
                let k1: Vec<i64> = k2.iter().zip(k3).map(|(a, b)| -a - b).collect();
                let base: Vec<i64> = j2.iter().zip(j3).map(|(a, b)| -a - b).collect();
                let step: Vec<i64> = k2.iter().zip(k3).map(|(a, b)| -a - 2 * b).collect();
                if step.iter().all(|&s| s == 0) {
                    let mut key = base.clone();
                    key.extend_from_slice(&k1);
                    let Some(c1) = lookup.get(&key) else { continue };
                    let lin: Vec<i64> = j2.iter().zip(j3).map(|(a, b)| a + 2 * b).collect();
                    let slot = merged
                        .entry((dot_mod(a, &lin, q), dot_mod(a, k3, q)))
                        .or_insert(Complex64::zero());
                    *slot += c1 * c2 * c3;
                } else {
                    let n_max = base
                        .iter()
                        .zip(&step)
                        .filter(|(_, &s)| s != 0)
                        .map(|(&b, &s)| (j_max + b.unsigned_abs()) / s.unsigned_abs())
                        .min()
                        .unwrap_or(0);
                    transient.push(Transient {
                        coef: c2 * c3,
                        base,
                        step,
                        k1,
                        n_max,
                        phase: [dot_mod(a, j2, q), dot_mod(a, k2, q), dot_mod(a, j3, q), dot_mod(a, k3, q)],
                    });
                }
            }
        }
        let mut stationary: Vec<(Complex64, u64, u64)> = merged
            .into_iter()
            .filter(|(_, v)| v.norm() > 0.0)
            .map(|((l, s), v)| (v, l, s))
            .collect();
        stationary.sort_by_key(|&(_, l, s)| (l, s));
        Ok(TripleKernel {
            q,
            stationary,
            transient,
            lookup,
        })
    }

    pub fn stationary_terms(&self) -> usize {
        self.stationary.len()
    }

    pub fn integral(&self, n: u64) -> Complex64 {
        let q = self.q;
        let nm = n % q;
        let n2 = arith::mulmod(nm, nm, q);
        let mut acc = Complex64::zero();
        for &(c, lin, quad) in &self.stationary {
            let ph = arith::addmod(arith::mulmod(nm, lin, q), arith::mulmod(n2, quad, q), q);
            acc += c * arith::e_mod(ph, q);
        }
        for t in &self.transient {
            if n > t.n_max {
                continue;
            }
            let mut key: Vec<i64> = t.base.iter().zip(&t.step).map(|(b, s)| b + n as i64 * s).collect();
            key.extend_from_slice(&t.k1);
            let Some(c1) = self.lookup.get(&key) else { continue };
            let [l2, q2, l3, q3] = t.phase;
            let ph = [
                arith::mulmod(nm, l2, q),
                arith::mulmod(binom2_u64(n, q), q2, q),
                arith::mulmod(2 * nm % q, l3, q),
                arith::mulmod(binom2_u64(2 * n, q), q3, q),
            ]
            .into_iter()
            .fold(0, |acc, v| arith::addmod(acc, v, q));
            acc += c1 * t.coef * arith::e_mod(ph, q);
        }
        acc
    }
}

/// Weight `g(n^2 l^2 beta)` for a normalized cylinder `g`, or `g = 1`.
#[derive(Debug, Clone)]
pub enum Weight {
    One,
    Cylinder {
        freq: Frequency,
        ell: u64,
        cylinder: Cylinder,
        test: std::sync::Arc<ModularTest>,
        inverse_measure: Rational,
    },
}

impl Weight {
    pub fn cylinder(freq: Frequency, cylinder: Cylinder, ell: u64) -> Result<Self> {
        check_dim(freq.dim(), cylinder.dim())?;
        if ell == 0 {
            return Err(LabError::InvalidInput("ell must be positive".into()));
        }
        let test = cylinder
            .modular_test(freq.denominator())
            .ok_or_else(|| LabError::InvalidInput("cylinder parameters too large for exact test".into()))?;
        let inverse_measure = cylinder.measure().recip();
        Ok(Weight::Cylinder {
            freq,
            ell,
            cylinder,
            test: std::sync::Arc::new(test),
            inverse_measure,
        })
    }

    pub fn period(&self) -> u64 {
        match self {
            Weight::One => 1,
            Weight::Cylinder { freq, .. } => freq.denominator(),
        }
    }

    pub fn inverse_measure(&self) -> Rational {
        match self {
            Weight::One => Rational::one(),
            Weight::Cylinder { inverse_measure, .. } => inverse_measure.clone(),
        }
    }

    /// Whether `n^2 l^2 beta` lies in the cylinder.
    pub fn hits(&self, n: u64, scratch: &mut Vec<u64>) -> bool {
        match self {
            Weight::One => true,
            Weight::Cylinder { freq, ell, test, .. } => {
                let q = freq.denominator();
                let nm = arith::mulmod(n % q, *ell % q, q);
                let m = arith::mulmod(nm, nm, q);
                scratch.resize(freq.dim(), 0);
                freq.multiple_into(m, scratch);
                test.cylinder_contains(scratch)
            }
        }
    }

    pub fn value_f64(&self, n: u64, scratch: &mut Vec<u64>) -> f64 {
        if self.hits(n, scratch) {
            match self {
                Weight::One => 1.0,
                Weight::Cylinder { inverse_measure, .. } => arith::to_f64(inverse_measure),
            }
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TraceMeta {
    pub seed: Option<u64>,
    pub q: u64,
    pub frequencies: Vec<String>,
    pub model: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AveragesTrace {
    pub checkpoints: Vec<(u64, f64)>,
    pub closed_form: Option<f64>,
    pub meta: TraceMeta,
}

impl AveragesTrace {
    pub fn final_n(&self) -> u64 {
        self.checkpoints.last().map_or(0, |c| c.0)
    }

    pub fn final_value(&self) -> Option<f64> {
        self.checkpoints.last().map(|c| c.1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,value,closed_form,gap\n");
        for &(n, v) in &self.checkpoints {
            match self.closed_form {
                Some(c) => writeln!(out, "{n},{v:.15e},{c:.15e},{:.15e}", (v - c).abs()),
                None => writeln!(out, "{n},{v:.15e},,"),
            }
            .expect("write to string");
        }
        out
    }
}

/// Geometric ladder of checkpoints ending at `n_max`.
pub fn ladder(n_max: u64, points: usize) -> Vec<u64> {
    let mut out: Vec<u64> = (1..=points)
        .map(|i| {
            let t = i as f64 / points as f64;
            ((n_max as f64).powf(t)).round().max(1.0) as u64
        })
        .collect();
    out.push(n_max);
    out.sort_unstable();
    out.dedup();
    out.retain(|&n| n >= 1 && n <= n_max);
    out
}

/// Running averages `(1/N) sum_{n=1}^N term(n)` at each checkpoint.
///
/// Terms are evaluated in parallel chunks but summed in order with
/// compensated summation, so the trace does not depend on the strategy.
pub fn running_average(
    checkpoints: &[u64],
    strategy: Strategy,
    term: impl Fn(u64) -> f64 + Sync + Send,
) -> Result<Vec<(u64, f64)>> {
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) || checkpoints.first() == Some(&0) {
        return Err(LabError::InvalidInput("checkpoints must be positive and increasing".into()));
    }
    let n_max = *checkpoints.last().unwrap_or(&0) as usize;
    let parts = exec::map_chunks(strategy, n_max, |r| {
        r.map(|i| term(i as u64 + 1)).collect::<Vec<f64>>()
    });
    let mut out = Vec::with_capacity(checkpoints.len());
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let mut next = checkpoints.iter().peekable();
    let mut n = 0u64;
    for v in parts.into_iter().flatten() {
        n += 1;
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
        if next.peek() == Some(&&n) {
            out.push((n, (sum + comp) / n as f64));
            next.next();
        }
    }
    Ok(out)
}

fn trig_meta(w: &WeylSystem, weight: &Weight) -> TraceMeta {
    let mut frequencies = vec![format!("alpha={:?}", w.alpha().point())];
    if let Weight::Cylinder { freq, ell, .. } = weight {
        frequencies.push(format!("beta={:?}", freq.point()));
        frequencies.push(format!("ell={ell}"));
    }
    TraceMeta {
        seed: None,
        q: w.alpha().denominator(),
        frequencies,
        model: w.model_label().into(),
    }
}

/// Trace of `(1/N) sum g(n^2 l^2 beta) int f . f(S^n) . f(S^2n)` for a
/// trigonometric polynomial; the closed form is the Kronecker `L3` value.
pub fn weighted_average(
    w: &WeylSystem,
    f: &CoefficientTable,
    weight: &Weight,
    checkpoints: &[u64],
    strategy: Strategy,
) -> Result<AveragesTrace> {
    let kernel = TripleKernel::new(w.alpha(), f)?;
    let closed = l3_closed_form(f, w.dim())?;
    let checkpoints = running_average(checkpoints, strategy, |n| {
        let mut scratch = Vec::new();
        let g = weight.value_f64(n, &mut scratch);
        if g == 0.0 {
            0.0
        } else {
            g * kernel.integral(n).re
        }
    })?;
    Ok(AveragesTrace {
        checkpoints,
        closed_form: Some(closed.re),
        meta: trig_meta(w, weight),
    })
}

/// `L3` trace: the weighted average with `g = 1`.
pub fn l3_average(w: &WeylSystem, f: &CoefficientTable, checkpoints: &[u64], strategy: Strategy) -> Result<AveragesTrace> {
    weighted_average(w, f, &Weight::One, checkpoints, strategy)
}

/// Exact finite models on `Z_q^d` (rotations) and `Z_q^d x Z_q^d` (Weyl).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FiniteSystem {
    Rotation { q: u64, shift: Vec<u64> },
    Weyl { q: u64, alpha: Vec<u64> },
}

impl FiniteSystem {
    pub fn rotation(q: u64, shift: Vec<u64>) -> Result<Self> {
        Self::check(q, &shift)?;
        Ok(FiniteSystem::Rotation {
            q,
            shift: shift.into_iter().map(|v| v % q).collect(),
        })
    }

    pub fn weyl(q: u64, alpha: Vec<u64>) -> Result<Self> {
        Self::check(q, &alpha)?;
        Ok(FiniteSystem::Weyl {
            q,
            alpha: alpha.into_iter().map(|v| v % q).collect(),
        })
    }

    /// The Weyl model on `Z_q` grids for a rational `alpha` whose denominator divides `q`.
    pub fn weyl_from(alpha: &Frequency, q: u64) -> Result<Self> {
        let nums = alpha
            .point()
            .numerators_over(q)
            .ok_or_else(|| LabError::InvalidInput(format!("denominator of alpha does not divide {q}")))?;
        Self::weyl(q, nums)
    }

    fn check(q: u64, v: &[u64]) -> Result<()> {
        if q < 1 || q > 1 << 16 {
            return Err(LabError::InvalidInput(format!("grid modulus {q} out of range")));
        }
        if v.is_empty() {
            return Err(LabError::InvalidInput("empty frequency".into()));
        }
        Ok(())
    }

    pub fn modulus(&self) -> u64 {
        match self {
            FiniteSystem::Rotation { q, .. } | FiniteSystem::Weyl { q, .. } => *q,
        }
    }

    /// Dimension of the grid the system acts on.
    pub fn grid_dim(&self) -> usize {
        match self {
            FiniteSystem::Rotation { shift, .. } => shift.len(),
            FiniteSystem::Weyl { alpha, .. } => 2 * alpha.len(),
        }
    }

    /// Period of `n -> T^n` (up to which triple correlations repeat).
    pub fn period(&self) -> u64 {
        match self {
            FiniteSystem::Rotation { q, .. } => *q,
            FiniteSystem::Weyl { q, .. } => {
                if q % 2 == 1 {
                    *q
                } else {
                    2 * q
                }
            }
        }
    }

    /// `T^n z` on grid coordinates.
    pub fn image(&self, n: u64, z: &[usize], out: &mut [usize]) {
        match self {
            FiniteSystem::Rotation { q, shift } => {
                let nm = n % q;
                for ((o, &zi), &s) in out.iter_mut().zip(z).zip(shift) {
                    *o = arith::addmod(zi as u64, arith::mulmod(nm, s, *q), *q) as usize;
                }
            }
            FiniteSystem::Weyl { q, alpha } => {
                let d = alpha.len();
                let nm = n % q;
                let c2 = binom2_u64(n, *q);
                for i in 0..d {
                    let x = z[i] as u64;
                    let y = z[d + i] as u64;
                    out[i] = arith::addmod(x, arith::mulmod(nm, alpha[i], *q), *q) as usize;
                    let shift = arith::addmod(arith::mulmod(nm, x, *q), arith::mulmod(c2, alpha[i], *q), *q);
                    out[d + i] = arith::addmod(y, shift, *q) as usize;
                }
            }
        }
    }

    fn check_grid(&self, f: &RationalGrid) -> Result<()> {
        check_dim(self.grid_dim(), f.dim())?;
        if f.modulus() as u64 != self.modulus() {
            return Err(LabError::InvalidInput(format!(
                "grid modulus {} does not match system modulus {}",
                f.modulus(),
                self.modulus()
            )));
        }
        Ok(())
    }

    /// `sum_z f(z) f(T^n z) f(T^2n z)` over numerators (unnormalized).
    pub fn triple_sum(&self, f: &RationalGrid, n: u64) -> Result<i128> {
        self.check_grid(f)?;
        Ok(self.triple_sum_unchecked(f, n))
    }

    fn triple_sum_unchecked(&self, f: &RationalGrid, n: u64) -> i128 {
        let dim = self.grid_dim();
        let nums = f.numerators();
        let mut z = vec![0usize; dim];
        let mut z1 = vec![0usize; dim];
        let mut z2 = vec![0usize; dim];
        let mut acc = 0i128;
        for (i, &v) in nums.iter().enumerate() {
            if v == 0 {
                continue;
            }
            f.unindex_into(i, &mut z);
            self.image(n, &z, &mut z1);
            let a = nums[f.index(&z1)];
            if a == 0 {
                continue;
            }
            self.image(2 * n, &z, &mut z2);
            acc += v as i128 * a as i128 * nums[f.index(&z2)] as i128;
        }
        acc
    }

    fn normalizer(&self, f: &RationalGrid) -> BigInt {
        let den = BigInt::from(f.denominator());
        &den * &den * &den * BigInt::from(f.len())
    }

    /// `int f . f(T^n) . f(T^2n)` exactly.
    pub fn triple_correlation(&self, f: &RationalGrid, n: u64) -> Result<Rational> {
        let s = self.triple_sum(f, n)?;
        Ok(Rational::new(BigInt::from(s), self.normalizer(f)))
    }

    /// Unnormalized triple sums for every residue modulo the period.
    pub fn residue_table(&self, f: &RationalGrid, strategy: Strategy) -> Result<Vec<i128>> {
        self.check_grid(f)?;
        let p = self.period();
        let residues: Vec<u64> = (0..p).collect();
        Ok(exec::map_items(strategy, &residues, |&n| self.triple_sum_unchecked(f, n)))
    }

    /// Full-period average of the triple correlation (the exact `L3` of the model).
    pub fn l3_exact(&self, f: &RationalGrid, strategy: Strategy) -> Result<Rational> {
        let table = self.residue_table(f, strategy)?;
        let s: i128 = table.iter().sum();
        Ok(Rational::new(
            BigInt::from(s),
            self.normalizer(f) * BigInt::from(self.period()),
        ))
    }

    /// Full-period weighted average `(1/P) sum_{n<P} g(n^2 l^2 beta) int f . f(T^n) . f(T^2n)`
    /// with `P = lcm(period, weight period)`.
    pub fn weighted_average_exact(&self, f: &RationalGrid, weight: &Weight, strategy: Strategy) -> Result<Rational> {
        let table = self.residue_table(f, strategy)?;
        let period = self.period();
        let big_p = arith::lcm_u64(period, weight.period())
            .filter(|&p| p <= 1 << 34)
            .ok_or_else(|| LabError::InvalidInput("combined period too large".into()))?;
        let counts = residue_hits(weight, period, big_p, strategy);
        let s: BigInt = counts
            .iter()
            .zip(&table)
            .map(|(&c, &t)| BigInt::from(c) * BigInt::from(t))
            .sum();
        Ok(Rational::new(s, self.normalizer(f) * BigInt::from(big_p)) * weight.inverse_measure())
    }

    /// Weighted average, the weight's own mean and `L3`, all over one full
    /// period and from a single residue table.
    pub fn weighted_summary_exact(&self, f: &RationalGrid, weight: &Weight, strategy: Strategy) -> Result<WeightedSummary> {
        let table = self.residue_table(f, strategy)?;
        let period = self.period();
        let big_p = arith::lcm_u64(period, weight.period())
            .filter(|&p| p <= 1 << 34)
            .ok_or_else(|| LabError::InvalidInput("combined period too large".into()))?;
        let counts = residue_hits(weight, period, big_p, strategy);
        let s: BigInt = counts
            .iter()
            .zip(&table)
            .map(|(&c, &t)| BigInt::from(c) * BigInt::from(t))
            .sum();
        let hits: u64 = counts.iter().sum();
        let norm = self.normalizer(f);
        let total: i128 = table.iter().sum();
        let inv = weight.inverse_measure();
        Ok(WeightedSummary {
            weighted: Rational::new(s, &norm * BigInt::from(big_p)) * &inv,
            weight_mean: Rational::new(BigInt::from(hits), BigInt::from(big_p)) * &inv,
            l3: Rational::new(BigInt::from(total), norm * BigInt::from(period)),
        })
    }

    /// `mu(A cap T^-n A cap T^-2n A)` for the indicator grid `a`.
    pub fn intersection(&self, a: &RationalGrid, n: u64) -> Result<Rational> {
        if !a.is_indicator() {
            return Err(LabError::InvalidInput("set must be given by an indicator grid".into()));
        }
        self.triple_correlation(a, n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedSummary {
    #[serde(with = "arith::serde_rat")]
    pub weighted: Rational,
    /// `(1/P) sum g(n^2 l^2 beta)`; equals one only in the limit of fine grids.
    #[serde(with = "arith::serde_rat")]
    pub weight_mean: Rational,
    #[serde(with = "arith::serde_rat")]
    pub l3: Rational,
}

impl WeightedSummary {
    /// Weighted average with the weight renormalized to mean one on the model.
    pub fn normalized(&self) -> Option<Rational> {
        if self.weight_mean.is_zero() {
            None
        } else {
            Some(&self.weighted / &self.weight_mean)
        }
    }
}

/// `counts[r] = #{ n < big_p : n = r mod period, weight hits n }`.
fn residue_hits(weight: &Weight, period: u64, big_p: u64, strategy: Strategy) -> Vec<u64> {
    let parts = exec::map_chunks(strategy, big_p as usize, |r| {
        let mut counts = vec![0u64; period as usize];
        let mut scratch = Vec::new();
        for n in r {
            if weight.hits(n as u64, &mut scratch) {
                counts[n % period as usize] += 1;
            }
        }
        counts
    });
    let mut counts = vec![0u64; period as usize];
    for part in parts {
        for (c, p) in counts.iter_mut().zip(part) {
            *c += p;
        }
    }
    counts
}

/// `int int f'(x) f'(x+s) f'(x+2s) dx ds` on `Z_q^d` for `f` on `Z_q^{2d}`.
pub fn kronecker_form_exact(f: &RationalGrid, d: usize) -> Result<Rational> {
    check_dim(2 * d, f.dim())?;
    let fp = f.average_trailing(d)?;
    crate::roth::roth_form_exact(&fp, &fp, &fp)
}

/// Trace of weighted averages on an exact finite Weyl model.
pub fn weighted_average_grid(
    sys: &FiniteSystem,
    f: &RationalGrid,
    weight: &Weight,
    checkpoints: &[u64],
    strategy: Strategy,
) -> Result<AveragesTrace> {
    let table = sys.residue_table(f, strategy)?;
    let norm = arith::to_f64(&Rational::new(BigInt::one(), sys.normalizer(f)));
    let period = sys.period();
    let closed = match sys {
        FiniteSystem::Weyl { alpha, .. } => Some(arith::to_f64(&kronecker_form_exact(f, alpha.len())?)),
        FiniteSystem::Rotation { .. } => None,
    };
    let checkpoints = running_average(checkpoints, strategy, |n| {
        let mut scratch = Vec::new();
        let g = weight.value_f64(n, &mut scratch);
        if g == 0.0 {
            0.0
        } else {
            g * table[(n % period) as usize].to_f64().unwrap_or(f64::NAN) * norm
        }
    })?;
    Ok(AveragesTrace {
        checkpoints,
        closed_form: closed,
        meta: TraceMeta {
            seed: None,
            q: sys.modulus(),
            frequencies: vec![format!("{sys:?}")],
            model: "periodic model".into(),
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IntersectionScan {
    pub best_n: i64,
    #[serde(with = "arith::serde_rat")]
    pub best: Rational,
    pub worst_n: i64,
    #[serde(with = "arith::serde_rat")]
    pub worst: Rational,
    pub count: usize,
    #[serde(with = "arith::serde_rat")]
    pub mean: Rational,
}

/// Scan `n in S cap [0, N]` for `mu(A cap T^-n A cap T^-2n A)`; reports the
/// maximum (first achiever), the minimum and the mean.
pub fn min_triple_intersection(
    sys: &FiniteSystem,
    a: &RationalGrid,
    s: &IntSet,
    n_max: u64,
    strategy: Strategy,
) -> Result<IntersectionScan> {
    if !a.is_indicator() {
        return Err(LabError::InvalidInput("set must be given by an indicator grid".into()));
    }
    sys.check_grid(a)?;
    let ns: Vec<i64> = s
        .elems
        .iter()
        .copied()
        .filter(|&n| n >= 0 && n as u64 <= n_max)
        .collect();
    if ns.is_empty() {
        return Err(LabError::EmptyDomain(format!("S has no elements in [0, {n_max}]")));
    }
    let period = sys.period();
    let mut residues: Vec<u64> = ns.iter().map(|&n| n as u64 % period).collect();
    residues.sort_unstable();
    residues.dedup();
    let sums = exec::map_items(strategy, &residues, |&r| sys.triple_sum_unchecked(a, r));
    let by_residue: HashMap<u64, i128> = residues.into_iter().zip(sums).collect();
    let norm = sys.normalizer(a);
    let value = |n: i64| by_residue[&(n as u64 % period)];
    let mut best = (ns[0], value(ns[0]));
    let mut worst = best;
    let mut total = BigInt::zero();
    for &n in &ns {
        let v = value(n);
        if v > best.1 {
            best = (n, v);
        }
        if v < worst.1 {
            worst = (n, v);
        }
        total += v;
    }
    let r = |v: i128| Rational::new(BigInt::from(v), norm.clone());
    Ok(IntersectionScan {
        best_n: best.0,
        best: r(best.1),
        worst_n: worst.0,
        worst: r(worst.1),
        count: ns.len(),
        mean: Rational::new(total, norm.clone() * BigInt::from(ns.len())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn freq(items: &[&str]) -> Frequency {
        Frequency::parse(items, false).unwrap()
    }

    #[test]
    fn orbit_matches_iteration() {
        let w = WeylSystem::new(freq(&["1/5"]));
        let z = TorusPoint::zero(1);
        let (x, y) = w.orbit(&z, &z, &BigInt::from(3)).unwrap();
        assert_eq!((x.coord(0).clone(), y.coord(0).clone()), (rat(3, 5), rat(3, 5)));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let w = WeylSystem::new(Frequency::from_numerators(&[rng.random_range(0..97), rng.random_range(0..97)], 97, false).unwrap());
            let x0 = TorusPoint::from_numerators(&[rng.random_range(0..13), 3], 13).unwrap();
            let y0 = TorusPoint::from_numerators(&[rng.random_range(0..11), 5], 11).unwrap();
            let n = rng.random_range(0..60);
            let (mut x, mut y) = (x0.clone(), y0.clone());
            for _ in 0..n {
                (x, y) = w.step(&x, &y).unwrap();
            }
            assert_eq!(w.orbit(&x0, &y0, &BigInt::from(n)).unwrap(), (x, y));
        }
    }

    #[test]
    fn eigenfunctions_of_first_coordinate() {
        let w = WeylSystem::new(freq(&["2/7", "3/11"]));
        let x = TorusPoint::parse(&["1/3", "1/4"]).unwrap();
        let y = TorusPoint::parse(&["1/5", "0"]).unwrap();
        assert!(w.eigenfunction_check(&Character::new(vec![3, -2]), &x, &y).unwrap());
    }

    fn random_table(rng: &mut ChaCha8Rng, d: usize, terms: usize, range: i64) -> CoefficientTable {
        let mut t = CoefficientTable::new(2 * d);
        for _ in 0..terms {
            let c: Vec<i64> = (0..2 * d).map(|_| rng.random_range(-range..=range)).collect();
            let v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            t.add_to(Character::new(c), v).unwrap();
        }
        t
    }

    #[test]
    fn triple_kernel_matches_grid_summation() {
        // |j1+j2+j3 + n(k2+2k3)| <= 6 + 6n < q, so the grid sum has no aliasing
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = 101u64;
        for _ in 0..5 {
            let a = rng.random_range(1..q);
            let alpha = Frequency::from_numerators(&[a as i64], q, false).unwrap();
            let t = random_table(&mut rng, 1, 6, 2);
            let kernel = TripleKernel::new(&alpha, &t).unwrap();
            let grid = GridFunction::from_fn(2, q as usize, |z| {
                t.eval_f64(&[z[0] as f64 / q as f64, z[1] as f64 / q as f64])
            })
            .unwrap();
            let sys = FiniteSystem::weyl(q, vec![a]).unwrap();
            for n in 0..15 {
                let mut direct = Complex64::zero();
                let mut z1 = [0usize; 2];
                let mut z2 = [0usize; 2];
                for i in 0..grid.len() {
                    let z = grid.unindex(i);
                    sys.image(n, &z, &mut z1);
                    sys.image(2 * n, &z, &mut z2);
                    direct += grid.values()[i] * grid.at(&z1) * grid.at(&z2);
                }
                direct /= grid.len() as f64;
                assert!((direct - kernel.integral(n)).norm() < 1e-9, "n={n}");
            }
        }
    }

    #[test]
    fn projections() {
        let mut t = CoefficientTable::new(2);
        t.insert(Character::new(vec![0, 1]), Complex64::new(0.5, 0.0)).unwrap();
        t.insert(Character::new(vec![0, -1]), Complex64::new(0.5, 0.0)).unwrap();
        assert!(kronecker_projection(&t, 1).unwrap().is_empty());
        let mut h = CoefficientTable::new(2);
        h.insert(Character::new(vec![2, 0]), Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(kronecker_projection(&h, 1).unwrap().get(&Character::new(vec![2])), Complex64::new(1.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = GridFunction::from_fn(2, 5, |_| Complex64::new(rng.random_range(0.0..1.0), 0.0)).unwrap();
        let p = kronecker_projection_grid(&g, 1).unwrap();
        for x in 0..5 {
            let mean: Complex64 = (0..5).map(|y| g.at(&[x, y])).sum::<Complex64>() / 5.0;
            assert!((p.at(&[x]) - mean).norm() < 1e-15);
        }
    }

    #[test]
    fn rotation_and_constants() {
        let sys = FiniteSystem::rotation(5, vec![1]).unwrap();
        let a = RationalGrid::indicator(1, 5, |x| x[0] == 0).unwrap();
        assert_eq!(sys.l3_exact(&a, Strategy::Sequential).unwrap(), rat(1, 25));
        let c = RationalGrid::constant(2, 7, &rat(2, 3)).unwrap();
        let w = FiniteSystem::weyl(7, vec![2]).unwrap();
        assert_eq!(w.l3_exact(&c, Strategy::Parallel).unwrap(), rat(8, 27));
        assert_eq!(kronecker_form_exact(&c, 1).unwrap(), rat(8, 27));
        let half = FiniteSystem::rotation(4, vec![2]).unwrap();
        let quarter = RationalGrid::indicator(1, 4, |x| x[0] == 0).unwrap();
        assert_eq!(half.intersection(&quarter, 1).unwrap(), rat(0, 1));
        assert_eq!(half.intersection(&quarter, 0).unwrap(), rat(1, 4));
    }

    #[test]
    fn weighted_average_with_unit_weight_is_l3() {
        let w = WeylSystem::new(freq(&["3/101"]));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = random_table(&mut rng, 1, 5, 2);
        let cps = ladder(500, 5);
        let a = l3_average(&w, &f, &cps, Strategy::Parallel).unwrap();
        let b = weighted_average(&w, &f, &Weight::One, &cps, Strategy::Sequential).unwrap();
        assert_eq!(a.checkpoints, b.checkpoints);
        assert!(a.to_csv().starts_with("N,value,closed_form,gap\n"));
    }

    #[test]
    fn grid_trace_at_period_equals_exact_average() {
        let sys = FiniteSystem::weyl(7, vec![2]).unwrap();
        let f = RationalGrid::indicator(2, 7, |z| (z[0] * 3 + z[1]) % 7 < 3).unwrap();
        let beta = freq(&["1/3", "2/5"]);
        let cyl = Cylinder::new(2, vec![0], TorusPoint::parse(&["1/3", "0"]).unwrap(), rat(1, 4)).unwrap();
        let weight = Weight::cylinder(beta, cyl, 1).unwrap();
        let exact = sys.weighted_average_exact(&f, &weight, Strategy::Parallel).unwrap();
        let p = arith::lcm_u64(sys.period(), weight.period()).unwrap();
        let trace = weighted_average_grid(&sys, &f, &weight, &[p], Strategy::Sequential).unwrap();
        assert!((trace.final_value().unwrap() - arith::to_f64(&exact)).abs() < 1e-12);
    }

    #[test]
    fn intersection_scan_finds_identity() {
        let sys = FiniteSystem::rotation(5, vec![1]).unwrap();
        let a = RationalGrid::indicator(1, 5, |x| x[0] < 2).unwrap();
        let s = IntSet::new(5, vec![0, 1, 2, 3, 4, 5]);
        let scan = min_triple_intersection(&sys, &a, &s, 5, Strategy::Parallel).unwrap();
        assert_eq!((scan.best_n, scan.best.clone()), (0, rat(2, 5)));
        assert_eq!(scan.worst, rat(0, 1));
        let none = IntSet::new(5, vec![]);
        assert!(min_triple_intersection(&sys, &a, &none, 5, Strategy::Parallel).is_err());
    }
}
