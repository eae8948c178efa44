//! Closed subgroups of tori, cyclic closures in rational models, affine
//! joinings and the joining convolution `f *_G g`.
//!
//! A closed subgroup is stored through its annihilator `M`, a lattice of
//! integer frequencies: `H = { x : m.x in Z for all m in M }`. Then
//! `int_{H+t} e(m.x) = [m in M] e(m.t)`, which is all the integration the
//! module needs. Finite models use numerators over a common denominator `q`.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::ser::{Error as _, SerializeStruct};
use serde::{Deserialize, Serialize, Serializer};

use crate::arith::{self, Rational};
use crate::cyclotomic::QCyclo;
use crate::error::{check_dim, LabError, Result};
use crate::harmonic::{
    annihilating_cylinder, cylinder_fourier, top_k_filtered, Character, CoefficientTable, RationalGrid, TopK,
};
use crate::irrational::Surd;
use crate::lattice::{self, Row};
use crate::torus::{ApproxHammingBall, Cylinder, TorusPoint};

/// Largest group order enumerated element by element.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

/// Largest period scanned when counting residues of `n^2`.
pub const PERIOD_LIMIT: u64 = 1 << 26;

fn big_row(v: &[u64]) -> Row {
    v.iter().map(|&x| BigInt::from(x)).collect()
}

fn i64_row(v: &[i64]) -> Row {
    v.iter().map(|&x| BigInt::from(x)).collect()
}

fn dot_rat(m: &[BigInt], t: &[Rational]) -> Rational {
    m.iter()
        .zip(t)
        .fold(Rational::zero(), |acc, (a, b)| acc + Rational::from_integer(a.clone()) * b)
}

fn dot_i64(m: &[i64], t: &[Rational]) -> Rational {
    m.iter()
        .zip(t)
        .fold(Rational::zero(), |acc, (&a, b)| acc + Rational::from_integer(BigInt::from(a)) * b)
}

fn reduce_vec(v: &[Rational]) -> Vec<Rational> {
    v.iter().map(arith::frac).collect()
}

fn lcm_denominators<'a>(vals: impl Iterator<Item = &'a Rational>) -> BigInt {
    vals.fold(BigInt::one(), |acc, r| acc.lcm(r.denom()))
}

fn to_order(q: &BigInt, what: &str) -> Result<u64> {
    q.to_u64()
        .filter(|&v| v <= crate::cyclotomic::MAX_ORDER)
        .ok_or_else(|| LabError::InvalidInput(format!("{what} denominator {q} too large")))
}

/// Solve a square nonsingular rational system.
fn solve_rational(a: &[Vec<Rational>], b: &[Rational]) -> Option<Vec<Rational>> {
    let n = a.len();
    let mut m: Vec<Vec<Rational>> = a
        .iter()
        .zip(b)
        .map(|(row, v)| {
            let mut r = row.clone();
            r.push(v.clone());
            r
        })
        .collect();
    for col in 0..n {
        let p = (col..n).find(|&i| !m[i][col].is_zero())?;
        m.swap(p, col);
        let inv = Rational::one() / &m[col][col];
        for v in m[col].iter_mut() {
            *v *= &inv;
        }
        for i in 0..n {
            if i != col && !m[i][col].is_zero() {
                let f = m[i][col].clone();
                let pivot = m[col].clone();
                for (x, y) in m[i].iter_mut().zip(&pivot) {
                    *x -= &f * y;
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n].clone()).collect())
}

// ---------------------------------------------------------------------------

/// Subgroup of `(Z_q)^n` given by generators, `n = sum(dims)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgroupModel {
    q: u64,
    dims: Vec<usize>,
    basis: Vec<Vec<u64>>,
}

impl SubgroupModel {
    pub fn generated(q: u64, dims: Vec<usize>, gens: Vec<Vec<u64>>) -> Result<Self> {
        if q == 0 || q > arith::MAX_MODULUS {
            return Err(LabError::InvalidInput(format!("modulus {q} out of range")));
        }
        let n: usize = dims.iter().sum();
        for g in &gens {
            check_dim(n, g.len())?;
        }
        let basis = gens
            .into_iter()
            .map(|g| g.into_iter().map(|v| v % q).collect())
            .collect();
        Ok(SubgroupModel { q, dims, basis })
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ambient_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn generators(&self) -> &[Vec<u64>] {
        &self.basis
    }

    /// Numerator lattice: generators plus `q Z^n`, in Hermite form.
    pub fn lattice(&self) -> Vec<Row> {
        let n = self.ambient_dim();
        let mut rows: Vec<Row> = self.basis.iter().map(|g| big_row(g)).collect();
        for i in 0..n {
            let mut e = vec![BigInt::zero(); n];
            e[i] = BigInt::from(self.q);
            rows.push(e);
        }
        lattice::hnf(&rows)
    }

    pub fn order(&self) -> BigInt {
        let n = self.ambient_dim() as u32;
        BigInt::from(self.q).pow(n) / lattice::det(&self.lattice())
    }

    pub fn contains(&self, v: &[u64]) -> bool {
        v.len() == self.ambient_dim() && lattice::contains(&self.lattice(), &big_row(v))
    }

    /// Sorted element list, by breadth-first closure under the generators.
    pub fn elements(&self) -> Result<Vec<Vec<u64>>> {
        let order = self.order();
        if order > BigInt::from(ENUMERATION_LIMIT) {
            return Err(LabError::InvalidInput(format!(
                "group of order {order} is above the enumeration limit"
            )));
        }
        let n = self.ambient_dim();
        let zero = vec![0u64; n];
        let mut seen: HashSet<Vec<u64>> = HashSet::new();
        let mut queue = VecDeque::new();
        seen.insert(zero.clone());
        queue.push_back(zero);
        while let Some(x) = queue.pop_front() {
            for g in &self.basis {
                let y: Vec<u64> = x.iter().zip(g).map(|(a, b)| arith::addmod(*a, *b, self.q)).collect();
                if seen.insert(y.clone()) {
                    queue.push_back(y);
                }
            }
        }
        let mut out: Vec<Vec<u64>> = seen.into_iter().collect();
        out.sort();
        Ok(out)
    }

    /// Image under the coordinate projection onto `coords`.
    pub fn project(&self, coords: &[usize]) -> Result<SubgroupModel> {
        let n = self.ambient_dim();
        if let Some(&bad) = coords.iter().find(|&&i| i >= n) {
            return Err(LabError::InvalidInput(format!("coordinate {bad} out of range")));
        }
        let gens = self
            .basis
            .iter()
            .map(|g| coords.iter().map(|&i| g[i]).collect())
            .collect();
        SubgroupModel::generated(self.q, vec![coords.len()], gens)
    }

    pub fn to_closed(&self) -> ClosedSubgroup {
        let n = self.ambient_dim();
        let q = BigInt::from(self.q);
        let vectors: Vec<Vec<Rational>> = self
            .basis
            .iter()
            .map(|g| g.iter().map(|&v| Rational::new(BigInt::from(v), q.clone())).collect())
            .collect();
        ClosedSubgroup::from_relations(self.dims.clone(), lattice::relation_lattice(&vectors, n))
    }

    /// Equality as subgroups of the torus, allowing different moduli.
    pub fn same_subgroup(&self, other: &SubgroupModel) -> bool {
        self.to_closed() == other.to_closed()
    }
}

/// Closure of `{ n u : n in Z }` for a rational point `u`.
pub fn cyclic_closure(u: &TorusPoint) -> Result<SubgroupModel> {
    let (nums, q) = u
        .numerators()
        .ok_or_else(|| LabError::InvalidInput("denominator too large".into()))?;
    SubgroupModel::generated(q, vec![u.dim()], vec![nums])
}

// ---------------------------------------------------------------------------

/// `{ x in T^n : m.x in Z for m in M }` with `M` in Hermite form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosedSubgroup {
    dims: Vec<usize>,
    relations: Vec<Row>,
}

impl ClosedSubgroup {
    pub fn from_relations(dims: Vec<usize>, rows: Vec<Row>) -> Self {
        ClosedSubgroup {
            dims,
            relations: lattice::hnf(&rows),
        }
    }

    pub fn full(dims: Vec<usize>) -> Self {
        ClosedSubgroup { dims, relations: vec![] }
    }

    pub fn trivial(dims: Vec<usize>) -> Self {
        let n = dims.iter().sum();
        ClosedSubgroup {
            dims,
            relations: lattice::identity(n),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ambient_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn relations(&self) -> &[Row] {
        &self.relations
    }

    /// Dimension as a Lie group.
    pub fn dimension(&self) -> usize {
        self.ambient_dim() - self.relations.len()
    }

    pub fn is_finite(&self) -> bool {
        self.dimension() == 0
    }

    /// Number of connected components, `[sat(M) : M]`.
    pub fn component_count(&self) -> BigInt {
        if self.relations.is_empty() {
            return BigInt::one();
        }
        let sat = lattice::saturate(&self.relations, self.ambient_dim());
        lattice::index_in(&self.relations, &sat).expect("equal rank")
    }

    pub fn is_connected(&self) -> bool {
        self.component_count().is_one()
    }

    pub fn annihilates(&self, m: &[i64]) -> bool {
        m.len() == self.ambient_dim() && lattice::contains(&self.relations, &i64_row(m))
    }

    /// `t - s` lies in the subgroup.
    pub fn same_coset(&self, t: &[Rational], s: &[Rational]) -> bool {
        let diff: Vec<Rational> = t.iter().zip(s).map(|(a, b)| a - b).collect();
        self.relations.iter().all(|m| dot_rat(m, &diff).is_integer())
    }

    /// Finite model of a finite subgroup: generators are the columns of `M^-1`.
    pub fn to_model(&self) -> Result<SubgroupModel> {
        if !self.is_finite() {
            return Err(LabError::InvalidInput(format!(
                "subgroup has dimension {}",
                self.dimension()
            )));
        }
        let n = self.ambient_dim();
        let a: Vec<Vec<Rational>> = self
            .relations
            .iter()
            .map(|r| r.iter().map(|v| Rational::from_integer(v.clone())).collect())
            .collect();
        let mut cols = Vec::with_capacity(n);
        for i in 0..n {
            let e: Vec<Rational> = (0..n).map(|j| if i == j { Rational::one() } else { Rational::zero() }).collect();
            cols.push(solve_rational(&a, &e).expect("full rank"));
        }
        let q = lcm_denominators(cols.iter().flatten());
        let qu = q
            .to_u64()
            .ok_or_else(|| LabError::InvalidInput(format!("exponent {q} too large")))?;
        let qr = Rational::from_integer(q);
        let gens = cols
            .iter()
            .map(|c| {
                c.iter()
                    .map(|v| {
                        let num = arith::frac(v) * &qr;
                        num.to_integer().to_u64().expect("reduced")
                    })
                    .collect()
            })
            .collect();
        SubgroupModel::generated(qu, self.dims.clone(), gens)
    }

    /// Exponent of a finite subgroup (the least `q` with `q x = 0` throughout).
    pub fn exponent(&self) -> Result<u64> {
        let model = self.to_model()?;
        let mut q = 1u64;
        for g in model.generators() {
            for &v in g {
                q = q.lcm(&(model.modulus() / arith::gcd_u64(v, model.modulus())));
            }
        }
        Ok(q)
    }
}

// ---------------------------------------------------------------------------

/// Partner frequency on the second factor: `(chi, rho)` annihilates the base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Partner {
    /// No `rho` exists; `chi(w1) h(w2)` integrates to zero on every coset.
    Absent,
    /// Exactly one `rho`.
    Unique(Vec<i64>),
    /// `rho` is determined modulo `q` in every coordinate.
    Modular { rho: Vec<i64>, q: u64 },
}

/// `sum_j c_j m_{G0 + t_j}` for a closed subgroup `G0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineJoining {
    base: ClosedSubgroup,
    cosets: Vec<Vec<Rational>>,
    weights: Vec<Rational>,
}

impl Serialize for AffineJoining {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Base<'a> {
            dims: &'a [usize],
            relations: Vec<Vec<i64>>,
        }
        let relations = self
            .base
            .relations
            .iter()
            .map(|r| r.iter().map(|v| v.to_i64().ok_or_else(|| S::Error::custom("relation entry too large"))).collect())
            .collect::<std::result::Result<Vec<Vec<i64>>, S::Error>>()?;
        let cosets: Vec<Vec<String>> = self
            .cosets
            .iter()
            .map(|t| t.iter().map(arith::format_rational).collect())
            .collect();
        let weights: Vec<String> = self.weights.iter().map(arith::format_rational).collect();
        let mut st = s.serialize_struct("AffineJoining", 3)?;
        st.serialize_field(
            "base",
            &Base {
                dims: &self.base.dims,
                relations,
            },
        )?;
        st.serialize_field("cosets", &cosets)?;
        st.serialize_field("weights", &weights)?;
        st.end()
    }
}

impl AffineJoining {
    /// Validates the weights and merges shifts lying in the same coset.
    pub fn new(base: ClosedSubgroup, cosets: Vec<Vec<Rational>>, weights: Vec<Rational>) -> Result<Self> {
        if cosets.len() != weights.len() {
            return Err(LabError::InvalidInput(format!(
                "{} cosets but {} weights",
                cosets.len(),
                weights.len()
            )));
        }
        if cosets.is_empty() {
            return Err(LabError::EmptyDomain("affine joining without cosets".into()));
        }
        let n = base.ambient_dim();
        for t in &cosets {
            check_dim(n, t.len())?;
        }
        if weights.iter().any(|w| w.is_negative()) {
            return Err(LabError::InvalidInput("negative coset weight".into()));
        }
        let total: Rational = weights.iter().sum();
        if !total.is_one() {
            return Err(LabError::InvalidInput(format!(
                "coset weights sum to {}",
                arith::format_rational(&total)
            )));
        }
        let mut merged_t: Vec<Vec<Rational>> = Vec::new();
        let mut merged_w: Vec<Rational> = Vec::new();
        for (t, w) in cosets.iter().zip(weights) {
            let t = reduce_vec(t);
            match merged_t.iter().position(|s| base.same_coset(s, &t)) {
                Some(i) => merged_w[i] += w,
                None => {
                    merged_t.push(t);
                    merged_w.push(w);
                }
            }
        }
        let keep: Vec<usize> = (0..merged_w.len()).filter(|&i| !merged_w[i].is_zero()).collect();
        Ok(AffineJoining {
            cosets: keep.iter().map(|&i| merged_t[i].clone()).collect(),
            weights: keep.iter().map(|&i| merged_w[i].clone()).collect(),
            base,
        })
    }

    pub fn haar(base: ClosedSubgroup) -> Self {
        let n = base.ambient_dim();
        AffineJoining {
            base,
            cosets: vec![vec![Rational::zero(); n]],
            weights: vec![Rational::one()],
        }
    }

    pub fn base(&self) -> &ClosedSubgroup {
        &self.base
    }

    pub fn dims(&self) -> &[usize] {
        self.base.dims()
    }

    pub fn cosets(&self) -> &[Vec<Rational>] {
        &self.cosets
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    /// Lcm of the coset denominators.
    pub fn phase_order(&self) -> BigInt {
        lcm_denominators(self.cosets.iter().flatten())
    }

    /// Adds `w * int e(m.x) dm` into `acc`.
    pub fn integrate_character_into(&self, m: &[i64], w: &Rational, acc: &mut QCyclo) -> Result<()> {
        check_dim(self.base.ambient_dim(), m.len())?;
        if !self.base.annihilates(m) {
            return Ok(());
        }
        for (t, c) in self.cosets.iter().zip(&self.weights) {
            acc.add_phase(&dot_i64(m, t), &(w * c))?;
        }
        Ok(())
    }

    pub fn integrate_character(&self, m: &[i64]) -> Result<Complex64> {
        check_dim(self.base.ambient_dim(), m.len())?;
        if !self.base.annihilates(m) {
            return Ok(Complex64::new(0.0, 0.0));
        }
        Ok(self
            .cosets
            .iter()
            .zip(&self.weights)
            .map(|(t, c)| arith::e_rational(&dot_i64(m, t)) * arith::to_f64(c))
            .sum())
    }

    /// Weighted atoms of a joining with finite base.
    pub fn atoms(&self) -> Result<Vec<(Vec<Rational>, Rational)>> {
        let model = self.base.to_model()?;
        let elems = model.elements()?;
        let q = BigInt::from(model.modulus());
        let size = Rational::from_integer(BigInt::from(elems.len()));
        let mut out: BTreeMap<Vec<Rational>, Rational> = BTreeMap::new();
        for (t, c) in self.cosets.iter().zip(&self.weights) {
            let w = c / &size;
            for e in &elems {
                let x: Vec<Rational> = e
                    .iter()
                    .zip(t)
                    .map(|(&a, s)| arith::frac(&(Rational::new(BigInt::from(a), q.clone()) + s)))
                    .collect();
                *out.entry(x).or_insert_with(Rational::zero) += &w;
            }
        }
        Ok(out.into_iter().collect())
    }

    fn two_blocks(&self) -> Result<(usize, usize)> {
        match self.dims() {
            [d, r] => Ok((*d, *r)),
            other => Err(LabError::InvalidInput(format!(
                "expected a joining of two factors, got blocks {other:?}"
            ))),
        }
    }

    /// `rho` with `(chi, rho)` in the annihilator of the base.
    pub fn partner(&self, chi: &[i64]) -> Result<Partner> {
        let (d, r) = self.two_blocks()?;
        check_dim(d, chi.len())?;
        let mut rest: Row = chi.iter().map(|&v| BigInt::from(v)).collect();
        rest.extend((0..r).map(|_| BigInt::zero()));
        let mut second: Vec<Row> = Vec::new();
        for row in &self.base.relations {
            let p = row.iter().position(|v| !v.is_zero()).expect("nonzero row");
            if p >= d {
                second.push(row[d..].to_vec());
                continue;
            }
            let (c, rem) = rest[p].div_rem(&row[p]);
            if !rem.is_zero() {
                return Ok(Partner::Absent);
            }
            for (x, b) in rest.iter_mut().zip(row) {
                *x -= &c * b;
            }
        }
        if rest[..d].iter().any(|v| !v.is_zero()) {
            return Ok(Partner::Absent);
        }
        let rho: Vec<BigInt> = rest[d..].iter().map(|v| -v).collect();
        let to_i64 = |v: &BigInt| {
            v.to_i64()
                .ok_or_else(|| LabError::InvalidInput(format!("partner frequency {v} too large")))
        };
        if second.is_empty() {
            return Ok(Partner::Unique(rho.iter().map(to_i64).collect::<Result<_>>()?));
        }
        let q = second[0][0].clone();
        let grid = second.len() == r
            && second
                .iter()
                .enumerate()
                .all(|(i, row)| row.iter().enumerate().all(|(j, v)| if i == j { *v == q } else { v.is_zero() }));
        if !grid {
            return Err(LabError::NotAnnihilable(
                "the second marginal of the base is neither a torus nor a full grid".into(),
            ));
        }
        let qu = q.to_u64().ok_or_else(|| LabError::InvalidInput("grid modulus too large".into()))?;
        let rho = rho
            .iter()
            .map(|v| {
                let m = v.mod_floor(&q);
                let c = if &m * 2 > q { m - &q } else { m };
                to_i64(&c)
            })
            .collect::<Result<_>>()?;
        Ok(Partner::Modular { rho, q: qu })
    }
}

// ---------------------------------------------------------------------------

/// `{ (s, t, 2s, 2t, 0) }` inside `(T^d)^4 x T^r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct G3ap {
    pub d: usize,
    pub r: usize,
}

impl G3ap {
    pub fn new(d: usize, r: usize) -> Result<Self> {
        if d == 0 {
            return Err(LabError::InvalidInput("d must be positive".into()));
        }
        Ok(G3ap { d, r })
    }

    pub fn ambient_dim(&self) -> usize {
        4 * self.d + self.r
    }

    pub fn point(&self, s: &TorusPoint, t: &TorusPoint) -> Result<TorusPoint> {
        check_dim(self.d, s.dim())?;
        check_dim(self.d, t.dim())?;
        let mut v: Vec<Rational> = s.coords().to_vec();
        v.extend_from_slice(t.coords());
        v.extend(s.scale_i64(2).coords().iter().cloned());
        v.extend(t.scale_i64(2).coords().iter().cloned());
        v.extend((0..self.r).map(|_| Rational::zero()));
        TorusPoint::new(v)
    }

    /// `(s, t)` when `x` has the subgroup's shape.
    pub fn split(&self, x: &TorusPoint) -> Result<Option<(TorusPoint, TorusPoint)>> {
        check_dim(self.ambient_dim(), x.dim())?;
        let d = self.d;
        let c = x.coords();
        let s = TorusPoint::new(c[..d].to_vec())?;
        let t = TorusPoint::new(c[d..2 * d].to_vec())?;
        let expect = self.point(&s, &t)?;
        Ok((expect == *x).then_some((s, t)))
    }

    pub fn relations(&self) -> ClosedSubgroup {
        let (d, n) = (self.d, self.ambient_dim());
        let mut rows = Vec::new();
        for i in 0..d {
            for (src, dst) in [(i, 2 * d + i), (d + i, 3 * d + i)] {
                let mut row = vec![BigInt::zero(); n];
                row[src] = BigInt::from(2);
                row[dst] = BigInt::from(-1);
                rows.push(row);
            }
        }
        for j in 4 * d..n {
            let mut row = vec![BigInt::zero(); n];
            row[j] = BigInt::one();
            rows.push(row);
        }
        ClosedSubgroup::from_relations(vec![d, d, d, d, self.r], rows)
    }
}

/// Joining of the closure of `{ n^2 (alpha, beta) }` for real (surd) data.
///
/// The base is the connected subgroup cut out by the saturated relations
/// `S`; each `b` in a basis of `S` has `b.(alpha, beta)` rational, and
/// `n -> n^2 b.(alpha, beta) mod 1` sorts `n` into cosets with exact
/// frequencies over one period.
pub fn ideal_affine_joining(alpha: &[Surd], beta: &[Surd]) -> Result<AffineJoining> {
    let (d, r) = (alpha.len(), beta.len());
    if d == 0 || r == 0 {
        return Err(LabError::InvalidInput("both factors must be nonempty".into()));
    }
    let v: Vec<Surd> = alpha.iter().chain(beta).cloned().collect();
    let n = d + r;
    let rel = lattice::surd_relation_lattice(&v);
    let sat = if rel.is_empty() { vec![] } else { lattice::saturate(&rel, n) };
    let base = ClosedSubgroup::from_relations(vec![d, r], sat.clone());
    if sat.is_empty() {
        return AffineJoining::new(base, vec![vec![Rational::zero(); n]], vec![Rational::one()]);
    }
    let values: Vec<Rational> = sat
        .iter()
        .map(|b| {
            let mut acc = Surd::int(0);
            for (m, s) in b.iter().zip(&v) {
                acc = acc.add(&s.scale(&Rational::from_integer(m.clone())));
            }
            debug_assert!(acc.is_rational());
            arith::frac(&acc.rational_part())
        })
        .collect();
    let period = lcm_denominators(values.iter())
        .to_u64()
        .filter(|&p| p <= PERIOD_LIMIT)
        .ok_or_else(|| LabError::InvalidInput("coset period too large".into()))?;
    let mut counts: BTreeMap<Vec<Rational>, u64> = BTreeMap::new();
    for k in 0..period {
        let sq = Rational::from_integer(BigInt::from(k) * BigInt::from(k));
        let tau: Vec<Rational> = values.iter().map(|x| arith::frac(&(x * &sq))).collect();
        *counts.entry(tau).or_insert(0) += 1;
    }
    let b: Vec<Vec<Rational>> = sat
        .iter()
        .map(|row| row.iter().map(|x| Rational::from_integer(x.clone())).collect())
        .collect();
    let gram: Vec<Vec<Rational>> = b
        .iter()
        .map(|x| b.iter().map(|y| x.iter().zip(y).map(|(a, c)| a * c).sum()).collect())
        .collect();
    let mut cosets = Vec::new();
    let mut weights = Vec::new();
    let p = Rational::from_integer(BigInt::from(period));
    for (tau, cnt) in counts {
        let y = solve_rational(&gram, &tau).expect("independent rows");
        let t: Vec<Rational> = (0..n)
            .map(|i| b.iter().zip(&y).map(|(row, yk)| &row[i] * yk).sum())
            .collect();
        cosets.push(t);
        weights.push(Rational::from_integer(BigInt::from(cnt)) / &p);
    }
    AffineJoining::new(base, cosets, weights)
}

// ---------------------------------------------------------------------------

/// Output of [`extract_affine_joining`].
#[derive(Debug, Clone, Serialize)]
pub struct Extraction {
    pub d: usize,
    pub r: usize,
    /// `lcm(ord c, ord u)`: the orbit `n c + n^2 u` repeats with this period.
    pub period: u64,
    pub c_order: u64,
    pub u_order: u64,
    /// Smallest `h | ord u` leaving the law of `n^2 mod ord u` invariant.
    pub stabilizer_step: u64,
    /// Affine joining on the ambient `(T^d)^4 x T^r`.
    pub phi: AffineJoining,
    /// Its trace on the `(w1, w2)` coordinates.
    pub gamma: AffineJoining,
    #[serde(skip)]
    c: TorusPoint,
    #[serde(skip)]
    u: TorusPoint,
}

/// A trigonometric polynomial with rational coefficients.
pub type RationalTrig = [(Vec<i64>, Rational)];

fn point_order(x: &TorusPoint, what: &str) -> Result<u64> {
    x.common_denominator()
        .to_u64()
        .filter(|&q| q <= PERIOD_LIMIT)
        .ok_or_else(|| LabError::InvalidInput(format!("{what} has too large a denominator")))
}

/// Finite-model version of the coset decomposition behind the averaging
/// formula.
///
/// `c = (s, t, 2s, 2t, 0)` and `u = (0, alpha, 0, 4 alpha, beta)` are rational
/// with coprime orders. By the Chinese remainder theorem `n c` and `n^2 u`
/// are independent along one period, `n c` is uniform on `<c>` and `n^2 u`
/// has the law `nu` of squares mod `L = ord u`. The cosets are
/// `<c> + j u + <h u>` for `j < h`, where `<h u>` is the stabilizer of `nu`,
/// with weight `nu(j + h Z)`.
pub fn extract_affine_joining(c: &TorusPoint, u: &TorusPoint, d: usize, r: usize) -> Result<Extraction> {
    let g3 = G3ap::new(d, r)?;
    let n = g3.ambient_dim();
    check_dim(n, c.dim())?;
    check_dim(n, u.dim())?;
    if g3.split(c)?.is_none() {
        return Err(LabError::InvalidInput("c is not of the form (s, t, 2s, 2t, 0)".into()));
    }
    let uc = u.coords();
    let alpha = &uc[d..2 * d];
    let shape = uc[..d].iter().all(Zero::is_zero)
        && uc[2 * d..3 * d].iter().all(Zero::is_zero)
        && uc[3 * d..4 * d]
            .iter()
            .zip(alpha)
            .all(|(x, a)| *x == arith::frac(&(a * Rational::from_integer(BigInt::from(4)))));
    if !shape {
        return Err(LabError::InvalidInput("u is not of the form (0, a, 0, 4a, b)".into()));
    }
    if c.is_zero() {
        return Err(LabError::Degenerate("c = 0 generates the trivial group".into()));
    }
    let q_c = point_order(c, "c")?;
    let l = point_order(u, "u")?;
    if arith::gcd_u64(q_c, l) != 1 {
        return Err(LabError::Degenerate(format!(
            "ord c = {q_c} and ord u = {l} share a factor; <c> and the square orbit of u are not independent"
        )));
    }
    let period = q_c
        .checked_mul(l)
        .filter(|&p| p <= PERIOD_LIMIT)
        .ok_or_else(|| LabError::InvalidInput("period too large".into()))?;
    let mut counts = vec![0u64; l as usize];
    for k in 0..l {
        counts[arith::mulmod(k, k, l) as usize] += 1;
    }
    let h = (1..=l)
        .filter(|h| l % h == 0)
        .find(|&h| (0..l).all(|k| counts[k as usize] == counts[((k + h) % l) as usize]))
        .expect("h = L always works");
    let lr = Rational::from_integer(BigInt::from(l));
    let mut weights = vec![Rational::zero(); h as usize];
    for (k, &cnt) in counts.iter().enumerate() {
        weights[k % h as usize] += Rational::from_integer(BigInt::from(cnt)) / &lr;
    }
    let phi_base = {
        let hu = u.scale_i64(h as i64);
        let vectors = vec![c.coords().to_vec(), hu.coords().to_vec()];
        ClosedSubgroup::from_relations(vec![d, d, d, d, r], lattice::relation_lattice(&vectors, n))
    };
    let phi_cosets: Vec<Vec<Rational>> = (0..h).map(|j| u.scale_i64(j as i64).coords().to_vec()).collect();
    let phi = AffineJoining::new(phi_base, phi_cosets, weights.clone())?;

    let w: Vec<Rational> = alpha.iter().chain(&uc[4 * d..]).cloned().collect();
    let hw: Vec<Rational> = w.iter().map(|x| x * Rational::from_integer(BigInt::from(h))).collect();
    let gamma_base = ClosedSubgroup::from_relations(vec![d, r], lattice::relation_lattice(&[hw], d + r));
    let gamma_cosets: Vec<Vec<Rational>> = (0..h)
        .map(|j| {
            let jr = Rational::from_integer(BigInt::from(j));
            w.iter().map(|x| x * &jr).collect()
        })
        .collect();
    let gamma = AffineJoining::new(gamma_base, gamma_cosets, weights)?;
    Ok(Extraction {
        d,
        r,
        period,
        c_order: q_c,
        u_order: l,
        stabilizer_step: h,
        phi,
        gamma,
        c: c.clone(),
        u: u.clone(),
    })
}

/// Exact comparison of the orbit average with the two coset forms.
#[derive(Debug, Clone)]
pub struct AveragingCheck {
    pub time_average: QCyclo,
    pub phi_form: QCyclo,
    /// `None` when some term's `(s, t)` frequency is a nonzero annihilator of
    /// `<(s0, t0)>`, where the finite orbit cannot see the full `(s, t)` torus.
    pub gamma_form: Option<QCyclo>,
    pub phi_exact: bool,
    pub gamma_exact: Option<bool>,
}

impl Extraction {
    pub fn c(&self) -> &TorusPoint {
        &self.c
    }

    pub fn u(&self) -> &TorusPoint {
        &self.u
    }

    fn order(&self) -> Result<u64> {
        to_order(&self.c.common_denominator().lcm(&self.u.common_denominator()), "model")
    }

    fn check_terms(&self, f: &RationalTrig) -> Result<()> {
        let n = 4 * self.d + self.r;
        for (m, _) in f {
            check_dim(n, m.len())?;
        }
        Ok(())
    }

    /// `(1/P) sum_{n < P} F(n c + n^2 u)`, counted residue by residue.
    pub fn time_average(&self, f: &RationalTrig) -> Result<QCyclo> {
        self.check_terms(f)?;
        let q = self.order()?;
        let mut acc = QCyclo::new(q)?;
        let qr = Rational::from_integer(BigInt::from(q));
        let pr = Rational::from_integer(BigInt::from(self.period));
        let residue = |x: &Rational| -> u64 {
            (arith::frac(x) * &qr).to_integer().to_u64().expect("reduced phase")
        };
        let mut counts = vec![0u64; q as usize];
        for (m, coef) in f {
            let a = residue(&dot_i64(m, self.c.coords()));
            let b = residue(&dot_i64(m, self.u.coords()));
            counts.iter_mut().for_each(|c| *c = 0);
            for k in 0..self.period {
                let kq = k % q;
                let e = arith::addmod(arith::mulmod(kq, a, q), arith::mulmod(arith::mulmod(kq, kq, q), b, q), q);
                counts[e as usize] += 1;
            }
            for (e, &cnt) in counts.iter().enumerate() {
                if cnt > 0 {
                    acc.add(e as u64, &(coef * Rational::from_integer(BigInt::from(cnt)) / &pr));
                }
            }
        }
        Ok(acc)
    }

    /// `sum_j c_j int F dm_{Phi_j}`.
    pub fn phi_form(&self, f: &RationalTrig) -> Result<QCyclo> {
        self.check_terms(f)?;
        let mut acc = QCyclo::new(self.order()?)?;
        for (m, coef) in f {
            self.phi.integrate_character_into(m, coef, &mut acc)?;
        }
        Ok(acc)
    }

    /// `sum_j c_j int F(s, t, 2s, 2t + 2 w1, w2) dm_{Gamma_j}(w) ds dt`.
    pub fn gamma_form(&self, f: &RationalTrig) -> Result<Option<QCyclo>> {
        self.check_terms(f)?;
        let d = self.d;
        let mut acc = QCyclo::new(self.order()?)?;
        for (m, coef) in f {
            let a: Vec<i64> = (0..d).map(|i| m[i] + 2 * m[2 * d + i]).collect();
            let b: Vec<i64> = (0..d).map(|i| m[d + i] + 2 * m[3 * d + i]).collect();
            if a.iter().chain(&b).any(|&v| v != 0) {
                let mut st = a.clone();
                st.extend(&b);
                if dot_i64(&st, &self.c.coords()[..2 * d]).is_integer() {
                    return Ok(None);
                }
                continue;
            }
            let mut w: Vec<i64> = (0..d).map(|i| 2 * m[3 * d + i]).collect();
            w.extend(&m[4 * d..]);
            self.gamma.integrate_character_into(&w, coef, &mut acc)?;
        }
        Ok(Some(acc))
    }

    pub fn check(&self, f: &RationalTrig) -> Result<AveragingCheck> {
        let time_average = self.time_average(f)?;
        let phi_form = self.phi_form(f)?;
        let gamma_form = self.gamma_form(f)?;
        let phi_exact = time_average.sub(&phi_form)?.is_zero();
        let gamma_exact = match &gamma_form {
            Some(g) => Some(time_average.sub(g)?.is_zero()),
            None => None,
        };
        Ok(AveragingCheck {
            time_average,
            phi_form,
            gamma_form,
            phi_exact,
            gamma_exact,
        })
    }
}

// ---------------------------------------------------------------------------

/// `int psi(2 w1) g(w2) dm_Gamma(w)` for a normalized cylinder `g`.
pub fn joining_coefficient(psi: &Character, g: &Cylinder, gamma: &AffineJoining) -> Result<Complex64> {
    let (d, r) = gamma.two_blocks()?;
    check_dim(d, psi.dim())?;
    check_dim(r, g.dim())?;
    let target = psi.scale(2);
    match gamma.partner(target.freq())? {
        Partner::Absent => Ok(Complex64::new(0.0, 0.0)),
        Partner::Unique(rho) => {
            let ghat = cylinder_fourier(g, true, &Character::new(rho.clone()))?;
            if ghat == Complex64::new(0.0, 0.0) {
                return Ok(ghat);
            }
            let mut m = target.freq().to_vec();
            m.extend(&rho);
            Ok(ghat * gamma.integrate_character(&m)?)
        }
        Partner::Modular { .. } => {
            let atoms = gamma.atoms()?;
            let order = to_order(&gamma.phase_order().lcm(&lcm_denominators(atoms.iter().flat_map(|a| a.0.iter()))), "joining")?;
            let mut acc = QCyclo::new(order)?;
            for (x, w) in &atoms {
                let gv = g.normalized_value(&TorusPoint::new(x[d..].to_vec())?)?;
                if gv.is_zero() {
                    continue;
                }
                acc.add_phase(&dot_i64(target.freq(), &x[..d]), &(w * gv))?;
            }
            if acc.is_zero() {
                Ok(Complex64::new(0.0, 0.0))
            } else {
                Ok(acc.to_complex())
            }
        }
    }
}

/// Coefficients of `f *_Gamma g`: `fhat(chi, psi) int psi(2 w1) g(w2) dm_Gamma`.
pub fn star_kernel(f: &CoefficientTable, g: &Cylinder, gamma: &AffineJoining) -> Result<CoefficientTable> {
    let (d, _) = gamma.two_blocks()?;
    f.check_dim(2 * d)?;
    let mut cache: BTreeMap<Character, Complex64> = BTreeMap::new();
    let mut out = CoefficientTable::new(2 * d);
    for (c, v) in f.iter() {
        let (_, psi) = c.split(d);
        let k = match cache.get(&psi) {
            Some(k) => *k,
            None => {
                let k = joining_coefficient(&psi, g, gamma)?;
                cache.insert(psi, k);
                k
            }
        };
        out.insert(c.clone(), v * k)?;
    }
    Ok(out)
}

/// `f *_Gamma g (x, y) = int f(x, y + 2 w1) g(w2) dm_Gamma(w)` on `Z_q` grids,
/// for a joining with finite base whose atoms lie on the grid.
pub fn star_kernel_grid(f: &RationalGrid, g: &RationalGrid, gamma: &AffineJoining) -> Result<RationalGrid> {
    let (d, r) = gamma.two_blocks()?;
    check_dim(2 * d, f.dim())?;
    check_dim(r, g.dim())?;
    let q = f.modulus();
    if g.modulus() != q {
        return Err(LabError::InvalidInput(format!(
            "grid moduli differ: {q} and {}",
            g.modulus()
        )));
    }
    let qb = Rational::from_integer(BigInt::from(q));
    let mut atoms: Vec<(Vec<usize>, Rational)> = Vec::new();
    for (x, w) in gamma.atoms()? {
        let idx = x
            .iter()
            .map(|v| {
                let s = v * &qb;
                if s.is_integer() {
                    Ok(s.to_integer().to_usize().expect("reduced"))
                } else {
                    Err(LabError::InvalidInput(format!(
                        "joining atom coordinate {} is off the 1/{q} grid",
                        arith::format_rational(v)
                    )))
                }
            })
            .collect::<Result<Vec<usize>>>()?;
        atoms.push((idx, w));
    }
    let mut y2 = vec![0usize; 2 * d];
    RationalGrid::from_fn(2 * d, q, |xy| {
        let mut acc = Rational::zero();
        for (a, w) in &atoms {
            y2[..d].copy_from_slice(&xy[..d]);
            for i in 0..d {
                y2[d + i] = (xy[d + i] + 2 * a[i]) % q;
            }
            let fv = f.at(&y2);
            if fv.is_zero() {
                continue;
            }
            acc += fv * g.at(&a[d..]) * w;
        }
        acc
    })
}

/// Cylinder `g` subordinate to `u` with `int chi(w1) g(w2) dm` equal to zero
/// on every coset of the base, for each character `chi` of the first factor.
pub fn annihilate_over_joining(u: &ApproxHammingBall, gamma: &AffineJoining, chars: &[Character]) -> Result<Cylinder> {
    let (d, r) = gamma.two_blocks()?;
    check_dim(r, u.dim())?;
    if chars.len() > u.k() {
        return Err(LabError::InvalidInput(format!(
            "{} characters but the ball only allows {} removals",
            chars.len(),
            u.k()
        )));
    }
    let mut targets: BTreeSet<Character> = BTreeSet::new();
    for chi in chars {
        check_dim(d, chi.dim())?;
        if chi.is_trivial() {
            return Err(LabError::InvalidInput("character must be nontrivial".into()));
        }
        let rho = match gamma.partner(chi.freq())? {
            Partner::Absent => continue,
            Partner::Unique(rho) | Partner::Modular { rho, .. } => rho,
        };
        if rho.iter().all(|&v| v == 0) {
            return Err(LabError::Precondition(format!(
                "character {:?} is trivial on the base of the joining",
                chi.freq()
            )));
        }
        targets.insert(Character::new(rho));
    }
    let targets: Vec<Character> = targets.into_iter().collect();
    annihilating_cylinder(u, &targets)
}

#[derive(Debug, Clone, Serialize)]
pub struct JoiningUniformizeReport {
    pub selection: TopK,
    /// Largest `|fhat(chi, psi) int psi(2 w1) g(w2) dm|` over nontrivial `psi`.
    pub max_coefficient: f64,
    /// The same maximum restricted to the selected characters.
    pub max_selected: f64,
    /// `k^-1/2`.
    pub bound: f64,
}

/// Choose `g` so that the `k` largest coefficients of `f` with nontrivial
/// `psi` vanish in `f *_Gamma g`, by annihilating `2 psi` over the joining.
pub fn uniformize_over_joining(
    f: &CoefficientTable,
    u: &ApproxHammingBall,
    gamma: &AffineJoining,
) -> Result<(Cylinder, JoiningUniformizeReport)> {
    let (d, _) = gamma.two_blocks()?;
    f.check_dim(2 * d)?;
    if f.norm() > 1.0 + 1e-12 {
        return Err(LabError::Precondition(format!("||f|| = {} exceeds 1", f.norm())));
    }
    if gamma.base().is_finite() {
        let q = gamma.base().exponent()?;
        let q = q.lcm(&to_order(&gamma.phase_order(), "joining")?);
        if q % 2 == 0 {
            return Err(LabError::UnsupportedModulus {
                q,
                reason: "psi -> psi^2 is not injective".into(),
            });
        }
    }
    let k = u.k();
    let family = |c: &Character| !c.split(d).1.is_trivial();
    let selection = if k == 0 {
        TopK {
            chosen: vec![],
            residual: f.iter().filter(|(c, _)| family(c)).map(|(_, v)| v.norm()).fold(0.0, f64::max),
            bound_k: f64::INFINITY,
            bound_k1: 1.0,
        }
    } else {
        top_k_filtered(f, k, 1.0, family)?
    };
    let doubled: Vec<Character> = selection
        .chosen
        .iter()
        .map(|c| c.split(d).1.scale(2))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let g = annihilate_over_joining(u, gamma, &doubled)?;
    let star = star_kernel(f, &g, gamma)?;
    let mut max_coefficient = 0.0f64;
    let mut max_selected = 0.0f64;
    for (c, v) in star.iter() {
        if !family(c) {
            continue;
        }
        max_coefficient = max_coefficient.max(v.norm());
        if selection.chosen.contains(c) {
            max_selected = max_selected.max(v.norm());
        }
    }
    let bound = if k == 0 { f64::INFINITY } else { 1.0 / (k as f64).sqrt() };
    Ok((
        g,
        JoiningUniformizeReport {
            selection,
            max_coefficient,
            max_selected,
            bound,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;

    fn pt(v: &[(i64, i64)]) -> TorusPoint {
        TorusPoint::new(v.iter().map(|&(a, b)| rat(a, b)).collect()).unwrap()
    }

    #[test]
    fn cyclic_closures() {
        let g = cyclic_closure(&pt(&[(1, 4)])).unwrap();
        assert_eq!(g.elements().unwrap(), vec![vec![0], vec![1], vec![2], vec![3]]);
        let g = cyclic_closure(&pt(&[(1, 2), (1, 3)])).unwrap();
        assert_eq!(g.order(), BigInt::from(6));
        let oracle: BTreeSet<Vec<u64>> = (0..6u64).map(|n| vec![(3 * n) % 6, (2 * n) % 6]).collect();
        assert_eq!(g.elements().unwrap().into_iter().collect::<BTreeSet<_>>(), oracle);
        let g = cyclic_closure(&pt(&[(0, 1), (0, 1)])).unwrap();
        assert_eq!(g.order(), BigInt::one());
        let c = g.to_closed();
        assert!(c.is_finite());
    }

    #[test]
    fn projections_are_closures_of_factors() {
        let g = cyclic_closure(&pt(&[(1, 6), (3, 10)])).unwrap();
        let p1 = g.project(&[0]).unwrap();
        let p2 = g.project(&[1]).unwrap();
        assert!(p1.same_subgroup(&cyclic_closure(&pt(&[(1, 6)])).unwrap()));
        assert!(p2.same_subgroup(&cyclic_closure(&pt(&[(3, 10)])).unwrap()));
    }

    #[test]
    fn finite_subgroup_round_trip() {
        let g = SubgroupModel::generated(6, vec![1, 1], vec![vec![3, 0], vec![0, 2]]).unwrap();
        let back = g.to_closed().to_model().unwrap();
        assert!(back.same_subgroup(&g));
        assert_eq!(back.order(), BigInt::from(6));
        assert_eq!(g.to_closed().exponent().unwrap(), 6);
    }

    #[test]
    fn ideal_generic_pair_is_full_product() {
        let j = ideal_affine_joining(&[Surd::sqrt(2)], &[Surd::sqrt(3)]).unwrap();
        assert_eq!(j.weights(), &[Rational::one()]);
        assert_eq!(j.base().dimension(), 2);
    }

    #[test]
    fn ideal_equal_pair_is_diagonal() {
        let j = ideal_affine_joining(&[Surd::sqrt(2)], &[Surd::sqrt(2)]).unwrap();
        assert_eq!(j.weights(), &[Rational::one()]);
        assert_eq!(j.base().dimension(), 1);
        assert!(j.base().annihilates(&[1, -1]));
        assert!(!j.base().annihilates(&[1, 0]));
    }

    #[test]
    fn ideal_shifted_pair_has_two_cosets() {
        let beta = Surd::sqrt(2).add(&Surd::rational(rat(1, 2)));
        let j = ideal_affine_joining(&[Surd::sqrt(2)], &[beta]).unwrap();
        assert_eq!(j.cosets().len(), 2);
        assert_eq!(j.weights(), &[rat(1, 2), rat(1, 2)]);
        assert!(j.base().is_connected());
    }

    #[test]
    fn ideal_zero_is_point_mass() {
        let j = ideal_affine_joining(&[Surd::int(0)], &[Surd::int(0)]).unwrap();
        assert!(j.base().is_finite());
        assert_eq!(j.atoms().unwrap(), vec![(vec![Rational::zero(), Rational::zero()], Rational::one())]);
    }

    fn u_of(alpha: &[(i64, i64)], beta: &[(i64, i64)]) -> TorusPoint {
        let d = alpha.len();
        let a: Vec<Rational> = alpha.iter().map(|&(x, y)| rat(x, y)).collect();
        let mut v = vec![Rational::zero(); d];
        v.extend(a.iter().cloned());
        v.extend((0..d).map(|_| Rational::zero()));
        v.extend(a.iter().map(|x| x * rat(4, 1)));
        v.extend(beta.iter().map(|&(x, y)| rat(x, y)));
        TorusPoint::new(v).unwrap()
    }

    fn c_of(s: &[(i64, i64)], t: &[(i64, i64)], r: usize) -> TorusPoint {
        G3ap::new(s.len(), r).unwrap().point(&pt(s), &pt(t)).unwrap()
    }

    fn battery(n: usize, seed: u64) -> Vec<Vec<(Vec<i64>, Rational)>> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..6)
            .map(|_| {
                (0..4)
                    .map(|_| {
                        let m: Vec<i64> = (0..n).map(|_| rng.random_range(-1..=1)).collect();
                        (m, rat(rng.random_range(-5..=5), rng.random_range(1..=4)))
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn averaging_identity_is_exact() {
        let cases = [
            (u_of(&[(1, 5)], &[(1, 5)]), 1),
            (u_of(&[(1, 4)], &[(1, 5)]), 1),
            (u_of(&[(0, 1)], &[(0, 1)]), 1),
            (u_of(&[(1, 8)], &[(3, 8)]), 1),
            (u_of(&[(1, 5)], &[(2, 5), (1, 2)]), 2),
        ];
        for (i, (u, r)) in cases.iter().enumerate() {
            let c = c_of(&[(1, 7)], &[(1, 9)], *r);
            let ex = extract_affine_joining(&c, u, 1, *r).unwrap();
            let total: Rational = ex.gamma.weights().iter().sum();
            assert!(total.is_one());
            for f in battery(4 + r, i as u64) {
                let chk = ex.check(&f).unwrap();
                assert!(chk.phi_exact, "case {i}");
                assert_eq!(chk.gamma_exact, Some(true), "case {i}");
            }
        }
    }

    #[test]
    fn equal_frequencies_give_diagonal_base() {
        let ex = extract_affine_joining(&c_of(&[(1, 7)], &[(1, 9)], 1), &u_of(&[(1, 5)], &[(1, 5)]), 1, 1).unwrap();
        let base = ex.gamma.base();
        assert!(base.annihilates(&[1, -1]));
    }

    #[test]
    fn weights_do_not_depend_on_generator() {
        let u = u_of(&[(1, 8)], &[(3, 8)]);
        let a = extract_affine_joining(&c_of(&[(1, 7)], &[(1, 9)], 1), &u, 1, 1).unwrap();
        let b = extract_affine_joining(&c_of(&[(2, 7)], &[(5, 9)], 1), &u, 1, 1).unwrap();
        assert_eq!(a.gamma, b.gamma);
        assert!(a.gamma.weights().iter().all(|w| !w.is_negative()));
    }

    #[test]
    fn shared_factor_is_degenerate() {
        let err = extract_affine_joining(&c_of(&[(1, 5)], &[(1, 3)], 1), &u_of(&[(1, 5)], &[(1, 5)]), 1, 1);
        assert!(matches!(err, Err(LabError::Degenerate(_))));
        let err = extract_affine_joining(&u_of(&[(1, 5)], &[(1, 5)]), &u_of(&[(1, 5)], &[(1, 5)]), 1, 1);
        assert!(matches!(err, Err(LabError::InvalidInput(_))));
    }

    fn z6_joining() -> AffineJoining {
        let gens = vec![vec![3, 0, 0], vec![0, 2, 0], vec![0, 0, 2]];
        let base = SubgroupModel::generated(6, vec![1, 2], gens).unwrap();
        AffineJoining::haar(base.to_closed())
    }

    #[test]
    fn z6_annihilation_is_exact_zero() {
        let gamma = z6_joining();
        let ball = ApproxHammingBall::new(pt(&[(1, 7), (2, 7)]), 1, rat(1, 5)).unwrap();
        let chi = Character::new(vec![1]);
        assert_eq!(gamma.partner(chi.freq()).unwrap(), Partner::Absent);
        let g = annihilate_over_joining(&ball, &gamma, &[chi]).unwrap();
        let mut acc = Rational::zero();
        for (x, w) in gamma.atoms().unwrap() {
            let sign = if x[0].is_zero() { 1 } else { -1 };
            let gv = g.normalized_value(&TorusPoint::new(x[1..].to_vec()).unwrap()).unwrap();
            acc += w * gv * rat(sign, 1);
        }
        assert!(acc.is_zero());
    }

    #[test]
    fn diagonal_star_kernel_matches_double_sum() {
        let diag = ClosedSubgroup::from_relations(vec![1, 1], vec![vec![BigInt::from(1), BigInt::from(-1)], vec![BigInt::from(5), BigInt::zero()]]);
        let gamma = AffineJoining::haar(diag);
        let f = RationalGrid::from_fn(2, 5, |x| rat((x[0] * 3 + x[1] * x[1]) as i64 % 7, 3)).unwrap();
        let g = RationalGrid::from_fn(1, 5, |x| rat(x[0] as i64 + 1, 2)).unwrap();
        let star = star_kernel_grid(&f, &g, &gamma).unwrap();
        for x in 0..5usize {
            for y in 0..5usize {
                let mut acc = Rational::zero();
                for t in 0..5usize {
                    acc += f.at(&[x, (y + 2 * t) % 5]) * g.at(&[t]) / rat(5, 1);
                }
                assert_eq!(star.at(&[x, y]), acc);
            }
        }
        // projection identity when g has mean one
        let g1 = RationalGrid::from_fn(1, 5, |x| rat([3, 0, 1, 1, 0][x[0]], 1)).unwrap();
        let star = star_kernel_grid(&f, &g1, &gamma).unwrap();
        assert_eq!(star.average_trailing(1).unwrap(), f.average_trailing(1).unwrap());
    }

    #[test]
    fn full_product_star_kernel_is_projection() {
        let gamma = AffineJoining::haar(ClosedSubgroup::from_relations(vec![1, 1], lattice::to_rows(&[vec![5, 0], vec![0, 5]])));
        let f = RationalGrid::from_fn(2, 5, |x| rat((x[0] + 2 * x[1] * x[0]) as i64, 1)).unwrap();
        let g = RationalGrid::from_fn(1, 5, |x| rat([5, 0, 0, 0, 0][x[0]], 1)).unwrap();
        let star = star_kernel_grid(&f, &g, &gamma).unwrap();
        let proj = f.average_trailing(1).unwrap();
        for x in 0..5 {
            for y in 0..5 {
                assert_eq!(star.at(&[x, y]), proj.at(&[x]));
            }
        }
    }

    #[test]
    fn uniformize_kills_selected_coefficients() {
        let gamma = ideal_affine_joining(&[Surd::sqrt(2)], &[Surd::sqrt(3), Surd::sqrt(5), Surd::sqrt(2).scale_int(2)]).unwrap();
        let mut f = CoefficientTable::new(2);
        f.insert(Character::new(vec![1, 1]), Complex64::new(0.6, 0.0)).unwrap();
        f.insert(Character::new(vec![0, -1]), Complex64::new(0.0, 0.5)).unwrap();
        f.insert(Character::new(vec![2, 0]), Complex64::new(0.3, 0.0)).unwrap();
        let ball = ApproxHammingBall::new(pt(&[(0, 1), (1, 3), (2, 5)]), 2, rat(1, 10)).unwrap();
        let (g, rep) = uniformize_over_joining(&f, &ball, &gamma).unwrap();
        assert!(g.is_subordinate_to(&ball));
        assert_eq!(rep.max_selected, 0.0);
        assert!(rep.max_coefficient < rep.bound);
        let star = star_kernel(&f, &g, &gamma).unwrap();
        assert!((star.get(&Character::new(vec![2, 0])) - Complex64::new(0.3, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn even_finite_joining_is_rejected() {
        let gamma = z6_joining();
        let mut f = CoefficientTable::new(2);
        f.insert(Character::new(vec![0, 1]), Complex64::new(0.5, 0.0)).unwrap();
        let ball = ApproxHammingBall::new(pt(&[(0, 1), (0, 1)]), 1, rat(1, 5)).unwrap();
        assert!(matches!(
            uniformize_over_joining(&f, &ball, &gamma),
            Err(LabError::UnsupportedModulus { .. })
        ));
    }

    #[test]
    fn serializes_relations_and_weights() {
        let j = ideal_affine_joining(&[Surd::sqrt(2)], &[Surd::sqrt(2).add(&Surd::rational(rat(1, 2)))]).unwrap();
        let v = serde_json::to_value(&j).unwrap();
        assert_eq!(v["weights"], serde_json::json!(["1/2", "1/2"]));
        assert_eq!(v["base"]["dims"], serde_json::json!([1, 1]));
    }
}
