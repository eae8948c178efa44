//! Finite certificates of nonrecurrence: a set `B` of `[0, N)` of density at
//! least `delta'` containing no progression `n, n + s, ..., n + k s` with
//! `s` in `S`. Builders (band witnesses, rotations, combination, squares,
//! dilation) never return a certificate that failed verification.

use std::fmt;
use std::io::{BufRead, Write};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arith::{self, serde_rat, Rational};
use crate::bohr::Frequency;
use crate::error::{check_dim, LabError, Result};
use crate::exec::{self, Strategy};
use crate::torus::{ApproxHammingBall, TorusPoint};

pub const FORMAT_VERSION: u32 = 1;

/// Largest horizon accepted.
pub const MAX_HORIZON: u64 = 100_000_000;

// ---------------------------------------------------------------------------

/// Packed bitset over `[0, len)`, little-endian within and across words.
#[derive(Clone, PartialEq, Eq)]
pub struct Bitset {
    len: u64,
    words: Vec<u64>,
}

impl fmt::Debug for Bitset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bitset(len={}, ones={})", self.len, self.count())
    }
}

impl Bitset {
    pub fn new(len: u64) -> Self {
        Bitset {
            len,
            words: vec![0; len.div_ceil(64) as usize],
        }
    }

    pub fn from_fn(len: u64, strategy: Strategy, f: impl Fn(u64) -> bool + Sync + Send) -> Self {
        let nw = len.div_ceil(64) as usize;
        let parts = exec::map_chunks(strategy, nw, |range| {
            range
                .map(|w| {
                    let mut word = 0u64;
                    let base = w as u64 * 64;
                    for b in 0..64u64 {
                        let n = base + b;
                        if n < len && f(n) {
                            word |= 1 << b;
                        }
                    }
                    word
                })
                .collect::<Vec<u64>>()
        });
        Bitset {
            len,
            words: parts.into_iter().flatten().collect(),
        }
    }

    pub fn from_indices(len: u64, ones: &[u64]) -> Result<Self> {
        let mut b = Bitset::new(len);
        for &n in ones {
            if n >= len {
                return Err(LabError::InvalidInput(format!("index {n} outside [0, {len})")));
            }
            b.set(n);
        }
        Ok(b)
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn set(&mut self, n: u64) {
        self.words[(n / 64) as usize] |= 1 << (n % 64);
    }

    pub fn get(&self, n: u64) -> bool {
        n < self.len && self.words[(n / 64) as usize] >> (n % 64) & 1 == 1
    }

    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = u64> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            let base = i as u64 * 64;
            (0..64u64).filter(move |b| w >> b & 1 == 1).map(move |b| base + b)
        })
    }

    /// Word `w` of `{ n : n + shift in self }`.
    #[inline]
    fn shifted_word(&self, w: usize, shift: u64) -> u64 {
        let ws = (shift / 64) as usize;
        let off = shift % 64;
        let lo = self.words.get(w + ws).copied().unwrap_or(0);
        if off == 0 {
            return lo;
        }
        let hi = self.words.get(w + ws + 1).copied().unwrap_or(0);
        (lo >> off) | (hi << (64 - off))
    }

    /// Restriction (or zero extension) to `[0, len)`.
    pub fn resized(&self, len: u64) -> Bitset {
        let mut out = Bitset::new(len);
        for (i, w) in out.words.iter_mut().enumerate() {
            *w = self.words.get(i).copied().unwrap_or(0);
        }
        if len % 64 != 0 {
            if let Some(last) = out.words.last_mut() {
                *last &= (1u64 << (len % 64)) - 1;
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.words.iter().flat_map(|w| w.to_le_bytes()).collect()
    }

    pub fn from_bytes(len: u64, bytes: &[u8]) -> Result<Self> {
        let nw = len.div_ceil(64) as usize;
        if bytes.len() != nw * 8 {
            return Err(LabError::Parse(format!(
                "bitset payload has {} bytes, expected {}",
                bytes.len(),
                nw * 8
            )));
        }
        let words: Vec<u64> = bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let b = Bitset { len, words };
        if b.resized(len) != b {
            return Err(LabError::Parse("bits set beyond the horizon".into()));
        }
        Ok(b)
    }
}

/// First `n` with `n, n + s, ..., n + k s` all in `b`.
pub fn first_progression(b: &Bitset, s: u64, k: u32) -> Option<u64> {
    if s == 0 {
        return b.ones().next();
    }
    let reach = s.checked_mul(k as u64)?;
    if reach >= b.len() {
        return None;
    }
    for w in 0..b.words.len() {
        let mut acc = b.words[w];
        for j in 1..=k as u64 {
            if acc == 0 {
                break;
            }
            acc &= b.shifted_word(w, j * s);
        }
        if acc != 0 {
            return Some(w as u64 * 64 + acc.trailing_zeros() as u64);
        }
    }
    None
}

// ---------------------------------------------------------------------------

/// Band set `E = { x in T^r : #{ i : ||x_i|| >= a } <= t }`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandWitness {
    pub r: usize,
    #[serde(with = "serde_rat")]
    pub a: Rational,
    pub t: usize,
}

/// `P(Bin(r, p) <= t)` for a rational `p`.
pub fn binomial_tail(r: u64, p: &Rational, t: u64) -> Rational {
    let (num, den) = (p.numer().clone(), p.denom().clone());
    let rest = &den - &num;
    let mut acc = BigInt::zero();
    let mut c = BigInt::one();
    for j in 0..=t.min(r) {
        if j > 0 {
            c = c * BigInt::from(r - j + 1) / BigInt::from(j);
        }
        acc += &c * num.pow(j as u32) * rest.pow((r - j) as u32);
    }
    Rational::new(acc, den.pow(r as u32))
}

fn dist_at_least(x: u64, a_num: u128, a_den: u128) -> bool {
    // fixed point: x / 2^64
    let d = x.min(x.wrapping_neg()) as u128;
    d * a_den >= a_num << 64
}

impl BandWitness {
    pub fn new(r: usize, a: Rational, t: usize) -> Result<Self> {
        if r == 0 {
            return Err(LabError::InvalidInput("r must be positive".into()));
        }
        if !a.is_positive() || a > arith::rat(1, 2) {
            return Err(LabError::InvalidInput(format!(
                "radius {} outside (0, 1/2]",
                arith::format_rational(&a)
            )));
        }
        if t > r {
            return Err(LabError::InvalidInput(format!("threshold {t} above r = {r}")));
        }
        Ok(BandWitness { r, a, t })
    }

    /// `m(E) = P(Bin(r, 1 - 2a) <= t)`.
    pub fn measure(&self) -> Rational {
        let p = Rational::one() - &self.a * Rational::from_integer(BigInt::from(2));
        binomial_tail(self.r as u64, &p, self.t as u64)
    }

    pub fn contains(&self, x: &TorusPoint) -> Result<bool> {
        check_dim(self.r, x.dim())?;
        Ok(x.coords().iter().filter(|c| arith::circle_dist(c) >= self.a).count() <= self.t)
    }

    /// Membership of `a / q` (numerators over `q`), in integer arithmetic.
    pub fn contains_numerators(&self, nums: &[u64], q: u64) -> bool {
        let an = self.a.numer().to_u128().expect("a <= 1/2");
        let ad = self.a.denom().to_u128().expect("small");
        let q = q as u128;
        let mut far = 0;
        for &v in nums {
            let v = v as u128 % q;
            let d = v.min(q - v);
            if d * ad >= an * q {
                far += 1;
                if far > self.t {
                    return false;
                }
            }
        }
        true
    }

    fn contains_fixed(&self, x: &[u64], an: u128, ad: u128) -> bool {
        x.iter().filter(|&&v| dist_at_least(v, an, ad)).count() <= self.t
    }

    /// The analytic conditions forcing `E cap (E + U) = empty`: `U` centered
    /// at `(1/2, ..., 1/2)`, `r > 2t + k` and `2a + eps <= 1/2`.
    pub fn disjointness(&self, u: &ApproxHammingBall) -> Result<DisjointnessConditions> {
        check_dim(self.r, u.dim())?;
        let half = arith::rat(1, 2);
        let centered = u.center().coords().iter().all(|c| *c == half);
        let counting = self.r > 2 * self.t + u.k();
        let radius = &self.a * Rational::from_integer(BigInt::from(2)) + u.eps();
        let radii = radius <= half;
        Ok(DisjointnessConditions {
            centered,
            counting,
            radii,
            holds: centered && counting && radii,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DisjointnessConditions {
    pub centered: bool,
    /// `r > 2t + k`.
    pub counting: bool,
    /// `2a + eps <= 1/2`.
    pub radii: bool,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BandBuild {
    pub witness: BandWitness,
    pub ball: ApproxHammingBall,
    #[serde(with = "serde_rat")]
    pub eps: Rational,
    #[serde(with = "serde_rat")]
    pub measure: Rational,
    pub conditions: DisjointnessConditions,
    /// Candidates `(r, t, eps)` tried before success.
    pub attempts: usize,
}

/// Smallest `r` (then largest `eps` among dyadic candidates) with
/// `a = 1/4 - eps`, `t = floor((r - k - 1) / 2)` and `m(E) > eta`.
pub fn build_band_witness(k: usize, eta: &Rational, r_max: usize) -> Result<BandBuild> {
    if !eta.is_positive() || *eta >= arith::rat(1, 2) {
        return Err(LabError::InvalidInput(format!(
            "eta = {} must lie in (0, 1/2)",
            arith::format_rational(eta)
        )));
    }
    let eps_list: Vec<Rational> = (4..=20).step_by(2).map(|j| Rational::new(BigInt::one(), BigInt::from(1u64 << j))).collect();
    let mut attempts = 0;
    for r in k + 1..=r_max {
        let t = (r - k - 1) / 2;
        for eps in &eps_list {
            attempts += 1;
            let a = arith::rat(1, 4) - eps;
            let witness = BandWitness::new(r, a, t)?;
            let measure = witness.measure();
            if measure > *eta {
                let ball = ApproxHammingBall::new(TorusPoint::constant(r, arith::rat(1, 2)), k, eps.clone())?;
                let conditions = witness.disjointness(&ball)?;
                debug_assert!(conditions.holds);
                return Ok(BandBuild {
                    witness,
                    ball,
                    eps: eps.clone(),
                    measure,
                    conditions,
                    attempts,
                });
            }
        }
    }
    Err(LabError::Exhausted(format!(
        "no band witness with m(E) > {} up to r = {r_max}",
        arith::format_rational(eta)
    )))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MonteCarloReport {
    pub samples: u64,
    /// Samples `e + u` (with `e` in `E`, `u` in `U`) that landed in `E`.
    pub hits: u64,
    /// Uniform samples that landed in `E`, for the measure check.
    pub measure_hits: u64,
    pub measure_estimate: f64,
    pub measure_exact: f64,
    /// `|estimate - exact| / sigma`.
    pub z_score: f64,
}

/// Sample `e` uniformly from `E` (rejection) and `u` from `U` (random
/// free coordinates, the rest within `eps` of the center) and test
/// `e + u in E`. Coordinates are 64-bit fixed point, so all comparisons
/// against the rational radii are exact.
pub fn monte_carlo_disjointness(
    w: &BandWitness,
    u: &ApproxHammingBall,
    samples: u64,
    seed: u64,
    strategy: Strategy,
) -> Result<MonteCarloReport> {
    check_dim(w.r, u.dim())?;
    let an = w.a.numer().to_u128().expect("a <= 1/2");
    let ad = w.a.denom().to_u128().expect("small");
    let en = u.eps().numer().to_u128().expect("eps <= 1/2");
    let ed = u.eps().denom().to_u128().expect("small");
    // largest offset with offset / 2^64 < eps
    let eps_fixed = {
        let v = (en << 64) / ed;
        let v = if v * ed == en << 64 { v - 1 } else { v };
        v.min(u64::MAX as u128) as u64
    };
    let centers: Vec<u64> = u
        .center()
        .coords()
        .iter()
        .map(|c| (c * Rational::from_integer(BigInt::one() << 64)).floor().to_integer().to_u64().unwrap_or(0))
        .collect();
    let center_exact = u
        .center()
        .coords()
        .iter()
        .all(|c| (c * Rational::from_integer(BigInt::one() << 64)).is_integer());
    if !center_exact {
        return Err(LabError::InvalidInput("ball center must be dyadic for fixed-point sampling".into()));
    }
    let r = w.r;
    let k = u.k();
    let chunks = 64usize;
    let per = samples.div_ceil(chunks as u64);
    let parts = exec::map_chunks(strategy, chunks, |range| {
        let mut out = (0u64, 0u64, 0u64);
        let mut e = vec![0u64; r];
        let mut x = vec![0u64; r];
        let mut free = vec![false; r];
        for c in range {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            for _ in 0..per {
                for v in x.iter_mut() {
                    *v = rng.random();
                }
                if w.contains_fixed(&x, an, ad) {
                    out.2 += 1;
                }
                loop {
                    for v in e.iter_mut() {
                        *v = rng.random();
                    }
                    if w.contains_fixed(&e, an, ad) {
                        break;
                    }
                }
                free.iter_mut().for_each(|f| *f = false);
                let mut chosen = 0;
                while chosen < k {
                    let i = rng.random_range(0..r);
                    if !free[i] {
                        free[i] = true;
                        chosen += 1;
                    }
                }
                for i in 0..r {
                    let ui = if free[i] {
                        rng.random::<u64>()
                    } else {
                        let off = rng.random_range(0..=eps_fixed);
                        if rng.random::<bool>() {
                            centers[i].wrapping_add(off)
                        } else {
                            centers[i].wrapping_sub(off)
                        }
                    };
                    x[i] = e[i].wrapping_add(ui);
                }
                if w.contains_fixed(&x, an, ad) {
                    out.1 += 1;
                }
                out.0 += 1;
            }
        }
        out
    });
    let (n, hits, mhits) = parts
        .into_iter()
        .fold((0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let exact = arith::to_f64(&w.measure());
    let est = mhits as f64 / n as f64;
    let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
    Ok(MonteCarloReport {
        samples: n,
        hits,
        measure_hits: mhits,
        measure_estimate: est,
        measure_exact: exact,
        z_score: if sigma > 0.0 { (est - exact).abs() / sigma } else { 0.0 },
    })
}

// ---------------------------------------------------------------------------

/// How a certificate was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Explicit,
    Rotation {
        band: BandWitness,
        ball: ApproxHammingBall,
        beta: Frequency,
    },
    Combined {
        m: u64,
        construction: Construction,
        first: Box<Provenance>,
        second: Box<Provenance>,
    },
    Square {
        from: Box<Provenance>,
    },
    Dilated {
        m: u64,
        from: Box<Provenance>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    FirstWitness,
    SecondWitness,
    ProductRotation,
}

impl Provenance {
    /// Band/frequency pairs `(E_i, beta_i)` with `B = { n : n beta_i in E_i for all i }`,
    /// when the witness set has that form.
    pub fn rotation_factors(&self) -> Option<Vec<(BandWitness, Frequency)>> {
        match self {
            Provenance::Rotation { band, beta, .. } => Some(vec![(band.clone(), beta.clone())]),
            Provenance::Square { from } => from.rotation_factors(),
            Provenance::Combined {
                m,
                construction,
                first,
                second,
            } => match construction {
                Construction::FirstWitness => first.rotation_factors(),
                Construction::SecondWitness => second.rotation_factors(),
                Construction::ProductRotation => {
                    let mut out = first.rotation_factors()?;
                    for (e, b) in second.rotation_factors()? {
                        out.push((e, scaled_frequency(&b, *m).ok()?));
                    }
                    Some(out)
                }
            },
            Provenance::Explicit | Provenance::Dilated { .. } => None,
        }
    }
}

fn rotation_bitset(factors: &[(BandWitness, Frequency)], n: u64, strategy: Strategy) -> Bitset {
    Bitset::from_fn(n, strategy, |i| {
        factors.iter().all(|(e, b)| {
            let q = b.denominator();
            let mut a = vec![0u64; e.r];
            b.multiple_into(i % q, &mut a);
            e.contains_numerators(&a, q)
        })
    })
}

/// A finite witness of `(delta', k)`-nonrecurrence of `S` at horizon `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub n: u64,
    pub k: u32,
    pub delta: Rational,
    pub s: Vec<i64>,
    pub b: Bitset,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    #[serde(rename = "N")]
    n: u64,
    k: u32,
    #[serde(rename = "deltaPrime", with = "serde_rat")]
    delta: Rational,
    #[serde(rename = "S")]
    s: Vec<i64>,
    provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub s: i64,
    /// Start of the progression `n, n + s, ..., n + k s` inside `B`.
    pub n: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verification {
    pub valid: bool,
    pub density_ok: bool,
    pub count: u64,
    pub horizon: u64,
    pub first_violation: Option<Violation>,
}

impl fmt::Display for Verification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|B| = {} of N = {}", self.count, self.horizon)?;
        if !self.density_ok {
            write!(f, ", density below the claim")?;
        }
        if let Some(v) = self.first_violation {
            write!(f, ", progression with step {} starting at {}", v.s, v.n)?;
        }
        Ok(())
    }
}

fn normalize_set(s: &[i64]) -> Vec<i64> {
    let mut v = s.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

impl Certificate {
    /// Unverified assembly; use [`Certificate::verified`] to build one that is
    /// guaranteed valid.
    pub fn new(n: u64, k: u32, delta: Rational, s: &[i64], b: Bitset, provenance: Provenance) -> Result<Self> {
        if n == 0 || n > MAX_HORIZON {
            return Err(LabError::InvalidInput(format!("horizon {n} outside [1, {MAX_HORIZON}]")));
        }
        if k == 0 {
            return Err(LabError::InvalidInput("k must be positive".into()));
        }
        if b.len() != n {
            return Err(LabError::InvalidInput(format!("bitset length {} differs from N = {n}", b.len())));
        }
        if delta.is_negative() || delta > Rational::one() {
            return Err(LabError::InvalidInput("density claim outside [0, 1]".into()));
        }
        Ok(Certificate {
            n,
            k,
            delta,
            s: normalize_set(s),
            b,
            provenance,
        })
    }

    pub fn verified(
        n: u64,
        k: u32,
        delta: Rational,
        s: &[i64],
        b: Bitset,
        provenance: Provenance,
        strategy: Strategy,
    ) -> Result<Self> {
        let c = Certificate::new(n, k, delta, s, b, provenance)?;
        let v = verify_certificate(&c, strategy);
        if v.valid {
            Ok(c)
        } else {
            Err(LabError::Verification(v.to_string()))
        }
    }

    pub fn density(&self) -> Rational {
        Rational::new(BigInt::from(self.b.count()), BigInt::from(self.n))
    }

    /// Header line (JSON) followed by the base64 bitset line.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            version: FORMAT_VERSION,
            n: self.n,
            k: self.k,
            delta: self.delta.clone(),
            s: self.s.clone(),
            provenance: self.provenance.clone(),
        };
        let json = serde_json::to_string(&header).map_err(|e| LabError::Io(e.to_string()))?;
        writeln!(w, "{json}")?;
        writeln!(w, "{}", STANDARD.encode(self.b.to_bytes()))?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let head = lines
            .next()
            .ok_or_else(|| LabError::Parse("missing certificate header".into()))??;
        let header: Header = serde_json::from_str(&head).map_err(|e| LabError::Parse(e.to_string()))?;
        if header.version != FORMAT_VERSION {
            return Err(LabError::Parse(format!("unsupported certificate version {}", header.version)));
        }
        let payload = lines
            .next()
            .ok_or_else(|| LabError::Parse("missing bitset payload".into()))??;
        let bytes = STANDARD
            .decode(payload.trim())
            .map_err(|e| LabError::Parse(e.to_string()))?;
        let b = Bitset::from_bytes(header.n, &bytes)?;
        Certificate::new(header.n, header.k, header.delta, &header.s, b, header.provenance)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("in-memory write");
        out
    }
}

/// Exact check of `|B| >= delta' N` and of `bigcap_{j<=k} (B - j s) = empty`
/// for every `s`. Reports the first violating `s` in increasing order.
pub fn verify_certificate(c: &Certificate, strategy: Strategy) -> Verification {
    let count = c.b.count();
    let density_ok = Rational::from_integer(BigInt::from(count)) >= &c.delta * Rational::from_integer(BigInt::from(c.n));
    let found = exec::map_items(strategy, &c.s, |&s| {
        first_progression(&c.b, s.unsigned_abs(), c.k).map(|n| Violation { s, n })
    });
    let first_violation = found.into_iter().flatten().next();
    Verification {
        valid: density_ok && first_violation.is_none(),
        density_ok,
        count,
        horizon: c.n,
        first_violation,
    }
}

/// `B = { n < N : n beta in E }`, `S = { 1 <= n < N : n beta in U }`, `k = 1`,
/// with `delta' = |B| / N`.
pub fn rotation_certificate(
    e: &BandWitness,
    u: &ApproxHammingBall,
    beta: &Frequency,
    n: u64,
    strategy: Strategy,
) -> Result<Certificate> {
    check_dim(e.r, u.dim())?;
    check_dim(e.r, beta.dim())?;
    let q = beta.denominator();
    let test = u
        .kernel(q)
        .ok_or_else(|| LabError::InvalidInput("ball too fine for the frequency denominator".into()))?;
    let r = e.r;
    let b = Bitset::from_fn(n, strategy, |i| {
        let mut a = vec![0u64; r];
        beta.multiple_into(i % q, &mut a);
        e.contains_numerators(&a, q)
    });
    let members = exec::map_chunks(strategy, n as usize, |range| {
        let mut a = vec![0u64; r];
        range
            .filter(|&i| i >= 1)
            .filter(|&i| {
                beta.multiple_into(i as u64 % q, &mut a);
                test.ball_contains(&a)
            })
            .map(|i| i as i64)
            .collect::<Vec<i64>>()
    });
    let s: Vec<i64> = members.into_iter().flatten().collect();
    let delta = Rational::new(BigInt::from(b.count()), BigInt::from(n));
    let provenance = Provenance::Rotation {
        band: e.clone(),
        ball: u.clone(),
        beta: beta.clone(),
    };
    Certificate::verified(n, 1, delta, &s, b, provenance, strategy)
}

// ---------------------------------------------------------------------------

/// Density required of a combined certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityTarget {
    /// `2 delta_1 delta_2`.
    #[default]
    Paper,
    /// `delta_1 delta_2`, what the product rotation reaches.
    Product,
}

impl DensityTarget {
    pub fn value(self, d1: &Rational, d2: &Rational) -> Rational {
        let p = d1 * d2;
        match self {
            DensityTarget::Paper => p * Rational::from_integer(BigInt::from(2)),
            DensityTarget::Product => p,
        }
    }
}

/// Largest `|B|` over all `B` of `[0, n)` with no progression of length
/// `k + 1` and step in `s`, by dynamic programming over the last
/// `k max(s)` positions. `None` when the state space is too large.
pub fn max_avoiding_size(s: &[i64], k: u32, n: u64) -> Option<u64> {
    let steps: Vec<u64> = normalize_set(&s.iter().map(|v| v.unsigned_abs() as i64).collect::<Vec<_>>())
        .into_iter()
        .map(|v| v as u64)
        .filter(|&v| v > 0 && v.saturating_mul(k as u64) < n)
        .collect();
    if s.contains(&0) {
        return Some(0);
    }
    let window = steps.iter().map(|&v| v * k as u64).max().unwrap_or(0);
    if window > 22 || (n as u128) << window > 1u128 << 32 {
        return None;
    }
    let states = 1usize << window;
    let mask = states - 1;
    let mut best = vec![i64::MIN; states];
    best[0] = 0;
    for _ in 0..n {
        let mut next = vec![i64::MIN; states];
        for (st, &v) in best.iter().enumerate() {
            if v == i64::MIN {
                continue;
            }
            // bit j-1 of st records whether position (current - j) is in B
            let skip = (st << 1) & mask;
            if next[skip] < v {
                next[skip] = v;
            }
            let ok = steps.iter().all(|&s| (1..=k as u64).any(|j| (st >> (j * s - 1)) & 1 == 0));
            if ok {
                let take = ((st << 1) | 1) & mask;
                if next[take] < v + 1 {
                    next[take] = v + 1;
                }
            }
        }
        best = next;
    }
    best.into_iter().max().map(|v| v as u64)
}

/// Why a combination failed at a given `m`.
#[derive(Debug, Clone, Serialize)]
pub struct CombineFailure {
    pub m: u64,
    /// No `B` of the required density exists at all (exhaustive bound).
    pub proven: bool,
    pub reason: String,
}

impl From<CombineFailure> for LabError {
    fn from(f: CombineFailure) -> Self {
        LabError::NotCombinable { m: f.m, reason: f.reason }
    }
}

fn require_valid(c: &Certificate, which: &str, strategy: Strategy) -> Result<()> {
    if c.k != 1 {
        return Err(LabError::InvalidInput(format!("{which} certificate has k = {}, expected 1", c.k)));
    }
    let v = verify_certificate(c, strategy);
    if !v.valid {
        return Err(LabError::Verification(format!("{which} certificate is invalid: {v}")));
    }
    Ok(())
}

fn scaled_frequency(beta: &Frequency, m: u64) -> Result<Frequency> {
    let inv = Rational::new(BigInt::one(), BigInt::from(m));
    let p = TorusPoint::new(beta.point().coords().iter().map(|c| c * &inv).collect())?;
    Frequency::from_point(&p, beta.is_generating())
}

fn try_combine(
    c1: &Certificate,
    c2: &Certificate,
    m: u64,
    target: DensityTarget,
    strategy: Strategy,
) -> std::result::Result<Certificate, CombineFailure> {
    let fail = |proven, reason: String| CombineFailure { m, proven, reason };
    if m == 0 {
        return Err(fail(false, "m must be positive".into()));
    }
    let n = c1.n.min(c2.n);
    let first: Vec<i64> = c1.s.iter().copied().filter(|s| s.unsigned_abs() < n).collect();
    let second: Vec<i64> = c2
        .s
        .iter()
        .filter_map(|&s| s.checked_mul(m as i64))
        .filter(|s| s.unsigned_abs() < n)
        .collect();
    if let Some(x) = second.iter().find(|x| first.contains(x)) {
        return Err(fail(false, format!("{x} lies in both S1 and m S2")));
    }
    let mut s = first;
    s.extend(second);
    let s = normalize_set(&s);
    let delta = target.value(&c1.delta, &c2.delta);
    let mut candidates: Vec<(Construction, Bitset)> = vec![
        (Construction::FirstWitness, c1.b.resized(n)),
        (Construction::SecondWitness, c2.b.resized(n)),
    ];
    if let (Some(mut f1), Some(f2)) = (c1.provenance.rotation_factors(), c2.provenance.rotation_factors()) {
        for (e, b) in f2 {
            match scaled_frequency(&b, m) {
                Ok(bm) => f1.push((e, bm)),
                Err(e) => return Err(fail(false, format!("cannot scale the second frequency: {e}"))),
            }
        }
        candidates.push((Construction::ProductRotation, rotation_bitset(&f1, n, strategy)));
    }
    let mut best = Rational::zero();
    for (name, b) in candidates {
        let provenance = Provenance::Combined {
            m,
            construction: name,
            first: Box::new(c1.provenance.clone()),
            second: Box::new(c2.provenance.clone()),
        };
        let c = match Certificate::new(n, 1, delta.clone(), &s, b, provenance) {
            Ok(c) => c,
            Err(e) => return Err(fail(false, e.to_string())),
        };
        if verify_certificate(&c, strategy).valid {
            return Ok(c);
        }
        if c.density() > best && c.s.iter().all(|&x| first_progression(&c.b, x.unsigned_abs(), 1).is_none()) {
            best = c.density();
        }
    }
    let need = &delta * Rational::from_integer(BigInt::from(n));
    match max_avoiding_size(&s, 1, n) {
        Some(max) if Rational::from_integer(BigInt::from(max)) < need => Err(fail(
            true,
            format!(
                "every B in [0, {n}) avoiding S = {s:?} has at most {max} elements, below {} N = {}",
                arith::format_rational(&delta),
                arith::format_rational(&need)
            ),
        )),
        _ => Err(fail(
            false,
            format!(
                "no candidate reached density {} (best valid candidate {})",
                arith::format_rational(&delta),
                arith::format_rational(&best)
            ),
        )),
    }
}

/// Certificate for `S1 cup m S2` built from `c1`, `c2` and verified before
/// it is returned. Candidates: either input witness restricted to the
/// common horizon, and the product rotation `{ n : n beta1 in E1, n beta2 / m in E2 }`
/// when both inputs are rotation certificates.
pub fn combine_certificates(
    c1: &Certificate,
    c2: &Certificate,
    m: u64,
    target: DensityTarget,
    strategy: Strategy,
) -> Result<Certificate> {
    require_valid(c1, "first", strategy)?;
    require_valid(c2, "second", strategy)?;
    try_combine(c1, c2, m, target, strategy).map_err(Into::into)
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub m: u64,
    pub certificate: Certificate,
    pub failures: Vec<CombineFailure>,
}

/// Smallest `m` in `1..=m_max` with a verified combined certificate.
pub fn search_min_m(
    c1: &Certificate,
    c2: &Certificate,
    m_max: u64,
    target: DensityTarget,
    strategy: Strategy,
) -> Result<SearchResult> {
    if m_max == 0 {
        return Err(LabError::InvalidInput("m_max must be at least 1".into()));
    }
    require_valid(c1, "first", strategy)?;
    require_valid(c2, "second", strategy)?;
    let mut failures = Vec::new();
    for m in 1..=m_max {
        match try_combine(c1, c2, m, target, strategy) {
            Ok(certificate) => {
                return Ok(SearchResult {
                    m,
                    certificate,
                    failures,
                })
            }
            Err(f) => failures.push(f),
        }
    }
    let detail: Vec<String> = failures.iter().map(|f| format!("m = {}: {}", f.m, f.reason)).collect();
    Err(LabError::Exhausted(detail.join("; ")))
}

/// Certificate for `S^2 = { s^2 : s in S }` against the same `B` (or a
/// caller-supplied one), re-verified.
pub fn square_certificate(c: &Certificate, b: Option<Bitset>, strategy: Strategy) -> Result<Certificate> {
    let s: Vec<i64> = c
        .s
        .iter()
        .map(|&x| {
            x.checked_mul(x)
                .ok_or_else(|| LabError::InvalidInput(format!("{x}^2 overflows")))
        })
        .collect::<Result<_>>()?;
    let b = b.unwrap_or_else(|| c.b.clone());
    let provenance = Provenance::Square {
        from: Box::new(c.provenance.clone()),
    };
    Certificate::verified(c.n, c.k, c.delta.clone(), &s, b, provenance, strategy)
}

/// Certificate for `m S` at horizon `m N` with `B' = { n : floor(n / m) in B }`.
pub fn dilate_certificate(c: &Certificate, m: u64, strategy: Strategy) -> Result<Certificate> {
    if m == 0 {
        return Err(LabError::InvalidInput("m must be positive".into()));
    }
    let n = c
        .n
        .checked_mul(m)
        .filter(|&n| n <= MAX_HORIZON)
        .ok_or_else(|| LabError::InvalidInput("dilated horizon too large".into()))?;
    let s: Vec<i64> = c
        .s
        .iter()
        .map(|&x| x.checked_mul(m as i64).ok_or_else(|| LabError::InvalidInput("overflow".into())))
        .collect::<Result<_>>()?;
    let src = &c.b;
    let b = Bitset::from_fn(n, strategy, |i| src.get(i / m));
    let provenance = Provenance::Dilated {
        m,
        from: Box::new(c.provenance.clone()),
    };
    Certificate::verified(n, c.k, c.delta.clone(), &s, b, provenance, strategy)
}

/// The evens witness: `B = 2Z cap [0, N)`, `S = {1}`, `k = 1`.
pub fn evens_certificate(n: u64, delta: Rational, strategy: Strategy) -> Result<Certificate> {
    let b = Bitset::from_fn(n, strategy, |i| i % 2 == 0);
    Certificate::verified(n, 1, delta, &[1], b, Provenance::Explicit, strategy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;

    const SEQ: Strategy = Strategy::Sequential;

    fn brute_valid(b: &Bitset, s: &[i64], k: u32) -> bool {
        let n = b.len() as i64;
        s.iter().all(|&s| {
            (0..n).all(|x| !(0..=k as i64).all(|j| {
                let y = x + j * s.abs();
                y < n && b.get(y as u64)
            }))
        })
    }

    #[test]
    fn evens_verify() {
        let c = evens_certificate(100, rat(49, 100), SEQ).unwrap();
        assert_eq!(c.b.count(), 50);
        let mut bad = c.b.clone();
        bad.set(5);
        let c2 = Certificate::new(100, 1, rat(49, 100), &[1], bad, Provenance::Explicit).unwrap();
        let v = verify_certificate(&c2, SEQ);
        assert!(!v.valid);
        assert_eq!(v.first_violation, Some(Violation { s: 1, n: 4 }));
    }

    #[test]
    fn mod_six_pattern_against_enumeration() {
        let b = Bitset::from_fn(60, SEQ, |i| i % 6 < 2);
        let c = Certificate::new(60, 2, rat(1, 3), &[2], b.clone(), Provenance::Explicit).unwrap();
        assert_eq!(verify_certificate(&c, SEQ).valid, brute_valid(&b, &[2], 2));
        assert!(verify_certificate(&c, SEQ).valid);
    }

    #[test]
    fn shifted_words_cross_boundaries() {
        let b = Bitset::from_fn(300, SEQ, |i| i % 7 == 3 || i == 250);
        for s in [1u64, 7, 63, 64, 65, 130] {
            for k in 1..3 {
                let expect = (0..300u64).find(|&x| (0..=k as u64).all(|j| b.get(x + j * s)));
                assert_eq!(first_progression(&b, s, k), expect, "s={s} k={k}");
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let c = evens_certificate(130, rat(1, 2), SEQ).unwrap();
        let bytes = c.to_bytes();
        let back = Certificate::read_from(&bytes[..]).unwrap();
        assert_eq!(back, c);
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("{\"version\":1,\"N\":130,\"k\":1,\"deltaPrime\":\"1/2\",\"S\":[1]"));
    }

    #[test]
    fn binomial_tail_small_cases() {
        assert_eq!(binomial_tail(2, &rat(1, 2), 0), rat(1, 4));
        assert_eq!(binomial_tail(3, &rat(1, 3), 3), rat(1, 1));
        assert_eq!(binomial_tail(3, &rat(1, 3), 1), rat(8 + 12, 27));
    }

    #[test]
    fn band_witness_for_small_eta() {
        let b = build_band_witness(1, &rat(1, 100), 50).unwrap();
        assert_eq!(b.witness.r, 2);
        assert_eq!(b.witness.t, 0);
        assert!(b.conditions.holds);
        assert!(build_band_witness(1, &rat(1, 2), 50).is_err());
    }

    #[test]
    fn band_witness_monte_carlo() {
        let b = build_band_witness(1, &rat(1, 4), 400).unwrap();
        assert!(b.measure > rat(1, 4));
        let mc = monte_carlo_disjointness(&b.witness, &b.ball, 20_000, 7, SEQ).unwrap();
        assert_eq!(mc.hits, 0);
        assert!(mc.z_score < 4.0);
    }

    #[test]
    fn toy_rotation_certificate() {
        let e = BandWitness::new(1, rat(1, 8), 0).unwrap();
        let u = ApproxHammingBall::new(TorusPoint::constant(1, rat(1, 2)), 0, rat(1, 4)).unwrap();
        assert!(e.disjointness(&u).unwrap().holds);
        let beta = Frequency::from_numerators(&[1], 16, false).unwrap();
        let c = rotation_certificate(&e, &u, &beta, 64, SEQ).unwrap();
        let expect_b: Vec<u64> = (0..64).filter(|n| {
            let v = n % 16;
            v.min(16 - v) * 8 < 16
        }).collect();
        assert_eq!(c.b.ones().collect::<Vec<_>>(), expect_b);
        let expect_s: Vec<i64> = (1..64).filter(|n| {
            let v = (n % 16 + 8) % 16;
            v.min(16 - v) * 4 < 16
        }).collect();
        assert_eq!(c.s, expect_s);
        assert!(brute_valid(&c.b, &c.s, 1));
    }

    #[test]
    fn full_band_needs_empty_s() {
        let e = BandWitness::new(2, rat(1, 8), 2).unwrap();
        let u = ApproxHammingBall::new(TorusPoint::constant(2, rat(1, 2)), 1, rat(1, 8)).unwrap();
        let beta = Frequency::from_numerators(&[1, 3], 10, false).unwrap();
        assert!(matches!(rotation_certificate(&e, &u, &beta, 50, SEQ), Err(LabError::Verification(_))));
        let c = rotation_certificate(&e, &u, &beta, 2, SEQ).unwrap();
        assert!(c.s.is_empty());
    }

    #[test]
    fn rotation_set_is_the_bohr_hamming_ball() {
        let band = build_band_witness(1, &rat(1, 4), 64).unwrap();
        let beta = Frequency::from_surds(
            &[2, 3, 5, 7].map(crate::irrational::Surd::sqrt)[..band.witness.r],
            1_000_003,
        )
        .unwrap();
        let c = rotation_certificate(&band.witness, &band.ball, &beta, 20_000, SEQ).unwrap();
        let bh = crate::bohr::BohrHammingBall::new(beta, band.ball.clone()).unwrap();
        let expect: Vec<i64> = (1..20_000).filter(|&n| bh.contains_i64(n)).collect();
        assert!(!expect.is_empty());
        assert_eq!(c.s, expect);
    }

    #[test]
    fn combine_and_search() {
        let c = evens_certificate(100, rat(49, 100), SEQ).unwrap();
        let got = combine_certificates(&c, &c, 3, DensityTarget::Paper, SEQ).unwrap();
        assert_eq!(got.s, vec![1, 3]);
        match combine_certificates(&c, &c, 2, DensityTarget::Paper, SEQ) {
            Err(LabError::NotCombinable { m: 2, reason }) => assert!(reason.contains("at most 34")),
            other => panic!("{other:?}"),
        }
        let res = search_min_m(&c, &c, 10, DensityTarget::Paper, SEQ).unwrap();
        assert_eq!(res.m, 3);
        assert!(res.failures.iter().any(|f| f.m == 2 && f.proven));
        let big = combine_certificates(&c, &c, 200, DensityTarget::Paper, SEQ).unwrap();
        assert_eq!(big.s, vec![1]);
        assert!(matches!(search_min_m(&c, &c, 1, DensityTarget::Paper, SEQ), Err(LabError::Exhausted(_))));
        let empty = Certificate::verified(100, 1, rat(1, 2), &[], Bitset::from_fn(100, SEQ, |i| i < 50), Provenance::Explicit, SEQ).unwrap();
        let res = search_min_m(&c, &empty, 5, DensityTarget::Paper, SEQ).unwrap();
        assert_eq!(res.m, 1);
    }

    #[test]
    fn dp_bound_matches_brute_force() {
        for n in 1..=12u64 {
            for s in [vec![1i64], vec![1, 2], vec![2, 3], vec![3]] {
                let brute = (0u32..1 << n)
                    .filter(|mask| {
                        let b = Bitset::from_fn(n, SEQ, |i| mask >> i & 1 == 1);
                        brute_valid(&b, &s, 1)
                    })
                    .map(|m| m.count_ones() as u64)
                    .max()
                    .unwrap();
                assert_eq!(max_avoiding_size(&s, 1, n), Some(brute), "n={n} s={s:?}");
            }
        }
        assert_eq!(max_avoiding_size(&[1], 2, 9), Some(6));
    }

    #[test]
    fn squares_and_dilates() {
        let b = Bitset::from_fn(40, SEQ, |i| i % 8 < 4);
        let c = Certificate::verified(40, 1, rat(1, 2), &[4], b.clone(), Provenance::Explicit, SEQ);
        assert!(c.is_ok());
        let c2 = Certificate::verified(40, 1, rat(1, 2), &[2], Bitset::from_fn(40, SEQ, |i| i % 4 < 2), Provenance::Explicit, SEQ).unwrap();
        let sq = square_certificate(&c2, Some(b), SEQ).unwrap();
        assert_eq!(sq.s, vec![4]);
        let ev = evens_certificate(100, rat(1, 2), SEQ).unwrap();
        let ev13 = Certificate::verified(100, 1, rat(1, 2), &[1, 3], ev.b.clone(), Provenance::Explicit, SEQ).unwrap();
        assert_eq!(square_certificate(&ev13, None, SEQ).unwrap().s, vec![1, 9]);
        let empty = Certificate::verified(10, 1, rat(0, 1), &[], Bitset::new(10), Provenance::Explicit, SEQ).unwrap();
        assert!(square_certificate(&empty, None, SEQ).unwrap().s.is_empty());
        let d = dilate_certificate(&ev13, 3, SEQ).unwrap();
        assert_eq!(d.s, vec![3, 9]);
        assert_eq!(d.density(), rat(1, 2));
    }

    #[test]
    fn rotation_product_combination() {
        let e = BandWitness::new(1, rat(1, 8), 0).unwrap();
        let u = ApproxHammingBall::new(TorusPoint::constant(1, rat(1, 2)), 0, rat(1, 4)).unwrap();
        let c1 = rotation_certificate(&e, &u, &Frequency::from_numerators(&[1], 16, false).unwrap(), 256, SEQ).unwrap();
        let c2 = rotation_certificate(&e, &u, &Frequency::from_numerators(&[3], 11, false).unwrap(), 256, SEQ).unwrap();
        let res = search_min_m(&c1, &c2, 40, DensityTarget::Product, SEQ);
        if let Ok(res) = res {
            assert!(verify_certificate(&res.certificate, SEQ).valid);
        }
    }
}
