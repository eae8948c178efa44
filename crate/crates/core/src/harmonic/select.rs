use num_bigint::BigInt;
use num_complex::Complex64;
use serde::Serialize;

use super::character::{Character, CoefficientTable};
use crate::arith::{self, Rational};
use crate::error::{check_dim, LabError, Result};
use crate::torus::{ApproxHammingBall, Cylinder, TorusPoint};

/// Fourier coefficient of the cylinder function on `V` at `chi`.
///
/// With `normalized` the function is `1_V / m(V)`, otherwise `1_V`.
/// Coefficients that vanish because some `n_i != 0` with `i` outside `I` are
/// returned as an exact zero without touching floating point.
pub fn cylinder_fourier(v: &Cylinder, normalized: bool, chi: &Character) -> Result<Complex64> {
    check_dim(v.dim(), chi.dim())?;
    let inside: Vec<bool> = (0..v.dim()).map(|i| v.indices().contains(&i)).collect();
    if chi
        .freq()
        .iter()
        .zip(&inside)
        .any(|(&n, &ins)| n != 0 && !ins)
    {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let eta = arith::to_f64(v.eta());
    let mut acc = Complex64::new(1.0, 0.0);
    for &i in v.indices() {
        let n = chi.freq()[i];
        if n == 0 {
            continue;
        }
        let phase = arith::frac(&(-Rational::from_integer(BigInt::from(n)) * v.center().coord(i)));
        let x = std::f64::consts::TAU * n as f64 * eta;
        acc *= arith::e_rational(&phase) * (x.sin() / x);
    }
    if !normalized {
        acc *= arith::to_f64(&v.measure());
    }
    Ok(acc)
}

/// Coefficient of the translate `f_s(x) = f(x + s)`: `chi(s) fhat(chi)`.
pub fn translate_coefficient(coef: Complex64, chi: &Character, s: &TorusPoint) -> Result<Complex64> {
    if coef == Complex64::new(0.0, 0.0) {
        check_dim(chi.dim(), s.dim())?;
        return Ok(coef);
    }
    Ok(chi.eval(s)? * coef)
}

/// Result of selecting the largest coefficients.
#[derive(Debug, Clone, Serialize)]
pub struct TopK {
    pub chosen: Vec<Character>,
    /// Largest `|fhat|` among the characters not chosen (within the family).
    pub residual: f64,
    /// `norm_bound * k^-1/2`.
    pub bound_k: f64,
    /// `norm_bound * (1+k)^-1/2`.
    pub bound_k1: f64,
}

pub fn top_k_characters(table: &CoefficientTable, k: usize, norm_bound: f64) -> Result<TopK> {
    top_k_filtered(table, k, norm_bound, |_| true)
}

/// Top-`k` selection restricted to characters accepted by `family`.
///
/// Ties are broken lexicographically on the frequency tuple, smallest first.
/// Zero coefficients are never chosen, so fewer than `k` characters can come
/// back.
pub fn top_k_filtered(
    table: &CoefficientTable,
    k: usize,
    norm_bound: f64,
    family: impl Fn(&Character) -> bool,
) -> Result<TopK> {
    if k == 0 {
        return Err(LabError::InvalidInput("k must be positive".into()));
    }
    if norm_bound.is_nan() || norm_bound <= 0.0 {
        return Err(LabError::InvalidInput("norm bound must be positive".into()));
    }
    let norm_sq = table.norm_sq();
    if norm_sq > norm_bound * norm_bound * (1.0 + 1e-12) {
        return Err(LabError::Precondition(format!(
            "table norm {} exceeds the bound {norm_bound}",
            norm_sq.sqrt()
        )));
    }
    let mut cands: Vec<(&Character, f64)> = table
        .iter()
        .filter(|(c, v)| family(c) && v.norm() > 0.0)
        .map(|(c, v)| (c, v.norm()))
        .collect();
    // BTreeMap order is lexicographic; a stable sort keeps it among equals
    cands.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite"));
    let take = k.min(cands.len());
    let chosen: Vec<Character> = cands[..take].iter().map(|(c, _)| (*c).clone()).collect();
    let residual = cands.get(take).map(|c| c.1).unwrap_or(0.0);
    let bound_k = norm_bound / (k as f64).sqrt();
    let bound_k1 = norm_bound / ((k + 1) as f64).sqrt();
    if residual > bound_k1 * (1.0 + 1e-12) {
        return Err(LabError::Verification(format!(
            "residual {residual} above (1+k)^-1/2 bound {bound_k1}"
        )));
    }
    Ok(TopK {
        chosen,
        residual,
        bound_k,
        bound_k1,
    })
}

/// Cylinder subordinate to `u` whose index set avoids, for each character, its
/// smallest index with a nonzero frequency. Extra removals take the largest
/// surviving indices until `|I| = r - k`.
pub fn annihilating_cylinder(u: &ApproxHammingBall, chars: &[Character]) -> Result<Cylinder> {
    let r = u.dim();
    let k = u.k();
    if chars.len() > k {
        return Err(LabError::InvalidInput(format!(
            "{} characters but the ball only allows {k} removals",
            chars.len()
        )));
    }
    let mut removed = vec![false; r];
    for chi in chars {
        check_dim(r, chi.dim())?;
        let l = chi
            .freq()
            .iter()
            .position(|&n| n != 0)
            .ok_or_else(|| LabError::InvalidInput("character must be nontrivial".into()))?;
        removed[l] = true;
    }
    let mut count = removed.iter().filter(|&&b| b).count();
    for i in (0..r).rev() {
        if count >= k {
            break;
        }
        if !removed[i] {
            removed[i] = true;
            count += 1;
        }
    }
    let indices: Vec<usize> = (0..r).filter(|&i| !removed[i]).collect();
    Cylinder::new(r, indices, u.center().clone(), u.eps().clone())
}

#[derive(Debug, Clone, Serialize)]
pub struct UniformizeReport {
    pub selection: TopK,
    /// Largest `|fhat(chi) ghat(chi)|` over nontrivial characters in the support.
    pub max_convolution_coefficient: f64,
    /// `k^-1/2`.
    pub bound: f64,
}

/// Choose a cylinder `g` subordinate to `u` so that `fhat * ghat` vanishes on
/// the `k` largest nontrivial coefficients of `f` and stays below `k^-1/2`
/// elsewhere. Requires `||f|| <= 1`.
pub fn uniformizing_cylinder(u: &ApproxHammingBall, f: &CoefficientTable) -> Result<(Cylinder, UniformizeReport)> {
    f.check_dim(u.dim())?;
    let k = u.k();
    let (cyl, selection) = if k == 0 {
        let all = u.subordinate_cylinders().remove(0);
        let empty = TopK {
            chosen: vec![],
            residual: f
                .iter()
                .filter(|(c, _)| !c.is_trivial())
                .map(|(_, v)| v.norm())
                .fold(0.0, f64::max),
            bound_k: f64::INFINITY,
            bound_k1: 1.0,
        };
        (all, empty)
    } else {
        let sel = top_k_filtered(f, k, 1.0, |c| !c.is_trivial())?;
        (annihilating_cylinder(u, &sel.chosen)?, sel)
    };
    let mut worst = 0.0f64;
    for (chi, v) in f.iter() {
        if chi.is_trivial() {
            continue;
        }
        let g = cylinder_fourier(&cyl, true, chi)?;
        worst = worst.max((v * g).norm());
    }
    let bound = if k == 0 { f64::INFINITY } else { 1.0 / (k as f64).sqrt() };
    Ok((
        cyl,
        UniformizeReport {
            selection,
            max_convolution_coefficient: worst,
            bound,
        },
    ))
}
