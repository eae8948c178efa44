//! Integer row lattices: Hermite normal form, integer kernels, saturation,
//! membership and relation lattices of rational or surd vectors.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::arith::Rational;
use crate::irrational::Surd;

pub type Row = Vec<BigInt>;

fn is_zero_row(r: &[BigInt]) -> bool {
    r.iter().all(Zero::is_zero)
}

fn combine(a: &mut Row, b: &mut Row, (x, y, u, v): (&BigInt, &BigInt, &BigInt, &BigInt)) {
    // (a, b) <- (x a + y b, u a + v b), a unimodular step
    for i in 0..a.len() {
        let na = x * &a[i] + y * &b[i];
        let nb = u * &a[i] + v * &b[i];
        a[i] = na;
        b[i] = nb;
    }
}

/// Row echelon form by unimodular row operations restricted to the first
/// `cols` columns. Returns the transformed rows (zero rows last) and the
/// number of pivots.
fn echelon(rows: &mut [Row], cols: usize) -> usize {
    let mut pivot_row = 0;
    for col in 0..cols {
        if pivot_row == rows.len() {
            break;
        }
        // gather the gcd into pivot_row
        for i in pivot_row + 1..rows.len() {
            if rows[i][col].is_zero() {
                continue;
            }
            let a = rows[pivot_row][col].clone();
            let b = rows[i][col].clone();
            let g = a.extended_gcd(&b);
            let (x, y) = (g.x, g.y);
            let u = -(&b / &g.gcd);
            let v = &a / &g.gcd;
            let (head, tail) = rows.split_at_mut(i);
            combine(&mut head[pivot_row], &mut tail[0], (&x, &y, &u, &v));
        }
        if rows[pivot_row][col].is_zero() {
            continue;
        }
        if rows[pivot_row][col].is_negative() {
            for v in rows[pivot_row].iter_mut() {
                *v = -v.clone();
            }
        }
        // reduce entries above the pivot into [0, pivot)
        let p = rows[pivot_row][col].clone();
        for i in 0..pivot_row {
            let qt = rows[i][col].div_floor(&p);
            if !qt.is_zero() {
                let sub: Row = rows[pivot_row].iter().map(|v| v * &qt).collect();
                for (x, s) in rows[i].iter_mut().zip(sub) {
                    *x -= s;
                }
            }
        }
        pivot_row += 1;
    }
    pivot_row
}

/// Hermite normal form basis of the lattice spanned by `rows`.
pub fn hnf(rows: &[Row]) -> Vec<Row> {
    if rows.is_empty() {
        return vec![];
    }
    let n = rows[0].len();
    let mut work: Vec<Row> = rows.iter().filter(|r| !is_zero_row(r)).cloned().collect();
    let rank = echelon(&mut work, n);
    work.truncate(rank);
    work
}

pub fn to_rows(v: &[Vec<i64>]) -> Vec<Row> {
    v.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect()
}

/// Basis (in HNF) of `{ x in Z^n : A x = 0 }` for the `m x n` matrix `A`.
pub fn kernel(a: &[Row], n: usize) -> Vec<Row> {
    let m = a.len();
    // augmented rows [A^T | I_n]
    let mut aug: Vec<Row> = (0..n)
        .map(|j| {
            let mut row: Row = a.iter().map(|r| r[j].clone()).collect();
            row.extend((0..n).map(|k| if k == j { BigInt::one() } else { BigInt::zero() }));
            row
        })
        .collect();
    let rank = echelon(&mut aug, m);
    let basis: Vec<Row> = aug[rank..].iter().map(|r| r[m..].to_vec()).collect();
    hnf(&basis)
}

/// Coefficients `c` with `v = sum c_i basis_i`, for an HNF basis.
pub fn solve(basis: &[Row], v: &[BigInt]) -> Option<Vec<BigInt>> {
    let mut rest: Row = v.to_vec();
    let mut coefs = Vec::with_capacity(basis.len());
    for row in basis {
        let p = row.iter().position(|x| !x.is_zero())?;
        if !rest[..p].iter().all(Zero::is_zero) {
            return None;
        }
        let (c, r) = rest[p].div_rem(&row[p]);
        if !r.is_zero() {
            return None;
        }
        for (x, b) in rest.iter_mut().zip(row) {
            *x -= &c * b;
        }
        coefs.push(c);
    }
    if is_zero_row(&rest) {
        Some(coefs)
    } else {
        None
    }
}

pub fn contains(basis: &[Row], v: &[BigInt]) -> bool {
    solve(basis, v).is_some()
}

/// `(L tensor Q) cap Z^n`.
pub fn saturate(basis: &[Row], n: usize) -> Vec<Row> {
    let perp = kernel(basis, n);
    kernel(&perp, n)
}

/// Determinant of a square integer matrix (fraction-free elimination).
pub fn det(m: &[Row]) -> BigInt {
    let n = m.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut a: Vec<Row> = m.to_vec();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&i| !a[i][k].is_zero()) {
                Some(i) => {
                    a.swap(i, k);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                a[i][j] = v / &prev;
            }
        }
        prev = a[k][k].clone();
    }
    sign * &a[n - 1][n - 1]
}

/// Index `[sup : sub]` for lattices of equal rank with `sub` inside `sup`.
pub fn index_in(sub: &[Row], sup: &[Row]) -> Option<BigInt> {
    if sub.len() != sup.len() {
        return None;
    }
    let coords: Option<Vec<Row>> = sub.iter().map(|v| solve(sup, v)).collect();
    Some(det(&coords?).abs())
}

fn common_denominator<'a>(vals: impl Iterator<Item = &'a Rational>) -> BigInt {
    vals.fold(BigInt::one(), |acc, r| acc.lcm(r.denom()))
}

fn scaled(r: &Rational, d: &BigInt) -> BigInt {
    (r * Rational::from_integer(d.clone())).to_integer()
}

/// `{ m in Z^n : m . v_j in Z for every j }` for rational vectors `v_j`.
pub fn relation_lattice(vectors: &[Vec<Rational>], n: usize) -> Vec<Row> {
    let k = vectors.len();
    let d = common_denominator(vectors.iter().flatten());
    let rows: Vec<Row> = vectors
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let mut row: Row = v.iter().map(|x| scaled(x, &d)).collect();
            row.extend((0..k).map(|i| if i == j { d.clone() } else { BigInt::zero() }));
            row
        })
        .collect();
    let ker = kernel(&rows, n + k);
    let proj: Vec<Row> = ker.iter().map(|r| r[..n].to_vec()).collect();
    hnf(&proj)
}

/// `{ m in Z^n : m . v in Z }` for a vector of surds.
pub fn surd_relation_lattice(v: &[Surd]) -> Vec<Row> {
    let n = v.len();
    let mut radicands: Vec<u64> = v.iter().flat_map(|s| s.radicands()).collect();
    radicands.sort_unstable();
    radicands.dedup();
    let coefs: Vec<Rational> = v
        .iter()
        .flat_map(|s| {
            let mut c = vec![s.rational_part()];
            c.extend(radicands.iter().map(|&p| s.coefficient(p)));
            c
        })
        .collect();
    let d = common_denominator(coefs.iter());
    let mut rows: Vec<Row> = Vec::new();
    for &p in &radicands {
        let mut row: Row = v.iter().map(|s| scaled(&s.coefficient(p), &d)).collect();
        row.push(BigInt::zero());
        rows.push(row);
    }
    let mut rat_row: Row = v.iter().map(|s| scaled(&s.rational_part(), &d)).collect();
    rat_row.push(d);
    rows.push(rat_row);
    let ker = kernel(&rows, n + 1);
    let proj: Vec<Row> = ker.iter().map(|r| r[..n].to_vec()).collect();
    hnf(&proj)
}

pub fn identity(n: usize) -> Vec<Row> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;

    fn b(v: &[i64]) -> Row {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn hnf_of_simple_lattice() {
        let h = hnf(&to_rows(&[vec![4, 6], vec![2, 2]]));
        assert_eq!(h, vec![b(&[2, 0]), b(&[0, 2])]);
        assert!(contains(&h, &b(&[6, 8])));
        assert!(!contains(&h, &b(&[1, 1])));
        assert!(!contains(&h, &b(&[1, 0])));
    }

    #[test]
    fn kernel_is_orthogonal() {
        let a = to_rows(&[vec![1, 2, 3], vec![2, 4, 7]]);
        let k = kernel(&a, 3);
        assert_eq!(k.len(), 1);
        let v = &k[0];
        for row in &a {
            let dot: BigInt = row.iter().zip(v).map(|(x, y)| x * y).sum();
            assert!(dot.is_zero());
        }
        assert_eq!(v, &b(&[2, -1, 0]));
    }

    #[test]
    fn saturation_and_index() {
        let l = hnf(&to_rows(&[vec![2, -2]]));
        let s = saturate(&l, 2);
        assert_eq!(s, vec![b(&[1, -1])]);
        assert_eq!(index_in(&l, &s).unwrap(), BigInt::from(2));
        assert_eq!(det(&to_rows(&[vec![2, 1], vec![1, 3]])), BigInt::from(5));
        assert_eq!(det(&to_rows(&[vec![0, 1], vec![1, 0]])), BigInt::from(-1));
    }

    #[test]
    fn relation_lattice_of_rationals() {
        // (1/2, 1/3): m1/2 + m2/3 in Z  <=>  3 m1 + 2 m2 = 0 mod 6
        let l = relation_lattice(&[vec![rat(1, 2), rat(1, 3)]], 2);
        assert_eq!(index_in(&l, &identity(2)).unwrap(), BigInt::from(6));
        assert!(contains(&l, &b(&[2, 0])));
        assert!(contains(&l, &b(&[0, 3])));
        assert!(contains(&l, &b(&[1, 3])) == false);
    }

    #[test]
    fn relation_lattice_of_surds() {
        let s2 = Surd::sqrt(2);
        assert!(surd_relation_lattice(&[s2.clone(), Surd::sqrt(3)]).is_empty());
        let l = surd_relation_lattice(&[s2.clone(), s2.clone()]);
        assert_eq!(l, vec![b(&[1, -1])]);
        let half = s2.add(&Surd::rational(rat(1, 2)));
        let l = surd_relation_lattice(&[s2.clone(), half]);
        assert_eq!(l, vec![b(&[2, -2])]);
        let l = surd_relation_lattice(&[Surd::rational(rat(1, 4))]);
        assert_eq!(l, vec![b(&[4])]);
    }
}
