use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{LabError, Result};

const MAGIC: &[u8; 8] = b"GRIDFN01";

/// Complex function on `Z_q^d`, stored row-major: the index of
/// `(x_0, ..., x_{d-1})` is `sum x_i q^(d-1-i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    d: usize,
    q: usize,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(d: usize, q: usize, values: Vec<Complex64>) -> Result<Self> {
        if q == 0 || d == 0 {
            return Err(LabError::InvalidInput("grid needs q >= 1 and d >= 1".into()));
        }
        let len = Self::size_of(d, q)?;
        if values.len() != len {
            return Err(LabError::InvalidInput(format!(
                "grid of dim {d} over Z_{q} needs {len} values, got {}",
                values.len()
            )));
        }
        Ok(GridFunction { d, q, values })
    }

    fn size_of(d: usize, q: usize) -> Result<usize> {
        (0..d)
            .try_fold(1usize, |acc, _| acc.checked_mul(q))
            .filter(|&n| n <= 1 << 28)
            .ok_or_else(|| LabError::InvalidInput(format!("grid Z_{q}^{d} is too large")))
    }

    pub fn zeros(d: usize, q: usize) -> Result<Self> {
        let len = Self::size_of(d, q)?;
        Self::new(d, q, vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn from_fn(d: usize, q: usize, mut f: impl FnMut(&[usize]) -> Complex64) -> Result<Self> {
        let mut g = Self::zeros(d, q)?;
        let mut x = vec![0usize; d];
        for i in 0..g.values.len() {
            g.unindex_into(i, &mut x);
            g.values[i] = f(&x);
        }
        Ok(g)
    }

    pub fn from_real(d: usize, q: usize, values: &[f64]) -> Result<Self> {
        Self::new(d, q, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn modulus(&self) -> usize {
        self.q
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn index(&self, x: &[usize]) -> usize {
        x.iter().fold(0, |acc, &xi| acc * self.q + xi % self.q)
    }

    pub fn unindex_into(&self, mut i: usize, out: &mut [usize]) {
        for slot in out.iter_mut().rev() {
            *slot = i % self.q;
            i /= self.q;
        }
    }

    pub fn unindex(&self, i: usize) -> Vec<usize> {
        let mut out = vec![0; self.d];
        self.unindex_into(i, &mut out);
        out
    }

    pub fn at(&self, x: &[usize]) -> Complex64 {
        self.values[self.index(x)]
    }

    /// Value at a point with signed coordinates, reduced mod q.
    pub fn at_signed(&self, x: &[i64]) -> Complex64 {
        let q = self.q as i64;
        let idx = x.iter().fold(0usize, |acc, &xi| acc * self.q + xi.rem_euclid(q) as usize);
        self.values[idx]
    }

    /// Haar mean `q^-d sum f(x)`.
    pub fn mean(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() / self.values.len() as f64
    }

    /// Squared L2 norm with respect to Haar probability measure.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.values.len() as f64
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn same_shape(&self, other: &GridFunction) -> Result<()> {
        if self.d != other.d || self.q != other.q {
            return Err(LabError::InvalidInput(format!(
                "grid shapes differ: Z_{}^{} vs Z_{}^{}",
                self.q, self.d, other.q, other.d
            )));
        }
        Ok(())
    }

    pub fn mul(&self, other: &GridFunction) -> Result<GridFunction> {
        self.same_shape(other)?;
        Ok(GridFunction {
            d: self.d,
            q: self.q,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        })
    }

    pub fn scale(&self, s: Complex64) -> GridFunction {
        GridFunction {
            d: self.d,
            q: self.q,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// Translate: `x -> f(x + t)`.
    pub fn shifted(&self, t: &[i64]) -> GridFunction {
        let mut x = vec![0usize; self.d];
        let mut out = self.values.clone();
        for (i, slot) in out.iter_mut().enumerate() {
            self.unindex_into(i, &mut x);
            let y: Vec<i64> = x.iter().zip(t).map(|(a, b)| *a as i64 + b).collect();
            *slot = self.at_signed(&y);
        }
        GridFunction {
            d: self.d,
            q: self.q,
            values: out,
        }
    }

    /// Haar-normalized convolution `(f*g)(x) = q^-d sum_y f(y) g(x - y)`.
    pub fn convolve(&self, other: &GridFunction) -> Result<GridFunction> {
        self.same_shape(other)?;
        let n = self.values.len();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        let mut x = vec![0usize; self.d];
        let mut y = vec![0usize; self.d];
        let mut diff = vec![0usize; self.d];
        for (i, slot) in out.iter_mut().enumerate() {
            self.unindex_into(i, &mut x);
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n {
                self.unindex_into(j, &mut y);
                for k in 0..self.d {
                    diff[k] = (x[k] + self.q - y[k]) % self.q;
                }
                acc += self.values[j] * other.values[self.index(&diff)];
            }
            *slot = acc / n as f64;
        }
        Ok(GridFunction {
            d: self.d,
            q: self.q,
            values: out,
        })
    }

    /// Binary form: `GRIDFN01`, `d` and `q` as little-endian `u32`, then
    /// `(re, im)` little-endian `f64` pairs in row-major order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.d as u32).to_le_bytes())?;
        w.write_all(&(self.q as u32).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if &header[..8] != MAGIC {
            return Err(LabError::Parse("bad grid function magic".into()));
        }
        let d = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes")) as usize;
        let q = u32::from_le_bytes(header[12..16].try_into().expect("4 bytes")) as usize;
        let len = Self::size_of(d, q)?;
        let mut buf = vec![0u8; len * 16];
        r.read_exact(&mut buf)?;
        let values = buf
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                Complex64::new(re, im)
            })
            .collect();
        Self::new(d, q, values)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 16 * self.values.len());
        self.write_binary(&mut out).expect("vec write");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trip() {
        let g = GridFunction::zeros(3, 4).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.index(&g.unindex(i)), i);
        }
        assert_eq!(g.index(&[1, 2, 3]), 16 + 8 + 3);
    }

    #[test]
    fn binary_round_trip() {
        let g = GridFunction::from_fn(2, 3, |x| Complex64::new(x[0] as f64, -(x[1] as f64))).unwrap();
        let bytes = g.to_bytes();
        assert_eq!(&bytes[..8], b"GRIDFN01");
        assert_eq!(bytes.len(), 16 + 9 * 16);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 3);
        let back = GridFunction::read_binary(&bytes[..]).unwrap();
        assert_eq!(back, g);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(GridFunction::read_binary(&bad[..]).is_err());
        assert!(GridFunction::read_binary(&bytes[..20]).is_err());
    }

    #[test]
    fn wrong_length_rejected() {
        assert!(GridFunction::new(2, 3, vec![Complex64::new(0.0, 0.0); 8]).is_err());
        assert!(GridFunction::zeros(0, 3).is_err());
    }
}
