use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::grid::GridFunction;
use crate::arith;
use crate::exec::{self, Strategy};

/// Grids with at most this many points use the direct transform.
pub const DIRECT_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DftMethod {
    #[default]
    Auto,
    Direct,
    Fft,
}

/// `fhat(n) = q^-d sum_x f(x) e(-n.x/q)`, returned as a grid indexed by `n`.
pub fn dft(f: &GridFunction) -> GridFunction {
    dft_with(f, DftMethod::Auto, Strategy::Parallel)
}

/// Inverse: `f(x) = sum_n fhat(n) e(n.x/q)`.
pub fn inverse_dft(fhat: &GridFunction) -> GridFunction {
    inverse_dft_with(fhat, DftMethod::Auto, Strategy::Parallel)
}

pub fn dft_with(f: &GridFunction, method: DftMethod, strategy: Strategy) -> GridFunction {
    let scale = 1.0 / f.len() as f64;
    transform(f, -1, scale, method, strategy)
}

pub fn inverse_dft_with(fhat: &GridFunction, method: DftMethod, strategy: Strategy) -> GridFunction {
    transform(fhat, 1, 1.0, method, strategy)
}

fn transform(f: &GridFunction, sign: i64, scale: f64, method: DftMethod, strategy: Strategy) -> GridFunction {
    let direct = match method {
        DftMethod::Auto => f.len() <= DIRECT_LIMIT,
        DftMethod::Direct => true,
        DftMethod::Fft => false,
    };
    let values = if direct {
        direct_transform(f, sign, scale, strategy)
    } else {
        fft_transform(f, sign, scale)
    };
    GridFunction::new(f.dim(), f.modulus(), values).expect("same shape")
}

fn direct_transform(f: &GridFunction, sign: i64, scale: f64, strategy: Strategy) -> Vec<Complex64> {
    let q = f.modulus();
    let d = f.dim();
    let n = f.len();
    let twiddle: Vec<Complex64> = (0..q)
        .map(|k| arith::e_frac(sign as i128 * k as i128, q as u64))
        .collect();
    let coords: Vec<Vec<usize>> = (0..n).map(|i| f.unindex(i)).collect();
    let vals = f.values();
    let parts = exec::map_chunks(strategy, n, |range| {
        range
            .map(|out| {
                let nn = &coords[out];
                let mut acc = Complex64::new(0.0, 0.0);
                for (x, v) in coords.iter().zip(vals) {
                    let mut ph = 0usize;
                    for k in 0..d {
                        ph = (ph + nn[k] * x[k]) % q;
                    }
                    acc += v * twiddle[ph];
                }
                acc * scale
            })
            .collect::<Vec<_>>()
    });
    parts.into_iter().flatten().collect()
}

fn fft_transform(f: &GridFunction, sign: i64, scale: f64) -> Vec<Complex64> {
    let q = f.modulus();
    let d = f.dim();
    let mut planner = FftPlanner::<f64>::new();
    let plan: Arc<dyn Fft<f64>> = if sign < 0 {
        planner.plan_fft_forward(q)
    } else {
        planner.plan_fft_inverse(q)
    };
    let mut data = f.values().to_vec();
    let mut line = vec![Complex64::new(0.0, 0.0); q];
    let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
    // axis k has stride q^(d-1-k)
    for axis in 0..d {
        let stride = q.pow((d - 1 - axis) as u32);
        let block = stride * q;
        for base in (0..data.len()).step_by(block) {
            for offset in 0..stride {
                let start = base + offset;
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = data[start + j * stride];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (j, v) in line.iter().enumerate() {
                    data[start + j * stride] = *v;
                }
            }
        }
    }
    for v in &mut data {
        *v *= scale;
    }
    data
}
