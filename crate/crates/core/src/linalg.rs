//! Small dense symmetric positive-definite routines on row-major `d × d` slices.
//!
//! Everything works in caller-provided buffers so the scan loop never allocates.
//! Cholesky factors are stored in the lower triangle; the strict upper triangle is zeroed.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Length of the packed upper triangle of a `d × d` symmetric matrix.
#[inline]
pub const fn packed_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Expands a packed upper triangle (row-major, `i <= j`) into a full symmetric matrix.
pub fn unpack_symmetric(packed: &[f64], d: usize, out: &mut [f64]) {
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            out[i * d + j] = packed[k];
            out[j * d + i] = packed[k];
            k += 1;
        }
    }
}

/// Writes the packed upper triangle of `v vᵀ` into `out`.
#[inline]
pub fn packed_outer(v: &[f64], out: &mut [f64]) {
    let d = v.len();
    let mut k = 0;
    for i in 0..d {
        let vi = v[i];
        for &vj in &v[i..d] {
            out[k] = vi * vj;
            k += 1;
        }
    }
}

pub fn trace(a: &[f64], d: usize) -> f64 {
    (0..d).map(|i| a[i * d + i]).sum()
}

/// Adds `max(eps · tr(a)/d, floor)` to the diagonal and returns the ridge that was added.
pub fn add_ridge(a: &mut [f64], d: usize, eps: f64, floor: f64) -> f64 {
    let ridge = (eps * trace(a, d) / d as f64).max(floor);
    for i in 0..d {
        a[i * d + i] += ridge;
    }
    ridge
}

/// In-place Cholesky factorization `a = L Lᵀ`.
pub fn cholesky_in_place(a: &mut [f64], d: usize) -> Result<()> {
    debug_assert_eq!(a.len(), d * d);
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= a[j * d + k] * a[j * d + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::Numeric(format!("matrix is not positive definite (pivot {j} = {diag:e})")));
        }
        let ljj = math::sqrt(diag);
        a[j * d + j] = ljj;
        for i in j + 1..d {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = s / ljj;
        }
        for k in j + 1..d {
            a[j * d + k] = 0.0;
        }
    }
    Ok(())
}

/// `log |A|` from its Cholesky factor.
pub fn log_det_from_cholesky(l: &[f64], d: usize) -> f64 {
    2.0 * (0..d).map(|i| math::ln(l[i * d + i])).sum::<f64>()
}

/// Solves `L y = b` in place.
pub fn forward_substitute(l: &[f64], d: usize, b: &mut [f64]) {
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * d + k] * b[k];
        }
        b[i] = s / l[i * d + i];
    }
}

/// Solves `Lᵀ x = y` in place.
pub fn backward_substitute(l: &[f64], d: usize, y: &mut [f64]) {
    for i in (0..d).rev() {
        let mut s = y[i];
        for k in i + 1..d {
            s -= l[k * d + i] * y[k];
        }
        y[i] = s / l[i * d + i];
    }
}

/// Solves `A x = b` in place given the Cholesky factor of `A`.
pub fn cholesky_solve(l: &[f64], d: usize, b: &mut [f64]) {
    forward_substitute(l, d, b);
    backward_substitute(l, d, b);
}

/// `vᵀ A⁻¹ v` given the Cholesky factor of `A`. `scratch` needs `d` entries.
pub fn mahalanobis_sq(l: &[f64], d: usize, v: &[f64], scratch: &mut [f64]) -> f64 {
    let y = &mut scratch[..d];
    y.copy_from_slice(&v[..d]);
    forward_substitute(l, d, y);
    y.iter().map(|x| x * x).sum()
}

/// `tr(A⁻¹ B)` given Cholesky factors `la` of `A` and `lb` of `B`, as `‖La⁻¹ Lb‖_F²`.
/// `scratch` needs `d` entries.
pub fn trace_inv_product(la: &[f64], lb: &[f64], d: usize, scratch: &mut [f64]) -> f64 {
    let mut total = 0.0;
    let col = &mut scratch[..d];
    for j in 0..d {
        // column j of Lb is zero above the diagonal, so the forward solve starts at row j
        for c in col[..j].iter_mut() {
            *c = 0.0;
        }
        for i in j..d {
            let mut s = lb[i * d + j];
            for k in j..i {
                s -= la[i * d + k] * col[k];
            }
            col[i] = s / la[i * d + i];
            total += col[i] * col[i];
        }
    }
    total
}

/// Dense `d × d` product `a · b`.
pub fn matmul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(d: usize, seed: u64) -> Vec<f64> {
        // B Bᵀ + I with a tiny LCG so the test stays dependency free
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let b: Vec<f64> = (0..d * d).map(|_| next()).collect();
        let mut bt = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                bt[j * d + i] = b[i * d + j];
            }
        }
        let mut a = matmul(&b, &bt, d);
        for i in 0..d {
            a[i * d + i] += 1.0;
        }
        a
    }

    #[test]
    fn cholesky_reconstructs() {
        for d in 1..6 {
            let a = spd(d, d as u64);
            let mut l = a.clone();
            cholesky_in_place(&mut l, d).unwrap();
            let mut lt = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    lt[j * d + i] = l[i * d + j];
                }
            }
            let r = matmul(&l, &lt, d);
            for (x, y) in r.iter().zip(&a) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        assert!(cholesky_in_place(&mut a, 2).is_err());
    }

    #[test]
    fn solve_and_quadratic_forms() {
        let d = 4;
        let a = spd(d, 7);
        let b = spd(d, 11);
        let mut la = a.clone();
        let mut lb = b.clone();
        cholesky_in_place(&mut la, d).unwrap();
        cholesky_in_place(&mut lb, d).unwrap();

        let v = [0.3, -1.0, 2.0, 0.5];
        let mut x = v;
        cholesky_solve(&la, d, &mut x);
        let ax: Vec<f64> = (0..d).map(|i| (0..d).map(|j| a[i * d + j] * x[j]).sum()).collect();
        for i in 0..d {
            assert!((ax[i] - v[i]).abs() < 1e-12);
        }
        let mut scratch = [0.0; 4];
        let q = mahalanobis_sq(&la, d, &v, &mut scratch);
        let direct: f64 = v.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((q - direct).abs() < 1e-12);

        // tr(A⁻¹B) column by column
        let mut tr = 0.0;
        for j in 0..d {
            let mut col: Vec<f64> = (0..d).map(|i| b[i * d + j]).collect();
            cholesky_solve(&la, d, &mut col);
            tr += col[j];
        }
        assert!((trace_inv_product(&la, &lb, d, &mut scratch) - tr).abs() < 1e-11);
    }

    #[test]
    fn packed_round_trip() {
        let v = [1.0, 2.0, 3.0];
        let mut p = [0.0; 6];
        packed_outer(&v, &mut p);
        let mut full = [0.0; 9];
        unpack_symmetric(&p, 3, &mut full);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(full[i * 3 + j], v[i] * v[j]);
            }
        }
    }
}
