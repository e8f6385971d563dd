//! Matrix-multiply kernels on row-major slices.
//!
//! Rows of the output are independent and each element is summed in a fixed
//! order, so the rayon split never changes results.

use rayon::prelude::*;

/// Work (multiply-adds) below which kernels stay on the calling thread.
const PAR_THRESHOLD: usize = 1 << 15;

/// `out[m×n] += a[m×k] · b[k×n]`. Zero entries of `a` are skipped, which
/// matters for sparse binary inputs.
pub fn gemm(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    if n == 0 {
        return;
    }
    let row = |(i, o): (usize, &mut [f64])| {
        let ar = &a[i * k..(i + 1) * k];
        for (p, &aik) in ar.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let br = &b[p * n..(p + 1) * n];
            for (oj, &bj) in o.iter_mut().zip(br) {
                *oj += aik * bj;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD && m > 1 {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
}

/// `out[m×n] += a[m×k] · b[n×k]ᵀ`.
pub fn gemm_bt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    if n == 0 {
        return;
    }
    let row = |(i, o): (usize, &mut [f64])| {
        let ar = &a[i * k..(i + 1) * k];
        for (j, oj) in o.iter_mut().enumerate() {
            let br = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for (x, y) in ar.iter().zip(br) {
                s += x * y;
            }
            *oj += s;
        }
    };
    if m * k * n >= PAR_THRESHOLD && m > 1 {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
}

/// `out[k×n] += a[m×k]ᵀ · g[m×n]`.
pub fn gemm_at(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(g.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    if n == 0 {
        return;
    }
    let row = |(p, o): (usize, &mut [f64])| {
        for i in 0..m {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let gr = &g[i * n..(i + 1) * n];
            for (oj, &gj) in o.iter_mut().zip(gr) {
                *oj += aip * gj;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD && k > 1 {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
}
