//! Small dense kernels used in the per-step and per-pair hot loops.
//!
//! Matrices are row-major slices of length `n * n`. Everything here works in
//! caller-provided buffers so the O(N^2) loops never allocate.

use num_complex::Complex64;

/// Determinant by Gaussian elimination with partial pivoting. Destroys `a`.
pub fn complex_det(a: &mut [Complex64], n: usize) -> Complex64 {
    debug_assert_eq!(a.len(), n * n);
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].norm_sqr();
        for row in col + 1..n {
            let v = a[row * n + col].norm_sqr();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            det = -det;
        }
        let d = a[col * n + col];
        det *= d;
        let inv = d.inv();
        for row in col + 1..n {
            let f = a[row * n + col] * inv;
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for k in col..n {
                let upper = a[col * n + k];
                a[row * n + k] -= f * upper;
            }
        }
    }
    det
}

/// In-place Cholesky factorization of a symmetric positive definite matrix.
/// On success the lower triangle holds `L`; returns `None` if a pivot is not
/// strictly positive.
pub fn cholesky(a: &mut [f64], n: usize) -> Option<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Some(())
}

/// `ln det` from a Cholesky factor.
pub fn cholesky_logdet(l: &[f64], n: usize) -> f64 {
    (0..n).map(|i| l[i * n + i].ln()).sum::<f64>() * 2.0
}

/// Solves `L L^T x = b` in place for a complex right-hand side.
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [Complex64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= b[k] * l[i * n + k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= b[k] * l[k * n + i];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Quadratic form `v^T M^{-1} v` (no conjugation) together with `ln det M`
/// for a real SPD matrix `m`. `m` is overwritten by its factor and `scratch`
/// must hold `n` entries. Returns `None` if `m` is not positive definite.
pub fn spd_quadratic_form(
    m: &mut [f64],
    n: usize,
    v: &[Complex64],
    scratch: &mut [Complex64],
) -> Option<(Complex64, f64)> {
    if n == 2 {
        let (a, b, d) = (m[0], m[1], m[3]);
        let det = a * d - b * b;
        if !(a > 0.0 && det > 0.0) {
            return None;
        }
        let q = (v[0] * v[0] * d - v[0] * v[1] * (2.0 * b) + v[1] * v[1] * a) / det;
        return Some((q, det.ln()));
    }
    cholesky(m, n)?;
    scratch[..n].copy_from_slice(&v[..n]);
    cholesky_solve(m, n, &mut scratch[..n]);
    let q = v.iter().zip(scratch.iter()).map(|(a, b)| a * b).sum();
    Some((q, cholesky_logdet(m, n)))
}

/// Inverse of a symplectic matrix `M` (`2f x 2f`, blocks ordered q then p):
/// `M^{-1} = -J M^T J`.
pub fn symplectic_inverse(m: &[f64], f: usize, out: &mut [f64]) {
    let n = 2 * f;
    for i in 0..f {
        for j in 0..f {
            // blocks of M: [[A, B], [C, D]]; inverse is [[D^T, -B^T], [-C^T, A^T]]
            let a = m[i * n + j];
            let b = m[i * n + f + j];
            let c = m[(f + i) * n + j];
            let d = m[(f + i) * n + f + j];
            out[j * n + i] = d;
            out[j * n + f + i] = -b;
            out[(f + j) * n + i] = -c;
            out[(f + j) * n + f + i] = a;
        }
    }
}

/// `out = a * b` for square row-major matrices.
pub fn matmul(a: &[f64], b: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += a[i * n + k] * b[k * n + j];
            }
            out[i * n + j] = s;
        }
    }
}
