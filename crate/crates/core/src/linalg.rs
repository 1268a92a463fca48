//! Small dense and tridiagonal eigen-solvers.

use nalgebra::{Matrix4, SymmetricEigen};

use crate::model::C64;

/// Eigen-decomposition of a 4×4 Hermitian matrix, eigenvalues ascending.
pub(crate) fn hermitian_eigen4(m: &Matrix4<C64>) -> ([f64; 4], Matrix4<C64>) {
    let eig = SymmetricEigen::new(*m);
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = [0.0; 4];
    let mut vectors = Matrix4::<C64>::zeros();
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `exp(−i H t)` through the spectral decomposition of `H`.
pub(crate) fn hermitian_exp4(m: &Matrix4<C64>, t: f64) -> Matrix4<C64> {
    let (values, vectors) = hermitian_eigen4(m);
    let mut scaled = vectors;
    for (k, &lam) in values.iter().enumerate() {
        let phase = C64::from_polar(1.0, -lam * t);
        for r in 0..4 {
            scaled[(r, k)] *= phase;
        }
    }
    scaled * vectors.adjoint()
}

/// Number of eigenvalues of the symmetric tridiagonal matrix `(diag, off)`
/// strictly below `x` (Sturm sequence count).
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        let coupling = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        q = diag[i] - x - if i == 0 { 0.0 } else { coupling / q };
        if q == 0.0 {
            q = f64::EPSILON * (diag[i].abs() + 1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Solves `(T − shift) y = rhs` for symmetric tridiagonal `T` by Gaussian
/// elimination with partial pivoting.
fn tridiag_solve_shifted(diag: &[f64], off: &[f64], shift: f64, rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    // Rows carry up to two super-diagonals once pivoting swaps rows.
    let mut a: Vec<f64> = diag.iter().map(|d| d - shift).collect();
    let mut b: Vec<f64> = off.to_vec();
    b.push(0.0);
    let mut c = vec![0.0; n];
    let mut sub: Vec<f64> = off.to_vec();
    let mut y = rhs.to_vec();
    let tiny = f64::EPSILON * diag.iter().fold(1.0f64, |m, d| m.max(d.abs()));

    for i in 0..n.saturating_sub(1) {
        if sub[i].abs() > a[i].abs() {
            // swap rows i and i+1
            std::mem::swap(&mut a[i], &mut sub[i]);
            let (bi, ai1) = (b[i], a[i + 1]);
            b[i] = ai1;
            a[i + 1] = bi;
            let (ci, bi1) = (c[i], b[i + 1]);
            c[i] = bi1;
            b[i + 1] = ci;
            y.swap(i, i + 1);
        }
        if a[i].abs() < tiny {
            a[i] = tiny;
        }
        let f = sub[i] / a[i];
        a[i + 1] -= f * b[i];
        b[i + 1] -= f * c[i];
        y[i + 1] -= f * y[i];
        sub[i] = 0.0;
    }
    if a[n - 1].abs() < tiny {
        a[n - 1] = tiny;
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        if i + 1 < n {
            s -= b[i] * x[i + 1];
        }
        if i + 2 < n {
            s -= c[i] * x[i + 2];
        }
        x[i] = s / a[i];
    }
    x
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

/// Lowest `count` eigenpairs of a real symmetric tridiagonal matrix, with
/// eigenvalues by bisection and eigenvectors by inverse iteration. Vectors are
/// orthonormal in the plain Euclidean inner product.
pub(crate) fn tridiag_lowest(diag: &[f64], off: &[f64], count: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = diag.len();
    assert_eq!(off.len() + 1, n);
    let count = count.min(n);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let scale = lo.abs().max(hi.abs()).max(1.0);

    let mut values = Vec::with_capacity(count);
    for k in 0..count {
        // smallest x with more than k eigenvalues below it
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if sturm_count(diag, off, mid) > k {
                b = mid;
            } else {
                a = mid;
            }
            if b - a <= 4.0 * f64::EPSILON * scale {
                break;
            }
        }
        values.push(0.5 * (a + b));
    }

    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(count);
    for (k, &lam) in values.iter().enumerate() {
        let shift = lam + 8.0 * f64::EPSILON * scale;
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * (k as f64 + 1.7)).sin())
            .collect();
        normalize(&mut v);
        for _ in 0..4 {
            v = tridiag_solve_shifted(diag, off, shift, &v);
            // keep near-degenerate partners orthogonal
            for (j, u) in vectors.iter().enumerate() {
                if (values[j] - lam).abs() < 1e-6 * scale {
                    let d: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
                }
            }
            normalize(&mut v);
        }
        vectors.push(v);
    }
    (values, vectors)
}
