//! Small dense linear algebra on fixed-size arrays.
//!
//! Everything here works on `[T; N]` vectors and `[[T; N]; N]` row-major
//! matrices, which keeps the hot loops of the solver allocation-free.

use crate::Real;

pub type Vector<T, const N: usize> = [T; N];
pub type Matrix<T, const N: usize> = [[T; N]; N];

#[inline]
pub fn zeros<T: Real, const N: usize>() -> Vector<T, N> {
    [T::zero(); N]
}

#[inline]
pub fn zero_matrix<T: Real, const N: usize>() -> Matrix<T, N> {
    [[T::zero(); N]; N]
}

#[inline]
pub fn identity<T: Real, const N: usize>() -> Matrix<T, N> {
    let mut m = zero_matrix();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

#[inline]
pub fn dot<T: Real, const N: usize>(a: &Vector<T, N>, b: &Vector<T, N>) -> T {
    let mut s = T::zero();
    for i in 0..N {
        s = s + a[i] * b[i];
    }
    s
}

#[inline]
pub fn norm<T: Real, const N: usize>(a: &Vector<T, N>) -> T {
    dot(a, a).sqrt()
}

/// Euclidean norm computed with scaling, safe against overflow and underflow.
pub fn norm_scaled<T: Real, const N: usize>(a: &Vector<T, N>) -> T {
    let m = max_abs(a);
    if m == T::zero() || !m.is_finite() {
        return m;
    }
    let mut s = T::zero();
    for x in a {
        let y = *x / m;
        s = s + y * y;
    }
    m * s.sqrt()
}

#[inline]
pub fn max_abs<T: Real, const N: usize>(a: &Vector<T, N>) -> T {
    a.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

#[inline]
pub fn scale<T: Real, const N: usize>(a: &Vector<T, N>, s: T) -> Vector<T, N> {
    let mut r = *a;
    for x in r.iter_mut() {
        *x = *x * s;
    }
    r
}

#[inline]
pub fn add<T: Real, const N: usize>(a: &Vector<T, N>, b: &Vector<T, N>) -> Vector<T, N> {
    let mut r = *a;
    for i in 0..N {
        r[i] = r[i] + b[i];
    }
    r
}

#[inline]
pub fn sub<T: Real, const N: usize>(a: &Vector<T, N>, b: &Vector<T, N>) -> Vector<T, N> {
    let mut r = *a;
    for i in 0..N {
        r[i] = r[i] - b[i];
    }
    r
}

/// `a + s * b`.
#[inline]
pub fn axpy<T: Real, const N: usize>(a: &Vector<T, N>, s: T, b: &Vector<T, N>) -> Vector<T, N> {
    let mut r = *a;
    for i in 0..N {
        r[i] = r[i] + s * b[i];
    }
    r
}

#[inline]
pub fn normalize<T: Real, const N: usize>(a: &Vector<T, N>) -> Vector<T, N> {
    scale(a, T::one() / norm_scaled(a))
}

#[inline]
pub fn matvec<T: Real, const N: usize>(m: &Matrix<T, N>, v: &Vector<T, N>) -> Vector<T, N> {
    let mut r = zeros();
    for i in 0..N {
        r[i] = dot(&m[i], v);
    }
    r
}

/// `mᵀ v`.
#[inline]
pub fn matvec_t<T: Real, const N: usize>(m: &Matrix<T, N>, v: &Vector<T, N>) -> Vector<T, N> {
    let mut r = zeros();
    for i in 0..N {
        for j in 0..N {
            r[j] = r[j] + m[i][j] * v[i];
        }
    }
    r
}

#[inline]
pub fn matmul<T: Real, const N: usize>(a: &Matrix<T, N>, b: &Matrix<T, N>) -> Matrix<T, N> {
    let mut r = zero_matrix();
    for i in 0..N {
        for k in 0..N {
            let aik = a[i][k];
            for j in 0..N {
                r[i][j] = r[i][j] + aik * b[k][j];
            }
        }
    }
    r
}

#[inline]
pub fn transpose<T: Real, const N: usize>(a: &Matrix<T, N>) -> Matrix<T, N> {
    let mut r = zero_matrix();
    for i in 0..N {
        for j in 0..N {
            r[i][j] = a[j][i];
        }
    }
    r
}

#[inline]
pub fn outer<T: Real, const N: usize>(a: &Vector<T, N>, b: &Vector<T, N>) -> Matrix<T, N> {
    let mut r = zero_matrix();
    for i in 0..N {
        for j in 0..N {
            r[i][j] = a[i] * b[j];
        }
    }
    r
}

#[inline]
pub fn mat_add<T: Real, const N: usize>(a: &Matrix<T, N>, b: &Matrix<T, N>) -> Matrix<T, N> {
    let mut r = *a;
    for i in 0..N {
        for j in 0..N {
            r[i][j] = r[i][j] + b[i][j];
        }
    }
    r
}

#[inline]
pub fn mat_sub<T: Real, const N: usize>(a: &Matrix<T, N>, b: &Matrix<T, N>) -> Matrix<T, N> {
    let mut r = *a;
    for i in 0..N {
        for j in 0..N {
            r[i][j] = r[i][j] - b[i][j];
        }
    }
    r
}

#[inline]
pub fn mat_scale<T: Real, const N: usize>(a: &Matrix<T, N>, s: T) -> Matrix<T, N> {
    let mut r = *a;
    for row in r.iter_mut() {
        for x in row.iter_mut() {
            *x = *x * s;
        }
    }
    r
}

#[inline]
pub fn trace<T: Real, const N: usize>(a: &Matrix<T, N>) -> T {
    let mut s = T::zero();
    for i in 0..N {
        s = s + a[i][i];
    }
    s
}

/// Frobenius inner product `Σ a_ij b_ij`.
#[inline]
pub fn frobenius_dot<T: Real, const N: usize>(a: &Matrix<T, N>, b: &Matrix<T, N>) -> T {
    let mut s = T::zero();
    for i in 0..N {
        for j in 0..N {
            s = s + a[i][j] * b[i][j];
        }
    }
    s
}

#[inline]
pub fn frobenius_norm<T: Real, const N: usize>(a: &Matrix<T, N>) -> T {
    frobenius_dot(a, a).sqrt()
}

/// Quadratic form `vᵀ m w`.
#[inline]
pub fn bilinear<T: Real, const N: usize>(m: &Matrix<T, N>, v: &Vector<T, N>, w: &Vector<T, N>) -> T {
    dot(v, &matvec(m, w))
}

/// Largest absolute deviation from symmetry.
pub fn asymmetry<T: Real, const N: usize>(a: &Matrix<T, N>) -> T {
    let mut m = T::zero();
    for i in 0..N {
        for j in 0..N {
            m = m.max((a[i][j] - a[j][i]).abs());
        }
    }
    m
}

/// Symmetrizes `(a + aᵀ) / 2`.
pub fn symmetrize<T: Real, const N: usize>(a: &Matrix<T, N>) -> Matrix<T, N> {
    let half = T::of(0.5);
    let mut r = *a;
    for i in 0..N {
        for j in 0..N {
            r[i][j] = half * (a[i][j] + a[j][i]);
        }
    }
    r
}

/// Lower Cholesky factor of a symmetric positive-definite matrix, or `None`
/// if a non-positive pivot appears.
pub fn cholesky<T: Real, const N: usize>(a: &Matrix<T, N>) -> Option<Matrix<T, N>> {
    let mut l = zero_matrix::<T, N>();
    for j in 0..N {
        let mut d = a[j][j];
        for k in 0..j {
            d = d - l[j][k] * l[j][k];
        }
        if !(d > T::zero()) {
            return None;
        }
        let ljj = d.sqrt();
        l[j][j] = ljj;
        for i in (j + 1)..N {
            let mut s = a[i][j];
            for k in 0..j {
                s = s - l[i][k] * l[j][k];
            }
            l[i][j] = s / ljj;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the lower Cholesky factor.
pub fn cholesky_solve<T: Real, const N: usize>(l: &Matrix<T, N>, b: &Vector<T, N>) -> Vector<T, N> {
    let mut y = *b;
    for i in 0..N {
        let mut s = y[i];
        for k in 0..i {
            s = s - l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    for i in (0..N).rev() {
        let mut s = y[i];
        for k in (i + 1)..N {
            s = s - l[k][i] * y[k];
        }
        y[i] = s / l[i][i];
    }
    y
}

/// Inverse of a symmetric positive-definite matrix.
pub fn inverse_spd<T: Real, const N: usize>(a: &Matrix<T, N>) -> Option<Matrix<T, N>> {
    let l = cholesky(a)?;
    let mut inv = zero_matrix::<T, N>();
    for j in 0..N {
        let mut e = zeros::<T, N>();
        e[j] = T::one();
        let col = cholesky_solve(&l, &e);
        for i in 0..N {
            inv[i][j] = col[i];
        }
    }
    Some(symmetrize(&inv))
}

/// Solves a general square system by Gaussian elimination with partial
/// pivoting. Returns `None` for a numerically singular matrix.
pub fn solve<T: Real, const N: usize>(a: &Matrix<T, N>, b: &Vector<T, N>) -> Option<Vector<T, N>> {
    let mut m = *a;
    let mut x = *b;
    let scale_ref = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(T::zero(), |acc, v| acc.max(v.abs()));
    if scale_ref == T::zero() {
        return None;
    }
    for col in 0..N {
        let mut piv = col;
        for r in (col + 1)..N {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        if m[piv][col].abs() <= T::epsilon() * scale_ref {
            return None;
        }
        m.swap(col, piv);
        x.swap(col, piv);
        for r in (col + 1)..N {
            let f = m[r][col] / m[col][col];
            if f != T::zero() {
                for c in col..N {
                    m[r][c] = m[r][c] - f * m[col][c];
                }
                x[r] = x[r] - f * x[col];
            }
        }
    }
    for r in (0..N).rev() {
        let mut s = x[r];
        for c in (r + 1)..N {
            s = s - m[r][c] * x[c];
        }
        x[r] = s / m[r][r];
    }
    Some(x)
}

/// Inverse and determinant by Gauss–Jordan elimination with partial
/// pivoting. Returns `None` for a numerically singular matrix.
pub fn inverse_det<T: Real, const N: usize>(a: &Matrix<T, N>) -> Option<(Matrix<T, N>, T)> {
    let mut m = *a;
    let mut inv = identity::<T, N>();
    let mut det = T::one();
    let scale_ref = m.iter().flat_map(|r| r.iter()).fold(T::zero(), |acc, v| acc.max(v.abs()));
    if scale_ref == T::zero() {
        return None;
    }
    for col in 0..N {
        let mut piv = col;
        for r in (col + 1)..N {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        if m[piv][col].abs() <= T::epsilon() * scale_ref {
            return None;
        }
        if piv != col {
            m.swap(col, piv);
            inv.swap(col, piv);
            det = -det;
        }
        let d = m[col][col];
        det = det * d;
        let dinv = T::one() / d;
        for c in 0..N {
            m[col][c] = m[col][c] * dinv;
            inv[col][c] = inv[col][c] * dinv;
        }
        for r in 0..N {
            if r != col {
                let f = m[r][col];
                if f != T::zero() {
                    for c in 0..N {
                        m[r][c] = m[r][c] - f * m[col][c];
                        inv[r][c] = inv[r][c] - f * inv[col][c];
                    }
                }
            }
        }
    }
    Some((inv, det))
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// the columns of the second matrix.
pub fn symmetric_eigen<T: Real, const N: usize>(a: &Matrix<T, N>) -> (Vector<T, N>, Matrix<T, N>) {
    let mut m = symmetrize(a);
    let mut v = identity::<T, N>();
    let tiny = T::epsilon() * T::of(1e-3);
    for _sweep in 0..64 {
        let mut off = T::zero();
        let mut diag = T::zero();
        for i in 0..N {
            diag = diag + m[i][i] * m[i][i];
            for j in (i + 1)..N {
                off = off + m[i][j] * m[i][j];
            }
        }
        if off <= tiny * tiny * diag.max(T::min_positive_value()) || off == T::zero() {
            break;
        }
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = m[p][q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (T::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..N {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..N {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..N {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: [usize; N] = std::array::from_fn(|i| i);
    order.sort_by(|&i, &j| m[i][i].partial_cmp(&m[j][j]).unwrap_or(std::cmp::Ordering::Equal));
    let vals = std::array::from_fn(|k| m[order[k]][order[k]]);
    let mut vecs = zero_matrix::<T, N>();
    for (col, &src) in order.iter().enumerate() {
        for r in 0..N {
            vecs[r][col] = v[r][src];
        }
    }
    (vals, vecs)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<T: Real, const N: usize>(a: &Matrix<T, N>) -> T {
    symmetric_eigen(a).0[0]
}

/// Square root of a symmetric positive-semidefinite matrix; negative
/// eigenvalues produced by round-off are clamped to zero.
pub fn sqrt_psd<T: Real, const N: usize>(a: &Matrix<T, N>) -> Matrix<T, N> {
    let (vals, vecs) = symmetric_eigen(a);
    let mut r = zero_matrix::<T, N>();
    for k in 0..N {
        let s = vals[k].max(T::zero()).sqrt();
        for i in 0..N {
            for j in 0..N {
                r[i][j] = r[i][j] + s * vecs[i][k] * vecs[j][k];
            }
        }
    }
    r
}

/// Converts a runtime slice into a fixed-size array.
pub fn array_from_slice<T: Real, const N: usize>(s: &[T]) -> Option<Vector<T, N>> {
    if s.len() != N {
        return None;
    }
    Some(std::array::from_fn(|i| s[i]))
}
