//! Dense helpers shared by the solvers and the transfer-function algebra.

use nalgebra::{linalg::Schur, DMatrix, DVector, Dyn, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// Horizontal concatenation. All blocks must share the row count `rows`.
pub fn hstack(rows: usize, blocks: &[&Mat]) -> Mat {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), rows);
        out.view_mut((0, c0), (rows, b.ncols())).copy_from(b);
        c0 += b.ncols();
    }
    out
}

/// Vertical concatenation. All blocks must share the column count `cols`.
pub fn vstack(cols: usize, blocks: &[&Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        debug_assert_eq!(b.ncols(), cols);
        out.view_mut((r0, 0), (b.nrows(), cols)).copy_from(b);
        r0 += b.nrows();
    }
    out
}

pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// 2x2 block matrix; row heights come from the diagonal blocks.
pub fn block2(a11: &Mat, a12: &Mat, a21: &Mat, a22: &Mat) -> Mat {
    let top = hstack(a11.nrows(), &[a11, a12]);
    let bot = hstack(a21.nrows(), &[a21, a22]);
    vstack(top.ncols(), &[&top, &bot])
}

pub fn symmetrize(x: &Mat) -> Mat {
    (x + x.transpose()) * 0.5
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Principal square root of a symmetric PSD matrix. Eigenvalues below 1e-12 are clipped to zero.
pub fn sqrt_psd(m: &Mat) -> Mat {
    if m.is_empty() {
        return m.clone();
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = eig.eigenvalues.map(|l| if l < 1e-12 { 0.0 } else { l.sqrt() });
    let u = &eig.eigenvectors;
    symmetrize(&(u * Mat::from_diagonal(&d) * u.transpose()))
}

pub fn min_eigenvalue_sym(m: &Mat) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Eigenvalues of a real square matrix through the real Schur form.
pub fn eigenvalues(a: &Mat) -> Result<Vec<Complex64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    if !all_finite(a) {
        return Err(Error::NonFinite("eigenvalue input"));
    }
    let (_, t) = real_schur(a)?;
    let n = t.nrows();
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    while k < n {
        if k + 1 < n && t[(k + 1, k)] != 0.0 {
            let (p, b, c, d) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
            let half_tr = 0.5 * (p + d);
            let disc = Complex64::new(0.25 * (p - d) * (p - d) + b * c, 0.0).sqrt();
            out.push(half_tr + disc);
            out.push(half_tr - disc);
            k += 2;
        } else {
            out.push(Complex64::new(t[(k, k)], 0.0));
            k += 1;
        }
    }
    Ok(out)
}

/// Deterministic orthogonal matrix used to perturb the basis before a Schur retry.
fn scramble(n: usize, attempt: usize) -> Mat {
    let m = Mat::from_fn(n, n, |i, j| {
        ((i * 7 + j * 13 + attempt * 29) as f64 * 0.618_033_988_75 + 0.1).sin()
    });
    m.qr().q()
}

/// Real Schur form `a = q t qᵀ`.
///
/// With exactly repeated eigenvalues the QR iteration can stall just above a deflation
/// threshold of machine epsilon; the threshold is loosened step by step, then the basis is
/// rotated as a last resort.
pub fn real_schur(a: &Mat) -> Result<(Mat, Mat)> {
    for eps in [f64::EPSILON, 1e-15, 1e-14, 1e-13] {
        if let Some(s) = Schur::try_new(a.clone(), eps, 10_000) {
            return Ok(s.unpack());
        }
    }
    let n = a.nrows();
    for attempt in 0..4 {
        let z = scramble(n, attempt);
        let rotated = z.transpose() * a * &z;
        if let Some(s) = Schur::try_new(rotated, 1e-14, 10_000) {
            let (q, t) = s.unpack();
            return Ok((z * q, t));
        }
    }
    Err(Error::NoConvergence("real Schur decomposition"))
}

/// Largest real part of the spectrum (-inf for an empty matrix).
pub fn spectral_abscissa(a: &Mat) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Complex Schur form `a = u t u^H` with `t` upper triangular.
///
/// Starts from the real Schur form and splits each 2x2 block with a unitary rotation built
/// from one of its eigenvectors.
pub fn complex_schur(a: &Mat) -> Result<(CMat, CMat)> {
    let n = a.nrows();
    let (q, t) = real_schur(a)?;
    let mut u = to_complex(&q);
    let mut t = to_complex(&t);
    let zero = Complex64::new(0.0, 0.0);
    let mut k = 0;
    while k + 1 < n {
        if t[(k + 1, k)] == zero {
            k += 1;
            continue;
        }
        let (p, b, c, d) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
        let half_tr = (p + d) * 0.5;
        let disc = ((p - d) * (p - d) * 0.25 + b * c).sqrt();
        let lambda = half_tr + disc;
        // Eigenvector of the block; pick the better-conditioned of two equivalent forms.
        let (v1, v2) = if (lambda - p).norm() + b.norm() >= (lambda - d).norm() + c.norm() {
            (b, lambda - p)
        } else {
            (lambda - d, c)
        };
        let nv = (v1.norm_sqr() + v2.norm_sqr()).sqrt();
        if nv == 0.0 {
            k += 1;
            continue;
        }
        let (v1, v2) = (v1 / nv, v2 / nv);
        // G = [v, v⊥] is unitary; T ← Gᴴ T G on rows/cols k, k+1.
        let g = [[v1, -v2.conj()], [v2, v1.conj()]];
        for col in 0..n {
            let (x, y) = (t[(k, col)], t[(k + 1, col)]);
            t[(k, col)] = g[0][0].conj() * x + g[1][0].conj() * y;
            t[(k + 1, col)] = g[0][1].conj() * x + g[1][1].conj() * y;
        }
        for row in 0..n {
            let (x, y) = (t[(row, k)], t[(row, k + 1)]);
            t[(row, k)] = x * g[0][0] + y * g[1][0];
            t[(row, k + 1)] = x * g[0][1] + y * g[1][1];
            let (x, y) = (u[(row, k)], u[(row, k + 1)]);
            u[(row, k)] = x * g[0][0] + y * g[1][0];
            u[(row, k + 1)] = x * g[0][1] + y * g[1][1];
        }
        t[(k + 1, k)] = zero;
        k += 2;
    }
    Ok((u, t))
}

pub type RealSvd = SVD<f64, Dyn, Dyn>;

/// Full SVD whose factors are checked against the input.
///
/// nalgebra's bidiagonal QR can return factors that do not reproduce a rank-deficient
/// input when run with the default threshold, while the singular values look fine.
/// Each candidate is verified and the computation is repeated with looser thresholds
/// and on the transpose until one reconstructs `m`.
pub fn svd(m: &Mat) -> Result<RealSvd> {
    let scale = m.norm();
    let tol = 1e-11 * scale.max(f64::MIN_POSITIVE) * (1.0 + m.nrows().max(m.ncols()) as f64).sqrt();
    let accept = |s: &RealSvd, target: &Mat| -> bool {
        let (Some(u), Some(vt)) = (&s.u, &s.v_t) else {
            return false;
        };
        let ok = s.singular_values.iter().all(|v| v.is_finite() && *v >= 0.0);
        ok && (u * Mat::from_diagonal(&s.singular_values) * vt - target).norm() <= tol
    };
    for eps in [f64::EPSILON, 1e-15, 1e-14, 1e-13, 1e-12] {
        if let Some(s) = m.clone().try_svd(true, true, eps, 0) {
            if accept(&s, m) {
                return Ok(s);
            }
        }
        let mt = m.transpose();
        if let Some(s) = mt.clone().try_svd(true, true, eps, 0) {
            if accept(&s, &mt) {
                return Ok(SVD {
                    u: s.v_t.map(|vt| vt.transpose()),
                    v_t: s.u.map(|u| u.transpose()),
                    singular_values: s.singular_values,
                });
            }
        }
    }
    Err(Error::NoConvergence("singular value decomposition"))
}

pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    match svd(m) {
        Ok(s) => s.singular_values.iter().cloned().fold(0.0, f64::max),
        Err(_) => f64::NAN,
    }
}

pub fn spectral_norm_c(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Numerical rank with singular values above `rel_tol * sigma_max`.
pub fn rank(m: &Mat, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = match svd(m) {
        Ok(s) => s.singular_values,
        Err(_) => return 0,
    };
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Left singular vectors sorted by decreasing singular value.
pub fn sorted_left_singular(m: &Mat) -> Result<(Mat, Vec<f64>)> {
    let svd = svd(m)?;
    let u = svd.u.expect("u requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut us = Mat::zeros(u.nrows(), idx.len());
    for (k, &i) in idx.iter().enumerate() {
        us.set_column(k, &u.column(i));
    }
    let s = idx.iter().map(|&i| svd.singular_values[i]).collect();
    Ok((us, s))
}

/// Minimum-norm least-squares solution of `a x = b` via SVD.
pub fn lstsq(a: &Mat, b: &Mat, rcond: f64) -> Result<Mat> {
    let svd = svd(a)?;
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    svd.solve(b, rcond * smax)
        .map_err(|_| Error::Singular("least-squares solve"))
}

/// Matrix sign function by the scaled Newton iteration.
///
/// Fails if `a` is singular during the iteration, which happens when the spectrum
/// touches the imaginary axis.
pub fn matrix_sign(a: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if n == 0 {
        return Ok(a.clone());
    }
    let mut z = a.clone();
    let mut scale = true;
    let mut last = f64::INFINITY;
    for _ in 0..100 {
        let lu = z.clone().lu();
        let zi = lu
            .try_inverse()
            .ok_or(Error::Singular("matrix sign iteration"))?;
        let mu = if scale {
            let u = lu.u();
            let logdet: f64 = u.diagonal().iter().map(|d| d.abs().ln()).sum();
            (-logdet / n as f64).exp()
        } else {
            1.0
        };
        let next = (&z * mu + zi / mu) * 0.5;
        let delta = (&next - &z).norm() / next.norm();
        z = next;
        if !all_finite(&z) {
            return Err(Error::NonFinite("matrix sign iteration"));
        }
        if delta < 1e-2 {
            scale = false;
        }
        if delta < 1e-14 || (delta < 1e-9 && delta > 0.5 * last) {
            return Ok(z);
        }
        last = delta;
    }
    if last < 1e-8 {
        Ok(z)
    } else {
        Err(Error::NoConvergence("matrix sign iteration"))
    }
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Mat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij != 0.0 {
                out.view_mut((i * br, j * bc), (br, bc))
                    .copy_from(&(b * aij));
            }
        }
    }
    out
}

pub fn vec_of(m: &Mat) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> Mat {
    Mat::from_column_slice(rows, cols, v.as_slice())
}

/// Row-major nested vectors, the JSON wire format for matrices.
pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().cloned().collect())
        .collect()
}

/// Parse row-major nested vectors. `cols_hint` fixes the width of an empty (0-row) matrix.
pub fn from_rows(rows: &[Vec<f64>], cols_hint: Option<usize>, what: &'static str) -> Result<Mat> {
    if rows.is_empty() {
        return Ok(Mat::zeros(0, cols_hint.unwrap_or(0)));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Invalid(format!("{what}: ragged rows")));
    }
    let m = Mat::from_fn(rows.len(), cols, |i, j| rows[i][j]);
    if !all_finite(&m) {
        return Err(Error::NonFinite(what));
    }
    Ok(m)
}

