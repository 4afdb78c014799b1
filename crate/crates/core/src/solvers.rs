//! Lyapunov, Sylvester and continuous-time algebraic Riccati solvers with residual reports.

use nalgebra::Cholesky;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{dim, Error, Result};
use crate::linalg::{
    all_finite, complex_schur, kron, lstsq, matrix_sign, min_eigenvalue_sym, spectral_abscissa,
    symmetrize, to_complex, unvec, vec_of, CMat, Mat,
};

/// Problems with at most this many unknowns go through the Kronecker system.
const KRONECKER_MAX_UNKNOWNS: usize = 36;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Definiteness {
    PositiveDefinite,
    PositiveSemidefinite,
    Indefinite,
    NotChecked,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: Mat,
    /// Frobenius norm of the defining equation's residual.
    pub residual_norm: f64,
    pub definiteness: Definiteness,
}

fn classify(x: &Mat) -> Definiteness {
    let scale = x.norm().max(f64::MIN_POSITIVE);
    let lmin = min_eigenvalue_sym(x);
    if lmin > 1e-13 * scale {
        Definiteness::PositiveDefinite
    } else if lmin >= -1e-10 * scale.max(1.0) {
        Definiteness::PositiveSemidefinite
    } else {
        Definiteness::Indefinite
    }
}

fn check_square(op: &'static str, a: &Mat) -> Result<()> {
    if !a.is_square() {
        return Err(dim(op, format!("expected square matrix, got {:?}", a.shape())));
    }
    if !all_finite(a) {
        return Err(Error::NonFinite(op));
    }
    Ok(())
}

/// Residual `a x + x b + c`.
pub fn sylvester_residual(a: &Mat, b: &Mat, c: &Mat, x: &Mat) -> Mat {
    a * x + x * b + c
}

/// Solve `a x + x b + c = 0`.
pub fn sylvester(a: &Mat, b: &Mat, c: &Mat) -> Result<Mat> {
    check_square("sylvester", a)?;
    check_square("sylvester", b)?;
    if c.shape() != (a.nrows(), b.nrows()) {
        return Err(dim(
            "sylvester",
            format!("C is {:?}, expected {}x{}", c.shape(), a.nrows(), b.nrows()),
        ));
    }
    let (n, m) = c.shape();
    if n == 0 || m == 0 {
        return Ok(Mat::zeros(n, m));
    }
    let mut x = if n * m <= KRONECKER_MAX_UNKNOWNS {
        sylvester_kronecker(a, b, c)?
    } else {
        sylvester_schur(a, b, c)?
    };
    // One step of iterative refinement keeps the residual at round-off level for
    // moderately conditioned problems.
    let scale = a.norm() * x.norm() + b.norm() * x.norm() + c.norm();
    let r = sylvester_residual(a, b, c, &x);
    if r.norm() > 1e-12 * scale {
        let dx = if n * m <= KRONECKER_MAX_UNKNOWNS {
            sylvester_kronecker(a, b, &r)?
        } else {
            sylvester_schur(a, b, &r)?
        };
        x += dx;
    }
    if !all_finite(&x) {
        return Err(Error::NonUnique("sylvester solution is not finite".into()));
    }
    Ok(x)
}

/// Vectorized form `(I ⊗ a + bᵀ ⊗ I) vec(x) = -vec(c)`.
pub fn sylvester_kronecker(a: &Mat, b: &Mat, c: &Mat) -> Result<Mat> {
    let (n, m) = c.shape();
    let big = kron(&Mat::identity(m, m), a) + kron(&b.transpose(), &Mat::identity(n, n));
    let rhs = -vec_of(c);
    let lu = big.clone().lu();
    let v = lu
        .solve(&rhs)
        .ok_or_else(|| Error::NonUnique("spectra of A and -B intersect".into()))?;
    // An exactly-singular pivot is caught above; a nearly-singular one shows up here.
    let udiag = lu.u().diagonal().map(|d| d.abs());
    let umax = udiag.max();
    if udiag.min() <= 1e-14 * umax.max(1.0) {
        return Err(Error::NonUnique("spectra of A and -B intersect".into()));
    }
    Ok(unvec(&v, n, m))
}

/// Bartels–Stewart on complex Schur forms.
pub fn sylvester_schur(a: &Mat, b: &Mat, c: &Mat) -> Result<Mat> {
    let (n, m) = c.shape();
    let (ua, ta) = complex_schur(a)?;
    let (ub, tb) = complex_schur(b)?;
    let ct: CMat = ua.adjoint() * to_complex(c) * &ub;
    let scale = (a.norm() + b.norm()).max(f64::MIN_POSITIVE);
    let mut y = CMat::zeros(n, m);
    for j in 0..m {
        let mut rhs: Vec<Complex64> = (0..n).map(|i| -ct[(i, j)]).collect();
        for k in 0..j {
            let t = tb[(k, j)];
            if t != Complex64::new(0.0, 0.0) {
                for (i, r) in rhs.iter_mut().enumerate() {
                    *r -= y[(i, k)] * t;
                }
            }
        }
        let shift = tb[(j, j)];
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for l in (i + 1)..n {
                s -= ta[(i, l)] * y[(l, j)];
            }
            let d = ta[(i, i)] + shift;
            if d.norm() <= 1e-14 * scale {
                return Err(Error::NonUnique("spectra of A and -B intersect".into()));
            }
            y[(i, j)] = s / d;
        }
    }
    let x = ua * y * ub.adjoint();
    Ok(x.map(|v| v.re))
}

pub fn lyapunov_residual(a: &Mat, q: &Mat, x: &Mat) -> Mat {
    a.transpose() * x + x * a + q
}

/// Solve `aᵀ x + x a + q = 0` and return a symmetric solution with its residual.
pub fn lyap_ct(a: &Mat, q: &Mat) -> Result<SolveReport> {
    check_square("lyap_ct", a)?;
    if q.shape() != a.shape() {
        return Err(dim(
            "lyap_ct",
            format!("Q is {:?}, A is {:?}", q.shape(), a.shape()),
        ));
    }
    let at = a.transpose();
    let x = symmetrize(&sylvester(&at, a, &symmetrize(q))?);
    let residual_norm = lyapunov_residual(a, q, &x).norm();
    Ok(SolveReport {
        definiteness: classify(&x),
        solution: x,
        residual_norm,
    })
}

/// Advertised residual bound of [`lyap_ct`].
pub fn lyap_residual_bound(a: &Mat, q: &Mat, x: &Mat) -> f64 {
    1e-10 * (a.norm() * x.norm() + q.norm())
}

/// Solve `a x + x aᵀ + q = 0` (controllability form).
pub fn lyap_ct_dual(a: &Mat, q: &Mat) -> Result<SolveReport> {
    lyap_ct(&a.transpose(), q)
}

pub fn care_residual(a: &Mat, b: &Mat, q: &Mat, r: &Mat, p: &Mat) -> Result<Mat> {
    let rinv_bt = spd_solve(r, &b.transpose())?;
    Ok(a.transpose() * p + p * a - p * b * rinv_bt * p + q)
}

fn care_scale(a: &Mat, b: &Mat, q: &Mat, r: &Mat, p: &Mat) -> Result<f64> {
    let rinv_bt = spd_solve(r, &b.transpose())?;
    Ok(q.norm() + 2.0 * a.norm() * p.norm() + (p * b * rinv_bt * p).norm())
}

/// `r⁻¹ m` for a symmetric positive definite `r`.
pub fn spd_solve(r: &Mat, m: &Mat) -> Result<Mat> {
    let chol = Cholesky::new(symmetrize(r))
        .ok_or_else(|| Error::Invalid("weight matrix is not positive definite".into()))?;
    Ok(chol.solve(m))
}

/// Stabilizing solution of `aᵀp + pa − p b r⁻¹ bᵀ p + q = 0`.
///
/// Newton–Kleinman from the zero gain when `a` is stable, otherwise from the
/// sign-function solution of the Hamiltonian.
pub fn care(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<SolveReport> {
    validate_care(a, b, q, r)?;
    let n = a.nrows();
    let k0 = if spectral_abscissa(a)? < -1e-9 {
        Mat::zeros(b.ncols(), n)
    } else {
        let p0 = care_sign(a, b, q, r)?;
        spd_solve(r, &(b.transpose() * p0))?
    };
    care_with_gain(a, b, q, r, &k0)
}

fn validate_care(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<()> {
    check_square("care", a)?;
    check_square("care", q)?;
    check_square("care", r)?;
    let n = a.nrows();
    if b.nrows() != n || q.nrows() != n || r.nrows() != b.ncols() {
        return Err(dim(
            "care",
            format!(
                "A {:?}, B {:?}, Q {:?}, R {:?}",
                a.shape(),
                b.shape(),
                q.shape(),
                r.shape()
            ),
        ));
    }
    if !all_finite(b) {
        return Err(Error::NonFinite("care"));
    }
    Ok(())
}

/// Newton–Kleinman from a user-supplied stabilizing gain `k0` (control law `u = -k0 x`).
pub fn care_with_gain(a: &Mat, b: &Mat, q: &Mat, r: &Mat, k0: &Mat) -> Result<SolveReport> {
    validate_care(a, b, q, r)?;
    let mut k = k0.clone();
    let mut p = Mat::zeros(a.nrows(), a.nrows());
    let mut res = f64::INFINITY;
    let mut scale = 1.0;
    let mut prev = f64::INFINITY;
    for _ in 0..50 {
        let acl = a - b * &k;
        let abscissa = spectral_abscissa(&acl)?;
        if abscissa >= -1e-12 {
            return Err(Error::Riccati(format!(
                "Newton iterate lost stability (spectral abscissa {abscissa:.3e}); \
                 data may not be stabilizable/detectable"
            )));
        }
        let rhs = q + k.transpose() * r * &k;
        p = lyap_ct(&acl, &rhs)?.solution;
        k = spd_solve(r, &(b.transpose() * &p))?;
        res = care_residual(a, b, q, r, &p)?.norm();
        scale = care_scale(a, b, q, r, &p)?.max(f64::MIN_POSITIVE);
        // Past the acceptance threshold, keep going only while Newton still contracts.
        if res < 1e-15 * scale || (res < 1e-10 * scale && res > 0.5 * prev) {
            break;
        }
        prev = res;
    }
    if res > 1e-8 * scale {
        return Err(Error::Riccati(format!(
            "Newton–Kleinman stalled with residual {res:.3e}"
        )));
    }
    let closed = a - b * &k;
    if spectral_abscissa(&closed)? >= -1e-12 {
        return Err(Error::Riccati("solution is not stabilizing".into()));
    }
    Ok(SolveReport {
        definiteness: classify(&p),
        solution: p,
        residual_norm: res,
    })
}

/// Stabilizing Riccati solution from the sign of the Hamiltonian matrix.
pub fn care_sign(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let g = b * spd_solve(r, &b.transpose())?;
    let h = crate::linalg::block2(a, &(-&g), &(-q), &(-a.transpose()));
    let z = matrix_sign(&h).map_err(|e| {
        Error::Riccati(format!(
            "Hamiltonian has eigenvalues on the imaginary axis ({e}); data not stabilizable/detectable"
        ))
    })?;
    let z11 = z.view((0, 0), (n, n)).into_owned();
    let z12 = z.view((0, n), (n, n)).into_owned();
    let z21 = z.view((n, 0), (n, n)).into_owned();
    let z22 = z.view((n, n), (n, n)).into_owned();
    let eye = Mat::identity(n, n);
    let lhs = crate::linalg::vstack(n, &[&z12, &(z22 + &eye)]);
    let rhs = -crate::linalg::vstack(n, &[&(z11 + &eye), &z21]);
    let p = lstsq(&lhs, &rhs, 1e-13)?;
    Ok(symmetrize(&p))
}
