//! State-feedback LQR with unit noise intensity, in the `u = Kx` convention.

use crate::error::{Error, Result};
use crate::linalg::{spectral_abscissa, Mat};
use crate::solvers::{care, lyap_ct, lyap_ct_dual, spd_solve};
use crate::ss::{StateSpace, EPS_STAB};

use super::require_spd;

#[derive(Debug, Clone, PartialEq)]
pub struct LqrProblem {
    a: Mat,
    b: Mat,
    q: Mat,
    r: Mat,
}

impl LqrProblem {
    pub fn new(a: Mat, b: Mat, q: Mat, r: Mat) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || b.nrows() != n {
            return Err(Error::Invalid(format!(
                "LQR dimensions inconsistent: A {:?}, B {:?}",
                a.shape(),
                b.shape()
            )));
        }
        require_spd("Q", &q, n)?;
        require_spd("R", &r, b.ncols())?;
        Ok(Self { a, b, q, r })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn q(&self) -> &Mat {
        &self.q
    }
    pub fn r(&self) -> &Mat {
        &self.r
    }
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn closed_loop(&self, k: &Mat) -> Result<Mat> {
        if k.shape() != (self.m(), self.n()) {
            return Err(Error::Invalid(format!(
                "gain must be {}x{}, got {:?}",
                self.m(),
                self.n(),
                k.shape()
            )));
        }
        Ok(&self.a + &self.b * k)
    }
}

#[derive(Debug, Clone)]
pub struct LqrEval {
    pub cost: f64,
    pub grad: Mat,
    pub p_k: Mat,
    pub sigma_k: Mat,
}

impl LqrEval {
    /// `RK + BᵀP_K`, the factor whose vanishing characterizes the optimum.
    pub fn stationarity_factor(&self, p: &LqrProblem, k: &Mat) -> Mat {
        p.r() * k + p.b().transpose() * &self.p_k
    }
}

/// Cost `tr(Σ_K (Q + KᵀRK))` and gradient `2 (RK + BᵀP_K) Σ_K`.
pub fn lqr_cost_grad(p: &LqrProblem, k: &Mat) -> Result<LqrEval> {
    let acl = p.closed_loop(k)?;
    let abscissa = spectral_abscissa(&acl)?;
    if abscissa >= -EPS_STAB {
        return Err(Error::NotStabilizing(abscissa));
    }
    let qk = p.q() + k.transpose() * p.r() * k;
    let p_k = lyap_ct(&acl, &qk)?.solution;
    let sigma_k = lyap_ct_dual(&acl, &Mat::identity(p.n(), p.n()))?.solution;
    let cost = (&sigma_k * &qk).trace();
    let grad = (p.r() * k + p.b().transpose() * &p_k) * &sigma_k * 2.0;
    Ok(LqrEval {
        cost,
        grad,
        p_k,
        sigma_k,
    })
}

/// Optimal gain `−R⁻¹BᵀP` and its cost.
pub fn lqr_optimal(p: &LqrProblem) -> Result<(Mat, f64)> {
    let sol = care(p.a(), p.b(), p.q(), p.r())?;
    let k = -spd_solve(p.r(), &(p.b().transpose() * &sol.solution))?;
    Ok((k, sol.solution.trace()))
}

/// The transfer function `(RK + BᵀP_K)(sI − (A+BK))⁻¹Σ_K` whose stable residue is half the gradient.
pub fn lqr_residue_system(p: &LqrProblem, k: &Mat) -> Result<StateSpace> {
    let ev = lqr_cost_grad(p, k)?;
    let c = ev.stationarity_factor(p, k);
    StateSpace::new(
        p.closed_loop(k)?,
        ev.sigma_k.clone(),
        c,
        Mat::zeros(p.m(), p.n()),
    )
}

#[derive(Debug, Clone)]
pub struct GdOptions {
    pub max_iters: usize,
    /// Stop when `‖RK + BᵀP_K‖_F` falls below this.
    pub tol: f64,
    pub initial_step: f64,
}

impl Default for GdOptions {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            tol: 1e-9,
            initial_step: 1e-2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GdOutcome {
    pub gain: Mat,
    pub cost: f64,
    pub stationarity: f64,
    pub iters: usize,
    pub converged: bool,
}

/// `J(K + Δ) − J(K) = tr(Σ_{K+Δ} (ΔᵀRΔ + ΔᵀF + FᵀΔ))` with `F = RK + BᵀP_K`.
///
/// Built from small quantities, so it stays accurate when the two costs agree to
/// nearly machine precision.
pub fn cost_change(p: &LqrProblem, f: &Mat, delta: &Mat, next: &LqrEval) -> f64 {
    let cross = delta.transpose() * f;
    let e = delta.transpose() * p.r() * delta + &cross + cross.transpose();
    (&next.sigma_k * e).trace()
}

/// Gradient descent with Armijo backtracking from a Barzilai–Borwein trial step.
pub fn lqr_gradient_descent(p: &LqrProblem, k0: &Mat, opts: &GdOptions) -> Result<GdOutcome> {
    let mut k = k0.clone();
    let mut ev = lqr_cost_grad(p, &k)?;
    let mut step = opts.initial_step;
    let mut iters = opts.max_iters;
    for it in 0..opts.max_iters {
        let stat = ev.stationarity_factor(p, &k).norm();
        if stat <= opts.tol {
            iters = it;
            break;
        }
        let g2 = ev.grad.norm_squared();
        let f = ev.stationarity_factor(p, &k);
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &k - &ev.grad * step;
            if let Ok(next) = lqr_cost_grad(p, &cand) {
                if cost_change(p, &f, &(&cand - &k), &next) <= -1e-4 * step * g2 {
                    accepted = Some((cand, next));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, next)) = accepted else {
            iters = it;
            break;
        };
        let s = &cand - &k;
        let y = &next.grad - &ev.grad;
        let sy = s.dot(&y);
        step = if sy > 0.0 { s.norm_squared() / sy } else { 2.0 * step };
        k = cand;
        ev = next;
    }
    let stat = ev.stationarity_factor(p, &k).norm();
    Ok(GdOutcome {
        converged: stat <= opts.tol,
        gain: k,
        cost: ev.cost,
        stationarity: stat,
        iters,
    })
}
