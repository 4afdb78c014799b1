//! Global-optimality certificate for dynamic output-feedback controllers.
//!
//! A stabilizing controller is optimal iff `(𝒞₁ − ℬ₁P)(sI − 𝒜)⁻¹(ℬ₀ − Σ𝒞₀) ≡ 0`, tested through
//! the first `n+q` Markov parameters of that realization.

use serde::Serialize;

use crate::error::Result;
use crate::lqg::lqr::{lqr_cost_grad, LqrProblem};
use crate::lqg::{close_loop, lqg_cost, lqg_gradient, ClosedLoop, DynController, LqgPlant};
use crate::linalg::{block2, block_diag, rank, spectral_norm, Mat};
use crate::ss::StateSpace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Gradient tolerance, scaled by `1 + |J|`.
    pub grad: f64,
    /// Bound on normalized Markov norms.
    pub markov: f64,
    pub rank: f64,
    pub det: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            grad: 1e-6,
            markov: 1e-6,
            rank: 1e-8,
            det: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CertificateMatrices {
    pub b0: Mat,
    pub c0: Mat,
    pub b1: Mat,
    pub c1: Mat,
    /// `𝒞₁ − ℬ₁P`, of size `(m1+q) × (n+q)`.
    pub cterm: Mat,
    /// `ℬ₀ − Σ𝒞₀`, of size `(n+q) × (m2+q)`.
    pub bterm: Mat,
}

pub fn build_certificate_matrices(cl: &ClosedLoop) -> CertificateMatrices {
    let plant = cl.plant();
    let ctrl = cl.controller();
    let (n, q, m1, m2) = (plant.n(), ctrl.order(), plant.m1(), plant.m2());
    let b0 = block2(
        &Mat::zeros(n, m2),
        &Mat::zeros(n, q),
        &(ctrl.b_k() * plant.v()),
        &Mat::zeros(q, q),
    );
    let c0 = -block_diag(&[&plant.c().transpose(), &Mat::identity(q, q)]);
    let b1 = -block_diag(&[&plant.b().transpose(), &Mat::identity(q, q)]);
    let c1 = block2(
        &Mat::zeros(m1, n),
        &(plant.r() * ctrl.c_k()),
        &Mat::zeros(q, n),
        &Mat::zeros(q, q),
    );
    let cterm = &c1 - &b1 * cl.p();
    let bterm = &b0 - cl.sigma() * &c0;
    CertificateMatrices {
        b0,
        c0,
        b1,
        c1,
        cterm,
        bterm,
    }
}

impl CertificateMatrices {
    /// The realization `(𝒜, Bterm, Cterm, 0)` whose vanishing certifies optimality.
    pub fn system(&self, acl: &Mat) -> Result<StateSpace> {
        StateSpace::new(
            acl.clone(),
            self.bterm.clone(),
            self.cterm.clone(),
            Mat::zeros(self.cterm.nrows(), self.bterm.ncols()),
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MarkovNorms {
    pub raw: Vec<f64>,
    /// Raw values divided by `‖Cterm‖_F ‖𝒜‖₂ⁱ ‖Bterm‖_F` (zero when that scale is zero).
    pub normalized: Vec<f64>,
}

impl MarkovNorms {
    pub fn max_normalized(&self) -> f64 {
        self.normalized.iter().cloned().fold(0.0, f64::max)
    }
}

/// `‖Cterm 𝒜ⁱ Bterm‖_F` for `i = 0..count`.
pub fn markov_test(cm: &CertificateMatrices, acl: &Mat, count: usize) -> MarkovNorms {
    let a_norm = spectral_norm(acl);
    let base = cm.cterm.norm() * cm.bterm.norm();
    let mut raw = Vec::with_capacity(count);
    let mut normalized = Vec::with_capacity(count);
    let mut x = cm.bterm.clone();
    let mut scale = base;
    for _ in 0..count {
        let v = (&cm.cterm * &x).norm();
        raw.push(v);
        normalized.push(if scale > 0.0 { v / scale } else { 0.0 });
        x = acl * x;
        scale *= a_norm;
    }
    MarkovNorms { raw, normalized }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RankCheck {
    pub rank_p2: usize,
    pub rank_sigma2: usize,
    pub passes: bool,
}

/// Ranks of `[P21 P22]` and `[Σ21 Σ22]`; passes iff both are full and the loop is stationary.
pub fn corollary1_check(cl: &ClosedLoop, stationary: bool, tol_rank: f64) -> RankCheck {
    let rank_p2 = rank(&cl.p2(), tol_rank);
    let rank_sigma2 = rank(&cl.sigma2(), tol_rank);
    let q = cl.q();
    RankCheck {
        rank_p2,
        rank_sigma2,
        passes: stationary && rank_p2 == q && rank_sigma2 == q,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Lemma1Check {
    /// False when the controller order differs from the plant order.
    pub applicable: bool,
    /// `P ≻ 0` and `P12` invertible.
    pub p_condition: Option<bool>,
    /// `Σ ≻ 0` and `Σ12` invertible.
    pub sigma_condition: Option<bool>,
}

pub fn lemma1_check(cl: &ClosedLoop, tol_det: f64) -> Lemma1Check {
    let (n, q) = (cl.n(), cl.q());
    if n != q {
        return Lemma1Check {
            applicable: false,
            p_condition: None,
            sigma_condition: None,
        };
    }
    let cond = |m: &Mat| {
        let pd = crate::linalg::min_eigenvalue_sym(m) > 0.0;
        let det = m.view((0, n), (n, q)).into_owned().determinant();
        pd && det.abs() > tol_det
    };
    Lemma1Check {
        applicable: true,
        p_condition: Some(cond(cl.p())),
        sigma_condition: Some(cond(cl.sigma())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    GloballyOptimal,
    StationaryNotOptimal,
    NotStationary,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub verdict: Verdict,
    pub cost: f64,
    pub grad_norm: f64,
    pub markov_norms: Vec<f64>,
    pub markov_norms_normalized: Vec<f64>,
    #[serde(rename = "rank_P2")]
    pub rank_p2: usize,
    #[serde(rename = "rank_Sigma2")]
    pub rank_sigma2: usize,
    pub corollary1_passes: bool,
    pub lemma1: Lemma1Check,
}

pub fn certify(plant: &LqgPlant, ctrl: &DynController, tol: &Tolerances) -> Result<CertificateReport> {
    let cl = close_loop(plant, ctrl)?;
    certify_closed_loop(&cl, tol)
}

pub fn certify_closed_loop(cl: &ClosedLoop, tol: &Tolerances) -> Result<CertificateReport> {
    let cost = lqg_cost(cl)?;
    let grad_norm = lqg_gradient(cl).norm();
    let stationary = grad_norm <= tol.grad * (1.0 + cost.abs());
    let cm = build_certificate_matrices(cl);
    let markov = markov_test(&cm, cl.acl(), cl.n() + cl.q());
    let ranks = corollary1_check(cl, stationary, tol.rank);
    let verdict = if !stationary {
        Verdict::NotStationary
    } else if markov.max_normalized() <= tol.markov {
        Verdict::GloballyOptimal
    } else {
        Verdict::StationaryNotOptimal
    };
    Ok(CertificateReport {
        verdict,
        cost,
        grad_norm,
        markov_norms: markov.raw,
        markov_norms_normalized: markov.normalized,
        rank_p2: ranks.rank_p2,
        rank_sigma2: ranks.rank_sigma2,
        corollary1_passes: ranks.passes,
        lemma1: lemma1_check(cl, tol.det),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LqrCertificate {
    pub markov_norms: Vec<f64>,
    /// `‖RK + BᵀP_K‖_F`; with `Σ_K ≻ 0` the Markov test reduces to this being zero.
    pub stationarity: f64,
    pub sigma_positive_definite: bool,
    pub passes: bool,
}

pub fn lqr_certificate(p: &LqrProblem, k: &Mat, tol: f64) -> Result<LqrCertificate> {
    let ev = lqr_cost_grad(p, k)?;
    let c = ev.stationarity_factor(p, k);
    let acl = p.closed_loop(k)?;
    let mut x = ev.sigma_k.clone();
    let mut markov_norms = Vec::with_capacity(p.n());
    for _ in 0..p.n() {
        markov_norms.push((&c * &x).norm());
        x = &acl * x;
    }
    let stationarity = c.norm();
    let sigma_positive_definite = crate::linalg::min_eigenvalue_sym(&ev.sigma_k) > 0.0;
    Ok(LqrCertificate {
        markov_norms,
        stationarity,
        sigma_positive_definite,
        passes: sigma_positive_definite && stationarity <= tol,
    })
}
