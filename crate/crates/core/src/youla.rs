//! Convex Youla-space reformulation around a nominal stabilizing controller and the
//! gradient method that runs in it.

use std::time::Instant;

use nalgebra::SymmetricEigen;
use serde::Serialize;

use crate::certificate::build_certificate_matrices;
use crate::error::{dim, Error, Result};
use crate::linalg::{block_diag, sqrt_psd, Mat};
use crate::lqg::{close_loop, lqg_cost, DynController, LqgPlant};
use crate::ss::{Sign, StateSpace};

/// Relative Hankel threshold applied to each sensitivity before it enters an iterate.
pub const SENSITIVITY_TOL: f64 = 1e-10;
/// Default relative Hankel threshold for truncating the dynamic part of an iterate.
pub const DEFAULT_TRUNC_TOL: f64 = 1e-9;

/// Zero the top-left `m1 × m2` block.
pub fn mask_block(m: &Mat, m1: usize, m2: usize) -> Mat {
    let mut out = m.clone();
    out.view_mut((0, 0), (m1, m2)).fill(0.0);
    out
}

/// The four-block nominal system built on the closed loop of `ctrl0`.
#[derive(Debug, Clone)]
pub struct NominalLft {
    plant: LqgPlant,
    ctrl0: DynController,
    pub m11: StateSpace,
    pub m12: StateSpace,
    pub m21: StateSpace,
    pub m22: StateSpace,
    /// `(𝒞₁ − ℬ₁P)(sI − 𝒜)⁻¹(ℬ₀ − Σ𝒞₀)`.
    pub g0: StateSpace,
    /// `M12~ M12`.
    pub phi12: StateSpace,
    /// `M21 M21~`.
    pub phi21: StateSpace,
    pub p: Mat,
    pub sigma: Mat,
    cost0: f64,
}

pub fn build_nominal(plant: &LqgPlant, ctrl0: &DynController) -> Result<NominalLft> {
    let cl = close_loop(plant, ctrl0)?;
    let cost0 = lqg_cost(&cl)?;
    let (n, q, m1, m2) = (plant.n(), ctrl0.order(), plant.m1(), plant.m2());
    let acl = cl.acl().clone();
    let bcl = cl.bcl().clone();
    let ccl = cl.ccl().clone();
    let b_in = block_diag(&[plant.b(), &Mat::identity(q, q)]);
    let c_out = block_diag(&[plant.c(), &Mat::identity(q, q)]);
    let mut d12 = Mat::zeros(n + m1, m1 + q);
    d12.view_mut((n, 0), (m1, m1)).copy_from(&sqrt_psd(plant.r()));
    let mut d21 = Mat::zeros(m2 + q, n + m2);
    d21.view_mut((0, n), (m2, m2)).copy_from(&sqrt_psd(plant.v()));
    let m11 = StateSpace::new(acl.clone(), bcl.clone(), ccl.clone(), Mat::zeros(n + m1, n + m2))?;
    let m12 = StateSpace::new(acl.clone(), b_in.clone(), ccl, d12)?;
    let m21 = StateSpace::new(acl.clone(), bcl, c_out.clone(), d21)?;
    let m22 = StateSpace::new(acl.clone(), b_in, c_out, Mat::zeros(m2 + q, m1 + q))?;
    let cm = build_certificate_matrices(&cl);
    let g0 = cm.system(&acl)?;
    let phi12 = m12.para_conjugate().series(&m12)?;
    let phi21 = m21.series(&m21.para_conjugate())?;
    Ok(NominalLft {
        plant: plant.clone(),
        ctrl0: ctrl0.clone(),
        m11,
        m12,
        m21,
        m22,
        g0,
        phi12,
        phi21,
        p: cl.p().clone(),
        sigma: cl.sigma().clone(),
        cost0,
    })
}

impl NominalLft {
    pub fn plant(&self) -> &LqgPlant {
        &self.plant
    }
    pub fn ctrl0(&self) -> &DynController {
        &self.ctrl0
    }
    pub fn cost0(&self) -> f64 {
        self.cost0
    }
    pub fn m1(&self) -> usize {
        self.plant.m1()
    }
    pub fn m2(&self) -> usize {
        self.plant.m2()
    }
    pub fn q(&self) -> usize {
        self.ctrl0.order()
    }
    /// Rows and columns of a Youla parameter.
    pub fn param_shape(&self) -> (usize, usize) {
        (self.m1() + self.q(), self.m2() + self.q())
    }
    pub fn zero_iterate(&self) -> YoulaIterate {
        let (r, c) = self.param_shape();
        YoulaIterate::zero(r, c)
    }
    /// Number of free entries of the static part.
    pub fn masked_dimension(&self) -> usize {
        let (r, c) = self.param_shape();
        r * c - self.m1() * self.m2()
    }
    /// Positions of the free static entries in row-major order.
    pub fn masked_positions(&self) -> Vec<(usize, usize)> {
        let (r, c) = self.param_shape();
        let (m1, m2) = (self.m1(), self.m2());
        (0..r)
            .flat_map(|i| (0..c).map(move |j| (i, j)))
            .filter(|&(i, j)| !(i < m1 && j < m2))
            .collect()
    }
}

/// A point `(𝐐, Q)` of the lifted parameter space.
#[derive(Debug, Clone)]
pub struct YoulaIterate {
    pub q_dyn: StateSpace,
    pub q_stat: Mat,
}

impl YoulaIterate {
    pub fn zero(rows: usize, cols: usize) -> Self {
        Self {
            q_dyn: StateSpace::zero(rows, cols),
            q_stat: Mat::zeros(rows, cols),
        }
    }

    pub fn new(q_dyn: StateSpace, q_stat: Mat) -> Result<Self> {
        if q_dyn.outputs() != q_stat.nrows() || q_dyn.inputs() != q_stat.ncols() {
            return Err(dim("YoulaIterate::new", "dynamic and static parts differ in shape"));
        }
        Ok(Self { q_dyn, q_stat })
    }

    /// Static-only iterate.
    pub fn from_static(q_stat: Mat) -> Self {
        let (r, c) = q_stat.shape();
        Self {
            q_dyn: StateSpace::zero(r, c),
            q_stat,
        }
    }

    /// Dynamic-only iterate.
    pub fn from_dynamic(q_dyn: StateSpace) -> Self {
        let (r, c) = (q_dyn.outputs(), q_dyn.inputs());
        Self {
            q_dyn,
            q_stat: Mat::zeros(r, c),
        }
    }

    /// Strictly proper and stable dynamic part, masked static part.
    pub fn check_membership(&self, m1: usize, m2: usize) -> Result<()> {
        if !self.q_dyn.is_strictly_proper() {
            return Err(Error::Inconsistent("dynamic part has nonzero feedthrough".into()));
        }
        if !self.q_dyn.is_stable() {
            return Err(Error::Inconsistent("dynamic part is not stable".into()));
        }
        if self.q_stat.view((0, 0), (m1, m2)).iter().any(|&v| v != 0.0) {
            return Err(Error::Inconsistent("static part violates the mask".into()));
        }
        Ok(())
    }

    /// `𝐐(s) + Q` as one system.
    pub fn combined(&self) -> Result<StateSpace> {
        self.q_dyn.with_feedthrough(self.q_stat.clone())
    }

    /// `self + alpha · other` without order reduction.
    pub fn add_scaled(&self, other: &YoulaIterate, alpha: f64) -> Result<Self> {
        let q_dyn = if other.q_dyn.order() == 0 {
            self.q_dyn.clone()
        } else if self.q_dyn.order() == 0 {
            other.q_dyn.scaled(alpha).with_feedthrough(self.q_dyn.d().clone())?
        } else {
            self.q_dyn.parallel(&other.q_dyn.scaled(alpha), Sign::Plus)?
        };
        Ok(Self {
            q_dyn,
            q_stat: &self.q_stat + &other.q_stat * alpha,
        })
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            q_dyn: self.q_dyn.scaled(alpha),
            q_stat: &self.q_stat * alpha,
        }
    }

    /// `⟨𝐐₁, 𝐐₂⟩_H2 + tr(Q₁ᵀQ₂)`.
    pub fn inner(&self, other: &YoulaIterate) -> Result<f64> {
        let dyn_part = if self.q_dyn.order() == 0 || other.q_dyn.order() == 0 {
            0.0
        } else {
            self.q_dyn.h2_inner(&other.q_dyn)?
        };
        Ok(dyn_part + self.q_stat.dot(&other.q_stat))
    }

    pub fn norm_sq(&self) -> Result<f64> {
        let dyn_part = if self.q_dyn.order() == 0 {
            0.0
        } else {
            self.q_dyn.h2_norm_sq()?
        };
        Ok(dyn_part + self.q_stat.norm_squared())
    }
}

/// `M11 + M12 (𝐐 + Q) M21`.
pub fn performance_map(nom: &NominalLft, it: &YoulaIterate) -> Result<StateSpace> {
    let y = it.combined()?;
    let inner = nom.m12.series(&y)?.series(&nom.m21)?;
    nom.m11.parallel(&inner, Sign::Plus)
}

/// Squared H2 norm of the performance map; its feedthrough must vanish by the mask.
pub fn lifted_cost(nom: &NominalLft, it: &YoulaIterate) -> Result<f64> {
    let t = performance_map(nom, it)?;
    if !t.is_strictly_proper() {
        return Err(Error::Inconsistent(
            "performance map has a feedthrough term; static part violates the mask".into(),
        ));
    }
    t.h2_norm_sq()
}

/// `𝒮[G0 + M12~M12 (𝐐 + Q) M21 M21~]`, reduced.
pub fn sensitivity(nom: &NominalLft, it: &YoulaIterate) -> Result<StateSpace> {
    let y = it.combined()?;
    let mut s = nom.g0.clone();
    if y.order() > 0 || y.d().iter().any(|&v| v != 0.0) {
        let x = nom.phi12.series(&y)?.series(&nom.phi21)?;
        let xs = x.stable_projection()?;
        s = s.parallel(&xs, Sign::Plus)?;
    }
    let s = s.minreal(SENSITIVITY_TOL)?;
    if !s.is_strictly_proper() {
        return Err(Error::Inconsistent("sensitivity has a feedthrough term".into()));
    }
    Ok(s)
}

/// Half the gradient in the lifted space: `∇J = 2 (S, Rmask)`.
#[derive(Debug, Clone)]
pub struct FrechetGradient {
    pub s: StateSpace,
    pub rmask: Mat,
}

impl FrechetGradient {
    /// `‖(S, Rmask)‖_𝕌`.
    pub fn norm_u(&self) -> Result<f64> {
        let h2 = if self.s.order() == 0 {
            0.0
        } else {
            self.s.h2_norm_sq()?
        };
        Ok((h2 + self.rmask.norm_squared()).sqrt())
    }

    /// `⟨(S, Rmask), Δ⟩_𝕌`; the directional derivative of the cost is twice this.
    pub fn pair(&self, dir: &YoulaIterate) -> Result<f64> {
        YoulaIterate {
            q_dyn: self.s.clone(),
            q_stat: self.rmask.clone(),
        }
        .inner(dir)
    }

    pub fn as_iterate(&self) -> YoulaIterate {
        YoulaIterate {
            q_dyn: self.s.clone(),
            q_stat: self.rmask.clone(),
        }
    }
}

pub fn frechet_gradient(nom: &NominalLft, it: &YoulaIterate) -> Result<FrechetGradient> {
    let s = sensitivity(nom, it)?;
    let residue = if s.order() == 0 {
        Mat::zeros(s.outputs(), s.inputs())
    } else {
        s.stable_residue_sum()?
    };
    Ok(FrechetGradient {
        rmask: mask_block(&residue, nom.m1(), nom.m2()),
        s,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IterateRecord {
    pub iter: usize,
    pub cost: f64,
    pub grad_norm_u: f64,
    pub q_dyn_order: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct Algorithm1Run {
    /// One record per visited iterate, `0..=N` when the run completes.
    pub records: Vec<IterateRecord>,
    pub final_it: YoulaIterate,
    /// Set when a numerical failure cut the run short.
    pub failure: Option<Error>,
}

/// `𝐐 ← minreal(𝐐 − η S)`, `Q ← Q − η Rmask`, starting from zero.
pub fn algorithm1_run(nom: &NominalLft, eta: f64, iters: usize, trunc_tol: f64) -> Result<Algorithm1Run> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Invalid(format!("step size must be positive, got {eta}")));
    }
    if !(trunc_tol >= 0.0 && trunc_tol < 1.0) {
        return Err(Error::Invalid(format!("truncation tolerance must be in [0, 1), got {trunc_tol}")));
    }
    let start = Instant::now();
    let mut it = nom.zero_iterate();
    let mut records = Vec::with_capacity(iters + 1);
    let mut failure = None;
    for k in 0..=iters {
        let step = || -> Result<(IterateRecord, Option<YoulaIterate>)> {
            let cost = lifted_cost(nom, &it)?;
            let g = frechet_gradient(nom, &it)?;
            let rec = IterateRecord {
                iter: k,
                cost,
                grad_norm_u: g.norm_u()?,
                q_dyn_order: it.q_dyn.order(),
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            };
            if k == iters {
                return Ok((rec, None));
            }
            let q_dyn = if g.s.order() == 0 {
                it.q_dyn.clone()
            } else if it.q_dyn.order() == 0 {
                g.s.scaled(-eta)
            } else {
                it.q_dyn.parallel(&g.s.scaled(eta), Sign::Minus)?.minreal(trunc_tol)?
            };
            let next = YoulaIterate {
                q_dyn,
                q_stat: &it.q_stat - &g.rmask * eta,
            };
            next.check_membership(nom.m1(), nom.m2())?;
            Ok((rec, Some(next)))
        };
        match step() {
            Ok((rec, next)) => {
                records.push(rec);
                if let Some(n) = next {
                    it = n;
                }
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    Ok(Algorithm1Run {
        records,
        final_it: it,
        failure,
    })
}

/// `ΔK = Y (I + M22 Y)⁻¹` with `Y = 𝐐 + Q`, realized as a feedback interconnection.
pub fn reconstruct_delta_k(nom: &NominalLft, it: &YoulaIterate) -> Result<StateSpace> {
    let y = it.combined()?;
    let m = &nom.m22;
    let (ay, by, cy, dy) = (y.a(), y.b(), y.c(), y.d());
    let (am, bm, cm) = (m.a(), m.b(), m.c());
    // M22 has zero feedthrough, so the static loop I + D_M22 D_Y = I is always invertible.
    let a = crate::linalg::block2(ay, &(-(by * cm)), &(bm * cy), &(am - bm * dy * cm));
    let b = crate::linalg::vstack(y.inputs(), &[by, &(bm * dy)]);
    let c = crate::linalg::hstack(y.outputs(), &[cy, &(-(dy * cm))]);
    let dk = StateSpace::new(a, b, c, dy.clone())?;
    // ΔK itself may be unstable; the loop it closes around the plant may not.
    let k = assemble_full(nom.ctrl0(), &dk)?;
    match close_loop(nom.plant(), &k) {
        Ok(_) => Ok(dk),
        Err(Error::NotStabilizing(_)) => Err(Error::Inconsistent(
            "reconstructed controller does not stabilize the plant".into(),
        )),
        Err(e) => Err(e),
    }
}

/// `Y = ΔK (I − M22 ΔK)⁻¹`, split into a strictly proper stable part and a static part.
pub fn youla_parameter(nom: &NominalLft, delta_k: &StateSpace) -> Result<YoulaIterate> {
    let (r, c) = nom.param_shape();
    if delta_k.outputs() != r || delta_k.inputs() != c {
        return Err(dim("youla_parameter", format!("ΔK must be {r}x{c}")));
    }
    let m = &nom.m22;
    let (ad, bd, cd, dd) = (delta_k.a(), delta_k.b(), delta_k.c(), delta_k.d());
    let (am, bm, cm) = (m.a(), m.b(), m.c());
    let a = crate::linalg::block2(ad, &(bd * cm), &(bm * cd), &(am + bm * dd * cm));
    let b = crate::linalg::vstack(c, &[bd, &(bm * dd)]);
    let cc = crate::linalg::hstack(r, &[cd, &(dd * cm)]);
    let q_dyn = StateSpace::new(a, b, cc, Mat::zeros(r, c))?;
    if !q_dyn.is_stable() {
        return Err(Error::NotStabilizing(
            q_dyn
                .poles()?
                .iter()
                .map(|l| l.re)
                .fold(f64::NEG_INFINITY, f64::max),
        ));
    }
    Ok(YoulaIterate {
        q_dyn,
        q_stat: dd.clone(),
    })
}

/// Controller obtained by closing `ctrl0`'s augmented loop with `ΔK`, reduced by `minreal`.
pub fn assemble_controller(ctrl0: &DynController, delta_k: &StateSpace, tol: f64) -> Result<DynController> {
    let full = assemble_full(ctrl0, delta_k)?;
    if full.order() == ctrl0.order() {
        return Ok(full);
    }
    let ss = full.to_state_space();
    // Controllers may carry poles on the axis; keep the full realization then.
    match ss.minreal(tol) {
        Ok(r) => DynController::new(r.a().clone(), r.b().clone(), r.c().clone()),
        Err(_) => Ok(full),
    }
}

/// The interconnection of `ctrl₀` and `ΔK` before any reduction.
fn assemble_full(ctrl0: &DynController, delta_k: &StateSpace) -> Result<DynController> {
    let (m1, m2, q) = (ctrl0.outputs(), ctrl0.inputs(), ctrl0.order());
    if delta_k.outputs() != m1 + q || delta_k.inputs() != m2 + q {
        return Err(dim("assemble_controller", format!("ΔK must be {}x{}", m1 + q, m2 + q)));
    }
    let d = delta_k.d();
    if d.view((0, 0), (m1, m2)).iter().any(|&v| v != 0.0) {
        return Err(Error::Inconsistent("ΔK feedthrough violates the mask".into()));
    }
    // States that never reach the output (or are never excited) contribute nothing.
    let static_only;
    let delta_k = if delta_k.order() > 0
        && (delta_k.b().iter().all(|&v| v == 0.0) || delta_k.c().iter().all(|&v| v == 0.0))
    {
        static_only = StateSpace::gain(d.clone());
        &static_only
    } else {
        delta_k
    };
    let d12 = d.view((0, m2), (m1, q));
    let d21 = d.view((m1, 0), (q, m2));
    let d22 = d.view((m1, m2), (q, q));
    let nd = delta_k.order();
    let c1 = delta_k.c().view((0, 0), (m1, nd));
    let c2 = delta_k.c().view((m1, 0), (q, nd));
    let b1 = delta_k.b().view((0, 0), (nd, m2));
    let b2 = delta_k.b().view((0, m2), (nd, q));
    let a_new = crate::linalg::block2(
        &(ctrl0.a_k() + d22),
        &c2.into_owned(),
        &b2.into_owned(),
        delta_k.a(),
    );
    let b_new = crate::linalg::vstack(m2, &[&(ctrl0.b_k() + d21), &b1.into_owned()]);
    let c_new = crate::linalg::hstack(m1, &[&(ctrl0.c_k() + d12), &c1.into_owned()]);
    DynController::new(a_new, b_new, c_new)
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzEstimate {
    pub hinf_m12: f64,
    pub hinf_m21: f64,
    /// Largest eigenvalue of the Gram matrix of `M12 E M21` over the masked static basis.
    pub lambda_static: f64,
    /// Smoothness constant bounding the lifted cost's curvature.
    pub l_hat: f64,
}

/// `L̂ = 2 (‖M12‖²∞ ‖M21‖²∞ + λ_static)`.
pub fn lipschitz_estimate(nom: &NominalLft) -> Result<LipschitzEstimate> {
    let hinf_m12 = nom.m12.hinf_norm()?;
    let hinf_m21 = nom.m21.hinf_norm()?;
    let (r, c) = nom.param_shape();
    let pos = nom.masked_positions();
    let maps: Vec<StateSpace> = pos
        .iter()
        .map(|&(i, j)| {
            let mut e = Mat::zeros(r, c);
            e[(i, j)] = 1.0;
            nom.m12.series(&StateSpace::gain(e))?.series(&nom.m21)
        })
        .collect::<Result<_>>()?;
    let d = maps.len();
    let mut gram = Mat::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let v = maps[a].h2_inner(&maps[b])?;
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    let lambda_static = if d == 0 {
        0.0
    } else {
        SymmetricEigen::new(gram)
            .eigenvalues
            .iter()
            .cloned()
            .fold(0.0, f64::max)
    };
    let l_hat = 2.0 * (hinf_m12.powi(2) * hinf_m21.powi(2) + lambda_static);
    Ok(LipschitzEstimate {
        hinf_m12,
        hinf_m21,
        lambda_static,
        l_hat,
    })
}

/// Step size `min(0.1, 1.9 / L̂)`.
pub fn default_step(nom: &NominalLft) -> Result<f64> {
    Ok(0.1f64.min(1.9 / lipschitz_estimate(nom)?.l_hat))
}

/// `J(it₁) + ⟨∇J(it₁), it₂ − it₁⟩ + L/2 ‖it₂ − it₁‖² − J(it₂)`; nonnegative when `l` is valid.
pub fn descent_lemma_gap(nom: &NominalLft, it1: &YoulaIterate, it2: &YoulaIterate, l: f64) -> Result<f64> {
    let j1 = lifted_cost(nom, it1)?;
    let j2 = lifted_cost(nom, it2)?;
    let diff = it2.add_scaled(it1, -1.0)?;
    let g = frechet_gradient(nom, it1)?;
    let lin = 2.0 * g.pair(&diff)?;
    Ok(j1 + lin + 0.5 * l * diff.norm_sq()? - j2)
}

/// Upper envelope `e_{k+1} = e_k − c e_k²` with `c = η'(1 − Lη'/2)/r0²` and `η' = η/2`.
///
/// Algorithm 1 steps along `S` rather than `2S`, so its step on the true gradient is `η/2`.
pub fn sublinear_envelope(delta0: f64, eta: f64, l_hat: f64, r0: f64, len: usize) -> Vec<f64> {
    let h = 0.5 * eta;
    let c = h * (1.0 - 0.5 * l_hat * h) / (r0 * r0);
    let mut out = Vec::with_capacity(len);
    let mut e = delta0;
    for _ in 0..len {
        out.push(e);
        e = (e - c * e * e).max(0.0);
    }
    out
}

/// Youla image of a controller of the same order as `ctrl0`.
pub fn iterate_for_controller(nom: &NominalLft, target: &DynController) -> Result<YoulaIterate> {
    if target.order() != nom.q() {
        return Err(dim("iterate_for_controller", "controller orders differ"));
    }
    let dk = target.structured() - nom.ctrl0().structured();
    youla_parameter(nom, &StateSpace::gain(dk))
}
