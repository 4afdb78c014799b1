//! LQG problem data, dynamic output-feedback controllers, closed-loop cost and gradients,
//! Riccati synthesis and the vanilla policy-gradient baseline.

pub mod lqr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{dim, Error, Result};
use crate::linalg::{
    all_finite, block2, block_diag, eigenvalues, from_rows, min_eigenvalue_sym, sqrt_psd, to_rows,
    Mat,
};
use crate::solvers::{care, lyap_ct, lyap_ct_dual, spd_solve, SolveReport};
use crate::ss::{StateSpace, EPS_STAB};

/// Relative tolerance for the agreement of the two cost traces.
pub const DUAL_TRACE_TOL: f64 = 1e-8;

fn require_spd(name: &str, m: &Mat, size: usize) -> Result<()> {
    if m.shape() != (size, size) {
        return Err(Error::Invalid(format!(
            "{name} must be {size}x{size}, got {:?}",
            m.shape()
        )));
    }
    if !all_finite(m) {
        return Err(Error::Invalid(format!("{name} has non-finite entries")));
    }
    let asym = (m - m.transpose()).norm();
    if asym > 1e-10 * m.norm().max(1.0) {
        return Err(Error::Invalid(format!("{name} is not symmetric")));
    }
    if size > 0 && min_eigenvalue_sym(m) <= 0.0 {
        return Err(Error::Invalid(format!("{name} is not positive definite")));
    }
    Ok(())
}

/// Plant `ẋ = Ax + Bu + w`, `y = Cx + v` with cost weights `Q`, `R` and noise intensities `W`, `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqgPlant {
    a: Mat,
    b: Mat,
    c: Mat,
    q: Mat,
    r: Mat,
    w: Mat,
    v: Mat,
}

impl LqgPlant {
    pub fn new(a: Mat, b: Mat, c: Mat, q: Mat, r: Mat, w: Mat, v: Mat) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || b.nrows() != n || c.ncols() != n {
            return Err(Error::Invalid(format!(
                "plant dimensions inconsistent: A {:?}, B {:?}, C {:?}",
                a.shape(),
                b.shape(),
                c.shape()
            )));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c)] {
            if !all_finite(m) {
                return Err(Error::Invalid(format!("{name} has non-finite entries")));
            }
        }
        require_spd("Q", &q, n)?;
        require_spd("R", &r, b.ncols())?;
        require_spd("W", &w, n)?;
        require_spd("V", &v, c.nrows())?;
        Ok(Self { a, b, c, q, r, w, v })
    }

    /// The two-state open-loop-stable plant used throughout the examples.
    pub fn example1() -> Self {
        Self::new(
            Mat::from_row_slice(2, 2, &[-0.5, 0.0, 0.5, -1.0]),
            Mat::from_row_slice(2, 1, &[-1.0, 1.0]),
            Mat::from_row_slice(1, 2, &[-1.0 / 6.0, 11.0 / 12.0]),
            Mat::identity(2, 2),
            Mat::identity(1, 1),
            Mat::identity(2, 2),
            Mat::identity(1, 1),
        )
        .expect("built-in plant is valid")
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn c(&self) -> &Mat {
        &self.c
    }
    pub fn q(&self) -> &Mat {
        &self.q
    }
    pub fn r(&self) -> &Mat {
        &self.r
    }
    pub fn w(&self) -> &Mat {
        &self.w
    }
    pub fn v(&self) -> &Mat {
        &self.v
    }
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    /// Number of control inputs.
    pub fn m1(&self) -> usize {
        self.b.ncols()
    }
    /// Number of measured outputs.
    pub fn m2(&self) -> usize {
        self.c.nrows()
    }

    /// Copy with the process-noise intensity replaced.
    pub fn with_w(&self, w: Mat) -> Result<Self> {
        Self::new(
            self.a.clone(),
            self.b.clone(),
            self.c.clone(),
            self.q.clone(),
            self.r.clone(),
            w,
            self.v.clone(),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct RawPlant {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    r: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    #[serde(rename = "V")]
    v: Vec<Vec<f64>>,
}

impl Serialize for LqgPlant {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawPlant {
            a: to_rows(&self.a),
            b: to_rows(&self.b),
            c: to_rows(&self.c),
            q: to_rows(&self.q),
            r: to_rows(&self.r),
            w: to_rows(&self.w),
            v: to_rows(&self.v),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LqgPlant {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawPlant::deserialize(d)?;
        let conv = || -> Result<LqgPlant> {
            LqgPlant::new(
                from_rows(&raw.a, None, "A")?,
                from_rows(&raw.b, None, "B")?,
                from_rows(&raw.c, None, "C")?,
                from_rows(&raw.q, None, "Q")?,
                from_rows(&raw.r, None, "R")?,
                from_rows(&raw.w, None, "W")?,
                from_rows(&raw.v, None, "V")?,
            )
        };
        conv().map_err(serde::de::Error::custom)
    }
}

/// Strictly proper controller `ξ̇ = A_K ξ + B_K y`, `u = C_K ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynController {
    a_k: Mat,
    b_k: Mat,
    c_k: Mat,
}

impl DynController {
    pub fn new(a_k: Mat, b_k: Mat, c_k: Mat) -> Result<Self> {
        let q = a_k.nrows();
        if !a_k.is_square() || b_k.nrows() != q || c_k.ncols() != q {
            return Err(Error::Invalid(format!(
                "controller dimensions inconsistent: A_K {:?}, B_K {:?}, C_K {:?}",
                a_k.shape(),
                b_k.shape(),
                c_k.shape()
            )));
        }
        for (name, m) in [("A_K", &a_k), ("B_K", &b_k), ("C_K", &c_k)] {
            if !all_finite(m) {
                return Err(Error::Invalid(format!("{name} has non-finite entries")));
            }
        }
        Ok(Self { a_k, b_k, c_k })
    }

    pub fn a_k(&self) -> &Mat {
        &self.a_k
    }
    pub fn b_k(&self) -> &Mat {
        &self.b_k
    }
    pub fn c_k(&self) -> &Mat {
        &self.c_k
    }
    pub fn order(&self) -> usize {
        self.a_k.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b_k.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c_k.nrows()
    }

    /// `[[0, C_K], [B_K, A_K]]`, of size `(m1+q) × (m2+q)`.
    pub fn structured(&self) -> Mat {
        let (m1, m2) = (self.outputs(), self.inputs());
        block2(&Mat::zeros(m1, m2), &self.c_k, &self.b_k, &self.a_k)
    }

    /// Inverse of [`DynController::structured`]; the top-left block is ignored.
    pub fn from_structured(k: &Mat, m1: usize, m2: usize) -> Result<Self> {
        let (rows, cols) = k.shape();
        if rows < m1 || cols < m2 || rows - m1 != cols - m2 {
            return Err(dim("from_structured", format!("K is {rows}x{cols}")));
        }
        let q = rows - m1;
        Self::new(
            k.view((m1, m2), (q, q)).into_owned(),
            k.view((m1, 0), (q, m2)).into_owned(),
            k.view((0, m2), (m1, q)).into_owned(),
        )
    }

    /// Transfer function from measurement to control.
    pub fn to_state_space(&self) -> StateSpace {
        StateSpace::new(
            self.a_k.clone(),
            self.b_k.clone(),
            self.c_k.clone(),
            Mat::zeros(self.outputs(), self.inputs()),
        )
        .expect("controller dimensions are validated")
    }

    fn check_against(&self, plant: &LqgPlant) -> Result<()> {
        if self.inputs() != plant.m2() || self.outputs() != plant.m1() {
            return Err(dim(
                "controller/plant",
                format!(
                    "controller maps {} measurements to {} inputs; plant has m2 = {}, m1 = {}",
                    self.inputs(),
                    self.outputs(),
                    plant.m2(),
                    plant.m1()
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RawController {
    #[serde(rename = "A_K")]
    a_k: Vec<Vec<f64>>,
    #[serde(rename = "B_K")]
    b_k: Vec<Vec<f64>>,
    #[serde(rename = "C_K")]
    c_k: Vec<Vec<f64>>,
}

impl Serialize for DynController {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawController {
            a_k: to_rows(&self.a_k),
            b_k: to_rows(&self.b_k),
            c_k: to_rows(&self.c_k),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DynController {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawController::deserialize(d)?;
        let conv = || -> Result<DynController> {
            DynController::new(
                from_rows(&raw.a_k, None, "A_K")?,
                from_rows(&raw.b_k, None, "B_K")?,
                from_rows(&raw.c_k, None, "C_K")?,
            )
        };
        conv().map_err(serde::de::Error::custom)
    }
}

/// Augmented plant–controller loop with its two Lyapunov solutions.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    plant: LqgPlant,
    ctrl: DynController,
    acl: Mat,
    bcl: Mat,
    ccl: Mat,
    p: SolveReport,
    sigma: SolveReport,
}

/// Build the closed loop and solve
/// `𝒜ᵀP + P𝒜 + diag(Q, C_KᵀRC_K) = 0` and `𝒜Σ + Σ𝒜ᵀ + diag(W, B_K V B_Kᵀ) = 0`.
pub fn close_loop(plant: &LqgPlant, ctrl: &DynController) -> Result<ClosedLoop> {
    ctrl.check_against(plant)?;
    let acl = block2(
        plant.a(),
        &(plant.b() * ctrl.c_k()),
        &(ctrl.b_k() * plant.c()),
        ctrl.a_k(),
    );
    let abscissa = eigenvalues(&acl)?
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if abscissa >= -EPS_STAB {
        return Err(Error::NotStabilizing(abscissa));
    }
    let bcl = block_diag(&[&sqrt_psd(plant.w()), &(ctrl.b_k() * sqrt_psd(plant.v()))]);
    let ccl = block_diag(&[&sqrt_psd(plant.q()), &(sqrt_psd(plant.r()) * ctrl.c_k())]);
    let qbar = block_diag(&[plant.q(), &(ctrl.c_k().transpose() * plant.r() * ctrl.c_k())]);
    let wbar = block_diag(&[plant.w(), &(ctrl.b_k() * plant.v() * ctrl.b_k().transpose())]);
    let p = lyap_ct(&acl, &qbar)?;
    let sigma = lyap_ct_dual(&acl, &wbar)?;
    Ok(ClosedLoop {
        plant: plant.clone(),
        ctrl: ctrl.clone(),
        acl,
        bcl,
        ccl,
        p,
        sigma,
    })
}

impl ClosedLoop {
    pub fn plant(&self) -> &LqgPlant {
        &self.plant
    }
    pub fn controller(&self) -> &DynController {
        &self.ctrl
    }
    pub fn acl(&self) -> &Mat {
        &self.acl
    }
    pub fn bcl(&self) -> &Mat {
        &self.bcl
    }
    pub fn ccl(&self) -> &Mat {
        &self.ccl
    }
    pub fn p(&self) -> &Mat {
        &self.p.solution
    }
    pub fn sigma(&self) -> &Mat {
        &self.sigma.solution
    }
    pub fn p_report(&self) -> &SolveReport {
        &self.p
    }
    pub fn sigma_report(&self) -> &SolveReport {
        &self.sigma
    }
    pub fn n(&self) -> usize {
        self.plant.n()
    }
    pub fn q(&self) -> usize {
        self.ctrl.order()
    }

    /// Controller rows `[P21 P22]` of the observability-type solution.
    pub fn p2(&self) -> Mat {
        let (n, q) = (self.n(), self.q());
        self.p().view((n, 0), (q, n + q)).into_owned()
    }

    /// Controller rows `[Σ21 Σ22]` of the controllability-type solution.
    pub fn sigma2(&self) -> Mat {
        let (n, q) = (self.n(), self.q());
        self.sigma().view((n, 0), (q, n + q)).into_owned()
    }

    /// Realization `(𝒜, ℬ, 𝒞, 0)` from noise to weighted performance output.
    pub fn performance_system(&self) -> StateSpace {
        let (nb, nc) = (self.bcl.ncols(), self.ccl.nrows());
        StateSpace::new(
            self.acl.clone(),
            self.bcl.clone(),
            self.ccl.clone(),
            Mat::zeros(nc, nb),
        )
        .expect("closed-loop blocks are consistent")
    }

    /// Both trace forms of the cost: `(tr(diag(W, B_K V B_Kᵀ) P), tr(diag(Q, C_KᵀRC_K) Σ))`.
    pub fn cost_pair(&self) -> (f64, f64) {
        let (plant, ctrl) = (&self.plant, &self.ctrl);
        let wbar = block_diag(&[plant.w(), &(ctrl.b_k() * plant.v() * ctrl.b_k().transpose())]);
        let qbar = block_diag(&[plant.q(), &(ctrl.c_k().transpose() * plant.r() * ctrl.c_k())]);
        (
            (wbar * self.p()).trace(),
            (qbar * self.sigma()).trace(),
        )
    }
}

/// Closed-loop cost, with the two trace forms required to agree.
pub fn lqg_cost(cl: &ClosedLoop) -> Result<f64> {
    let (primal, dual) = cl.cost_pair();
    let scale = primal.abs().max(dual.abs()).max(f64::MIN_POSITIVE);
    if (primal - dual).abs() > DUAL_TRACE_TOL * scale {
        return Err(Error::Inconsistent(format!(
            "cost traces disagree: {primal:.15e} vs {dual:.15e}"
        )));
    }
    Ok(primal)
}

/// Gradient of the cost with respect to `(A_K, B_K, C_K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGradient {
    pub ga: Mat,
    pub gb: Mat,
    pub gc: Mat,
}

impl ControllerGradient {
    pub fn norm(&self) -> f64 {
        (self.ga.norm_squared() + self.gb.norm_squared() + self.gc.norm_squared()).sqrt()
    }

    /// The gradient laid out like the structured matrix `[[·, gC], [gB, gA]]` with a zero corner.
    pub fn structured(&self) -> Mat {
        block2(
            &Mat::zeros(self.gc.nrows(), self.gb.ncols()),
            &self.gc,
            &self.gb,
            &self.ga,
        )
    }
}

pub fn lqg_gradient(cl: &ClosedLoop) -> ControllerGradient {
    let (n, q) = (cl.n(), cl.q());
    let (plant, ctrl) = (&cl.plant, &cl.ctrl);
    let p = cl.p();
    let s = cl.sigma();
    let p1 = p.view((0, 0), (n, n + q));
    let p2 = p.view((n, 0), (q, n + q));
    let p22 = p.view((n, n), (q, q));
    let s1 = s.view((0, 0), (n, n + q));
    let s2 = s.view((n, 0), (q, n + q));
    let s22 = s.view((n, n), (q, q));
    let ga = (p2 * s2.transpose()) * 2.0;
    let gb = (p22 * ctrl.b_k() * plant.v() + p2 * s1.transpose() * plant.c().transpose()) * 2.0;
    let gc = (plant.r() * ctrl.c_k() * s22 + plant.b().transpose() * p1 * s2.transpose()) * 2.0;
    ControllerGradient { ga, gb, gc }
}

/// Separation-principle synthesis with its Riccati reports.
#[derive(Debug, Clone)]
pub struct LqgSynthesis {
    pub controller: DynController,
    /// Control Riccati solution `P`.
    pub p: SolveReport,
    /// Filter Riccati solution `H`.
    pub h: SolveReport,
}

/// Optimal controller of order `q ≥ n`; extra states are padded with a decoupled `−I` block.
pub fn lqg_optimal(plant: &LqgPlant, q: usize) -> Result<DynController> {
    Ok(lqg_synthesis(plant, q)?.controller)
}

pub fn lqg_synthesis(plant: &LqgPlant, q: usize) -> Result<LqgSynthesis> {
    let n = plant.n();
    if q < n {
        return Err(Error::Invalid(format!(
            "controller order {q} is below the plant order {n}"
        )));
    }
    let p = care(plant.a(), plant.b(), plant.q(), plant.r())?;
    let h = care(
        &plant.a().transpose(),
        &plant.c().transpose(),
        plant.w(),
        plant.v(),
    )?;
    let k = spd_solve(plant.r(), &(plant.b().transpose() * &p.solution))?;
    let l = spd_solve(plant.v(), &(plant.c() * &h.solution))?.transpose();
    let a_opt = plant.a() - plant.b() * &k - &l * plant.c();
    let pad = q - n;
    let a_k = block_diag(&[&a_opt, &(-Mat::identity(pad, pad))]);
    let b_k = crate::linalg::vstack(plant.m2(), &[&l, &Mat::zeros(pad, plant.m2())]);
    let c_k = crate::linalg::hstack(plant.m1(), &[&(-k), &Mat::zeros(plant.m1(), pad)]);
    Ok(LqgSynthesis {
        controller: DynController::new(a_k, b_k, c_k)?,
        p,
        h,
    })
}

#[derive(Debug, Clone)]
pub struct PgStep {
    pub controller: DynController,
    pub cost: f64,
    pub grad_norm: f64,
    /// Step actually taken to reach this iterate (0 for the initial point or a stalled update).
    pub step: f64,
}

/// Fixed-step gradient descent on `(A_K, B_K, C_K)`.
///
/// An update that would destabilize the loop is retried with half the step, up to 20 times;
/// if every retry fails the iterate is kept.
pub fn policy_gradient_run(
    plant: &LqgPlant,
    ctrl0: &DynController,
    step: f64,
    iters: usize,
) -> Result<Vec<PgStep>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Invalid(format!("step must be positive, got {step}")));
    }
    let mut cl = close_loop(plant, ctrl0)?;
    let mut grad = lqg_gradient(&cl);
    let mut out = vec![PgStep {
        controller: ctrl0.clone(),
        cost: lqg_cost(&cl)?,
        grad_norm: grad.norm(),
        step: 0.0,
    }];
    for _ in 0..iters {
        let cur = cl.controller().clone();
        let mut taken = 0.0;
        let mut h = step;
        for _ in 0..=20 {
            let cand = DynController::new(
                cur.a_k() - &grad.ga * h,
                cur.b_k() - &grad.gb * h,
                cur.c_k() - &grad.gc * h,
            )?;
            if let Ok(next) = close_loop(plant, &cand) {
                cl = next;
                taken = h;
                break;
            }
            h *= 0.5;
        }
        grad = lqg_gradient(&cl);
        out.push(PgStep {
            controller: cl.controller().clone(),
            cost: lqg_cost(&cl)?,
            grad_norm: grad.norm(),
            step: taken,
        });
    }
    Ok(out)
}

/// Example controller with `A_K = a·I`, `B_K = [0; b]`, `C_K = [0, c]` on the two-state plant.
pub fn example_controller(a: f64, b: f64, c: f64) -> DynController {
    DynController::new(
        Mat::identity(2, 2) * a,
        Mat::from_row_slice(2, 1, &[0.0, b]),
        Mat::from_row_slice(1, 2, &[0.0, c]),
    )
    .expect("valid example controller")
}
