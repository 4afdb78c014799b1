//! Real-rational transfer matrices carried as state-space quadruples.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{dim, Error, Result};
use crate::linalg::{
    all_finite, block2, block_diag, eigenvalues, from_rows, hstack, matrix_sign,
    sorted_left_singular, spectral_norm_c, symmetrize, to_complex, to_rows, vstack, CMat, Mat,
};
use crate::solvers::{lyap_ct, lyap_ct_dual, sylvester};

/// Eigenvalues with real part at or above `-EPS_STAB` count as unstable.
pub const EPS_STAB: f64 = 1e-9;
/// Eigenvalues with `|Re| <= EPS_SPLIT` block a stable/anti-stable split.
pub const EPS_SPLIT: f64 = 1e-8;
/// Default relative Hankel singular value threshold for [`StateSpace::minreal`].
pub const MINREAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// `G(s) = C (sI − A)⁻¹ B + D`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: Mat,
    b: Mat,
    c: Mat,
    d: Mat,
}

impl StateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() {
            return Err(dim("StateSpace::new", format!("A is {:?}", a.shape())));
        }
        if b.nrows() != n || c.ncols() != n || d.shape() != (c.nrows(), b.ncols()) {
            return Err(dim(
                "StateSpace::new",
                format!(
                    "A {:?}, B {:?}, C {:?}, D {:?}",
                    a.shape(),
                    b.shape(),
                    c.shape(),
                    d.shape()
                ),
            ));
        }
        for m in [&a, &b, &c, &d] {
            if !all_finite(m) {
                return Err(Error::NonFinite("state-space matrices"));
            }
        }
        Ok(Self { a, b, c, d })
    }

    /// Zero-state system with constant transfer `d`.
    pub fn gain(d: Mat) -> Self {
        let (p, m) = d.shape();
        Self {
            a: Mat::zeros(0, 0),
            b: Mat::zeros(0, m),
            c: Mat::zeros(p, 0),
            d,
        }
    }

    pub fn zero(outputs: usize, inputs: usize) -> Self {
        Self::gain(Mat::zeros(outputs, inputs))
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
    pub fn d(&self) -> &Mat {
        &self.d
    }
    pub fn order(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn poles(&self) -> Result<Vec<Complex64>> {
        eigenvalues(&self.a)
    }

    pub fn is_stable(&self) -> bool {
        self.is_stable_with(EPS_STAB)
    }

    pub fn is_stable_with(&self, eps: f64) -> bool {
        match self.poles() {
            Ok(p) => p.iter().all(|l| l.re < -eps),
            Err(_) => false,
        }
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.d.iter().all(|&v| v == 0.0)
    }

    /// `self(s) · h(s)`.
    pub fn series(&self, h: &StateSpace) -> Result<Self> {
        if self.inputs() != h.outputs() {
            return Err(dim(
                "series",
                format!("G has {} inputs, H has {} outputs", self.inputs(), h.outputs()),
            ));
        }
        let a = block2(
            &self.a,
            &(&self.b * &h.c),
            &Mat::zeros(h.order(), self.order()),
            &h.a,
        );
        let b = vstack(h.inputs(), &[&(&self.b * &h.d), &h.b]);
        let c = hstack(self.outputs(), &[&self.c, &(&self.d * &h.c)]);
        let d = &self.d * &h.d;
        Ok(Self { a, b, c, d })
    }

    /// `self(s) ± h(s)`.
    pub fn parallel(&self, h: &StateSpace, sign: Sign) -> Result<Self> {
        if self.inputs() != h.inputs() || self.outputs() != h.outputs() {
            return Err(dim(
                "parallel",
                format!(
                    "{}x{} vs {}x{}",
                    self.outputs(),
                    self.inputs(),
                    h.outputs(),
                    h.inputs()
                ),
            ));
        }
        let s = sign.factor();
        Ok(Self {
            a: block_diag(&[&self.a, &h.a]),
            b: vstack(self.inputs(), &[&self.b, &h.b]),
            c: hstack(self.outputs(), &[&self.c, &(&h.c * s)]),
            d: &self.d + &h.d * s,
        })
    }

    /// `G(−s)ᵀ`.
    pub fn para_conjugate(&self) -> Self {
        Self {
            a: -self.a.transpose(),
            b: -self.c.transpose(),
            c: self.b.transpose(),
            d: self.d.transpose(),
        }
    }

    /// `k · G(s)`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            a: self.a.clone(),
            b: self.b.clone(),
            c: &self.c * k,
            d: &self.d * k,
        }
    }

    /// Same dynamics with feedthrough replaced.
    pub fn with_feedthrough(&self, d: Mat) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), self.c.clone(), d)
    }

    /// Sub-system from the chosen inputs to the chosen outputs.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self {
            a: self.a.clone(),
            b: self.b.select_columns(cols),
            c: self.c.select_rows(rows),
            d: self.d.select_rows(rows).select_columns(cols),
        }
    }

    /// Scalar channel from input `j` to output `i`.
    pub fn entry(&self, i: usize, j: usize) -> Self {
        self.select(&[i], &[j])
    }

    /// Evaluate at a complex point by a direct linear solve.
    pub fn eval(&self, s: Complex64) -> Result<CMat> {
        let n = self.order();
        let mut d = to_complex(&self.d);
        if n == 0 {
            return Ok(d);
        }
        let m = CMat::from_diagonal_element(n, n, s) - to_complex(&self.a);
        let x = m
            .lu()
            .solve(&to_complex(&self.b))
            .ok_or(Error::Singular("resolvent (sI - A)"))?;
        d += to_complex(&self.c) * x;
        if d.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Singular("resolvent (sI - A)"));
        }
        Ok(d)
    }

    pub fn freq_response(&self, omega: f64) -> Result<CMat> {
        self.eval(Complex64::new(0.0, omega))
    }

    /// Stable and anti-stable parts, `G = G_s + G_u`, with the feedthrough in `G_s`.
    pub fn stable_antistable(&self) -> Result<(Self, Self)> {
        let n = self.order();
        let (p, m) = (self.outputs(), self.inputs());
        let eig = self.poles()?;
        if let Some(l) = eig.iter().find(|l| l.re.abs() <= EPS_SPLIT) {
            return Err(Error::AxisPole {
                re: l.re,
                im: l.im,
                tol: EPS_SPLIT,
            });
        }
        let k = eig.iter().filter(|l| l.re < 0.0).count();
        if k == n {
            return Ok((self.clone(), Self::zero(p, m)));
        }
        if k == 0 {
            return Ok((Self::gain(self.d.clone()), self.with_feedthrough(Mat::zeros(p, m))?));
        }
        // Orthonormal basis whose first k columns span the stable invariant subspace.
        let sign = matrix_sign(&self.a)?;
        let proj = (Mat::identity(n, n) - sign) * 0.5;
        let (u, _) = sorted_left_singular(&proj)?;
        let at = u.transpose() * &self.a * &u;
        let a11 = at.view((0, 0), (k, k)).into_owned();
        let a12 = at.view((0, k), (k, n - k)).into_owned();
        let a21 = at.view((k, 0), (n - k, k)).into_owned();
        let a22 = at.view((k, k), (n - k, n - k)).into_owned();
        if a21.norm() > 1e-8 * self.a.norm().max(1.0) {
            return Err(Error::Inconsistent(format!(
                "invariant subspace leakage {:.3e} in stable/anti-stable split",
                a21.norm()
            )));
        }
        // Decouple: A11 X − X A22 + A12 = 0.
        let x = sylvester(&a11, &(-&a22), &a12)?;
        let bt = u.transpose() * &self.b;
        let ct = &self.c * &u;
        let b1 = bt.view((0, 0), (k, m)).into_owned();
        let b2 = bt.view((k, 0), (n - k, m)).into_owned();
        let c1 = ct.view((0, 0), (p, k)).into_owned();
        let c2 = ct.view((0, k), (p, n - k)).into_owned();
        let stable = Self {
            a: a11,
            b: b1 - &x * &b2,
            c: c1.clone(),
            d: self.d.clone(),
        };
        let antistable = Self {
            a: a22,
            b: b2,
            c: c1 * x + c2,
            d: Mat::zeros(p, m),
        };
        Ok((stable, antistable))
    }

    /// Stable term of the additive decomposition (feedthrough included).
    pub fn stable_projection(&self) -> Result<Self> {
        Ok(self.stable_antistable()?.0)
    }

    /// Sum of residues at the stable poles, `C_s B_s`.
    pub fn stable_residue_sum(&self) -> Result<Mat> {
        if !self.is_strictly_proper() {
            return Err(Error::NotStrictlyProper("stable_residue_sum"));
        }
        let s = self.stable_projection()?;
        Ok(&s.c * &s.b)
    }

    fn require_h2(&self, op: &'static str) -> Result<()> {
        if !self.is_strictly_proper() {
            return Err(Error::NotStrictlyProper(op));
        }
        if !self.is_stable() {
            return Err(Error::Unstable(format!("{op} needs a stable system")));
        }
        Ok(())
    }

    /// Squared H2 norm through the observability Gramian.
    pub fn h2_norm_sq(&self) -> Result<f64> {
        self.require_h2("h2_norm_sq")?;
        if self.order() == 0 {
            return Ok(0.0);
        }
        let x = lyap_ct(&self.a, &(self.c.transpose() * &self.c))?.solution;
        let v = (self.b.transpose() * x * &self.b).trace();
        Ok(if v < 0.0 && v > -1e-14 { 0.0 } else { v })
    }

    /// H2 inner product `tr ∫ G(jω)* H(jω) dω / 2π` through a joint Gramian.
    pub fn h2_inner(&self, h: &StateSpace) -> Result<f64> {
        if self.inputs() != h.inputs() || self.outputs() != h.outputs() {
            return Err(dim("h2_inner", "systems must share dimensions"));
        }
        self.require_h2("h2_inner")?;
        h.require_h2("h2_inner")?;
        if self.order() == 0 || h.order() == 0 {
            return Ok(0.0);
        }
        // A_Gᵀ X + X A_H + C_Gᵀ C_H = 0
        let x = sylvester(&self.a.transpose(), &h.a, &(self.c.transpose() * &h.c))?;
        Ok((self.b.transpose() * x * &h.b).trace())
    }

    /// Hankel singular values of a stable system, sorted decreasingly.
    pub fn hankel_singular_values(&self) -> Result<Vec<f64>> {
        Ok(balanced_factors(self)?.hsv)
    }

    /// Reduced realization by balanced truncation.
    ///
    /// Hankel singular values at or below `tol · σ_max` are discarded. Unstable systems are
    /// split first and the anti-stable part is reduced through its mirror image `G(−s)`.
    pub fn minreal(&self, tol: f64) -> Result<Self> {
        if self.order() == 0 {
            return Ok(self.clone());
        }
        if self.is_stable() {
            return balanced_truncation(self, tol);
        }
        let (gs, gu) = self.stable_antistable()?;
        let gs = balanced_truncation(&gs, tol)?;
        let mirror = Self {
            a: -&gu.a,
            b: gu.b.clone(),
            c: -&gu.c,
            d: gu.d.clone(),
        };
        let r = balanced_truncation(&mirror, tol)?;
        let gu = Self {
            a: -r.a,
            b: r.b,
            c: -r.c,
            d: r.d,
        };
        gs.parallel(&gu, Sign::Plus)
    }

    /// H∞ norm of a stable system from a logarithmic sweep plus golden-section refinement.
    pub fn hinf_norm(&self) -> Result<f64> {
        if !self.is_stable() {
            return Err(Error::Unstable("hinf_norm needs a stable system".into()));
        }
        let gain_at = |w: f64| -> Result<f64> { Ok(spectral_norm_c(&self.freq_response(w)?)) };
        let dc = gain_at(0.0)?;
        let hf = spectral_norm_c(&to_complex(&self.d));
        if self.order() == 0 {
            return Ok(hf);
        }
        let mags: Vec<f64> = self.poles()?.iter().map(|l| l.norm()).collect();
        let lo = mags.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-8) * 1e-3;
        let hi = mags.iter().cloned().fold(0.0, f64::max).max(1e-8) * 1e3;
        let npts = 400;
        let (llo, lhi) = (lo.ln(), hi.ln());
        let grid: Vec<f64> = (0..npts)
            .map(|i| (llo + (lhi - llo) * i as f64 / (npts - 1) as f64).exp())
            .collect();
        let mut best = (dc.max(hf), 0usize);
        let mut vals = Vec::with_capacity(npts);
        for (i, &w) in grid.iter().enumerate() {
            let g = gain_at(w)?;
            vals.push(g);
            if g > best.0 {
                best = (g, i);
            }
        }
        let i = best.1;
        if vals.get(i).copied() == Some(best.0) {
            // Golden-section search on log-frequency between the neighbours of the peak.
            let mut a = grid[i.saturating_sub(1)].ln();
            let mut b = grid[(i + 1).min(npts - 1)].ln();
            let phi = 0.5 * (5f64.sqrt() - 1.0);
            let mut x1 = b - phi * (b - a);
            let mut x2 = a + phi * (b - a);
            let mut f1 = gain_at(x1.exp())?;
            let mut f2 = gain_at(x2.exp())?;
            for _ in 0..60 {
                if f1 > f2 {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - phi * (b - a);
                    f1 = gain_at(x1.exp())?;
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + phi * (b - a);
                    f2 = gain_at(x2.exp())?;
                }
            }
            best.0 = best.0.max(f1).max(f2);
        }
        Ok(best.0)
    }
}

struct BalancedFactors {
    lc: Mat,
    lo: Mat,
    u: Mat,
    v: Mat,
    hsv: Vec<f64>,
}

fn psd_factor(w: &Mat) -> Mat {
    let eig = SymmetricEigen::new(symmetrize(w));
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * Mat::from_diagonal(&d)
}

fn balanced_factors(g: &StateSpace) -> Result<BalancedFactors> {
    if !g.is_stable() {
        return Err(Error::Unstable(
            "balanced truncation needs a stable system".into(),
        ));
    }
    let wc = lyap_ct_dual(&g.a, &(&g.b * g.b.transpose()))?.solution;
    let wo = lyap_ct(&g.a, &(g.c.transpose() * &g.c))?.solution;
    let lc = psd_factor(&wc);
    let lo = psd_factor(&wo);
    let svd = crate::linalg::svd(&(lo.transpose() * &lc))?;
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let n = g.order();
    let mut us = Mat::zeros(n, n);
    let mut vs = Mat::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        us.set_column(k, &u.column(i));
        vs.set_column(k, &vt.row(i).transpose());
    }
    let hsv = idx.iter().map(|&i| svd.singular_values[i]).collect();
    Ok(BalancedFactors {
        lc,
        lo,
        u: us,
        v: vs,
        hsv,
    })
}

fn balanced_truncation(g: &StateSpace, tol: f64) -> Result<StateSpace> {
    if g.order() == 0 {
        return Ok(g.clone());
    }
    let f = balanced_factors(g)?;
    let smax = f.hsv.first().copied().unwrap_or(0.0);
    let r = if smax > 0.0 {
        f.hsv.iter().filter(|&&s| s > tol * smax).count()
    } else {
        0
    };
    if r == 0 {
        return Ok(StateSpace::gain(g.d.clone()));
    }
    let s_inv_half = Mat::from_diagonal(&nalgebra::DVector::from_iterator(
        r,
        f.hsv[..r].iter().map(|s| 1.0 / s.sqrt()),
    ));
    let tr = &f.lc * f.v.columns(0, r) * &s_inv_half;
    let tl = &s_inv_half * f.u.columns(0, r).transpose() * f.lo.transpose();
    StateSpace::new(&tl * &g.a * &tr, &tl * &g.b, &g.c * &tr, g.d.clone())
}

#[derive(Serialize, Deserialize)]
struct RawSystem {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    d: Vec<Vec<f64>>,
}

impl Serialize for StateSpace {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawSystem {
            a: to_rows(&self.a),
            b: to_rows(&self.b),
            c: to_rows(&self.c),
            d: to_rows(&self.d),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for StateSpace {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSystem::deserialize(d)?;
        let conv = || -> Result<StateSpace> {
            let dm = from_rows(&raw.d, None, "D")?;
            let n = raw.a.len();
            let a = from_rows(&raw.a, Some(0), "A")?;
            let b = from_rows(&raw.b, Some(dm.ncols()), "B")?;
            let mut c = from_rows(&raw.c, None, "C")?;
            if n == 0 && c.ncols() == 0 {
                c = Mat::zeros(dm.nrows(), 0);
            }
            StateSpace::new(a, b, c, dm)
        };
        conv().map_err(serde::de::Error::custom)
    }
}
