//! Laguerre-basis expansion of the sensitivity and its reduction to low-order rational models.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rational::RationalScalar;
use crate::ss::StateSpace;
use crate::youla::{lifted_cost, NominalLft, YoulaIterate};

use super::fit::{fit_rational, FreqSample};

/// `φ_k(s) = √(2a)/(s+a) · ((s−a)/(s+a))^k` for `k = 0..=order`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaguerreBasis {
    pole: f64,
    order: usize,
}

impl LaguerreBasis {
    pub fn new(pole: f64, order: usize) -> Result<Self> {
        if !(pole > 0.0 && pole.is_finite()) {
            return Err(Error::Invalid(format!("Laguerre pole must be positive, got {pole}")));
        }
        Ok(Self { pole, order })
    }

    pub fn pole(&self) -> f64 {
        self.pole
    }
    pub fn order(&self) -> usize {
        self.order
    }
    pub fn len(&self) -> usize {
        self.order + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cascade realization `(A, b, Z)`: state `x` drives `φ_k` through row `k` of `Z`.
    fn cascade(&self) -> (Mat, Mat, Mat) {
        let (a, n) = (self.pole, self.len());
        let mut am = Mat::zeros(n, n);
        let mut z = Mat::zeros(n, n);
        for k in 0..n {
            am[(k, k)] = -a;
            z[(k, 0)] = 1.0;
            for l in 1..=k {
                z[(k, l)] = -2.0 * a;
            }
            if k > 0 {
                // ẋ_k = −a x_k + z_{k−1}
                for l in 0..n {
                    am[(k, l)] += z[(k - 1, l)];
                }
            }
        }
        let mut b = Mat::zeros(n, 1);
        b[(0, 0)] = (2.0 * a).sqrt();
        (am, b, z)
    }

    /// Minimal realization of `φ_k`.
    pub fn function(&self, k: usize) -> Result<StateSpace> {
        let sub = Self::new(self.pole, k)?;
        let (a, b, z) = sub.cascade();
        StateSpace::new(a, b, z.rows(k, 1).into_owned(), Mat::zeros(1, 1))
    }

    /// `Σ c_k φ_k`.
    pub fn expansion(&self, coeffs: &[f64]) -> Result<StateSpace> {
        if coeffs.len() != self.len() {
            return Err(Error::Invalid(format!(
                "expected {} coefficients, got {}",
                self.len(),
                coeffs.len()
            )));
        }
        let (a, b, z) = self.cascade();
        let c = Mat::from_row_slice(1, coeffs.len(), coeffs) * z;
        StateSpace::new(a, b, c, Mat::zeros(1, 1))
    }

    pub fn eval(&self, k: usize, s: Complex64) -> Complex64 {
        let a = self.pole;
        (2.0 * a).sqrt() / (s + a) * ((s - a) / (s + a)).powu(k as u32)
    }

    /// `φ_k` placed at entry `(i, j)` of a `rows × cols` transfer matrix.
    pub fn direction(&self, k: usize, i: usize, j: usize, rows: usize, cols: usize) -> Result<StateSpace> {
        let f = self.function(k)?;
        let mut b = Mat::zeros(f.order(), cols);
        b.set_column(j, &f.b().column(0));
        let mut c = Mat::zeros(rows, f.order());
        c.set_row(i, &f.c().row(0));
        StateSpace::new(f.a().clone(), b, c, Mat::zeros(rows, cols))
    }
}

/// `c_k = ⟨S_ij, φ_k⟩_H2`.
pub fn laguerre_coeffs_projection(s: &StateSpace, i: usize, j: usize, basis: &LaguerreBasis) -> Result<Vec<f64>> {
    let e = s.entry(i, j);
    if e.order() == 0 {
        return Ok(vec![0.0; basis.len()]);
    }
    (0..basis.len())
        .map(|k| e.h2_inner(&basis.function(k)?))
        .collect()
}

/// `c_k = (J(it + cΔ_k) − J(it − cΔ_k)) / (4c)` with `Δ_k = (φ_k e_ij, 0)`.
///
/// The lifted cost's directional derivative along `Δ` is `2⟨S, Δ⟩`, hence the `4c`.
pub fn laguerre_coeffs_zeroth(
    nom: &NominalLft,
    it: &YoulaIterate,
    i: usize,
    j: usize,
    basis: &LaguerreBasis,
    c_step: f64,
) -> Result<Vec<f64>> {
    if !(c_step > 0.0) {
        return Err(Error::Invalid(format!("finite-difference step must be positive, got {c_step}")));
    }
    let (rows, cols) = nom.param_shape();
    (0..basis.len())
        .map(|k| {
            let dir = YoulaIterate::from_dynamic(basis.direction(k, i, j, rows, cols)?);
            let jp = lifted_cost(nom, &it.add_scaled(&dir, c_step)?)?;
            let jm = lifted_cost(nom, &it.add_scaled(&dir, -c_step)?)?;
            if !(jp.is_finite() && jm.is_finite()) {
                return Err(Error::NonFinite("perturbed lifted cost"));
            }
            Ok((jp - jm) / (4.0 * c_step))
        })
        .collect()
}

/// Evaluate the expansion on `grid` and fit a rational model of the given degrees.
pub fn reduce_order(
    coeffs: &[f64],
    basis: &LaguerreBasis,
    n_num: usize,
    n_den: usize,
    grid: &[f64],
) -> Result<RationalScalar> {
    let exp = basis.expansion(coeffs)?;
    let samples: Vec<FreqSample> = grid
        .iter()
        .map(|&w| {
            Ok(FreqSample {
                omega: w,
                value: exp.freq_response(w)?[(0, 0)],
                weight: 1.0,
            })
        })
        .collect::<Result<_>>()?;
    fit_rational(&samples, n_num, n_den)
}

/// `‖g − h‖_H2` for SISO systems.
pub fn h2_distance(g: &StateSpace, h: &StateSpace) -> Result<f64> {
    let d = g.parallel(h, crate::ss::Sign::Minus)?;
    if d.order() == 0 {
        return Ok(d.d().norm());
    }
    Ok(d.h2_norm_sq()?.max(0.0).sqrt())
}
