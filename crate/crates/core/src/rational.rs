//! Scalar rational functions `N(s)/D(s)` with monic denominators.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::ss::StateSpace;

/// Coefficients in ascending powers of `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalScalar {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl RationalScalar {
    /// Normalizes the denominator to be monic. Trailing zero numerator coefficients are kept.
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        let lead = *den
            .last()
            .ok_or_else(|| Error::Invalid("empty denominator".into()))?;
        if lead == 0.0 || !lead.is_finite() {
            return Err(Error::Invalid("denominator leading coefficient must be nonzero".into()));
        }
        if num.is_empty() {
            return Err(Error::Invalid("empty numerator".into()));
        }
        if num.iter().chain(den.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rational coefficients"));
        }
        Ok(Self {
            num: num.iter().map(|v| v / lead).collect(),
            den: den.iter().map(|v| v / lead).collect(),
        })
    }

    pub fn zero() -> Self {
        Self {
            num: vec![0.0],
            den: vec![1.0],
        }
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }
    pub fn den(&self) -> &[f64] {
        &self.den
    }
    pub fn num_degree(&self) -> usize {
        self.num.len() - 1
    }
    pub fn den_degree(&self) -> usize {
        self.den.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.num.iter().all(|&v| v == 0.0)
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        polyval(&self.num, s) / polyval(&self.den, s)
    }

    /// Controllable canonical realization.
    pub fn to_state_space(&self) -> Result<StateSpace> {
        let nd = self.den_degree();
        // Strip leading zeros of the numerator before the properness check.
        let mut num = self.num.clone();
        while num.len() > 1 && *num.last().unwrap() == 0.0 {
            num.pop();
        }
        if num.len() - 1 > nd {
            return Err(Error::Invalid(format!(
                "improper rational function: numerator degree {} exceeds denominator degree {nd}",
                num.len() - 1
            )));
        }
        num.resize(nd + 1, 0.0);
        let d = num[nd];
        if nd == 0 {
            return Ok(StateSpace::gain(Mat::from_element(1, 1, d)));
        }
        // Strictly proper remainder: num − d·den.
        let rem: Vec<f64> = (0..nd).map(|k| num[k] - d * self.den[k]).collect();
        let mut a = Mat::zeros(nd, nd);
        for i in 0..nd - 1 {
            a[(i, i + 1)] = 1.0;
        }
        for k in 0..nd {
            a[(nd - 1, k)] = -self.den[k];
        }
        let mut b = Mat::zeros(nd, 1);
        b[(nd - 1, 0)] = 1.0;
        let c = Mat::from_row_slice(1, nd, &rem);
        StateSpace::new(a, b, c, Mat::from_element(1, 1, d))
    }
}

/// Horner evaluation of ascending coefficients.
pub fn polyval(coeffs: &[f64], s: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

/// Transfer function of a SISO system as a rational function in the system's own order.
///
/// Denominator from the Faddeev–LeVerrier recursion, numerator from `C adj(sI − A) B + D det`.
pub fn ss_to_rational(g: &StateSpace) -> Result<RationalScalar> {
    if g.inputs() != 1 || g.outputs() != 1 {
        return Err(Error::Invalid("ss_to_rational needs a SISO system".into()));
    }
    let n = g.order();
    let d = g.d()[(0, 0)];
    if n == 0 {
        return RationalScalar::new(vec![d], vec![1.0]);
    }
    // adj(sI − A) = Σ_{k=0}^{n-1} N_k s^{n-1-k}, det = Σ c_k s^{n-k}
    let a = g.a();
    let eye = Mat::identity(n, n);
    let mut nk = eye.clone();
    let mut c = vec![1.0];
    let mut adj_terms = vec![nk.clone()];
    for k in 1..=n {
        let an = a * &nk;
        let ck = -an.trace() / k as f64;
        c.push(ck);
        if k < n {
            nk = an + &eye * ck;
            adj_terms.push(nk.clone());
        }
    }
    // Descending powers → ascending.
    let mut den: Vec<f64> = c.clone();
    den.reverse();
    let mut num = vec![0.0; n + 1];
    for (k, term) in adj_terms.iter().enumerate() {
        let v = (g.c() * term * g.b())[(0, 0)];
        num[n - 1 - k] += v;
    }
    for (p, &dk) in den.iter().enumerate() {
        num[p] += d * dk;
    }
    RationalScalar::new(num, den)
}
