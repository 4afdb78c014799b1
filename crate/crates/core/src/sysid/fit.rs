//! Frequency-response acquisition and linearized least-squares rational fitting.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rational::{polyval, RationalScalar};
use crate::ss::StateSpace;

#[derive(Debug, Clone, PartialEq)]
pub struct FreqSample {
    pub omega: f64,
    pub value: Complex64,
    pub weight: f64,
}

/// `count` points spaced uniformly (`log = false`) or log-uniformly in `[lo, hi]`.
pub fn frequency_grid(lo: f64, hi: f64, count: usize, log: bool) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || count == 0 {
        return Err(Error::Invalid(format!(
            "frequency grid needs 0 < lo <= hi and count > 0 (lo {lo}, hi {hi}, count {count})"
        )));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let t = |i: usize| i as f64 / (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            if log {
                (lo.ln() + (hi.ln() - lo.ln()) * t(i)).exp()
            } else {
                lo + (hi - lo) * t(i)
            }
        })
        .collect())
}

/// Noise-free samples of entry `(i, j)` of `g`.
pub fn measure_response_direct(g: &StateSpace, i: usize, j: usize, grid: &[f64]) -> Result<Vec<FreqSample>> {
    if i >= g.outputs() || j >= g.inputs() {
        return Err(Error::Invalid(format!("entry ({i}, {j}) out of range")));
    }
    let e = g.entry(i, j);
    grid.iter()
        .map(|&w| {
            if !(w > 0.0) {
                return Err(Error::Invalid(format!("frequency must be positive, got {w}")));
            }
            Ok(FreqSample {
                omega: w,
                value: e.freq_response(w)?[(0, 0)],
                weight: 1.0,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineOptions {
    pub settle_cycles: usize,
    pub sample_cycles: usize,
    /// Lower bound on the settling time so slow poles decay even at high frequency.
    pub min_settle_time: f64,
    /// Upper bound on the RK4 step; the step is further limited to `0.05/ω`.
    pub max_step: f64,
}

impl Default for SineOptions {
    fn default() -> Self {
        Self {
            settle_cycles: 20,
            sample_cycles: 10,
            min_settle_time: 80.0,
            max_step: 0.01,
        }
    }
}

fn matvec(a: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
    for i in 0..n {
        let row = &a[i * n..(i + 1) * n];
        out[i] = row.iter().zip(x).map(|(p, q)| p * q).sum();
    }
}

/// Simulate `ẋ = Ax + b_j c sin(ωt)` from rest and fit `α sin + β cos` to each output after
/// settling. Returns `(α + jβ)/c` per output.
pub fn measure_response_sine(
    g: &StateSpace,
    j: usize,
    omega: f64,
    c_omega: f64,
    opts: &SineOptions,
) -> Result<Vec<Complex64>> {
    if j >= g.inputs() {
        return Err(Error::Invalid(format!("input {j} out of range")));
    }
    if !(omega > 0.0 && c_omega > 0.0) {
        return Err(Error::Invalid("sine excitation needs omega > 0 and amplitude > 0".into()));
    }
    if opts.sample_cycles == 0 {
        return Err(Error::Invalid("sample_cycles must be positive".into()));
    }
    if !g.is_stable() {
        return Err(Error::Unstable("sine measurement needs a stable system".into()));
    }
    let period = 2.0 * std::f64::consts::PI / omega;
    let h_target = opts.max_step.min(0.05 / omega);
    let steps_per_period = (period / h_target).ceil() as usize;
    let h = period / steps_per_period as f64;
    if omega * h > 0.2 {
        return Err(Error::Invalid(format!("integration step too coarse: ω·h = {}", omega * h)));
    }
    let settle_periods = opts
        .settle_cycles
        .max((opts.min_settle_time / period).ceil() as usize);
    let n = g.order();
    let p = g.outputs();
    let a: Vec<f64> = (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).map(|(r, c)| g.a()[(r, c)]).collect();
    let b: Vec<f64> = (0..n).map(|r| g.b()[(r, j)] * c_omega).collect();
    let d: Vec<f64> = (0..p).map(|r| g.d()[(r, j)] * c_omega).collect();
    let mut x = vec![0.0; n];
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let deriv = |x: &[f64], t: f64, out: &mut [f64]| {
        matvec(&a, n, x, out);
        let u = (omega * t).sin();
        for (o, bi) in out.iter_mut().zip(&b) {
            *o += bi * u;
        }
    };
    let total = (settle_periods + opts.sample_cycles) * steps_per_period;
    let start_sample = settle_periods * steps_per_period;
    // Normal equations of the two-parameter fit per output.
    let (mut ss, mut sc, mut cc) = (0.0, 0.0, 0.0);
    let mut ys = vec![0.0; p];
    let mut yc = vec![0.0; p];
    for step in 0..total {
        let t = step as f64 * h;
        if step >= start_sample {
            let (s, c) = ((omega * t).sin(), (omega * t).cos());
            ss += s * s;
            sc += s * c;
            cc += c * c;
            for r in 0..p {
                let y: f64 = (0..n).map(|k| g.c()[(r, k)] * x[k]).sum::<f64>() + d[r] * s;
                ys[r] += y * s;
                yc[r] += y * c;
            }
        }
        deriv(&x, t, &mut k1);
        for k in 0..n {
            tmp[k] = x[k] + 0.5 * h * k1[k];
        }
        deriv(&tmp, t + 0.5 * h, &mut k2);
        for k in 0..n {
            tmp[k] = x[k] + 0.5 * h * k2[k];
        }
        deriv(&tmp, t + 0.5 * h, &mut k3);
        for k in 0..n {
            tmp[k] = x[k] + h * k3[k];
        }
        deriv(&tmp, t + h, &mut k4);
        for k in 0..n {
            x[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("sine simulation state"));
        }
    }
    let det = ss * cc - sc * sc;
    if det.abs() <= 1e-12 * (ss * cc) {
        return Err(Error::Singular("sine fit normal equations"));
    }
    Ok((0..p)
        .map(|r| {
            let alpha = (cc * ys[r] - sc * yc[r]) / det;
            let beta = (ss * yc[r] - sc * ys[r]) / det;
            Complex64::new(alpha, beta) / c_omega
        })
        .collect())
}

/// Levi fit refined by Sanathanan–Koerner reweighting.
///
/// Each pass divides the weights by `|D(jω)|²` of the previous denominator, so the misfit being
/// minimized approaches `Σ w |M − N/D|²`. Exact data is reproduced by every pass.
pub fn fit_rational(samples: &[FreqSample], n_num: usize, n_den: usize) -> Result<RationalScalar> {
    const PASSES: usize = 20;
    let mut r = fit_rational_levi(samples, n_num, n_den)?;
    for _ in 0..PASSES {
        let reweighted: Vec<FreqSample> = samples
            .iter()
            .map(|smp| {
                let d = polyval(r.den(), Complex64::new(0.0, smp.omega)).norm_sqr();
                FreqSample {
                    weight: smp.weight / d.max(f64::MIN_POSITIVE),
                    ..*smp
                }
            })
            .collect();
        let next = match fit_rational_levi(&reweighted, n_num, n_den) {
            Ok(n) => n,
            Err(_) => break,
        };
        let step = coefficient_error(&r, &next).unwrap_or(f64::INFINITY);
        if !fit_residual(samples, &next).is_finite() {
            break;
        }
        r = next;
        if step <= 1e-12 {
            break;
        }
    }
    Ok(r)
}

/// Levi's linearized least squares with a monic denominator of degree `n_den`.
///
/// Minimizes `Σ w |N(jω) − M(jω) D(jω)|²` over `a_0..a_{n_num}` and `b_0..b_{n_den−1}`.
pub fn fit_rational_levi(samples: &[FreqSample], n_num: usize, n_den: usize) -> Result<RationalScalar> {
    let unknowns = n_num + 1 + n_den;
    if samples.len() * 2 < unknowns || samples.len() < n_num + n_den + 1 {
        return Err(Error::Unidentifiable(format!(
            "{} samples cannot determine {unknowns} coefficients",
            samples.len()
        )));
    }
    // Frequency scaling keeps the powers of s comparable.
    let w0 = samples.iter().map(|s| s.omega).fold(0.0, f64::max).max(1e-300);
    let rows = 2 * samples.len();
    let mut a = Mat::zeros(rows, unknowns);
    let mut rhs = Mat::zeros(rows, 1);
    for (k, smp) in samples.iter().enumerate() {
        let sw = smp.weight.sqrt();
        let s = Complex64::new(0.0, smp.omega / w0);
        let m = smp.value;
        let mut sp = Complex64::new(1.0, 0.0);
        for col in 0..=n_num {
            a[(2 * k, col)] = sw * sp.re;
            a[(2 * k + 1, col)] = sw * sp.im;
            sp *= s;
        }
        let mut sp = Complex64::new(1.0, 0.0);
        for l in 0..n_den {
            let v = -m * sp;
            a[(2 * k, n_num + 1 + l)] = sw * v.re;
            a[(2 * k + 1, n_num + 1 + l)] = sw * v.im;
            sp *= s;
        }
        let v = m * sp;
        rhs[(2 * k, 0)] = sw * v.re;
        rhs[(2 * k + 1, 0)] = sw * v.im;
    }
    let norms: Vec<f64> = (0..unknowns)
        .map(|c| {
            let v = a.column(c).norm();
            if v > 0.0 {
                v
            } else {
                1.0
            }
        })
        .collect();
    for (c, nv) in norms.iter().enumerate() {
        let mut col = a.column_mut(c);
        col /= *nv;
    }
    let svd = crate::linalg::svd(&a)?;
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if smax == 0.0 || smin <= 1e-12 * smax {
        return Err(Error::Unidentifiable(format!(
            "least-squares system is rank deficient (condition number {:.3e})",
            if smin > 0.0 { smax / smin } else { f64::INFINITY }
        )));
    }
    let x = svd
        .solve(&rhs, 0.0)
        .map_err(|_| Error::Singular("rational fit least squares"))?;
    // Undo column and frequency scaling: coefficient of (s/w0)^k is c_k w0^{-k} in s.
    let mut num = Vec::with_capacity(n_num + 1);
    for k in 0..=n_num {
        num.push(x[(k, 0)] / norms[k] / w0.powi(k as i32));
    }
    let mut den = Vec::with_capacity(n_den + 1);
    for l in 0..n_den {
        den.push(x[(n_num + 1 + l, 0)] / norms[n_num + 1 + l] / w0.powi(l as i32));
    }
    den.push(1.0 / w0.powi(n_den as i32));
    RationalScalar::new(num, den)
}

/// Largest sample misfit relative to the largest sample magnitude.
pub fn fit_residual(samples: &[FreqSample], r: &RationalScalar) -> f64 {
    let scale = samples.iter().map(|s| s.value.norm()).fold(0.0, f64::max);
    let err = samples
        .iter()
        .map(|s| (r.eval(Complex64::new(0.0, s.omega)) - s.value).norm())
        .fold(0.0, f64::max);
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

/// Smallest strictly proper model (numerator degree `n_den − 1`) whose misfit is below `rel_tol`.
///
/// Falls back to the best-fitting identifiable degree when none meets the tolerance.
pub fn fit_rational_auto(samples: &[FreqSample], max_den: usize, rel_tol: f64) -> Result<RationalScalar> {
    let mut best: Option<(f64, RationalScalar)> = None;
    let mut last_err = None;
    for n_den in 1..=max_den {
        match fit_rational(samples, n_den - 1, n_den) {
            Ok(r) => {
                let res = fit_residual(samples, &r);
                if res <= rel_tol {
                    return Ok(r);
                }
                if best.as_ref().map_or(true, |(b, _)| res < *b) {
                    best = Some((res, r));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some((_, r)), _) => Ok(r),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::Invalid("max_den must be at least 1".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureMode {
    Direct,
    Sine,
}

#[derive(Debug, Clone)]
pub struct IdentifyOptions {
    pub mode: MeasureMode,
    pub max_den_degree: usize,
    pub fit_tol: f64,
    pub amplitude: f64,
    pub sine: SineOptions,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self {
            mode: MeasureMode::Direct,
            max_den_degree: 6,
            fit_tol: 1e-8,
            amplitude: 1.0,
            sine: SineOptions::default(),
        }
    }
}

/// Entry-wise fits; `None` marks an entry with a null frequency response.
#[derive(Debug, Clone)]
pub struct MatrixFit {
    pub entries: Vec<Vec<Option<RationalScalar>>>,
}

impl MatrixFit {
    pub fn zero_pattern(&self) -> Vec<Vec<bool>> {
        self.entries
            .iter()
            .map(|row| row.iter().map(|e| e.is_none()).collect())
            .collect()
    }

    pub fn eval(&self, s: Complex64) -> Vec<Vec<Complex64>> {
        self.entries
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| e.as_ref().map_or(Complex64::new(0.0, 0.0), |r| r.eval(s)))
                    .collect()
            })
            .collect()
    }
}

/// Measure every channel of `g` on `grid` and fit each entry separately.
pub fn identify_matrix(g: &StateSpace, grid: &[f64], opts: &IdentifyOptions) -> Result<MatrixFit> {
    let (p, m) = (g.outputs(), g.inputs());
    if grid.is_empty() {
        return Err(Error::Invalid("empty frequency grid".into()));
    }
    // data[i][j] = samples of entry (i, j)
    let mut data: Vec<Vec<Vec<FreqSample>>> = vec![vec![Vec::with_capacity(grid.len()); m]; p];
    for j in 0..m {
        for &w in grid {
            let vals: Vec<Complex64> = match opts.mode {
                MeasureMode::Direct => {
                    let f = g.freq_response(w)?;
                    (0..p).map(|i| f[(i, j)]).collect()
                }
                MeasureMode::Sine => measure_response_sine(g, j, w, opts.amplitude, &opts.sine)?,
            };
            for (i, v) in vals.into_iter().enumerate() {
                data[i][j].push(FreqSample {
                    omega: w,
                    value: v,
                    weight: 1.0,
                });
            }
        }
    }
    let zero_tol = match opts.mode {
        MeasureMode::Direct => 1e-10,
        // The integrator leaves a small residue on structurally absent channels.
        MeasureMode::Sine => 1e-7,
    };
    let mut entries = vec![vec![None; m]; p];
    for i in 0..p {
        for j in 0..m {
            let samples = &data[i][j];
            if samples.iter().all(|s| s.value.norm() <= zero_tol) {
                continue;
            }
            entries[i][j] = Some(fit_rational_auto(samples, opts.max_den_degree, opts.fit_tol)?);
        }
    }
    Ok(MatrixFit { entries })
}

/// `‖true − est‖∞ / ‖true‖∞` over the concatenated numerator and denominator coefficients.
///
/// Numerators are padded to a common length; `None` if the denominator degrees differ.
pub fn coefficient_error(truth: &RationalScalar, est: &RationalScalar) -> Option<f64> {
    if truth.den_degree() != est.den_degree() {
        return None;
    }
    let len = truth.num().len().max(est.num().len());
    let pad = |v: &[f64]| {
        let mut v = v.to_vec();
        v.resize(len, 0.0);
        v
    };
    let t: Vec<f64> = pad(truth.num()).into_iter().chain(truth.den().iter().cloned()).collect();
    let e: Vec<f64> = pad(est.num()).into_iter().chain(est.den().iter().cloned()).collect();
    let num = t.iter().zip(&e).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let den = t.iter().map(|a| a.abs()).fold(0.0, f64::max);
    Some(num / den)
}

