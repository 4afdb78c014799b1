#![allow(dead_code)]

use num_complex::Complex64;
use proptest::test_runner::{Config, RngSeed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use youla_lqg::linalg::spectral_abscissa;
use youla_lqg::{CMat, DynController, LqgPlant, Mat, StateSpace};

pub const MASTER_SEED: u64 = 0x5eed_2024;

pub fn proptest_config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(MASTER_SEED),
        failure_persistence: None,
        ..Config::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// Random matrix shifted so its spectral abscissa is `-margin`.
pub fn rand_hurwitz(rng: &mut ChaCha8Rng, n: usize, margin: f64) -> Mat {
    let a = rand_mat(rng, n, n);
    let s = spectral_abscissa(&a).unwrap();
    a - Mat::identity(n, n) * (s + margin)
}

pub fn rand_stable(rng: &mut ChaCha8Rng, n: usize, p: usize, m: usize) -> StateSpace {
    let margin = rng.random_range(0.2..1.5);
    StateSpace::new(
        rand_hurwitz(rng, n, margin),
        rand_mat(rng, n, m),
        rand_mat(rng, p, n),
        Mat::zeros(p, m),
    )
    .unwrap()
}

pub fn rand_spd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let m = rand_mat(rng, n, n);
    &m * m.transpose() + Mat::identity(n, n) * 0.5
}

/// `1/(s + a)`.
pub fn lag(a: f64) -> StateSpace {
    scalar(&[-a], 1.0, 1.0, 0.0)
}

pub fn scalar(a: &[f64], b: f64, c: f64, d: f64) -> StateSpace {
    let n = a.len();
    StateSpace::new(
        Mat::from_diagonal(&nalgebra::DVector::from_column_slice(a)),
        Mat::from_element(n, 1, b),
        Mat::from_element(1, n, c),
        Mat::from_element(1, 1, d),
    )
    .unwrap()
}

pub fn jw(w: f64) -> Complex64 {
    Complex64::new(0.0, w)
}

/// `C (sI − A)⁻¹ B + D` by a complex LU solve, independent of the library's evaluator.
pub fn eval_direct(g: &StateSpace, s: Complex64) -> CMat {
    let n = g.order();
    let to_c = |m: &Mat| m.map(|v| Complex64::new(v, 0.0));
    let (a, b, c, d) = (to_c(g.a()), to_c(g.b()), to_c(g.c()), to_c(g.d()));
    if n == 0 {
        return d;
    }
    let lhs = CMat::identity(n, n) * s - a;
    let x = lhs.lu().solve(&b).expect("resolvent is nonsingular");
    c * x + d
}

pub fn cmax_abs(m: &CMat) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Random stabilizable/detectable plant with a stabilizing controller of order `q`.
///
/// The controller is `ξ̇ = (A + BK − LC) ξ + L y`, `u = K ξ` with `A + BK`, `A − LC` Hurwitz,
/// padded by decoupled stable states when `q > n`.
pub fn rand_lqg_instance(rng: &mut ChaCha8Rng, n: usize, m1: usize, m2: usize, q: usize) -> (LqgPlant, DynController) {
    loop {
        let a = rand_mat(rng, n, n);
        let b = rand_mat(rng, n, m1);
        let c = rand_mat(rng, m2, n);
        let plant = LqgPlant::new(
            a.clone(),
            b.clone(),
            c.clone(),
            rand_spd(rng, n),
            rand_spd(rng, m1),
            rand_spd(rng, n),
            rand_spd(rng, m2),
        )
        .unwrap();
        let Ok(opt) = youla_lqg::lqg::lqg_optimal(&plant, n) else {
            continue;
        };
        // Perturb the optimum slightly so the instance is generic but still stabilizing.
        let scale = rng.random_range(0.05..0.3);
        let a_k = opt.a_k() + rand_mat(rng, n, n) * scale;
        let b_k = opt.b_k() + rand_mat(rng, n, m2) * scale;
        let c_k = opt.c_k() + rand_mat(rng, m1, n) * scale;
        let pad = q - n;
        let a_k = youla_lqg::linalg::block_diag(&[&a_k, &rand_hurwitz(rng, pad, 0.5)]);
        let b_k = youla_lqg::linalg::vstack(m2, &[&b_k, &rand_mat(rng, pad, m2)]);
        let c_k = youla_lqg::linalg::hstack(m1, &[&c_k, &rand_mat(rng, m1, pad)]);
        let ctrl = DynController::new(a_k, b_k, c_k).unwrap();
        if youla_lqg::lqg::close_loop(&plant, &ctrl).is_ok() {
            return (plant, ctrl);
        }
    }
}

/// `‖G‖²_H2` by quadrature, independent of any Gramian.
///
/// With `ω = s·tan θ` the integrand `‖G(jω)‖²_F s sec²θ` is π-periodic and analytic for a
/// stable strictly proper `G`, so the midpoint rule converges geometrically.
pub fn h2_quadrature(g: &StateSpace, points: usize) -> f64 {
    let poles = youla_lqg::linalg::eigenvalues(g.a()).unwrap();
    let s = poles.iter().map(|l| l.norm()).fold(0.0, f64::max).max(1e-3);
    let half = std::f64::consts::FRAC_PI_2;
    let h = std::f64::consts::PI / points as f64;
    let mut total = 0.0;
    for k in 0..points {
        let th = -half + (k as f64 + 0.5) * h;
        let w = s * th.tan();
        let f: f64 = eval_direct(g, jw(w)).iter().map(|v| v.norm_sqr()).sum();
        total += f * s / th.cos().powi(2);
    }
    total * h / (2.0 * std::f64::consts::PI)
}

/// Sum of residues of a stable strictly proper `G` by a contour integral on a circle
/// enclosing every pole, `(1/2πj)∮ G(s) ds`.
pub fn residue_contour(g: &StateSpace, points: usize) -> Mat {
    let poles = youla_lqg::linalg::eigenvalues(g.a()).unwrap();
    let rad = 2.0 * poles.iter().map(|l| l.norm()).fold(0.0, f64::max) + 1.0;
    let mut acc = CMat::zeros(g.outputs(), g.inputs());
    for k in 0..points {
        let th = 2.0 * std::f64::consts::PI * k as f64 / points as f64;
        let s = Complex64::from_polar(rad, th);
        acc += eval_direct(g, s) * s;
    }
    (acc / Complex64::new(points as f64, 0.0)).map(|v| v.re)
}
