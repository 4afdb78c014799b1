mod common;

use approx::assert_relative_eq;
use common::*;
use youla_lqg::lqg::{
    close_loop, example_controller, lqg_cost, lqg_gradient, lqg_optimal, lqg_synthesis,
    policy_gradient_run, ControllerGradient,
};
use youla_lqg::linalg::spectral_abscissa;
use youla_lqg::{DynController, Error, LqgPlant, Mat};

/// Displayed optimum with the sign of `C_K(1,2)` taken from the synthesis (see README).
fn displayed_optimum() -> (Mat, Mat, Mat) {
    (
        Mat::from_row_slice(2, 2, &[-1.1, 0.13, 1.19, -1.64]),
        Mat::from_row_slice(2, 1, &[0.11, 0.45]),
        Mat::from_row_slice(1, 2, &[0.62, -0.22]),
    )
}

fn cost(plant: &LqgPlant, k: &DynController) -> f64 {
    lqg_cost(&close_loop(plant, k).unwrap()).unwrap()
}

fn perturbed(k: &DynController, d: &ControllerGradient, h: f64) -> DynController {
    DynController::new(
        k.a_k() + &d.ga * h,
        k.b_k() + &d.gb * h,
        k.c_k() + &d.gc * h,
    )
    .unwrap()
}

fn inner(a: &ControllerGradient, b: &ControllerGradient) -> f64 {
    a.ga.dot(&b.ga) + a.gb.dot(&b.gb) + a.gc.dot(&b.gc)
}

/// Independent Lyapunov solve `aᵀx + xa + q = 0` through the Kronecker system.
fn lyap_kron(a: &Mat, q: &Mat) -> Mat {
    let n = a.nrows();
    let eye = Mat::identity(n, n);
    let big = eye.kronecker(&a.transpose()) + a.transpose().kronecker(&eye);
    let rhs = -nalgebra::DVector::from_column_slice(q.as_slice());
    let v = big.lu().solve(&rhs).unwrap();
    Mat::from_column_slice(n, n, v.as_slice())
}

#[test]
fn example1_synthesis_matches_display() {
    let plant = LqgPlant::example1();
    let k = lqg_optimal(&plant, 2).unwrap();
    let (a, b, c) = displayed_optimum();
    for (got, want) in [(k.a_k(), &a), (k.b_k(), &b), (k.c_k(), &c)] {
        let dev = (got - want).amax();
        assert!(dev <= 0.005, "{got} vs {want}");
    }
    // the rounded display is itself close to optimal
    let disp = DynController::new(a, b, c).unwrap();
    let j_star = cost(&plant, &k);
    assert!(rel_close(cost(&plant, &disp), j_star, 1e-3));
}

#[test]
fn example1_riccati_gains() {
    let plant = LqgPlant::example1();
    let syn = lqg_synthesis(&plant, 2).unwrap();
    // filter and control Riccati residuals recomputed here
    let p = &syn.p.solution;
    let res = plant.a().transpose() * p + p * plant.a() - p * plant.b() * plant.b().transpose() * p
        + plant.q();
    assert!(res.norm() < 1e-10);
    let h = &syn.h.solution;
    let res = plant.a() * h + h * plant.a().transpose() - h * plant.c().transpose() * plant.c() * h
        + plant.w();
    assert!(res.norm() < 1e-10);
    let k = syn.controller;
    assert_relative_eq!(*k.c_k(), -(plant.b().transpose() * p), epsilon = 1e-12);
    assert_relative_eq!(*k.b_k(), h * plant.c().transpose(), epsilon = 1e-12);
}

#[test]
fn example1_closed_loops() {
    let plant = LqgPlant::example1();
    let cl = close_loop(&plant, &lqg_optimal(&plant, 2).unwrap()).unwrap();
    assert_eq!(cl.acl().nrows(), 4);
    assert!(spectral_abscissa(cl.acl()).unwrap() < 0.0);
    assert!(close_loop(&plant, &example_controller(-0.5, 0.0, 0.0)).is_ok());
    let err = close_loop(&plant, &example_controller(1.0, 0.0, 0.0)).unwrap_err();
    assert!(matches!(err, Error::NotStabilizing(_)), "{err}");
}

#[test]
fn zero_controller_cost_is_open_loop_cost() {
    let plant = LqgPlant::example1();
    let j = cost(&plant, &example_controller(-0.5, 0.0, 0.0));
    let x = lyap_kron(plant.a(), plant.q());
    assert_relative_eq!(j, (plant.w() * x).trace(), max_relative = 1e-12);
}

#[test]
fn optimum_is_stationary_and_traces_agree() {
    let plant = LqgPlant::example1();
    let cl = close_loop(&plant, &lqg_optimal(&plant, 2).unwrap()).unwrap();
    let g = lqg_gradient(&cl);
    for blk in [&g.ga, &g.gb, &g.gc] {
        assert!(blk.norm() <= 1e-6);
    }
    let (p, d) = cl.cost_pair();
    assert!(p > 0.0);
    assert!(rel_close(p, d, 1e-12));
    assert!(rel_close(p, 1.6662546754103886, 1e-9));
}

#[test]
fn decoupled_controller_is_exactly_stationary() {
    let plant = LqgPlant::example1();
    let g = lqg_gradient(&close_loop(&plant, &example_controller(-0.5, 0.0, 0.0)).unwrap());
    assert_eq!(g.norm(), 0.0);
}

#[test]
fn padding_preserves_cost_and_stationarity() {
    let plant = LqgPlant::example1();
    let j2 = cost(&plant, &lqg_optimal(&plant, 2).unwrap());
    for q in 3..=5 {
        let k = lqg_optimal(&plant, q).unwrap();
        assert_eq!(k.order(), q);
        let cl = close_loop(&plant, &k).unwrap();
        assert!(rel_close(lqg_cost(&cl).unwrap(), j2, 1e-12));
        assert!(lqg_gradient(&cl).norm() <= 1e-6);
    }
    assert!(matches!(lqg_optimal(&plant, 1), Err(Error::Invalid(_))));
}

#[test]
fn plant_rejects_singular_noise() {
    let p = LqgPlant::example1();
    let err = LqgPlant::new(
        p.a().clone(),
        p.b().clone(),
        p.c().clone(),
        p.q().clone(),
        p.r().clone(),
        p.w().clone(),
        Mat::zeros(1, 1),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Invalid(_)));
}

#[test]
fn entrywise_gradient_matches_finite_differences() {
    let mut r = rng(11);
    for _ in 0..5 {
        let (plant, k) = rand_lqg_instance(&mut r, 2, 1, 2, 3);
        let g = lqg_gradient(&close_loop(&plant, &k).unwrap());
        let scale = [&g.ga, &g.gb, &g.gc].iter().map(|m| m.amax()).fold(0.0, f64::max);
        let h = 1e-5;
        let zero = ControllerGradient {
            ga: g.ga.map(|_| 0.0),
            gb: g.gb.map(|_| 0.0),
            gc: g.gc.map(|_| 0.0),
        };
        for blk in 0..3 {
            let len = [g.ga.len(), g.gb.len(), g.gc.len()][blk];
            for i in 0..len {
                let mut e = zero.clone();
                [&mut e.ga, &mut e.gb, &mut e.gc][blk][i] = 1.0;
                let fd = (cost(&plant, &perturbed(&k, &e, h)) - cost(&plant, &perturbed(&k, &e, -h)))
                    / (2.0 * h);
                let an = inner(&g, &e);
                assert!((fd - an).abs() <= 1e-5 * scale, "block {blk} entry {i}: {fd} vs {an}");
            }
        }
    }
}

#[test]
fn directional_gradient_matches_finite_differences() {
    // 50 random pairs, 10 directions each
    let mut r = rng(12);
    let mut worst = 0.0f64;
    for t in 0..50 {
        let n = 2 + t % 2;
        let (plant, k) = rand_lqg_instance(&mut r, n, 1 + t % 2, 1 + (t / 2) % 2, n);
        let g = lqg_gradient(&close_loop(&plant, &k).unwrap());
        for _ in 0..10 {
            let d = ControllerGradient {
                ga: rand_mat(&mut r, k.order(), k.order()),
                gb: rand_mat(&mut r, k.order(), k.inputs()),
                gc: rand_mat(&mut r, k.outputs(), k.order()),
            };
            let h = 1e-5;
            let fd = (cost(&plant, &perturbed(&k, &d, h)) - cost(&plant, &perturbed(&k, &d, -h)))
                / (2.0 * h);
            let an = inner(&g, &d);
            let rel = (fd - an).abs() / (g.norm() * d.norm());
            worst = worst.max(rel);
        }
    }
    assert!(worst <= 1e-5, "worst relative error {worst:.3e}");
}

#[test]
fn cost_equals_h2_of_performance_system() {
    let mut r = rng(13);
    for t in 0..50 {
        let n = 1 + t % 3;
        let q = n + (t / 3) % (4 - n);
        let (plant, k) = rand_lqg_instance(&mut r, n, 1 + t % 2, 1 + (t / 3) % 2, q);
        let cl = close_loop(&plant, &k).unwrap();
        let j = lqg_cost(&cl).unwrap();
        let (p, d) = cl.cost_pair();
        assert!(rel_close(p, d, 1e-8), "{p} vs {d}");
        let sys = cl.performance_system();
        assert!(rel_close(j, sys.h2_norm_sq().unwrap(), 1e-8));
        if t < 10 {
            let quad = h2_quadrature(&sys, 4000);
            assert!(rel_close(j, quad, 1e-8), "{j} vs quadrature {quad}");
        }
    }
}

#[test]
fn pg_stalls_at_stationary_point() {
    let plant = LqgPlant::example1();
    let run = policy_gradient_run(&plant, &example_controller(-0.5, 0.0, 0.0), 10.0, 14).unwrap();
    assert_eq!(run.len(), 15);
    for w in run.windows(2) {
        assert!((w[1].cost - w[0].cost).abs() <= 1e-10);
    }
}

#[test]
fn pg_at_optimum_does_not_increase() {
    let plant = LqgPlant::example1();
    let run = policy_gradient_run(&plant, &lqg_optimal(&plant, 2).unwrap(), 0.05, 10).unwrap();
    for w in run.windows(2) {
        assert!(w[1].cost <= w[0].cost + 1e-8);
    }
}

#[test]
fn pg_near_stationary_barely_moves() {
    let plant = LqgPlant::example1();
    let j_star = cost(&plant, &lqg_optimal(&plant, 2).unwrap());
    let run =
        policy_gradient_run(&plant, &example_controller(-0.5, 0.01, -0.01), 10.0, 14).unwrap();
    let rel = |c: f64| (c - j_star) / j_star;
    let (first, last) = (rel(run[0].cost), rel(run[14].cost));
    assert!((first - last).abs() < 0.01 * first, "{first} -> {last}");
}

#[test]
fn pg_rejects_bad_step() {
    let plant = LqgPlant::example1();
    let k = example_controller(-0.5, 0.0, 0.0);
    assert!(policy_gradient_run(&plant, &k, 0.0, 3).is_err());
    assert!(policy_gradient_run(&plant, &k, f64::NAN, 3).is_err());
}

#[test]
fn structured_layout_round_trip() {
    let k = lqg_optimal(&LqgPlant::example1(), 3).unwrap();
    let s = k.structured();
    assert_eq!(s.shape(), (4, 4));
    assert_eq!(s[(0, 0)], 0.0);
    let back = DynController::from_structured(&s, 1, 1).unwrap();
    assert_eq!(back, k);
}

#[test]
fn json_round_trip() {
    let plant = LqgPlant::example1();
    let k = lqg_optimal(&plant, 2).unwrap();
    let kj: DynController = serde_json::from_str(&serde_json::to_string(&k).unwrap()).unwrap();
    assert_eq!(kj, k);
    let pj: LqgPlant = serde_json::from_str(&serde_json::to_string(&plant).unwrap()).unwrap();
    assert_eq!(pj, plant);
    let bad = r#"{"A_K": [[1.0]], "B_K": [[1.0, 2.0]], "C_K": [[1.0], [2.0]]}"#;
    assert!(serde_json::from_str::<DynController>(bad).is_ok_and(|k| k.order() == 1));
    let ragged = r#"{"A_K": [[1.0, 0.0], [1.0]], "B_K": [[1.0], [1.0]], "C_K": [[1.0, 2.0]]}"#;
    assert!(serde_json::from_str::<DynController>(ragged).is_err());
}
