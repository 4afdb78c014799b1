//! Drivers for the two worked examples: the convergence comparison on the two-state plant and
//! the data-driven estimation study around a fixed starting controller.

use serde::Serialize;
use youla_lqg::lqg::{close_loop, example_controller, lqg_cost, lqg_optimal, policy_gradient_run};
use youla_lqg::rational::ss_to_rational;
use youla_lqg::sysid::{
    coefficient_error, h2_distance, identify_matrix, laguerre_coeffs_projection, laguerre_coeffs_zeroth,
    reduce_order, zo_residue_estimate, IdentifyOptions, LaguerreBasis, MatrixFit, ZoConfig,
};
use youla_lqg::youla::{algorithm1_run, build_nominal, frechet_gradient, sensitivity, NominalLft};
use youla_lqg::{DynController, LqgPlant, Mat, RationalScalar, StateSpace};

use crate::error::CliResult;

pub const EX1_ETA: f64 = 0.1;
pub const EX1_ITERS: usize = 14;
pub const EX1_PG_ETA: f64 = 10.0;
pub const EX1_TRUNC_TOL: f64 = 1e-9;
/// Largest per-iteration cost change that still counts as no progress.
pub const STALL_TOL: f64 = 1e-10;
/// Pointwise relative gap allowed between the two Algorithm 1 curves.
pub const CURVE_GAP_TOL: f64 = 0.05;

pub const EX2_GRID: (f64, f64, usize) = (0.1, 100.0, 200);
pub const EX2_LAGUERRE_ORDER: usize = 15;
pub const EX2_POLE: f64 = 1.0;
pub const EX2_C_STEP: f64 = 1e-5;
pub const EX2_RADIUS: f64 = 1e-5;
pub const EX2_SAMPLE_SIZES: [usize; 4] = [10, 100, 1000, 10_000];
pub const EX2_SEEDS: usize = 5;

/// `B_K = [0; 0.01]`, `C_K = [0, −0.01]`, `A_K = −0.5I`.
pub fn near_stationary_controller() -> DynController {
    example_controller(-0.5, 0.01, -0.01)
}

/// `B_K = 0`, `C_K = 0`, `A_K = −0.5I`: a stationary point that is not optimal.
pub fn stationary_controller() -> DynController {
    example_controller(-0.5, 0.0, 0.0)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Example1Settings {
    pub eta: f64,
    pub iters: usize,
    pub pg_eta: f64,
    pub trunc_tol: f64,
}

impl Default for Example1Settings {
    fn default() -> Self {
        Self {
            eta: EX1_ETA,
            iters: EX1_ITERS,
            pg_eta: EX1_PG_ETA,
            trunc_tol: EX1_TRUNC_TOL,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Example1Row {
    pub iter: usize,
    pub method: String,
    pub cost: f64,
    pub rel_error: f64,
}

pub const EXAMPLE1_COLUMNS: [&str; 4] = ["iter", "method", "cost", "rel_error"];
pub const METHOD_PG: &str = "policy_gradient";
pub const METHOD_ALG1: &str = "algorithm1";

/// Both methods from one initial controller; rows are grouped by method, ordered by iteration.
pub fn example1_case(
    plant: &LqgPlant,
    ctrl0: &DynController,
    j_star: f64,
    s: &Example1Settings,
) -> CliResult<Vec<Example1Row>> {
    let row = |iter, method: &str, cost: f64| Example1Row {
        iter,
        method: method.into(),
        cost,
        rel_error: (cost - j_star) / j_star,
    };
    let mut rows = Vec::with_capacity(2 * (s.iters + 1));
    for (k, step) in policy_gradient_run(plant, ctrl0, s.pg_eta, s.iters)?.iter().enumerate() {
        rows.push(row(k, METHOD_PG, step.cost));
    }
    let nom = build_nominal(plant, ctrl0)?;
    let run = algorithm1_run(&nom, s.eta, s.iters, s.trunc_tol)?;
    if let Some(e) = run.failure {
        return Err(e.into());
    }
    for r in &run.records {
        rows.push(row(r.iter, METHOD_ALG1, r.cost));
    }
    Ok(rows)
}

pub fn method_column(rows: &[Example1Row], method: &str) -> Vec<f64> {
    rows.iter().filter(|r| r.method == method).map(|r| r.rel_error).collect()
}

fn costs(rows: &[Example1Row], method: &str) -> Vec<f64> {
    rows.iter().filter(|r| r.method == method).map(|r| r.cost).collect()
}

/// Largest `|J_{k+1} − J_k|` of one method.
pub fn max_cost_change(rows: &[Example1Row], method: &str) -> f64 {
    costs(rows, method)
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max)
}

pub fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Largest pointwise `|a − b| / |b|`.
pub fn max_relative_gap(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct Example1Outcome {
    pub j_star: f64,
    pub case1: Vec<Example1Row>,
    pub case2: Vec<Example1Row>,
}

pub fn example1(plant: &LqgPlant, s: &Example1Settings) -> CliResult<Example1Outcome> {
    let k_star = lqg_optimal(plant, plant.n())?;
    let j_star = lqg_cost(&close_loop(plant, &k_star)?)?;
    Ok(Example1Outcome {
        j_star,
        case1: example1_case(plant, &near_stationary_controller(), j_star, s)?,
        case2: example1_case(plant, &stationary_controller(), j_star, s)?,
    })
}

/// 1-based entry label such as `TF13`.
pub fn entry_label(prefix: &str, i: usize, j: usize) -> String {
    format!("{prefix}{}{}", i + 1, j + 1)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Table1Row {
    pub entry: String,
    pub num_degree: usize,
    pub den_degree: usize,
    pub coeff_error: f64,
    pub coeff_error_pct: f64,
}

pub const TABLE1_COLUMNS: [&str; 5] = ["entry", "num_degree", "den_degree", "coeff_error", "coeff_error_pct"];

#[derive(Debug, Clone)]
pub struct Table1Outcome {
    pub rows: Vec<Table1Row>,
    /// `true` where an entry was declared structurally zero.
    pub zero_pattern: Vec<Vec<bool>>,
    /// `true` where the entry of the interconnection really is zero.
    pub true_zero_pattern: Vec<Vec<bool>>,
    pub fit: MatrixFit,
    /// Minimal transfer functions of the true entries.
    pub truth: Vec<Vec<Option<RationalScalar>>>,
}

/// Minimal transfer function of one channel, `None` for an identically zero channel.
pub fn true_entry(g: &StateSpace, i: usize, j: usize) -> CliResult<Option<RationalScalar>> {
    let e = g.entry(i, j);
    if e.order() == 0 || e.hinf_norm()? <= 1e-12 {
        return Ok(None);
    }
    let e = e.minreal(1e-9)?;
    Ok(Some(ss_to_rational(&e)?))
}

/// Fit every channel of `M22` from sampled frequency responses and compare with the truth.
pub fn table1(nom: &NominalLft, grid: &[f64], opts: &IdentifyOptions) -> CliResult<Table1Outcome> {
    let g = &nom.m22;
    let fit = identify_matrix(g, grid, opts)?;
    let mut rows = Vec::new();
    let mut true_zero_pattern = vec![vec![false; g.inputs()]; g.outputs()];
    let mut truth = vec![vec![None; g.inputs()]; g.outputs()];
    for i in 0..g.outputs() {
        for j in 0..g.inputs() {
            truth[i][j] = true_entry(g, i, j)?;
            true_zero_pattern[i][j] = truth[i][j].is_none();
            if let (Some(t), Some(est)) = (&truth[i][j], &fit.entries[i][j]) {
                let err = coefficient_error(t, est).unwrap_or(f64::INFINITY);
                rows.push(Table1Row {
                    entry: entry_label("TF", i, j),
                    num_degree: est.num_degree(),
                    den_degree: est.den_degree(),
                    coeff_error: err,
                    coeff_error_pct: 100.0 * err,
                });
            }
        }
    }
    Ok(Table1Outcome {
        rows,
        zero_pattern: fit.zero_pattern(),
        true_zero_pattern,
        fit,
        truth,
    })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LaguerreRow {
    pub entry: String,
    pub order: usize,
    pub projection_error: f64,
    pub reduced_error: f64,
}

pub const LAGUERRE_COLUMNS: [&str; 4] = ["entry", "order", "projection_error", "reduced_error"];

/// Per-entry summary of the Laguerre estimate at the top order.
#[derive(Debug, Clone, Serialize)]
pub struct LaguerreEntry {
    pub entry: String,
    pub row: usize,
    pub col: usize,
    pub projection_coeffs: Vec<f64>,
    pub zeroth_order_coeffs: Vec<f64>,
    /// Largest `|projection − zeroth-order|` over the coefficients.
    pub coeff_gap: f64,
    pub reduced_num: Vec<f64>,
    pub reduced_den: Vec<f64>,
    pub reduced_error: f64,
}

#[derive(Debug, Clone)]
pub struct LaguerreOutcome {
    pub rows: Vec<LaguerreRow>,
    pub entries: Vec<LaguerreEntry>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LaguerreSettings {
    pub order: usize,
    pub pole: f64,
    pub c_step: f64,
}

/// Relative H2 errors of the truncated expansion and of its reduced rational model for orders
/// `1..=order`, over every nonzero entry of the nominal sensitivity.
///
/// The reduced model has the degree of the true entry, capped by the degree of the expansion.
pub fn laguerre_study(nom: &NominalLft, grid: &[f64], s: &LaguerreSettings) -> CliResult<LaguerreOutcome> {
    let it = nom.zero_iterate();
    let s0 = sensitivity(nom, &it)?;
    let top = LaguerreBasis::new(s.pole, s.order)?;
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for i in 0..s0.outputs() {
        for j in 0..s0.inputs() {
            let Some(truth) = true_entry(&s0, i, j)? else {
                continue;
            };
            let e = s0.entry(i, j).minreal(1e-9)?;
            let norm = e.h2_norm_sq()?.sqrt();
            let label = entry_label("S", i, j);
            let coeffs = laguerre_coeffs_projection(&s0, i, j, &top)?;
            let mut reduced_top = None;
            for n in 1..=s.order {
                let basis = LaguerreBasis::new(s.pole, n)?;
                let c = &coeffs[..=n];
                let projection_error = h2_distance(&e, &basis.expansion(c)?)? / norm;
                let den = truth.den_degree().min(n + 1);
                let red = reduce_order(c, &basis, den - 1, den, grid)?;
                let reduced_error = h2_distance(&e, &red.to_state_space()?)? / norm;
                rows.push(LaguerreRow {
                    entry: label.clone(),
                    order: n,
                    projection_error,
                    reduced_error,
                });
                if n == s.order {
                    reduced_top = Some((red, reduced_error));
                }
            }
            let zeroth = laguerre_coeffs_zeroth(nom, &it, i, j, &top, s.c_step)?;
            let coeff_gap = coeffs
                .iter()
                .zip(&zeroth)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let (red, reduced_error) = match reduced_top {
                Some(v) => v,
                None => (RationalScalar::zero(), f64::NAN),
            };
            entries.push(LaguerreEntry {
                entry: label,
                row: i,
                col: j,
                projection_coeffs: coeffs,
                zeroth_order_coeffs: zeroth,
                coeff_gap,
                reduced_num: red.num().to_vec(),
                reduced_den: red.den().to_vec(),
                reduced_error,
            });
        }
    }
    Ok(LaguerreOutcome { rows, entries })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Table2Row {
    pub m: usize,
    pub seed: u64,
    pub rel_error: f64,
    pub median_rel_error: f64,
}

pub const TABLE2_COLUMNS: [&str; 4] = ["m", "seed", "rel_error", "median_rel_error"];

/// `2·Rmask` at the zero iterate: the exact gradient with respect to the static parameter.
pub fn residue_truth(nom: &NominalLft) -> CliResult<Mat> {
    Ok(frechet_gradient(nom, &nom.zero_iterate())?.rmask * 2.0)
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Relative Frobenius error of the zeroth-order estimate for every sample size and seeds
/// `base_seed, base_seed + 1, …`.
pub fn table2(
    nom: &NominalLft,
    sizes: &[usize],
    seeds: usize,
    base_seed: u64,
    radius: f64,
) -> CliResult<Vec<Table2Row>> {
    let truth = residue_truth(nom)?;
    let tn = truth.norm();
    let mut rows = Vec::new();
    for &m in sizes {
        let mut errs = Vec::with_capacity(seeds);
        for k in 0..seeds as u64 {
            let cfg = ZoConfig {
                radius,
                samples: m,
                seed: base_seed.wrapping_add(k),
            };
            let est = zo_residue_estimate(nom, &nom.zero_iterate(), &cfg)?;
            errs.push((est - &truth).norm() / tn);
        }
        let med = median(&errs);
        for (k, e) in errs.into_iter().enumerate() {
            rows.push(Table2Row {
                m,
                seed: base_seed.wrapping_add(k as u64),
                rel_error: e,
                median_rel_error: med,
            });
        }
    }
    Ok(rows)
}

/// Median error per sample size, in the order of `rows`.
pub fn table2_medians(rows: &[Table2Row]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for r in rows {
        if out.last().map_or(true, |(m, _)| *m != r.m) {
            out.push((r.m, r.median_rel_error));
        }
    }
    out
}

pub fn example2_nominal(plant: &LqgPlant, ctrl0: &DynController) -> CliResult<NominalLft> {
    Ok(build_nominal(plant, ctrl0)?)
}
