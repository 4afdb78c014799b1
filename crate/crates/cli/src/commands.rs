use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use youla_lqg::certificate::{certify, Tolerances};
use youla_lqg::linalg::{spectral_abscissa, to_rows};
use youla_lqg::lqg::{close_loop, lqg_cost, lqg_optimal, lqg_synthesis, policy_gradient_run};
use youla_lqg::sysid::{zo_residue_estimate, IdentifyOptions, MeasureMode, ZoConfig};
use youla_lqg::youla::{
    algorithm1_run, assemble_controller, build_nominal, default_step, reconstruct_delta_k, YoulaIterate,
};
use youla_lqg::{DynController, LqgPlant};

use crate::config::{
    in_range, load_controller, load_controller_or_default, load_plant, pick, pick_opt, positive, FileConfig,
    GridSpec,
};
use crate::error::{CliError, CliResult};
use crate::experiments::{self as ex, Example1Settings, LaguerreSettings};
use crate::output::{ExperimentReport, Outputs};
use crate::{Cli, Command, GridArgs, ModeArg, PlantArg};

const MAX_ITERS: usize = 100_000;
const MAX_ORDER: usize = 50;

struct Ctx {
    file: FileConfig,
    out: PathBuf,
    seed: u64,
    verbose: bool,
    start: Instant,
}

impl Ctx {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[{:>8.1} ms] {}", self.start.elapsed().as_secs_f64() * 1e3, msg.as_ref());
        }
    }

    fn plant(&self, arg: PlantArg) -> CliResult<LqgPlant> {
        load_plant(pick_opt(arg.plant, &self.file.plant).as_deref())
    }

    fn controller(&self, flag: Option<PathBuf>) -> CliResult<DynController> {
        match pick_opt(flag, &self.file.controller) {
            Some(p) => load_controller(&p),
            None => Err(CliError::Missing("controller")),
        }
    }

    fn estimation_controller(&self, flag: Option<PathBuf>) -> CliResult<DynController> {
        load_controller_or_default(pick_opt(flag, &self.file.controller).as_deref())
    }

    fn grid(&self, g: GridArgs) -> CliResult<GridSpec> {
        let (lo, hi, points) = ex::EX2_GRID;
        GridSpec {
            lo: pick(g.grid_lo, &self.file.grid_lo, lo),
            hi: pick(g.grid_hi, &self.file.grid_hi, hi),
            points: pick(g.points, &self.file.points, points),
            log: pick(g.log_grid, &self.file.log_grid, false),
        }
        .validate()
    }

    fn commit(&self, outputs: Outputs) -> CliResult<()> {
        for p in outputs.commit(&self.out)? {
            self.log(format!("wrote {}", p.display()));
        }
        Ok(())
    }

    fn finish(&self, mut report: ExperimentReport, mut outputs: Outputs, name: &str) -> CliResult<()> {
        report.wall_ms = self.start.elapsed().as_secs_f64() * 1e3;
        outputs.json(name, &report)?;
        self.commit(outputs)
    }
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let ctx = Ctx {
        out: pick(cli.out, &file.out, PathBuf::from("out")),
        seed: pick(cli.seed, &file.seed, 0),
        verbose: cli.verbose,
        start: Instant::now(),
        file,
    };
    match cli.command {
        Command::SolveLqg(a) => solve_lqg(&ctx, a),
        Command::Certify(a) => cmd_certify(&ctx, a),
        Command::Optimize(a) => optimize(&ctx, a),
        Command::Pg(a) => pg(&ctx, a),
        Command::Identify(a) => identify(&ctx, a),
        Command::EstimateS(a) => estimate_s(&ctx, a),
        Command::EstimateResidue(a) => estimate_residue(&ctx, a),
        Command::Example1(a) => example1(&ctx, a),
        Command::Example2(a) => example2(&ctx, a),
    }
}

#[derive(Serialize)]
struct SolveSummary {
    order: usize,
    cost: f64,
    control_riccati_residual: f64,
    filter_riccati_residual: f64,
    closed_loop_abscissa: f64,
}

fn solve_lqg(ctx: &Ctx, a: crate::SolveLqgArgs) -> CliResult<()> {
    let plant = ctx.plant(a.plant)?;
    let order = pick(a.order, &ctx.file.order, plant.n());
    in_range("order", order, plant.n(), MAX_ORDER.max(plant.n()))?;
    let syn = lqg_synthesis(&plant, order)?;
    let cl = close_loop(&plant, &syn.controller)?;
    let summary = SolveSummary {
        order,
        cost: lqg_cost(&cl)?,
        control_riccati_residual: syn.p.residual_norm,
        filter_riccati_residual: syn.h.residual_norm,
        closed_loop_abscissa: spectral_abscissa(cl.acl())?,
    };
    let mut out = Outputs::new();
    out.json("controller.json", &syn.controller)?;
    out.json("solve_summary.json", &summary)?;
    ctx.commit(out)?;
    println!("J* = {}", summary.cost);
    Ok(())
}

fn cmd_certify(ctx: &Ctx, a: crate::CertifyArgs) -> CliResult<()> {
    let plant = ctx.plant(a.plant)?;
    let ctrl = ctx.controller(a.controller)?;
    let tol = Tolerances {
        markov: positive("tol-markov", pick(a.tol_markov, &ctx.file.tol_markov, Tolerances::default().markov))?,
        ..Tolerances::default()
    };
    let report = certify(&plant, &ctrl, &tol)?;
    let mut out = Outputs::new();
    out.json("certificate.json", &report)?;
    ctx.commit(out)?;
    println!("{}", serde_json::to_value(report.verdict).unwrap_or_default().as_str().unwrap_or(""));
    Ok(())
}

fn optimal_cost(plant: &LqgPlant) -> CliResult<f64> {
    let k = lqg_optimal(plant, plant.n())?;
    Ok(lqg_cost(&close_loop(plant, &k)?)?)
}

/// Path given on the command line, made absolute against the working directory.
fn user_path(p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        std::env::current_dir().map(|d| d.join(&p)).unwrap_or(p)
    }
}

#[derive(Serialize)]
struct RunRow {
    iter: usize,
    cost: f64,
    rel_error: f64,
    #[serde(rename = "grad_norm_U")]
    grad_norm_u: f64,
    q_dyn_order: usize,
    wall_ms: f64,
}

pub const RUN_COLUMNS: [&str; 6] = ["iter", "cost", "rel_error", "grad_norm_U", "q_dyn_order", "wall_ms"];

fn optimize(ctx: &Ctx, a: crate::OptimizeArgs) -> CliResult<()> {
    let plant = ctx.plant(a.plant)?;
    let ctrl0 = ctx.controller(a.controller)?;
    let eta_flag = pick_opt(a.eta, &ctx.file.eta).map(|v| positive("eta", v)).transpose()?;
    let iters = in_range("iters", pick(a.iters, &ctx.file.iters, ex::EX1_ITERS), 0, MAX_ITERS)?;
    let trunc_tol = pick(a.trunc_tol, &ctx.file.trunc_tol, ex::EX1_TRUNC_TOL);
    if !(0.0..1.0).contains(&trunc_tol) {
        return Err(CliError::param("trunc-tol", format!("must lie in [0, 1), got {trunc_tol}")));
    }
    let j_star = optimal_cost(&plant)?;
    let nom = build_nominal(&plant, &ctrl0)?;
    ctx.log("nominal interconnection built");
    let eta = match eta_flag {
        Some(v) => v,
        None => default_step(&nom)?,
    };
    let run = algorithm1_run(&nom, eta, iters, trunc_tol)?;
    if let Some(e) = run.failure {
        return Err(e.into());
    }
    let rows: Vec<RunRow> = run
        .records
        .iter()
        .map(|r| RunRow {
            iter: r.iter,
            cost: r.cost,
            rel_error: (r.cost - j_star) / j_star,
            grad_norm_u: r.grad_norm_u,
            q_dyn_order: r.q_dyn_order,
            wall_ms: r.wall_ms,
        })
        .collect();
    let ctrl = if is_zero_iterate(&run.final_it) {
        ctrl0.clone()
    } else {
        assemble_controller(&ctrl0, &reconstruct_delta_k(&nom, &run.final_it)?, trunc_tol)?
    };
    let final_cost = lqg_cost(&close_loop(&plant, &ctrl)?)?;
    let mut out = Outputs::new();
    out.csv("run.csv", &rows)?;
    let save = pick_opt(a.save_controller, &ctx.file.save_controller)
        .map(user_path)
        .unwrap_or_else(|| PathBuf::from("controller.json"));
    out.json(save, &ctrl)?;
    let mut report = ExperimentReport::new(
        "optimize",
        ctx.seed,
        json!({ "eta": eta, "iters": iters, "trunc_tol": trunc_tol, "optimal_cost": j_star }),
    );
    report.table("run.csv", &RUN_COLUMNS, rows.len());
    let lifted = run.records.last().map_or(f64::NAN, |r| r.cost);
    report.check(
        "assembled_cost_matches_lifted_cost",
        (final_cost - lifted).abs() <= 1e-6 * lifted.abs().max(1.0),
        format!("controller cost {final_cost}, lifted cost {lifted}, order {}", ctrl.order()),
    );
    ctx.finish(report, out, "optimize_report.json")?;
    println!("final cost {final_cost} (relative error {:.6e})", (final_cost - j_star) / j_star);
    Ok(())
}

fn is_zero_iterate(it: &YoulaIterate) -> bool {
    it.q_dyn.order() == 0 && it.q_dyn.d().iter().all(|&v| v == 0.0) && it.q_stat.iter().all(|&v| v == 0.0)
}

#[derive(Serialize)]
struct PgRow {
    iter: usize,
    cost: f64,
    rel_error: f64,
    grad_norm: f64,
    step: f64,
}

pub const PG_COLUMNS: [&str; 5] = ["iter", "cost", "rel_error", "grad_norm", "step"];

fn pg(ctx: &Ctx, a: crate::PgArgs) -> CliResult<()> {
    let plant = ctx.plant(a.plant)?;
    let ctrl0 = ctx.controller(a.controller)?;
    let eta = positive("eta", pick(a.eta, &ctx.file.pg_eta.or(ctx.file.eta), ex::EX1_PG_ETA))?;
    let iters = in_range("iters", pick(a.iters, &ctx.file.iters, ex::EX1_ITERS), 0, MAX_ITERS)?;
    let j_star = optimal_cost(&plant)?;
    let steps = policy_gradient_run(&plant, &ctrl0, eta, iters)?;
    let rows: Vec<PgRow> = steps
        .iter()
        .enumerate()
        .map(|(k, s)| PgRow {
            iter: k,
            cost: s.cost,
            rel_error: (s.cost - j_star) / j_star,
            grad_norm: s.grad_norm,
            step: s.step,
        })
        .collect();
    let mut out = Outputs::new();
    out.csv("pg.csv", &rows)?;
    if let Some(last) = steps.last() {
        out.json("controller.json", &last.controller)?;
    }
    ctx.commit(out)?;
    if let Some(r) = rows.last() {
        println!("final cost {} (relative error {:.6e})", r.cost, r.rel_error);
    }
    Ok(())
}

fn identify_options(mode: ModeArg, max_den: usize) -> IdentifyOptions {
    IdentifyOptions {
        mode: match mode {
            ModeArg::Direct => MeasureMode::Direct,
            ModeArg::Sine => MeasureMode::Sine,
        },
        max_den_degree: max_den,
        ..IdentifyOptions::default()
    }
}

fn parse_mode(s: &str) -> CliResult<ModeArg> {
    match s {
        "direct" => Ok(ModeArg::Direct),
        "sine" => Ok(ModeArg::Sine),
        other => Err(CliError::param("mode", format!("expected direct or sine, got {other:?}"))),
    }
}

#[derive(Serialize)]
struct FittedEntry {
    entry: String,
    row: usize,
    col: usize,
    structural_zero: bool,
    num: Vec<f64>,
    den: Vec<f64>,
    true_num: Vec<f64>,
    true_den: Vec<f64>,
    coeff_error: Option<f64>,
}

fn identify(ctx: &Ctx, a: crate::IdentifyArgs) -> CliResult<()> {
    let plant = ctx.plant(a.plant)?;
    let ctrl0 = ctx.estimation_controller(a.controller)?;
    let mode = match (a.mode, &ctx.file.mode) {
        (Some(m), _) => m,
        (None, Some(s)) => parse_mode(s)?,
        (None, None) => ModeArg::Direct,
    };
    let max_den = in_range("max-den", pick(a.max_den, &ctx.file.max_den, 6), 1, 20)?;
    let grid = ctx.grid(a.grid)?;
    let nom = build_nominal(&plant, &ctrl0)?;
    let t1 = ex::table1(&nom, &grid.build()?, &identify_options(mode, max_den))?;
    ctx.log("fits done");
    let mut entries = Vec::new();
    for (i, row) in t1.fit.entries.iter().enumerate() {
        for (j, fit) in row.iter().enumerate() {
            let truth = &t1.truth[i][j];
            let coeffs = |r: &Option<youla_lqg::RationalScalar>| {
                r.as_ref()
                    .map_or((Vec::new(), Vec::new()), |r| (r.num().to_vec(), r.den().to_vec()))
            };
            let (num, den) = coeffs(fit);
            let (true_num, true_den) = coeffs(truth);
            entries.push(FittedEntry {
                entry: ex::entry_label("TF", i, j),
                row: i,
                col: j,
                structural_zero: fit.is_none(),
                num,
                den,
                true_num,
                true_den,
                coeff_error: match (truth, fit) {
                    (Some(t), Some(f)) => youla_lqg::sysid::coefficient_error(t, f),
                    _ => None,
                },
            });
        }
    }
    let pattern_ok = t1.zero_pattern == t1.true_zero_pattern;
    let mut out = Outputs::new();
    out.csv("identify.csv", &t1.rows)?;
    out.json(
        "identify.json",
        &json!({
            "mode": format!("{mode:?}").to_lowercase(),
            "grid": grid,
            "zero_pattern_recovered": pattern_ok,
            "entries": entries,
        }),
    )?;
    ctx.commit(out)?;
    let worst = t1.rows.iter().map(|r| r.coeff_error).fold(0.0, f64::max);
    println!("{} fitted entries, max coefficient error {worst:.3e}, zero pattern recovered: {pattern_ok}", t1.rows.len());
    Ok(())
}

fn laguerre_settings(ctx: &Ctx, order: Option<usize>, pole: Option<f64>, c_step: Option<f64>) -> CliResult<LaguerreSettings> {
    Ok(LaguerreSettings {
        order: in_range("laguerre-order", pick(order, &ctx.file.laguerre_order, ex::EX2_LAGUERRE_ORDER), 1, 60)?,
        pole: positive("pole", pick(pole, &ctx.file.pole, ex::EX2_POLE))?,
        c_step: positive("c-step", pick(c_step, &ctx.file.c_step, ex::EX2_C_STEP))?,
    })
}

fn estimate_s(ctx: &Ctx, a: crate::EstimateSArgs) -> CliResult<()> {
    let plant = ctx.plant(a.plant)?;
    let ctrl0 = ctx.estimation_controller(a.controller)?;
    let settings = laguerre_settings(ctx, a.laguerre_order, a.pole, a.c_step)?;
    let grid = ctx.grid(a.grid)?;
    let nom = build_nominal(&plant, &ctrl0)?;
    let study = ex::laguerre_study(&nom, &grid.build()?, &settings)?;
    let mut out = Outputs::new();
    out.csv("laguerre_error.csv", &study.rows)?;
    out.json("estimate_s.json", &json!({ "settings": settings, "grid": grid, "entries": study.entries }))?;
    ctx.commit(out)?;
    for e in &study.entries {
        println!(
            "{}: reduced-model relative H2 error {:.3e}, coefficient gap {:.3e}",
            e.entry, e.reduced_error, e.coeff_gap
        );
    }
    Ok(())
}

fn estimate_residue(ctx: &Ctx, a: crate::EstimateResidueArgs) -> CliResult<()> {
    let plant = ctx.plant(a.plant)?;
    let ctrl0 = ctx.estimation_controller(a.controller)?;
    let cfg = ZoConfig {
        radius: positive("radius", pick(a.radius, &ctx.file.radius, ex::EX2_RADIUS))?,
        samples: in_range("samples", pick(a.samples, &ctx.file.samples, 10_000), 1, 10_000_000)?,
        seed: ctx.seed,
    };
    let nom = build_nominal(&plant, &ctrl0)?;
    let est = zo_residue_estimate(&nom, &nom.zero_iterate(), &cfg)?;
    let truth = ex::residue_truth(&nom)?;
    let rel_error = (&est - &truth).norm() / truth.norm();
    let mut out = Outputs::new();
    out.json(
        "residue.json",
        &json!({
            "samples": cfg.samples,
            "radius": cfg.radius,
            "seed": cfg.seed,
            "estimate": to_rows(&est),
            "exact": to_rows(&truth),
            "rel_error": rel_error,
        }),
    )?;
    ctx.commit(out)?;
    println!("relative error {rel_error:.6e}");
    Ok(())
}

fn example1(ctx: &Ctx, a: crate::Example1Args) -> CliResult<()> {
    let plant = ctx.plant(a.plant)?;
    let d = Example1Settings::default();
    let s = Example1Settings {
        eta: positive("eta", pick(a.eta, &ctx.file.eta, d.eta))?,
        pg_eta: positive("pg-eta", pick(a.pg_eta, &ctx.file.pg_eta, d.pg_eta))?,
        iters: in_range("iters", pick(a.iters, &ctx.file.iters, d.iters), 1, MAX_ITERS)?,
        trunc_tol: d.trunc_tol,
    };
    let res = ex::example1(&plant, &s)?;
    ctx.log("both cases done");
    let mut out = Outputs::new();
    out.csv("example1_case1.csv", &res.case1)?;
    out.csv("example1_case2.csv", &res.case2)?;
    let mut report = ExperimentReport::new("example1", ctx.seed, json!({ "settings": s, "optimal_cost": res.j_star }));
    for name in ["example1_case1.csv", "example1_case2.csv"] {
        report.table(name, &ex::EXAMPLE1_COLUMNS, 2 * (s.iters + 1));
    }
    let stall = ex::max_cost_change(&res.case2, ex::METHOD_PG);
    report.check(
        "case2_pg_stalls",
        stall <= ex::STALL_TOL,
        format!("largest per-iteration cost change {stall:.3e}"),
    );
    let pg1 = ex::method_column(&res.case1, ex::METHOD_PG);
    let drift = (pg1[pg1.len() - 1] - pg1[0]).abs() / pg1[0].abs();
    report.check(
        "case1_pg_negligible_progress",
        drift < 0.01,
        format!("relative change of the relative error {drift:.3e}"),
    );
    let c1 = ex::method_column(&res.case1, ex::METHOD_ALG1);
    let c2 = ex::method_column(&res.case2, ex::METHOD_ALG1);
    for (name, c) in [("case1_algorithm1_strictly_decreasing", &c1), ("case2_algorithm1_strictly_decreasing", &c2)] {
        report.check(
            name,
            ex::strictly_decreasing(c),
            format!("relative error {:.4e} -> {:.4e}", c[0], c[c.len() - 1]),
        );
    }
    let gap = ex::max_relative_gap(&c1, &c2);
    report.check(
        "algorithm1_curves_nearly_identical",
        gap < ex::CURVE_GAP_TOL,
        format!("largest pointwise relative gap {gap:.3e}"),
    );
    print_verdicts(&report);
    ctx.finish(report, out, "example1_report.json")
}

fn print_verdicts(report: &ExperimentReport) {
    for c in &report.verdicts {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}

fn example2(ctx: &Ctx, a: crate::Example2Args) -> CliResult<()> {
    let plant = ctx.plant(a.plant)?;
    let ctrl0 = ctx.estimation_controller(a.controller)?;
    let grid_spec = ctx.grid(a.grid)?;
    let grid = grid_spec.build()?;
    let lag = laguerre_settings(ctx, a.laguerre_order, a.pole, None)?;
    let radius = positive("radius", pick(a.radius, &ctx.file.radius, ex::EX2_RADIUS))?;
    let sizes = pick(a.sample_sizes, &ctx.file.sample_sizes, ex::EX2_SAMPLE_SIZES.to_vec());
    if sizes.is_empty() {
        return Err(CliError::param("sample-sizes", "at least one sample size is required"));
    }
    for &m in &sizes {
        in_range("sample-sizes", m, 1, 10_000_000)?;
    }
    let seeds = in_range("seeds", pick(a.seeds, &ctx.file.seeds, ex::EX2_SEEDS), 1, 1000)?;
    let nom = build_nominal(&plant, &ctrl0)?;

    let t1 = ex::table1(&nom, &grid, &identify_options(ModeArg::Direct, 6))?;
    ctx.log("table 1 done");
    let lg = ex::laguerre_study(&nom, &grid, &lag)?;
    ctx.log("Laguerre study done");
    let t2 = ex::table2(&nom, &sizes, seeds, ctx.seed, radius)?;
    ctx.log("table 2 done");

    let mut out = Outputs::new();
    out.csv("table1.csv", &t1.rows)?;
    out.csv("laguerre_error.csv", &lg.rows)?;
    out.csv("table2.csv", &t2)?;
    let mut report = ExperimentReport::new(
        "example2",
        ctx.seed,
        json!({
            "grid": grid_spec,
            "laguerre": lag,
            "radius": radius,
            "sample_sizes": sizes,
            "seeds": (0..seeds as u64).map(|k| ctx.seed.wrapping_add(k)).collect::<Vec<_>>(),
        }),
    );
    report.table("table1.csv", &ex::TABLE1_COLUMNS, t1.rows.len());
    report.table("laguerre_error.csv", &ex::LAGUERRE_COLUMNS, lg.rows.len());
    report.table("table2.csv", &ex::TABLE2_COLUMNS, t2.len());

    let worst = t1.rows.iter().map(|r| r.coeff_error).fold(0.0, f64::max);
    report.check("table1_max_error", worst <= 1e-3, format!("largest coefficient error {worst:.3e}"));
    report.check(
        "zero_pattern_recovered",
        t1.zero_pattern == t1.true_zero_pattern,
        format!("{:?}", t1.zero_pattern),
    );
    for e in &lg.entries {
        let errs: Vec<f64> = lg
            .rows
            .iter()
            .filter(|r| r.entry == e.entry)
            .map(|r| r.projection_error)
            .collect();
        let monotone = errs.iter().all(|&v| v > 0.0) && errs.windows(2).skip(2).all(|w| w[1] <= w[0]);
        report.check(
            &format!("{}_projection_error_non_increasing", e.entry),
            monotone,
            format!("{:.3e} -> {:.3e}", errs[0], errs[errs.len() - 1]),
        );
        report.check(
            &format!("{}_reduced_error", e.entry),
            e.reduced_error <= 0.05,
            format!("relative H2 error {:.3e} at order {}", e.reduced_error, lag.order),
        );
        report.check(
            &format!("{}_zeroth_order_coefficients", e.entry),
            e.coeff_gap <= 1e-3,
            format!("largest gap {:.3e}", e.coeff_gap),
        );
    }
    let medians = ex::table2_medians(&t2);
    if let Some(&(m, med)) = medians.last() {
        report.check("table2_median_at_largest_m", med <= 0.10, format!("m = {m}: median {med:.4e}"));
    }
    report.check(
        "table2_medians_non_increasing",
        medians.windows(2).all(|w| w[1].1 <= w[0].1),
        format!("{medians:?}"),
    );
    print_verdicts(&report);
    ctx.finish(report, out, "example2_report.json")
}
