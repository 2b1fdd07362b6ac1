//! Command-line surface: problem-file ingestion, analysis, solving,
//! controllability checking, simulation, and the two bundled worked
//! examples. Reports are emitted as JSON on stdout (and as files under
//! `--out-dir`); numeric tables go to CSV sidecars.
//!
//! Exit codes are a stable contract: 0 well-posed/success, 2 not
//! well-posed, 3 inconclusive, 4 solver failure, 64 usage/parse errors.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::config::Config;
use crate::controllability::{check_h3, ControllabilityReport};
use crate::error::Error;
use crate::pencil::{is_regular, kronecker_structure, Pencil, Regularity};
use crate::problem::{MatrixData, ProblemFile};
use crate::reduction::{assemble, check_assumptions, close_loop, ReducedLQ};
use crate::riccati::{
    feedback_finite, feedback_infinite, solve_are, solve_finite, solve_finite_adaptive,
    AreOptions, RiccatiSolution,
};
use crate::simulate::{
    scalar_closed_loop, simulate_closed_loop, HorizonKind, ReducedGain, SimConfig,
};
use crate::wellposed::{analyze, Status};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_NOT_WELL_POSED: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;
pub const EXIT_USAGE: i32 = 64;

pub static EX61_JSON: &str = include_str!("../data/ex61.json");
pub static EX62_JSON: &str = include_str!("../data/ex62.json");

#[derive(Parser, Debug)]
#[command(
    name = "singular-lq",
    about = "Analysis and LQ synthesis for stochastic descriptor systems",
    version
)]
pub struct CliArgs {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonOpts {
    /// Relative rank tolerance for canonical-form decisions.
    #[arg(long)]
    pub tol_rank: Option<f64>,
    /// Run rank/zero decisions in exact rational arithmetic.
    #[arg(long)]
    pub exact: bool,
    /// Directory for report.json and CSV sidecars.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Decide well-posedness and report pencil diagnostics.
    Analyze {
        path: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Solve the finite-horizon problem: Riccati grid, gains, value.
    SolveFinite {
        path: PathBuf,
        /// RK4 steps for the backward integration.
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Solve the infinite-horizon problem: stationary gain and value.
    SolveInfinite {
        path: PathBuf,
        /// Horizon increment between convergence checks.
        #[arg(long)]
        t_step: Option<f64>,
        /// Horizon cap.
        #[arg(long)]
        max_t: Option<f64>,
        /// Convergence threshold on the horizon increments.
        #[arg(long)]
        tol_conv: Option<f64>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Exact-controllability report for the reduced system.
    CheckControllability {
        path: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Monte Carlo validation of the synthesized feedback.
    Simulate {
        path: PathBuf,
        /// Number of simulated paths.
        #[arg(long)]
        paths: Option<usize>,
        /// Euler-Maruyama step size.
        #[arg(long)]
        dt: Option<f64>,
        /// Master seed for the per-path noise streams.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Re-run a bundled worked example and check its published values.
    Reproduce {
        /// Example name: ex61 | ex62.
        example: String,
        /// Override the bundled path count.
        #[arg(long)]
        paths: Option<usize>,
        /// Override the bundled step size.
        #[arg(long)]
        dt: Option<f64>,
    },
}

pub fn run(args: CliArgs) -> i32 {
    match dispatch(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Io(_)
        | Error::Json(_)
        | Error::DimensionMismatch(_)
        | Error::InvalidConfig(_) => EXIT_USAGE,
        _ => EXIT_SOLVER,
    }
}

fn dispatch(args: CliArgs) -> crate::Result<i32> {
    match args.command {
        Command::Analyze { path, common } => cmd_analyze(&path, &common),
        Command::SolveFinite {
            path,
            steps,
            common,
        } => cmd_solve(&path, &common, true, steps, None, None, None),
        Command::SolveInfinite {
            path,
            t_step,
            max_t,
            tol_conv,
            common,
        } => cmd_solve(&path, &common, false, None, t_step, max_t, tol_conv),
        Command::CheckControllability { path, common } => {
            cmd_check_controllability(&path, &common)
        }
        Command::Simulate {
            path,
            paths,
            dt,
            seed,
            common,
        } => cmd_simulate(&path, &common, paths, dt, seed),
        Command::Reproduce { example, paths, dt } => cmd_reproduce(&example, paths, dt),
    }
}

fn load_problem(path: &Path) -> crate::Result<ProblemFile> {
    let text = fs::read_to_string(path)?;
    ProblemFile::from_json(&text)
}

fn effective_config(problem: &ProblemFile, common: &CommonOpts) -> Config {
    let mut cfg = problem.config();
    if let Some(t) = common.tol_rank {
        cfg.tol_rank = t;
    }
    if common.exact {
        cfg.exact = true;
    }
    cfg
}

fn emit(common: &CommonOpts, report: &Value) -> crate::Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    println!("{text}");
    if let Some(dir) = &common.out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), text)?;
    }
    Ok(())
}

fn matrix_json(m: &DMatrix<f64>) -> Value {
    serde_json::to_value(MatrixData::from_dmatrix(m)).expect("matrix serializes")
}

fn status_json(status: Status) -> &'static str {
    match status {
        Status::WellPosed => "well_posed",
        Status::NotWellPosed => "not_well_posed",
        Status::Inconclusive => "inconclusive",
    }
}

fn cmd_analyze(path: &Path, common: &CommonOpts) -> crate::Result<i32> {
    let problem = load_problem(path)?;
    let cfg = effective_config(&problem, common);
    let sys = problem.system()?;
    let verdict = analyze(&sys, &cfg)?;

    let pencil = Pencil::new(sys.e.clone(), sys.a.clone())?;
    let regularity = is_regular(&pencil, &cfg);
    let kron = kronecker_structure(&pencil, &cfg);

    let report = json!({
        "status": status_json(verdict.status),
        "case_used": format!("{:?}", verdict.case_used),
        "failed_conditions": verdict
            .failed_conditions
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>(),
        "initial_condition_ok": verdict.initial_condition_ok,
        "certificate": verdict.form.as_ref().map(|f| json!({
            "m": matrix_json(&f.m),
            "n": matrix_json(&f.n),
            "h": f.h,
            "block_sizes": f.block_sizes,
        })),
        "pencil": {
            "regular": regularity.is_regular(),
            "witness_lambda": match &regularity {
                Regularity::Regular { witness_lambda, .. } => Some(*witness_lambda),
                _ => None,
            },
            "kronecker": {
                "zero_block": [kron.zero_block.0, kron.zero_block.1],
                "left_indices": kron.left_indices,
                "right_indices": kron.right_indices,
                "nilpotent_sizes": kron.nilpotent_sizes,
                "finite_block_order": kron.finite_block_order,
            },
        },
    });
    emit(common, &report)?;
    Ok(match verdict.status {
        Status::WellPosed => EXIT_OK,
        Status::NotWellPosed => EXIT_NOT_WELL_POSED,
        Status::Inconclusive => EXIT_INCONCLUSIVE,
    })
}

/// Resolve the reduced problem: through the supplied certificate when
/// present, otherwise through the canonical-form search with `K = 0`.
pub fn build_reduced(problem: &ProblemFile, cfg: &Config) -> crate::Result<ReducedLQ> {
    let sys = problem.system()?;
    let weights = problem.weights()?;
    match problem.certificate()? {
        Some((k, m1, n1, blocks)) => {
            assemble(&sys, &k, &m1, &n1, &blocks, &weights, cfg)
        }
        None => {
            let k = DMatrix::zeros(sys.r(), sys.n());
            let closed = close_loop(&sys, &k)?;
            let verdict = crate::wellposed::check_strongly_regular(&closed, cfg)?;
            match verdict.status {
                Status::WellPosed => {
                    let form = verdict.form.expect("well-posed verdict carries form");
                    crate::reduction::assemble_from_form(&sys, &k, &form, &weights, cfg)
                }
                Status::NotWellPosed => Err(Error::KConditionsFailed(
                    verdict
                        .failed_conditions
                        .iter()
                        .map(|c| c.to_string())
                        .collect(),
                )),
                Status::Inconclusive => Err(Error::KConditionsFailed(vec![
                    "system is not strongly regular; supply a certificate".into(),
                ])),
            }
        }
    }
}

fn write_riccati_csv(dir: &Path, sol: &RiccatiSolution) -> crate::Result<()> {
    let mut out = String::new();
    let h = sol.p.first().map(|p| p.nrows()).unwrap_or(0);
    let r = sol.psi.first().map(|p| p.nrows()).unwrap_or(0);
    let mut header = vec!["t".to_string()];
    for i in 0..h {
        for j in i..h {
            header.push(format!("p_{i}_{j}"));
        }
    }
    for i in 0..r {
        for j in 0..h {
            header.push(format!("psi_{i}_{j}"));
        }
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for (idx, t) in sol.grid.iter().enumerate() {
        let mut row = vec![format!("{t}")];
        for i in 0..h {
            for j in i..h {
                row.push(format!("{}", sol.p[idx][(i, j)]));
            }
        }
        for i in 0..r {
            for j in 0..h {
                row.push(format!("{}", sol.psi[idx][(i, j)]));
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(dir.join("riccati.csv"), out)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    path: &Path,
    common: &CommonOpts,
    finite: bool,
    steps: Option<usize>,
    t_step: Option<f64>,
    max_t: Option<f64>,
    tol_conv: Option<f64>,
) -> crate::Result<i32> {
    let problem = load_problem(path)?;
    let cfg = effective_config(&problem, common);
    let red = build_reduced(&problem, &cfg)?;
    let opts = problem.options.clone().unwrap_or_default();

    if finite {
        let horizon = red
            .weights
            .horizon
            .ok_or_else(|| Error::InvalidConfig("problem has no finite horizon T".into()))?;
        let n_steps = steps.or(opts.steps).unwrap_or(1024).max(16);
        let sol = solve_finite(&red, horizon, n_steps)?;
        let gains = feedback_finite(&sol, &red.k, &red.n1)?;
        let report = json!({
            "kind": "finite",
            "horizon": horizon,
            "steps": n_steps,
            "value": sol.value,
            "p0": matrix_json(&sol.p[0]),
            "gain_t0": matrix_json(&gains[0]),
            "max_residual": sol.stats.max_residual,
        });
        emit(common, &report)?;
        if let Some(dir) = &common.out_dir {
            write_riccati_csv(dir, &sol)?;
        }
    } else {
        let mut are_opts = AreOptions::default();
        if let Some(t) = t_step.or(opts.t_step) {
            are_opts.t_step = t;
        }
        if let Some(t) = max_t.or(opts.max_t) {
            are_opts.max_t = t;
        }
        if let Some(t) = tol_conv.or(opts.tol_conv) {
            are_opts.tol_conv = t;
        }
        let are = solve_are(&red, &are_opts)?;
        let gain = feedback_infinite(&are, &red)?;
        let report = json!({
            "kind": "infinite",
            "value": are.value,
            "p0": matrix_json(&are.p0),
            "lambda0": matrix_json(&are.lambda0),
            "gain": matrix_json(&gain),
            "residual": are.residual,
            "final_delta": are.final_delta,
            "horizons_used": are.horizons_used,
            "monotonicity_floor": are.monotonicity_floor,
        });
        emit(common, &report)?;
    }
    Ok(EXIT_OK)
}

fn controllability_json(rep: &ControllabilityReport) -> Value {
    json!({
        "rank_d1": rep.rank_d1,
        "terminal_controllable": rep.terminal_controllable,
        "reachable_dim": rep.reachable_dim,
        "pbh_verdict": rep.pbh_verdict,
        "subspace_verdict": rep.subspace_verdict,
        "h3_holds": rep.h3_holds,
        "normal_form": rep.normal_form.as_ref().map(|nf| json!({
            "m2": matrix_json(&nf.m2),
            "k1": matrix_json(&nf.k1),
            "p": matrix_json(&nf.p),
            "p1": matrix_json(&nf.p1),
            "b1tilde": matrix_json(&nf.b1tilde),
        })),
        "witness": rep.witness.as_ref().map(|w| json!({
            "s": [w.s.re, w.s.im],
            "s1": [w.s1.re, w.s1.im],
            "beta_re": w.beta_re.as_slice().to_vec(),
            "beta_im": w.beta_im.as_slice().to_vec(),
            "residual": w.residual,
        })),
    })
}

fn cmd_check_controllability(path: &Path, common: &CommonOpts) -> crate::Result<i32> {
    let problem = load_problem(path)?;
    let cfg = effective_config(&problem, common);
    let red = build_reduced(&problem, &cfg)?;
    let rep = check_h3(&red, &cfg);
    let report = controllability_json(&rep);
    emit(common, &report)?;
    Ok(if rep.h3_holds { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn sim_config(problem: &ProblemFile, red: &ReducedLQ) -> SimConfig {
    let opts = problem.options.clone().unwrap_or_default();
    let horizon = red
        .weights
        .horizon
        .or(opts.sim_horizon)
        .unwrap_or(10.0);
    SimConfig {
        dt: opts.dt.unwrap_or(1e-4),
        horizon,
        n_paths: opts.paths.unwrap_or(10_000),
        seed: opts.seed.unwrap_or(0),
    }
}

fn cmd_simulate(
    path: &Path,
    common: &CommonOpts,
    paths: Option<usize>,
    dt: Option<f64>,
    seed: Option<u64>,
) -> crate::Result<i32> {
    let problem = load_problem(path)?;
    let cfg = effective_config(&problem, common);
    let red = build_reduced(&problem, &cfg)?;
    let mut sim = sim_config(&problem, &red);
    if let Some(p) = paths {
        sim.n_paths = p;
    }
    if let Some(d) = dt {
        sim.dt = d;
    }
    if let Some(s) = seed {
        sim.seed = s;
    }

    let finite = red.weights.horizon.is_some();
    let (gain, kind, value) = if finite {
        let opts = problem.options.clone().unwrap_or_default();
        let sol = solve_finite(&red, red.weights.horizon.unwrap(), opts.steps.unwrap_or(1024))?;
        let value = sol.value;
        (ReducedGain::from_riccati(&sol), HorizonKind::Finite, value)
    } else {
        let are = solve_are(&red, &AreOptions::default())?;
        let value = are.value;
        (
            ReducedGain::from_are(&are, &red),
            HorizonKind::InfiniteTruncated,
            value,
        )
    };
    let res = simulate_closed_loop(&red, &gain, &sim, kind, false)?;
    let report = json!({
        "cost_mean": res.cost_mean,
        "cost_stderr": res.cost_stderr,
        "ci95": [res.ci95.0, res.ci95.1],
        "constraint_residual": res.constraint_residual,
        "truncation_tail": res.truncation_tail,
        "theoretical_value": value,
        "paths": sim.n_paths,
        "dt": sim.dt,
        "seed": sim.seed,
        "horizon": sim.horizon,
    });
    emit(common, &report)?;
    if let Some(dir) = &common.out_dir {
        fs::create_dir_all(dir)?;
        let rows = crate::simulate::sample_trajectory(&red, &gain, &sim, 0, 200)?;
        let n = red.sys.n();
        let r = red.r();
        let mut out = String::from("t");
        for i in 0..n {
            out.push_str(&format!(",x_{i}"));
        }
        for i in 0..r {
            out.push_str(&format!(",u_{i}"));
        }
        out.push('\n');
        for (t, x, u) in rows {
            out.push_str(&format!("{t}"));
            for v in x.iter() {
                out.push_str(&format!(",{v}"));
            }
            for v in u.iter() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        fs::write(dir.join("paths.csv"), out)?;
    }
    Ok(EXIT_OK)
}

struct CheckLine {
    name: String,
    passed: bool,
    detail: String,
}

fn print_checks(title: &str, checks: &[CheckLine]) -> i32 {
    println!("== {title} ==");
    let mut ok = true;
    for c in checks {
        println!(
            "[{}] {} — {}",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.detail
        );
        ok &= c.passed;
    }
    if ok {
        println!("all checks passed");
        EXIT_OK
    } else {
        println!("some checks FAILED");
        EXIT_CHECK_FAILED
    }
}

fn cmd_reproduce(example: &str, paths: Option<usize>, dt: Option<f64>) -> crate::Result<i32> {
    match example {
        "ex61" => reproduce_ex61(paths, dt),
        "ex62" => reproduce_ex62(paths, dt),
        other => Err(Error::InvalidConfig(format!(
            "unknown example '{other}' (expected ex61 or ex62)"
        ))),
    }
}

fn reproduce_ex61(paths: Option<usize>, dt: Option<f64>) -> crate::Result<i32> {
    let problem = ProblemFile::from_json(EX61_JSON)?;
    let cfg = problem.config();
    let sys = problem.system()?;
    let weights = problem.weights()?;
    let (k, m1, n1, blocks) = problem.certificate()?.expect("bundled file has certificate");
    let mut checks = Vec::new();

    let report = crate::reduction::verify_k(&sys, &k, &m1, &n1, &blocks, &cfg)?;
    checks.push(CheckLine {
        name: "pre-compensation certificate".into(),
        passed: report.all_passed(),
        detail: format!(
            "K = {:?}, conditions: {}",
            k.as_slice(),
            if report.all_passed() {
                "all hold".to_string()
            } else {
                format!("{:?}", report.failed())
            }
        ),
    });

    let red = assemble(&sys, &k, &m1, &n1, &blocks, &weights, &cfg)?;
    let assumptions = check_assumptions(&weights, &k, &red.n1, &red.b2, red.h(), &cfg);
    checks.push(CheckLine {
        name: "positivity assumptions".into(),
        passed: assumptions.h1,
        detail: assumptions.details.join("; "),
    });

    let horizon = weights.horizon.unwrap();
    let steps = problem
        .options
        .as_ref()
        .and_then(|o| o.steps)
        .unwrap_or(1024);
    let sol = solve_finite(&red, horizon, steps)?;
    let p0_adaptive = solve_finite_adaptive(&red, horizon, 1e-10)?;
    let max_dev = (&sol.p[0] - &p0_adaptive)
        .iter()
        .map(|v| v.abs())
        .fold(0.0_f64, f64::max);
    checks.push(CheckLine {
        name: "independent integrators agree".into(),
        passed: max_dev <= 1e-6,
        detail: format!("entrywise deviation {max_dev:.3e} (tolerance 1e-6)"),
    });
    println!("P(0) =\n{}", sol.p[0]);
    println!("value = {:.9}", sol.value);

    let mut sim = sim_config(&problem, &red);
    if let Some(p) = paths {
        sim.n_paths = p;
    }
    if let Some(d) = dt {
        sim.dt = d;
    }
    sim.horizon = horizon;
    let gain = ReducedGain::from_riccati(&sol);
    let res = simulate_closed_loop(&red, &gain, &sim, HorizonKind::Finite, false)?;
    // allowance for the Euler discretization bias on top of the MC band
    let tol = 3.0 * res.cost_stderr + 5e-3 * (1.0 + sol.value.abs());
    checks.push(CheckLine {
        name: "Monte Carlo cost matches value".into(),
        passed: (res.cost_mean - sol.value).abs() <= tol,
        detail: format!(
            "mc {:.6} vs value {:.6} (stderr {:.2e}, tolerance {:.2e})",
            res.cost_mean, sol.value, res.cost_stderr, tol
        ),
    });

    let gains = feedback_finite(&sol, &red.k, &red.n1)?;
    println!("feedback at t = 0: u = F x with F = {}", gains[0]);
    Ok(print_checks("worked example: finite horizon", &checks))
}

fn reproduce_ex62(paths: Option<usize>, dt: Option<f64>) -> crate::Result<i32> {
    let problem = ProblemFile::from_json(EX62_JSON)?;
    let cfg = problem.config();
    let red = build_reduced(&problem, &cfg)?;
    let mut checks = Vec::new();

    let rep = check_h3(&red, &cfg);
    checks.push(CheckLine {
        name: "exact controllability".into(),
        passed: rep.h3_holds,
        detail: format!(
            "rank(D1~) = {}, pbh = {}, subspace dim = {}",
            rep.rank_d1, rep.pbh_verdict, rep.reachable_dim
        ),
    });

    let opts = problem.options.clone().unwrap_or_default();
    let mut are_opts = AreOptions::default();
    if let Some(t) = opts.t_step {
        are_opts.t_step = t;
    }
    if let Some(t) = opts.max_t {
        are_opts.max_t = t;
    }
    if let Some(t) = opts.tol_conv {
        are_opts.tol_conv = t;
    }
    let are = solve_are(&red, &are_opts)?;
    let p0 = are.p0[(0, 0)];
    let closed_form = 2.0 * (2.0 * std::f64::consts::PI / 9.0).cos() - 1.0;
    checks.push(CheckLine {
        name: "stationary solution matches closed form".into(),
        passed: (p0 - closed_form).abs() <= 1e-8,
        detail: format!("p0 = {p0:.10} vs 2cos(2π/9) - 1 = {closed_form:.10}"),
    });
    let cubic = p0.powi(3) + 3.0 * p0 * p0 - 1.0;
    checks.push(CheckLine {
        name: "cubic residual".into(),
        passed: cubic.abs() <= 1e-10,
        detail: format!("p0^3 + 3 p0^2 - 1 = {cubic:.3e}"),
    });
    println!("lambda0 = {}", are.lambda0);

    let gain = ReducedGain::from_are(&are, &red);
    let (a, sigma) = scalar_closed_loop(&red, &gain)?;
    let drift_exp = a - 0.5 * sigma * sigma;
    checks.push(CheckLine {
        name: "closed-loop drift exponent".into(),
        passed: (drift_exp - (-1.7450)).abs() <= 5e-4,
        detail: format!("a - σ²/2 = {drift_exp:.5} vs -1.7450"),
    });
    checks.push(CheckLine {
        name: "closed-loop diffusion".into(),
        passed: (sigma - 0.6527).abs() <= 5e-4,
        detail: format!("σ = {sigma:.5} vs 0.6527"),
    });

    let mut sim = sim_config(&problem, &red);
    if let Some(p) = paths {
        sim.n_paths = p;
    }
    if let Some(d) = dt {
        sim.dt = d;
    }
    let res = simulate_closed_loop(&red, &gain, &sim, HorizonKind::InfiniteTruncated, false)?;
    let target = are.value;
    let half = 2.576 * res.cost_stderr;
    checks.push(CheckLine {
        name: "Monte Carlo cost 99% CI contains value".into(),
        passed: (res.cost_mean - target).abs() <= half,
        detail: format!(
            "mc {:.6} ± {:.6} vs value {:.6} (tail est {:.1e})",
            res.cost_mean,
            half,
            target,
            res.truncation_tail.unwrap_or(0.0)
        ),
    });

    Ok(print_checks("worked example: infinite horizon", &checks))
}
