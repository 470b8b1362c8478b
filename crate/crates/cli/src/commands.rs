use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use numeraire::arbitrage::{detect_uip, NuipReport};
use numeraire::constraints::ConstraintSet;
use numeraire::market::validate_triplet;
use numeraire::report::Report;
use numeraire::simulation::{
    bessel_arbitrage_demo, checkpoints, mean_se, median, simulate_paths, supermartingale_test, truncation_ladder,
    wealth_from_increments,
};
use numeraire::solver::{solve_numeraire, verify_solution, NumeraireSolution, SolveOptions};
use numeraire::spec_file::SpecFile;
use numeraire::{Error, Vector};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Cli, CliError, Command, Demo};

pub struct Outcome {
    pub report: Report,
    pub pass: bool,
    csv: Option<(PathBuf, String)>,
}

impl Outcome {
    pub fn write(&self, out: Option<&Path>) -> Result<(), CliError> {
        let write = |path: &Path, text: &str| {
            std::fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
        };
        if let Some((path, text)) = &self.csv {
            write(path, text)?;
        }
        let text = self.report.render();
        match out {
            Some(path) => write(path, &text),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

/// Errors that are findings about the market rather than bad input: they
/// end in a written report and exit status 2.
fn is_mathematical(e: &Error) -> bool {
    matches!(
        e,
        Error::Uip { .. }
            | Error::NonConvergence { .. }
            | Error::ApproximationNonconvergent { .. }
            | Error::Inadmissible(_)
            | Error::Bankruptcy { .. }
    )
}

fn error_value(e: &Error) -> Value {
    let message = e.to_string();
    match e {
        Error::Uip { segment, witness } => {
            json!({"kind": "uip", "message": message, "segment": segment, "witness": witness})
        }
        Error::NonConvergence { iterations, residual, last } => json!({
            "kind": "non_convergence", "message": message, "iterations": iterations, "residual": residual, "last": last
        }),
        Error::ApproximationNonconvergent { segment, n_max, trace } => json!({
            "kind": "approximation_nonconvergent", "message": message, "segment": segment, "n_max": n_max, "trace": trace
        }),
        Error::Inadmissible(v) => json!({"kind": "inadmissible", "message": message, "value": v}),
        Error::Bankruptcy { path, step, factor } => {
            json!({"kind": "bankruptcy", "message": message, "path": path, "step": step, "factor": factor})
        }
        _ => json!({"kind": "other", "message": message}),
    }
}

fn constraints_value(c: &ConstraintSet) -> Value {
    let rows: Vec<Vec<f64>> = c.a().row_iter().map(|r| r.iter().copied().collect()).collect();
    json!({"A": rows, "u": c.u().iter().copied().collect::<Vec<_>>(), "is_cone": c.is_cone()})
}

/// Report skeleton shared by every command.
fn header(
    cli: &Cli,
    name: &str,
    ctx: Option<(&SpecFile, &ConstraintSet)>,
    opts: &SolveOptions,
) -> Result<Report, CliError> {
    let mut r = Report::new().with("command", name)?;
    if let Some((spec, c)) = ctx {
        r.push("spec", &cli.global.spec.as_ref().map(|p| p.display().to_string()))?;
        r.push("d", &spec.market.d)?;
        r.push("segments", &spec.market.segments.len())?;
        r.push("steps", &spec.market.clock.len())?;
        r.push("constraints", &constraints_value(c))?;
    }
    r.push("seed", &cli.global.seed)?;
    r.push("options", opts)?;
    Ok(r)
}

fn finish(mut report: Report, pass: bool) -> Result<Outcome, CliError> {
    report.push("status", if pass { "pass" } else { "fail" })?;
    Ok(Outcome { report, pass, csv: None })
}

/// Solves, or turns a mathematical failure into a failing report.
fn solve_or_report(
    report: &mut Report,
    spec: &SpecFile,
    c: &ConstraintSet,
    opts: &SolveOptions,
) -> Result<Option<NumeraireSolution>, CliError> {
    match solve_numeraire(&spec.market, c, opts) {
        Ok(sol) => Ok(Some(sol)),
        Err(e) if is_mathematical(&e) => {
            report.push("error", &error_value(&e))?;
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn rho_table(sol: &NumeraireSolution) -> Vec<Vec<f64>> {
    sol.segments.iter().map(|s| s.rho.clone()).collect()
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let g = &cli.global;
    let opts = g.solve_options()?;
    match &cli.command {
        Command::Validate => validate(cli, &opts),
        Command::Nuip => nuip(cli, &opts),
        Command::Solve => solve(cli, &opts),
        Command::Verify { dirs } => verify(cli, &opts, dirs.unwrap_or(opts.cert_dirs)),
        Command::Simulate { pi, checkpoints, csv } => simulate(cli, &opts, pi.as_deref(), *checkpoints, csv.as_deref()),
        Command::Demo { which: Demo::Bessel { steps, refinements } } => {
            let n_paths = g.paths_or(200)?;
            let mut report = header(cli, "demo bessel", None, &opts)?;
            let r = bessel_arbitrage_demo(*steps, n_paths, g.seed, *refinements)?;
            report.push("bessel", &r)?;
            finish(report, r.pass)
        }
        Command::Demo { which: Demo::Upbr { levels } } => upbr(cli, &opts, levels),
    }
}

#[derive(Serialize)]
struct SegmentValidation {
    index: usize,
    from: usize,
    to: usize,
    #[serde(flatten)]
    checks: numeraire::market::ValidationReport,
}

fn validate(cli: &Cli, opts: &SolveOptions) -> Result<Outcome, CliError> {
    let (spec, c) = cli.global.load()?;
    let mut report = header(cli, "validate", Some((&spec, &c)), opts)?;
    let mut pass = true;
    let mut rows = Vec::new();
    for (i, s) in spec.market.segments.iter().enumerate() {
        let checks = validate_triplet(&s.raw_triplet()?);
        pass &= checks.passed();
        rows.push(SegmentValidation { index: i, from: s.from, to: s.to, checks });
    }
    report.push("validation", &rows)?;
    finish(report, pass)
}

#[derive(Serialize)]
struct SegmentNuip {
    index: usize,
    #[serde(flatten)]
    report: NuipReport,
}

fn nuip(cli: &Cli, opts: &SolveOptions) -> Result<Outcome, CliError> {
    let (spec, c) = cli.global.load()?;
    let mut report = header(cli, "nuip", Some((&spec, &c)), opts)?;
    let mut rows = Vec::new();
    for (i, s) in spec.market.segments.iter().enumerate() {
        rows.push(SegmentNuip { index: i, report: detect_uip(&s.raw_triplet()?, &c)? });
    }
    let pass = rows.iter().all(|r| !r.report.uip_exists);
    report.push("nuip", &rows)?;
    finish(report, pass)
}

fn solve(cli: &Cli, opts: &SolveOptions) -> Result<Outcome, CliError> {
    let (spec, c) = cli.global.load()?;
    let mut report = header(cli, "solve", Some((&spec, &c)), opts)?;
    let Some(sol) = solve_or_report(&mut report, &spec, &c, opts)? else {
        return finish(report, false);
    };
    report.push("rho", &rho_table(&sol))?;
    report.push("integrable", &sol.integrable())?;
    report.push("solution", &sol)?;
    finish(report, sol.integrable())
}

fn verify(cli: &Cli, opts: &SolveOptions, dirs: usize) -> Result<Outcome, CliError> {
    let (spec, c) = cli.global.load()?;
    let mut report = header(cli, "verify", Some((&spec, &c)), opts)?;
    let Some(sol) = solve_or_report(&mut report, &spec, &c, opts)? else {
        return finish(report, false);
    };
    let cert = verify_solution(&sol, &spec.market, &c, dirs, cli.global.seed, opts.cert_tol)?;
    report.push("rho", &rho_table(&sol))?;
    report.push("integrable", &sol.integrable())?;
    report.push("certificate", &cert)?;
    finish(report, cert.pass && sol.integrable())
}

#[derive(Serialize)]
struct WealthCheckpoint {
    step: usize,
    time: f64,
    median: f64,
    mean_log: f64,
    /// `E[1/W^ρ]`, which must not exceed 1.
    deflator_mean: f64,
    deflator_se: f64,
}

fn simulate(
    cli: &Cli,
    opts: &SolveOptions,
    pi: Option<&[f64]>,
    n_checkpoints: usize,
    csv: Option<&Path>,
) -> Result<Outcome, CliError> {
    let g = &cli.global;
    let (spec, c) = g.load()?;
    let n_paths = g.paths_or(1000)?;
    if n_checkpoints == 0 {
        return Err(CliError::Usage("--checkpoints must be positive".into()));
    }
    let pi = match pi {
        Some(p) if p.len() != spec.market.d => {
            return Err(CliError::Usage(format!(
                "--pi has {} entries, the market has {} assets",
                p.len(),
                spec.market.d
            )))
        }
        Some(p) => Some(Vector::from_row_slice(p)),
        None => None,
    };
    let mut report = header(cli, "simulate", Some((&spec, &c)), opts)?;
    report.push("paths", &n_paths)?;
    let Some(sol) = solve_or_report(&mut report, &spec, &c, opts)? else {
        return finish(report, false);
    };
    report.push("rho", &rho_table(&sol))?;
    let m = &spec.market;
    let bundle = simulate_paths(m, n_paths, g.seed)?;
    let wealth = match wealth_from_increments(&sol.rho_per_interval(), &bundle) {
        Ok(w) => w,
        Err(e) if is_mathematical(&e) => {
            report.push("error", &error_value(&e))?;
            return finish(report, false);
        }
        Err(e) => return Err(e.into()),
    };
    let mut deflator_ok = true;
    let cps: Vec<WealthCheckpoint> = checkpoints(m.clock.len(), n_checkpoints)
        .into_iter()
        .map(|k| {
            let w: Vec<f64> = wealth.iter().map(|p| p.values[k]).collect();
            let inv: Vec<f64> = w.iter().map(|x| 1.0 / x).collect();
            let logs: Vec<f64> = w.iter().map(|x| x.ln()).collect();
            let (deflator_mean, deflator_se) = mean_se(&inv);
            deflator_ok &= deflator_mean <= 1.0 + 3.0 * deflator_se;
            WealthCheckpoint {
                step: k,
                time: m.clock.times()[k],
                median: median(&w),
                mean_log: mean_se(&logs).0,
                deflator_mean,
                deflator_se,
            }
        })
        .collect();
    report.push("warnings", bundle.simulator.warnings())?;
    report.push("numeraire_wealth", &cps)?;
    report.push("deflator_ok", &deflator_ok)?;
    let mut pass = deflator_ok;
    if let Some(pi) = pi {
        match supermartingale_test(&pi, &sol, m, &c, n_paths, g.seed, n_checkpoints) {
            Ok(t) => {
                pass &= t.pass;
                report.push("supermartingale", &t)?;
            }
            Err(e) if is_mathematical(&e) => {
                report.push("error", &error_value(&e))?;
                pass = false;
            }
            Err(e) => return Err(e.into()),
        }
    }
    let mut outcome = finish(report, pass)?;
    if let Some(path) = csv {
        let mut text = String::from("path,step,time,wealth\n");
        for (i, p) in wealth.iter().enumerate() {
            for (k, w) in p.values.iter().enumerate() {
                let _ = writeln!(text, "{i},{k},{:.16e},{w:.16e}", m.clock.times()[k]);
            }
        }
        outcome.csv = Some((path.to_path_buf(), text));
    }
    Ok(outcome)
}

fn upbr(cli: &Cli, opts: &SolveOptions, levels: &[u32]) -> Result<Outcome, CliError> {
    let g = &cli.global;
    let (spec, c) = g.load()?;
    let n_paths = g.paths_or(2000)?;
    if levels.is_empty() {
        return Err(CliError::Usage("--levels needs at least one level".into()));
    }
    let mut report = header(cli, "demo upbr", Some((&spec, &c)), opts)?;
    let Some(sol) = solve_or_report(&mut report, &spec, &c, opts)? else {
        return finish(report, false);
    };
    report.push("integrability", &sol.integrability)?;
    match truncation_ladder(&spec.market, &sol, levels, n_paths, g.seed) {
        Ok(r) => {
            // singular markets must blow up along the ladder, integrable ones settle
            let pass = if r.integrable { r.stabilized } else { r.diverging };
            report.push("upbr", &r)?;
            finish(report, pass)
        }
        Err(e) if is_mathematical(&e) => {
            report.push("error", &error_value(&e))?;
            finish(report, false)
        }
        Err(e) => Err(e.into()),
    }
}
