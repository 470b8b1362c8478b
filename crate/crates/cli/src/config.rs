use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use numeraire::constraints::ConstraintSet;
use numeraire::solver::SolveOptions;
use numeraire::spec_file::{parse_constraints, parse_spec, SpecFile};

/// Tolerance overrides must fall in this range.
pub const TOL_RANGE: (f64, f64) = (1e-14, 1e-2);

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] numeraire::Error),
}

#[derive(Debug, Parser)]
#[command(name = "numeraire", version, about = "Numéraire portfolios under (b, c, ν) characteristics")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Market specification (JSON).
    #[arg(long, global = true)]
    pub spec: Option<PathBuf>,

    /// Constraint preset (`unconstrained`, `long-only`, `simplex`) or a JSON
    /// file with `{"A": [[...]], "u": [...], "is_cone": bool}`; replaces the
    /// constraints of the spec.
    #[arg(long, global = true)]
    pub constraints: Option<String>,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Monte Carlo path count.
    #[arg(long, global = true)]
    pub paths: Option<usize>,

    /// Report destination; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Solver tolerance override `KEY=VALUE` (pg_tol, guard, approx_tol,
    /// cert_tol), repeatable.
    #[arg(long = "tol-override", global = true, value_name = "K=V")]
    pub tol_override: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structural checks of every segment and the constraint set.
    Validate,
    /// Searches each segment for an unbounded increasing profit.
    Nuip,
    /// Computes the numéraire portfolio and its integrability.
    Solve,
    /// Solves, then certifies `rel(π|ρ) ≤ tol` over feasible portfolios.
    Verify {
        /// Random feasible portfolios tested per segment.
        #[arg(long)]
        dirs: Option<usize>,
    },
    /// Simulates the numéraire wealth; with `--pi`, tests `W^π/W^ρ` for the
    /// supermartingale property.
    Simulate {
        /// Comparison portfolio, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        pi: Option<Vec<f64>>,

        #[arg(long, default_value_t = 8)]
        checkpoints: usize,

        /// Also write `path,step,time,wealth` rows of `W^ρ` to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Reference experiments.
    Demo {
        #[command(subcommand)]
        which: Demo,
    },
}

#[derive(Debug, Subcommand)]
pub enum Demo {
    /// Arbitrage in the three-dimensional Bessel market.
    Bessel {
        #[arg(long, default_value_t = 4000)]
        steps: usize,

        /// Number of step doublings after the base resolution.
        #[arg(long, default_value_t = 1)]
        refinements: usize,
    },
    /// Truncations `ρ 1{[0, τ_n]}` of a numéraire that is not integrable up
    /// to the horizon.
    Upbr {
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
        levels: Vec<u32>,
    },
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

impl GlobalArgs {
    pub fn spec_path(&self) -> Result<&Path, CliError> {
        self.spec.as_deref().ok_or_else(|| CliError::Usage("this command needs --spec PATH".into()))
    }

    /// The market and the effective constraint set. An empty polyhedron is
    /// rejected here.
    pub fn load(&self) -> Result<(SpecFile, ConstraintSet), CliError> {
        let spec = parse_spec(&read(self.spec_path()?)?)?;
        let d = spec.market.d;
        let constraints = match &self.constraints {
            None => spec.constraints.clone().unwrap_or_else(|| ConstraintSet::unconstrained(d)),
            Some(arg) if Path::new(arg).is_file() => parse_constraints(&read(Path::new(arg))?, d)?,
            Some(name) => ConstraintSet::preset(name, d)?,
        };
        constraints.project(&numeraire::Vector::zeros(d))?;
        Ok((spec, constraints))
    }

    pub fn solve_options(&self) -> Result<SolveOptions, CliError> {
        let mut opts = SolveOptions::default();
        for item in &self.tol_override {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--tol-override expects KEY=VALUE, got `{item}`")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("--tol-override {key}: `{value}` is not a number")))?;
            if !(TOL_RANGE.0..=TOL_RANGE.1).contains(&v) {
                return Err(CliError::Usage(format!(
                    "--tol-override {key}={v:e} is outside [{:e}, {:e}]",
                    TOL_RANGE.0, TOL_RANGE.1
                )));
            }
            let slot = match key.trim() {
                "pg_tol" => &mut opts.pg_tol,
                "guard" => &mut opts.guard,
                "approx_tol" => &mut opts.approx_tol,
                "cert_tol" => &mut opts.cert_tol,
                other => return Err(CliError::Usage(format!("unknown tolerance `{other}`"))),
            };
            *slot = v;
        }
        Ok(opts)
    }

    pub fn paths_or(&self, default: usize) -> Result<usize, CliError> {
        match self.paths {
            Some(0) => Err(CliError::Usage("--paths must be positive".into())),
            Some(n) => Ok(n),
            None => Ok(default),
        }
    }
}
