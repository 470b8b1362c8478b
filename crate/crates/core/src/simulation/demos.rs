use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::paths::{step_rng, Simulator};
use super::stats::{mean_se, median, normal_cdf, normal_pdf, quantile};
use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::market::MarketSpec;
use crate::solver::{solve_numeraire, NumeraireSolution, SolveOptions};

/// Positivity floor for the Euler scheme of the Bessel process.
pub const BESSEL_FLOOR: f64 = 1e-6;

/// Tolerance on `|W_1 − 1/Φ(1)|` at the base resolution.
pub const BESSEL_TOLERANCE: f64 = 1e-2;

/// Minimum `err(N)/err(2N)` accepted as first-order convergence.
pub const BESSEL_MIN_RATIO: f64 = 1.6;

/// `1/Φ(1)`, the terminal wealth of the arbitrage in the Bessel market.
pub fn bessel_target() -> f64 {
    1.0 / normal_cdf(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BesselLevel {
    pub steps: usize,
    pub mean_abs_error: f64,
    pub max_abs_error: f64,
    pub w1_mean: f64,
    pub w1_min: f64,
    pub w1_max: f64,
    /// Smallest wealth seen on any path at any step.
    pub min_wealth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BesselReport {
    pub target: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub levels: Vec<BesselLevel>,
    /// `err(N)/err(2N)` between consecutive levels.
    pub error_ratios: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

/// `(W_1, min_t W_t)` for `dS = dt/S + dB` on `[0, 1]` with the hedge
/// `π = S ∂_x log F`, `F(t, x) = Φ(x/√(1−t))/Φ(1)`.
///
/// `S` is stepped by Euler; `W` by Milstein, whose correction uses
/// `∂_x(W π/S) = W F_xx/F`.
fn bessel_path(db: &[f64]) -> (f64, f64) {
    let n = db.len();
    let dt = 1.0 / n as f64;
    let mut s: f64 = 1.0;
    let mut w: f64 = 1.0;
    let mut w_min = w;
    for (k, &b) in db.iter().enumerate() {
        let tau = 1.0 - k as f64 * dt;
        let root = tau.sqrt();
        let u = s / root;
        let mills = normal_pdf(u) / normal_cdf(u);
        let fx = mills / root;
        let fxx = -u * mills / tau;
        let ds = dt / s + b;
        w *= 1.0 + fx * ds + 0.5 * fxx * (b * b - dt);
        s = (s + ds).max(BESSEL_FLOOR);
        w_min = w_min.min(w);
    }
    (w, w_min)
}

/// Runs the Bessel arbitrage at `steps·2^l` steps for `l = 0..=refinements`
/// on shared Brownian paths (coarse increments are sums of fine ones).
pub fn bessel_arbitrage_demo(steps: usize, n_paths: usize, seed: u64, refinements: usize) -> Result<BesselReport> {
    if steps < 1000 {
        return Err(Error::Domain(format!("the Bessel demo needs at least 1000 steps, got {steps}")));
    }
    if n_paths == 0 {
        return Err(Error::Domain("the Bessel demo needs at least one path".into()));
    }
    let fine = steps << refinements;
    let target = bessel_target();
    // per path: (W_1, min W) at each level, finest last
    let results: Vec<Vec<(f64, f64)>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = step_rng(seed, p, 0);
            let sd = (1.0 / fine as f64).sqrt();
            let mut db: Vec<f64> = (0..fine).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
            let mut out = vec![bessel_path(&db)];
            for _ in 0..refinements {
                db = db.chunks(2).map(|c| c[0] + c[1]).collect();
                out.push(bessel_path(&db));
            }
            out.reverse();
            out
        })
        .collect();
    let levels: Vec<BesselLevel> = (0..=refinements)
        .map(|l| {
            let w1: Vec<f64> = results.iter().map(|r| r[l].0).collect();
            let errors: Vec<f64> = w1.iter().map(|w| (w - target).abs()).collect();
            BesselLevel {
                steps: steps << l,
                mean_abs_error: mean_se(&errors).0,
                max_abs_error: errors.iter().copied().fold(0.0, f64::max),
                w1_mean: mean_se(&w1).0,
                w1_min: w1.iter().copied().fold(f64::INFINITY, f64::min),
                w1_max: w1.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                min_wealth: results.iter().map(|r| r[l].1).fold(f64::INFINITY, f64::min),
            }
        })
        .collect();
    let error_ratios: Vec<f64> = levels.windows(2).map(|w| w[0].mean_abs_error / w[1].mean_abs_error).collect();
    let pass = levels[0].max_abs_error <= BESSEL_TOLERANCE
        && levels.iter().all(|l| l.min_wealth > 0.0)
        && error_ratios.iter().all(|r| *r >= BESSEL_MIN_RATIO);
    Ok(BesselReport { target, n_paths, seed, levels, error_ratios, tolerance: BESSEL_TOLERANCE, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpbrLevel {
    pub n: u32,
    /// Clock time where `ρ_n` stops investing.
    pub tau: f64,
    pub stop_step: usize,
    pub median: f64,
    pub p90: f64,
    pub mean_log_wealth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpbrReport {
    pub integrable: bool,
    pub n_paths: usize,
    pub seed: u64,
    pub levels: Vec<UpbrLevel>,
    pub strictly_increasing: bool,
    /// Last median over first median.
    pub growth_factor: f64,
    pub max_successive_ratio: f64,
    /// Medians strictly increase over at least four levels and grow more than tenfold.
    pub diverging: bool,
    /// Successive medians differ by less than 10%.
    pub stabilized: bool,
}

/// Wealth of `ρ_n = ρ 1{[0, τ_n]}`, where `τ_n` is the first clock time at
/// which the `ψ` partial integral reaches `n`. Level `0` is the trivial
/// truncation (`W ≡ 1`).
pub fn truncation_ladder(
    m: &MarketSpec,
    sol: &NumeraireSolution,
    levels: &[u32],
    n_paths: usize,
    seed: u64,
) -> Result<UpbrReport> {
    let partials = &sol.integrability.psi_integral.partials;
    let stops: Vec<usize> = levels
        .iter()
        .map(|&n| match n {
            0 => 0,
            // invest on interval k while the partial before it is below n
            _ => 1 + partials[..partials.len() - 1].iter().filter(|p| **p < n as f64).count(),
        })
        .collect();
    let sim = Simulator::new(m, seed)?;
    let rho = sol.rho_per_interval();
    let logs: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let path = sim.path(i);
            let f = sim.wealth_factors(&path, &rho);
            let mut cum = Vec::with_capacity(f.len() + 1);
            let mut acc = 0.0;
            cum.push(acc);
            for (k, x) in f.iter().enumerate() {
                if x.is_nan() || *x <= 0.0 {
                    return Err(Error::Bankruptcy { path: i, step: k, factor: *x });
                }
                acc += x.ln();
                cum.push(acc);
            }
            Ok(stops.iter().map(|&s| cum[s]).collect())
        })
        .collect::<Result<_>>()?;
    let out: Vec<UpbrLevel> = levels
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let lw: Vec<f64> = logs.iter().map(|l| l[j]).collect();
            let w: Vec<f64> = lw.iter().map(|x| x.exp()).collect();
            UpbrLevel {
                n,
                tau: m.clock.times()[stops[j]],
                stop_step: stops[j],
                median: median(&w),
                p90: quantile(&mut w.clone(), 0.9),
                mean_log_wealth: mean_se(&lw).0,
            }
        })
        .collect();
    let strictly_increasing = out.windows(2).all(|w| w[1].median > w[0].median);
    let growth_factor = match (out.first(), out.last()) {
        (Some(a), Some(b)) => b.median / a.median,
        _ => f64::NAN,
    };
    let max_successive_ratio =
        out.windows(2).map(|w| (w[1].median / w[0].median).max(w[0].median / w[1].median)).fold(1.0, f64::max);
    Ok(UpbrReport {
        integrable: sol.integrable(),
        n_paths,
        seed,
        diverging: strictly_increasing && out.len() >= 4 && growth_factor > 10.0,
        stabilized: max_successive_ratio < 1.1,
        levels: out,
        strictly_increasing,
        growth_factor,
        max_successive_ratio,
    })
}

/// The truncation ladder on a market whose numéraire is not integrable up
/// to the horizon.
pub fn upbr_demo(
    m: &MarketSpec,
    c: &ConstraintSet,
    levels: &[u32],
    n_paths: usize,
    seed: u64,
    opts: &SolveOptions,
) -> Result<UpbrReport> {
    let sol = solve_numeraire(m, c, opts)?;
    if sol.integrable() {
        return Err(Error::NotSingular);
    }
    truncation_ladder(m, &sol, levels, n_paths, seed)
}

/// Clock `1 − 2^{−j/per_octave}`, `j = 0..=octaves·per_octave`.
pub fn geometric_clock_times(octaves: usize, per_octave: usize) -> Vec<f64> {
    (0..=octaves * per_octave).map(|j| 1.0 - (-(j as f64) / per_octave as f64).exp2()).collect()
}
