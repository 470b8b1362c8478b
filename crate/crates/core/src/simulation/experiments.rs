use rayon::prelude::*;
use serde::Serialize;

use super::paths::Simulator;
use super::stats::{mean_se, quantile};
use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::market::MarketSpec;
use crate::solver::{rel_rate, NumeraireSolution};

/// Checkpoint step indices `round(i K / n)` for `i = 1..=n`.
pub fn checkpoints(steps: usize, n: usize) -> Vec<usize> {
    let n = n.clamp(1, steps.max(1));
    let mut out: Vec<usize> = (1..=n).map(|i| ((i * steps) as f64 / n as f64).round() as usize).collect();
    out.dedup();
    out
}

/// Log of `W^π_k / W^ρ_k` at the given steps for one path.
fn log_ratio_at(sim: &Simulator, path_index: usize, pi: &[Vector], rho: &[Vector], at: &[usize]) -> Result<Vec<f64>> {
    let path = sim.path(path_index);
    let fp = sim.wealth_factors(&path, pi);
    let fr = sim.wealth_factors(&path, rho);
    let mut out = Vec::with_capacity(at.len());
    let mut acc = 0.0;
    let mut next = 0;
    for k in 0..sim.steps() {
        if fp[k].is_nan() || fp[k] <= 0.0 {
            return Err(Error::Bankruptcy { path: path_index, step: k, factor: fp[k] });
        }
        if fr[k].is_nan() || fr[k] <= 0.0 {
            return Err(Error::Bankruptcy { path: path_index, step: k, factor: fr[k] });
        }
        acc += fp[k].ln() - fr[k].ln();
        while next < at.len() && at[next] == k + 1 {
            out.push(acc);
            next += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    pub step: usize,
    pub time: f64,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupermartingaleReport {
    pub pi: Vec<f64>,
    pub pi_in_constraints: bool,
    pub n_paths: usize,
    pub seed: u64,
    pub checkpoints: Vec<Checkpoint>,
    /// First checkpoint index where a test failed.
    pub failed_at: Option<usize>,
    pub pass: bool,
}

/// Estimates `E[W^π_t / W^ρ_t]` at evenly spaced checkpoints. Passes when
/// each mean is at most the previous one plus 3 pooled standard errors and
/// at most `1 + 3 SE`.
pub fn supermartingale_test(
    pi: &Vector,
    sol: &NumeraireSolution,
    m: &MarketSpec,
    c: &ConstraintSet,
    n_paths: usize,
    seed: u64,
    n_checkpoints: usize,
) -> Result<SupermartingaleReport> {
    let sim = Simulator::new(m, seed)?;
    let steps = sim.steps();
    let rho = sol.rho_per_interval();
    let pis = vec![pi.clone(); steps];
    let at = checkpoints(steps, n_checkpoints);
    let logs: Vec<Vec<f64>> =
        (0..n_paths).into_par_iter().map(|i| log_ratio_at(&sim, i, &pis, &rho, &at)).collect::<Result<_>>()?;
    let mut cps = Vec::with_capacity(at.len());
    let mut failed_at = None;
    let (mut prev_mean, mut prev_se) = (1.0, 0.0);
    for (j, &k) in at.iter().enumerate() {
        let ratios: Vec<f64> = logs.iter().map(|l| l[j].exp()).collect();
        let (mean, se) = mean_se(&ratios);
        let pooled = (se * se + prev_se * prev_se).sqrt();
        if failed_at.is_none() && (mean > prev_mean + 3.0 * pooled || mean > 1.0 + 3.0 * se) {
            failed_at = Some(j);
        }
        cps.push(Checkpoint { step: k, time: m.clock.times()[k], mean, se });
        prev_mean = mean;
        prev_se = se;
    }
    Ok(SupermartingaleReport {
        pi: pi.iter().copied().collect(),
        pi_in_constraints: c.contains(pi, 1e-9),
        n_paths,
        seed,
        checkpoints: cps,
        pass: failed_at.is_none(),
        failed_at,
    })
}

/// `q_a(y) = −log a + (1 − 1/a) y` on `[0, a)` and `y − 1 − log y` on `[a, ∞)`.
pub fn q_a(y: f64, a: f64) -> Result<f64> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::Domain(format!("q_a needs 0 < a < 1, got {a}")));
    }
    if !y.is_finite() || y < 0.0 {
        return Err(Error::Domain(format!("q_a needs a finite y ≥ 0, got {y}")));
    }
    Ok(if y < a { -a.ln() + (1.0 - 1.0 / a) * y } else { y - 1.0 - y.ln() })
}

/// `h^π = −rel(π|ρ) + ½(π−ρ)ᵀc(π−ρ) + Σ q_a((1+πᵀx_j)/(1+ρᵀx_j)) λ_j`.
pub fn deviation_rate(pi: &Vector, rho: &Vector, t: &crate::market::Triplet, a: f64) -> Result<f64> {
    let delta = pi - rho;
    let mut h = -rel_rate(pi, rho, t)? + 0.5 * delta.dot(&(&t.c * &delta));
    for at in &t.nu.atoms {
        let y = (1.0 + pi.dot(&at.x)) / (1.0 + rho.dot(&at.x));
        h += q_a(y.max(0.0), a)? * at.intensity;
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationOptions {
    pub epsilon: f64,
    pub h_floor: f64,
    pub checkpoints: usize,
    pub percentile: f64,
}

impl Default for DeviationOptions {
    fn default() -> Self {
        Self { epsilon: 0.15, h_floor: 5.0, checkpoints: 8, percentile: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationCheckpoint {
    pub time: f64,
    pub h_total: f64,
    pub mean_log_ratio: f64,
    pub max_abs_log_ratio: f64,
    /// Percentile of `log(W^π/W^ρ)/H^π` across paths; absent when `H^π = 0`.
    pub normalized_percentile: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviationVerdict {
    Deviation {
        threshold: f64,
        pass: bool,
    },
    /// `π − ρ ∈ N`: the log-ratio has to stay bounded.
    NoDeviation {
        bound: f64,
        pass: bool,
    },
    /// `H^π_T` below the floor; the asymptotic statement is not tested.
    InsufficientHorizon {
        h_total: f64,
        floor: f64,
    },
}

impl DeviationVerdict {
    pub fn pass(&self) -> bool {
        matches!(self, Self::Deviation { pass: true, .. } | Self::NoDeviation { pass: true, .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    pub a: f64,
    pub h_rate: f64,
    pub checkpoints: Vec<DeviationCheckpoint>,
    /// Percentile of the normalized log-ratio under the exact lognormal law
    /// (continuous markets only).
    pub lognormal_percentile: Option<f64>,
    pub verdict: DeviationVerdict,
}

/// Standard normal quantile by bisection on `Φ`.
fn normal_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if super::stats::normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Checks `limsup (1/H^π_t) log(W^π_t/W^ρ_t) ≤ −1` at the horizon of a
/// single-triplet market: the cross-path percentile of the normalized
/// log-ratio must be at most `−1 + ε`.
pub fn asymptotic_deviation(
    pi: &Vector,
    sol: &NumeraireSolution,
    m: &MarketSpec,
    a: f64,
    n_paths: usize,
    seed: u64,
    opts: &DeviationOptions,
) -> Result<DeviationReport> {
    if m.segments.len() != 1 {
        return Err(Error::InvalidMarket("asymptotic deviation needs a single-triplet market".into()));
    }
    let t = m.segments[0].raw_triplet()?;
    let rho = sol.rho(0);
    let h_rate = deviation_rate(pi, &rho, &t, a)?;
    let sim = Simulator::new(m, seed)?;
    let steps = sim.steps();
    let at = checkpoints(steps, opts.checkpoints);
    let pis = vec![pi.clone(); steps];
    let rhos = vec![rho.clone(); steps];
    let logs: Vec<Vec<f64>> =
        (0..n_paths).into_par_iter().map(|i| log_ratio_at(&sim, i, &pis, &rhos, &at)).collect::<Result<_>>()?;
    let no_deviation = h_rate <= 1e-14;
    let mut cps = Vec::with_capacity(at.len());
    for (j, &k) in at.iter().enumerate() {
        let time = m.clock.times()[k];
        let h_total = h_rate * time;
        let column: Vec<f64> = logs.iter().map(|l| l[j]).collect();
        let (mean_log_ratio, _) = mean_se(&column);
        let max_abs_log_ratio = column.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        let normalized_percentile = (!no_deviation).then(|| {
            let mut normalized: Vec<f64> = column.iter().map(|x| x / h_total).collect();
            quantile(&mut normalized, opts.percentile)
        });
        cps.push(DeviationCheckpoint { time, h_total, mean_log_ratio, max_abs_log_ratio, normalized_percentile });
    }
    let last = cps.last().expect("at least one checkpoint");
    let lognormal_percentile = (t.nu.atoms.is_empty() && !no_deviation).then(|| {
        let delta = pi - &rho;
        let horizon = last.time;
        let mean = (delta.dot(&t.b) - 0.5 * (pi.dot(&(&t.c * pi)) - rho.dot(&(&t.c * &rho)))) * horizon;
        let sd = (delta.dot(&(&t.c * &delta)) * horizon).sqrt();
        (mean + normal_quantile(opts.percentile) * sd) / last.h_total
    });
    let verdict = if no_deviation {
        let bound = 1e-9 * (1.0 + steps as f64);
        DeviationVerdict::NoDeviation { bound, pass: cps.iter().all(|c| c.max_abs_log_ratio <= bound) }
    } else if last.h_total < opts.h_floor {
        DeviationVerdict::InsufficientHorizon { h_total: last.h_total, floor: opts.h_floor }
    } else {
        let threshold = -1.0 + opts.epsilon;
        DeviationVerdict::Deviation { threshold, pass: last.normalized_percentile.is_some_and(|q| q <= threshold) }
    };
    Ok(DeviationReport { a, h_rate, checkpoints: cps, lognormal_percentile, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::market::{JumpAtom, JumpMeasure, OperationalClock, Triplet};
    use crate::solver::{solve_numeraire, SolveOptions};
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    fn gbm(horizon: f64, steps: usize) -> (MarketSpec, NumeraireSolution) {
        let c = 0.04;
        let t = Triplet::diffusion(v(&[c * 1.0]), Matrix::from_element(1, 1, c)).unwrap();
        let m = MarketSpec::levy(&t, OperationalClock::uniform(horizon, steps).unwrap()).unwrap();
        let sol = solve_numeraire(&m, &ConstraintSet::unconstrained(1), &SolveOptions::default()).unwrap();
        (m, sol)
    }

    #[test]
    fn checkpoint_grid() {
        assert_eq!(checkpoints(128, 8), vec![16, 32, 48, 64, 80, 96, 112, 128]);
        assert_eq!(checkpoints(3, 8), vec![1, 2, 3]);
    }

    #[test]
    fn numeraire_against_itself_is_exactly_one() {
        let (m, sol) = gbm(1.0, 32);
        let cs = ConstraintSet::unconstrained(1);
        let r = supermartingale_test(&sol.rho(0), &sol, &m, &cs, 200, 1, 8).unwrap();
        assert!(r.pass);
        assert!(r.checkpoints.iter().all(|c| c.mean == 1.0 && c.se == 0.0));
    }

    #[test]
    fn deflator_is_supermartingale() {
        let (m, sol) = gbm(1.0, 64);
        let r = supermartingale_test(&v(&[0.0]), &sol, &m, &ConstraintSet::unconstrained(1), 4000, 2, 8).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn positive_rel_fails() {
        let t = Triplet::diffusion(v(&[0.5]), Matrix::from_element(1, 1, 0.1)).unwrap();
        let m = MarketSpec::levy(&t, OperationalClock::uniform(1.0, 64).unwrap()).unwrap();
        let cs = ConstraintSet::simplex(1);
        let sol = solve_numeraire(&m, &cs, &SolveOptions::default()).unwrap();
        assert!((sol.rho(0)[0] - 1.0).abs() < 1e-9);
        let r = supermartingale_test(&v(&[5.0]), &sol, &m, &cs, 4000, 3, 8).unwrap();
        assert!(!r.pass);
        assert!(!r.pi_in_constraints);
    }

    #[test]
    fn q_a_values() {
        let a = 0.3;
        assert_eq!(q_a(1.0, a).unwrap(), 0.0);
        let left = -a.ln() + (1.0 - 1.0 / a) * a;
        assert!((q_a(a, a).unwrap() - left).abs() < 1e-15);
        assert!((q_a(a, a).unwrap() - (a - 1.0 - a.ln())).abs() < 1e-15);
        let h = 1e-7;
        let d_left = (q_a(a - h, a).unwrap() - q_a(a - 2.0 * h, a).unwrap()) / h;
        let d_right = (q_a(a + 2.0 * h, a).unwrap() - q_a(a + h, a).unwrap()) / h;
        assert!((d_left - (1.0 - 1.0 / a)).abs() < 1e-5 && (d_right - (1.0 - 1.0 / a)).abs() < 1e-5);
        assert!(q_a(0.5, 1.2).is_err() && q_a(-1.0, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn q_a_increases_to_q0(y in 1e-6..20.0f64, a1 in 0.01..0.99f64, a2 in 0.01..0.99f64) {
            let (small, big) = if a1 < a2 { (a1, a2) } else { (a2, a1) };
            let q0 = y - 1.0 - y.ln();
            prop_assert!(q_a(y, small).unwrap() >= q_a(y, big).unwrap() - 1e-12);
            prop_assert!(q_a(y, small).unwrap() <= q0 + 1e-12);
            prop_assert!(q_a(y, big).unwrap() >= 0.0);
        }

        #[test]
        fn h_is_convex(p1 in -1.0..1.0f64, p2 in -1.0..1.0f64, l in 0.0..1.0f64) {
            let t = Triplet::new(
                v(&[0.1]),
                Matrix::from_element(1, 1, 0.05),
                JumpMeasure::explicit(vec![JumpAtom::new(v(&[0.4]), 1.0).unwrap(), JumpAtom::new(v(&[-0.6]), 0.5).unwrap()]),
                0.0,
            ).unwrap();
            let rho = v(&[0.3]);
            let a = 0.2;
            let mid = v(&[l * p1 + (1.0 - l) * p2]);
            let lhs = deviation_rate(&mid, &rho, &t, a).unwrap();
            let rhs = l * deviation_rate(&v(&[p1]), &rho, &t, a).unwrap() + (1.0 - l) * deviation_rate(&v(&[p2]), &rho, &t, a).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn gbm_rate_is_half_quadratic() {
        let c = Matrix::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.09]);
        let rho = v(&[1.0, -0.5]);
        let t = Triplet::diffusion(&c * &rho, c.clone()).unwrap();
        let pi = v(&[0.2, 0.7]);
        let d = &pi - &rho;
        assert!((deviation_rate(&pi, &rho, &t, 0.5).unwrap() - 0.5 * d.dot(&(&c * &d))).abs() < 1e-15);
    }

    #[test]
    fn no_deviation_branch() {
        let (m, sol) = gbm(10.0, 50);
        let r = asymptotic_deviation(&sol.rho(0), &sol, &m, 0.5, 50, 0, &DeviationOptions::default()).unwrap();
        assert!(matches!(r.verdict, DeviationVerdict::NoDeviation { pass: true, .. }));
    }

    #[test]
    fn short_horizon_is_not_tested() {
        let (m, sol) = gbm(1.0, 50);
        let r = asymptotic_deviation(&v(&[0.0]), &sol, &m, 0.5, 50, 0, &DeviationOptions::default()).unwrap();
        assert!(matches!(r.verdict, DeviationVerdict::InsufficientHorizon { .. }));
        assert!(!r.verdict.pass());
    }
}
