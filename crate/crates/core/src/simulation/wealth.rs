use rayon::prelude::*;
use serde::Serialize;

use super::paths::{PathBundle, SamplePath, Simulator};
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// `W_0 = 1, W_1, …, W_K` along one path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WealthPath {
    pub values: Vec<f64>,
}

impl WealthPath {
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("wealth path holds W_0")
    }
}

/// The same portfolio on each of `steps` intervals.
pub fn constant_strategy(pi: &Vector, steps: usize) -> Vec<Vector> {
    vec![pi.clone(); steps]
}

/// Discrete stochastic exponential of `π·X` along one path.
pub fn wealth_path(sim: &Simulator, path: &SamplePath, strategy: &[Vector]) -> Result<WealthPath> {
    if strategy.len() != sim.steps() {
        return Err(Error::LengthMismatch { expected: sim.steps(), got: strategy.len() });
    }
    let mut values = Vec::with_capacity(sim.steps() + 1);
    let mut w = 1.0;
    values.push(w);
    for (k, f) in sim.wealth_factors(path, strategy).into_iter().enumerate() {
        if f.is_nan() || f <= 0.0 {
            return Err(Error::Bankruptcy { path: path.index, step: k, factor: f });
        }
        w *= f;
        values.push(w);
    }
    Ok(WealthPath { values })
}

/// `W_k = W_{k−1} (1 + π_kᵀ ΔX_k)` on every path; any nonpositive factor is
/// an error naming the path and step.
pub fn wealth_from_increments(strategy: &[Vector], paths: &PathBundle) -> Result<Vec<WealthPath>> {
    paths.paths.par_iter().map(|p| wealth_path(&paths.simulator, p, strategy)).collect()
}

/// `max_k |E(Y)_k / E(R)_k / E(Z)_k − 1|` with `ΔZ = (ΔY − ΔR)/(1 + ΔR)`.
///
/// The residual is relative so that it does not grow with the level of the
/// exponentials.
pub fn relative_wealth_identity(y: &[f64], r: &[f64]) -> Result<f64> {
    if y.len() != r.len() {
        return Err(Error::LengthMismatch { expected: y.len(), got: r.len() });
    }
    let mut ey = 1.0;
    let mut er = 1.0;
    let mut ez = 1.0;
    let mut worst: f64 = 0.0;
    for (k, (&dy, &dr)) in y.iter().zip(r).enumerate() {
        if !(1.0 + dy > 0.0 && 1.0 + dr > 0.0) {
            return Err(Error::Domain(format!("increment at step {k} leaves 1 + Δ ≤ 0")));
        }
        ey *= 1.0 + dy;
        er *= 1.0 + dr;
        ez *= 1.0 + (dy - dr) / (1.0 + dr);
        worst = worst.max((ey / er / ez - 1.0).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::market::{JumpAtom, JumpMeasure, MarketSpec, OperationalClock, Triplet};
    use crate::simulation::paths::simulate_paths;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn zero_portfolio_keeps_unit_wealth() {
        let t = Triplet::diffusion(v(&[0.1]), Matrix::from_element(1, 1, 0.04)).unwrap();
        let m = MarketSpec::levy(&t, OperationalClock::uniform(1.0, 20).unwrap()).unwrap();
        let b = simulate_paths(&m, 10, 0).unwrap();
        let w = wealth_from_increments(&constant_strategy(&v(&[0.0]), 20), &b).unwrap();
        assert!(w.iter().all(|p| p.values.iter().all(|x| *x == 1.0)));
    }

    #[test]
    fn one_step_arithmetic() {
        // deterministic drift of 0.1 on one step
        let t = Triplet::diffusion(v(&[0.1]), Matrix::zeros(1, 1)).unwrap();
        let m = MarketSpec::levy(&t, OperationalClock::uniform(1.0, 1).unwrap()).unwrap();
        let b = simulate_paths(&m, 1, 0).unwrap();
        let w = wealth_from_increments(&[v(&[2.0])], &b).unwrap();
        assert!((w[0].terminal() - 1.2).abs() < 1e-15);
    }

    #[test]
    fn bankruptcy_is_reported() {
        let t = Triplet::new(
            v(&[0.0]),
            Matrix::zeros(1, 1),
            JumpMeasure::explicit(vec![JumpAtom::new(v(&[-0.5]), 5.0).unwrap()]),
            0.0,
        )
        .unwrap();
        let m = MarketSpec::levy(&t, OperationalClock::uniform(1.0, 100).unwrap()).unwrap();
        let b = simulate_paths(&m, 50, 0).unwrap();
        let e = wealth_from_increments(&constant_strategy(&v(&[3.0]), 100), &b).unwrap_err();
        assert!(matches!(e, Error::Bankruptcy { .. }));
    }

    #[test]
    fn gbm_strong_error_shrinks_with_refinement() {
        // W against exp(πbT − ½π²cT + πσB_T) on shared Brownian paths
        let (b, c, pi): (f64, f64, f64) = (0.05, 0.04, 1.5);
        let sigma: f64 = c.sqrt();
        let mut errors = Vec::new();
        for k in [64usize, 128, 256] {
            let mut total = 0.0;
            let n = 400;
            let t = Triplet::diffusion(v(&[b]), Matrix::from_element(1, 1, c)).unwrap();
            let m = MarketSpec::levy(&t, OperationalClock::uniform(1.0, k).unwrap()).unwrap();
            let sim = Simulator::new(&m, 3).unwrap();
            for i in 0..n {
                let p = sim.path(i);
                let bt: f64 = p.continuous.iter().map(|x| (x - b / k as f64) / sigma).sum();
                let exact = (pi * b - 0.5 * pi * pi * c + pi * sigma * bt).exp();
                let w = wealth_path(&sim, &p, &constant_strategy(&v(&[pi]), k)).unwrap().terminal();
                total += (w - exact).abs();
            }
            errors.push(total / n as f64);
        }
        assert!(errors[1] < errors[0] && errors[2] < errors[1], "{errors:?}");
    }

    #[test]
    fn identity_trivial_cases() {
        let y = [0.1, -0.2, 0.05];
        assert_eq!(relative_wealth_identity(&y, &[0.0; 3]).unwrap(), 0.0);
        assert!(relative_wealth_identity(&y, &y).unwrap() < 1e-15);
        assert!(relative_wealth_identity(&[-1.5], &[0.0]).is_err());
    }

    proptest! {
        #[test]
        fn identity_holds(pairs in prop::collection::vec((-0.3..0.3f64, -0.3..0.3f64), 1..400)) {
            let (y, r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert!(relative_wealth_identity(&y, &r).unwrap() <= 1e-12);
        }
    }
}
