//! Unbounded increasing profits: immediate-arbitrage directions that are
//! also cone points of the constraints.

use serde::Serialize;

use crate::constraints::{null_space, ConstraintSet, NullSpace};
use crate::error::{Error, Result};
use crate::linalg::{self, Vector};
use crate::lp::{Cmp, LinearProgram, LpOutcome};
use crate::market::Triplet;

/// Feasibility tolerance for cone and LP checks.
pub const UIP_TOL: f64 = 1e-9;

/// Relative distance from `N` above which a direction is a genuine investment.
pub const NULL_DISTANCE_REL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArbitrageConditions {
    /// `cξ = 0`
    pub no_diffusion: bool,
    /// `ξᵀx_j ≥ 0` for every atom
    pub no_negative_jumps: bool,
    /// `ξᵀb − Σ ξᵀx_j 1{|x_j|≤1} λ_j ≥ 0`
    pub nonnegative_drift: bool,
    /// `ξ ∉ N`
    pub outside_null_space: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArbitrageCheck {
    pub result: bool,
    pub conditions: ArbitrageConditions,
    pub note: Option<String>,
}

fn truncated_drift(t: &Triplet) -> Vector {
    &t.b - t.nu.small_jump_mean(t.d())
}

fn check_with(xi: &Vector, t: &Triplet, null: &NullSpace) -> ArbitrageCheck {
    let c = linalg::clip_psd(&t.c);
    let scale = xi.norm().max(1.0);
    let no_diffusion = (&c * xi).norm() <= UIP_TOL * scale;
    let no_negative_jumps = t.nu.atoms.iter().all(|a| a.x.dot(xi) >= -UIP_TOL * scale);
    let nonnegative_drift = truncated_drift(t).dot(xi) >= -UIP_TOL * scale;
    let norm = xi.norm();
    let outside_null_space = norm > 0.0 && null.distance(xi) > NULL_DISTANCE_REL * norm;
    let note = (norm == 0.0).then(|| "zero vector lies in N".to_string());
    ArbitrageCheck {
        result: no_diffusion && no_negative_jumps && nonnegative_drift && outside_null_space,
        conditions: ArbitrageConditions { no_diffusion, no_negative_jumps, nonnegative_drift, outside_null_space },
        note,
    }
}

/// Whether `ξ` is an immediate arbitrage opportunity for `t`.
pub fn is_immediate_arbitrage(xi: &Vector, t: &Triplet) -> ArbitrageCheck {
    check_with(xi, t, &null_space(t))
}

/// `ξᵀb + Σ λ_j ξᵀx_j/(1+ξᵀx_j) 1{|x_j|>1}`; `ξ` lies in `I^a` once this is `≥ 1/a`.
pub fn arbitrage_level(xi: &Vector, t: &Triplet) -> f64 {
    let mut z = xi.dot(&t.b);
    for a in t.nu.atoms.iter().filter(|a| !a.is_small()) {
        let s = xi.dot(&a.x);
        z += a.intensity * s / (1.0 + s);
    }
    z
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuipReport {
    pub uip_exists: bool,
    pub witness: Option<Vec<f64>>,
    pub lp_value: f64,
    pub checks: Option<ArbitrageConditions>,
    pub witness_in_recession_cone: Option<bool>,
    /// `ξᵀb + ∫ ξᵀx/(1+ξᵀx) 1{|x|>1} ν(dx)` at the witness.
    pub witness_level: Option<f64>,
}

/// Maximizes `ξᵀb + Σ λ_j ξᵀx_j` over immediate-arbitrage candidates in
/// the recession cone of `c`, boxed by `|ξ|_∞ ≤ 1`.
///
/// On that region the objective is nonnegative and vanishes exactly on
/// `N`, so a positive optimum is a witness.
pub fn detect_uip(t: &Triplet, c: &ConstraintSet) -> Result<NuipReport> {
    let d = t.d();
    if c.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: c.dim() });
    }
    let mut objective = t.b.clone();
    for a in &t.nu.atoms {
        objective.axpy(a.intensity, &a.x, 1.0);
    }
    let mut lp = LinearProgram::maximize(objective.iter().copied().collect());
    lp.bound_all(-1.0, 1.0);
    let cone = c.recession_cone();
    for i in 0..cone.n_rows() {
        lp.row(cone.a().row(i).iter().copied().collect(), Cmp::Le, 0.0);
    }
    let diffusion = linalg::clip_psd(&t.c);
    for i in 0..d {
        let row: Vec<f64> = diffusion.row(i).iter().copied().collect();
        if row.iter().any(|v| *v != 0.0) {
            lp.row(row, Cmp::Eq, 0.0);
        }
    }
    for a in &t.nu.atoms {
        lp.row(a.x.iter().copied().collect(), Cmp::Ge, 0.0);
    }
    lp.row(truncated_drift(t).iter().copied().collect(), Cmp::Ge, 0.0);

    let (x, value) = match lp.solve()? {
        LpOutcome::Optimal { x, value } => (x, value),
        // ξ = 0 is always feasible and the box keeps the region compact
        other => return Err(Error::Lp(format!("UIP program returned {other:?}"))),
    };
    let scale = objective.norm().max(1.0);
    if value <= UIP_TOL * scale {
        return Ok(NuipReport {
            uip_exists: false,
            witness: None,
            lp_value: value,
            checks: None,
            witness_in_recession_cone: None,
            witness_level: None,
        });
    }
    let xi = Vector::from_vec(x);
    let check = is_immediate_arbitrage(&xi, t);
    Ok(NuipReport {
        uip_exists: true,
        witness_in_recession_cone: Some(cone.contains(&xi, UIP_TOL)),
        witness_level: Some(arbitrage_level(&xi, t)),
        witness: Some(xi.iter().copied().collect()),
        lp_value: value,
        checks: Some(check.conditions),
    })
}
