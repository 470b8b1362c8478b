//! Markets as piecewise-constant characteristic triplets `(b, c, ν)` on a
//! deterministic operational clock.
//!
//! Jump measures are always finite lists of atoms. Parametric densities enter
//! only through a fixed Gauss–Legendre rule on log-magnitude, optionally
//! damped by the approximating factor `f_n(x) = 1{|x|≤1} + |x|^{-1/n} 1{|x|>1}`.
//! All ν-integrals are therefore finite sums and reproducible bit for bit.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::quadrature::gauss_legendre_unit;

/// Magnitudes above this are dropped from compactified (unbounded) quadratures.
const MAX_ATOM_MAGNITUDE: f64 = 1e200;

#[derive(Debug, Clone, PartialEq)]
pub struct OperationalClock {
    times: Vec<f64>,
}

impl OperationalClock {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidClock("need at least one interval".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidClock(format!("clock must start at 0, got {}", times[0])));
        }
        for w in times.windows(2) {
            let dt = w[1] - w[0];
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidClock(format!(
                    "times must be strictly increasing and finite ({} -> {})",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { times })
    }

    pub fn uniform(horizon: f64, intervals: usize) -> Result<Self> {
        let times = (0..=intervals).map(|k| horizon * k as f64 / intervals as f64).collect();
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of intervals `K`.
    pub fn len(&self) -> usize {
        self.times.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("nonempty clock")
    }

    /// `ΔG_k` for `k = 1..=K`, returned zero-based.
    pub fn increments(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn increment(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpAtom {
    pub x: Vector,
    pub intensity: f64,
}

impl JumpAtom {
    pub fn new(x: Vector, intensity: f64) -> Result<Self> {
        if !(intensity > 0.0 && intensity.is_finite()) {
            return Err(Error::InvalidMarket(format!("atom intensity must be positive, got {intensity}")));
        }
        if x.iter().all(|v| *v == 0.0) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMarket("atom jump size must be finite and nonzero".into()));
        }
        Ok(Self { x, intensity })
    }

    pub fn magnitude(&self) -> f64 {
        self.x.norm()
    }

    pub fn is_small(&self) -> bool {
        self.magnitude() <= 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityFamily {
    /// Magnitude density `scale · α · r^{-1-α}`.
    Pareto,
    /// Magnitude density `scale · β · (1 + |ln r|)^{-1-β} / r`.
    LogPareto,
}

impl DensityFamily {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "pareto" => Ok(Self::Pareto),
            "log_pareto" | "log-pareto" => Ok(Self::LogPareto),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Pareto => "pareto",
            Self::LogPareto => "log_pareto",
        }
    }
}

/// Two-sided radial density along a direction `v`: mass `up_fraction` on
/// jumps `+r v`, the rest on `-r v`, with magnitudes `r ∈ [x_min, x_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySpec {
    pub family: DensityFamily,
    pub scale: f64,
    pub tail_index: f64,
    pub direction: Vector,
    pub up_fraction: f64,
    pub x_min: f64,
    /// `None` means unbounded.
    pub x_max: Option<f64>,
    pub quad_nodes: usize,
}

impl DensitySpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        family: &str,
        scale: f64,
        tail_index: f64,
        direction: Vector,
        up_fraction: f64,
        x_min: f64,
        x_max: Option<f64>,
        quad_nodes: usize,
    ) -> Result<Self> {
        let family = DensityFamily::from_name(family)?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidDensity(format!("scale must be positive, got {scale}")));
        }
        if !(tail_index > 0.0 && tail_index.is_finite()) {
            return Err(Error::InvalidDensity(format!("tail index must be positive, got {tail_index}")));
        }
        let norm = direction.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidDensity("direction must be a nonzero finite vector".into()));
        }
        if !(0.0..=1.0).contains(&up_fraction) {
            return Err(Error::InvalidDensity(format!("up_fraction must lie in [0, 1], got {up_fraction}")));
        }
        if !(x_min > 0.0 && x_min.is_finite()) {
            return Err(Error::InvalidDensity(format!("x_min must be positive, got {x_min}")));
        }
        if let Some(hi) = x_max {
            if !(hi > x_min && hi.is_finite()) {
                return Err(Error::InvalidDensity(format!("x_max must exceed x_min, got {hi}")));
            }
        }
        if quad_nodes < 8 {
            return Err(Error::InvalidDensity(format!("quad_nodes must be at least 8, got {quad_nodes}")));
        }
        Ok(Self { family, scale, tail_index, direction: direction / norm, up_fraction, x_min, x_max, quad_nodes })
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    /// Density of the magnitude `r` (both sides together) w.r.t. `dr`.
    pub fn magnitude_density(&self, r: f64) -> f64 {
        let a = self.tail_index;
        match self.family {
            DensityFamily::Pareto => self.scale * a * r.powf(-1.0 - a),
            DensityFamily::LogPareto => self.scale * a * (1.0 + r.ln().abs()).powf(-1.0 - a) / r,
        }
    }

    /// Same density w.r.t. `d(ln r)`, evaluated at `s = ln r` without forming `r`.
    fn log_magnitude_density(&self, s: f64) -> f64 {
        let a = self.tail_index;
        match self.family {
            DensityFamily::Pareto => self.scale * a * (-a * s).exp(),
            DensityFamily::LogPareto => self.scale * a * (1.0 + s.abs()).powf(-1.0 - a),
        }
    }

    /// Whether `∫ log(1+|x|) 1{|x|>1} ν(dx) < ∞`.
    ///
    /// For `r^{-1-α}` tails the log-moment is finite for every `α > 0`; for
    /// `(1+ln r)^{-1-β}/r` it is `∫^∞ s^{-β} ds`-like, finite iff `β > 1`.
    pub fn integrates_log(&self) -> bool {
        if self.x_max.is_some() {
            return true;
        }
        match self.family {
            DensityFamily::Pareto => true,
            DensityFamily::LogPareto => self.tail_index > 1.0,
        }
    }

    /// Whether `∫ |x| 1{|x|>1} ν(dx) < ∞` (needed for the drift rate).
    pub fn integrates_magnitude(&self) -> bool {
        if self.x_max.is_some() {
            return true;
        }
        match self.family {
            DensityFamily::Pareto => self.tail_index > 1.0,
            DensityFamily::LogPareto => false,
        }
    }
}

/// Index `n` of the approximating measure `ν_n = f_n ν`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Approx {
    Index(u32),
    Infinite,
}

/// `f_n(r) = 1` for `r ≤ 1`, `r^{-1/n}` above.
pub fn approx_factor(r: f64, n: Approx) -> f64 {
    match n {
        Approx::Infinite => 1.0,
        Approx::Index(_) if r <= 1.0 => 1.0,
        Approx::Index(k) => r.powf(-1.0 / k as f64),
    }
}

fn approx_factor_log(s: f64, n: Approx) -> f64 {
    match n {
        Approx::Infinite => 1.0,
        Approx::Index(_) if s <= 0.0 => 1.0,
        Approx::Index(k) => (-s / k as f64).exp(),
    }
}

/// Quadrature nodes of `spec` as `(ln r, weight on d(ln r))`, before damping.
fn log_magnitude_nodes(spec: &DensitySpec) -> Vec<(f64, f64)> {
    let (u, w) = gauss_legendre_unit(spec.quad_nodes);
    let lo = spec.x_min.ln();
    u.iter()
        .zip(&w)
        .map(|(&ui, &wi)| match spec.x_max {
            Some(hi) => {
                let span = hi.ln() - lo;
                (lo + ui * span, wi * span)
            }
            None => {
                let one_minus = 1.0 - ui;
                (lo + ui / one_minus, wi / (one_minus * one_minus))
            }
        })
        .collect()
}

/// Atoms of the damped quadrature without the divergence policy check.
pub(crate) fn quadrature_atoms(spec: &DensitySpec, n: Approx) -> Vec<JumpAtom> {
    let mut atoms = Vec::with_capacity(2 * spec.quad_nodes);
    for (s, ws) in log_magnitude_nodes(spec) {
        let r = s.exp();
        if !r.is_finite() || r > MAX_ATOM_MAGNITUDE {
            continue;
        }
        let mass = ws * spec.log_magnitude_density(s) * approx_factor_log(s, n);
        if !(mass > 0.0 && mass.is_finite()) {
            continue;
        }
        let up = mass * spec.up_fraction;
        let down = mass - up;
        if up > 0.0 {
            atoms.push(JumpAtom { x: &spec.direction * r, intensity: up });
        }
        if down > 0.0 {
            atoms.push(JumpAtom { x: &spec.direction * (-r), intensity: down });
        }
    }
    atoms
}

/// Atomizes `f_n · density` with the density's fixed quadrature rule.
///
/// Atoms inside the unit ball do not depend on `n`, and every weight is
/// nondecreasing in `n`. The raw measure (`n = ∞`) is refused for tails
/// that do not integrate the log.
pub fn discretize_density(spec: &DensitySpec, n: Approx) -> Result<Vec<JumpAtom>> {
    if let Approx::Index(0) = n {
        return Err(Error::Domain("approximation index must be at least 1".into()));
    }
    if n == Approx::Infinite && !spec.integrates_log() {
        return Err(Error::DivergentTail);
    }
    Ok(quadrature_atoms(spec, n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensitySource {
    pub spec: DensitySpec,
    pub n: Approx,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JumpMeasure {
    pub atoms: Vec<JumpAtom>,
    /// Set when some of the atoms come from a quadrature of a density.
    pub source: Option<DensitySource>,
}

impl JumpMeasure {
    pub fn explicit(atoms: Vec<JumpAtom>) -> Self {
        Self { atoms, source: None }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `ν[|x| > 1]`.
    pub fn big_jump_intensity(&self) -> f64 {
        self.atoms.iter().filter(|a| !a.is_small()).map(|a| a.intensity).sum()
    }

    pub fn total_intensity(&self) -> f64 {
        self.atoms.iter().map(|a| a.intensity).sum()
    }

    /// `∫ x 1{|x|≤1} ν(dx)`, the compensator of the small jumps.
    pub fn small_jump_mean(&self, d: usize) -> Vector {
        let mut m = Vector::zeros(d);
        for a in self.atoms.iter().filter(|a| a.is_small()) {
            m.axpy(a.intensity, &a.x, 1.0);
        }
        m
    }

    pub fn integrates_log(&self) -> bool {
        match &self.source {
            Some(src) if src.n == Approx::Infinite => src.spec.integrates_log(),
            _ => true,
        }
    }

    fn integrates_magnitude(&self) -> bool {
        match &self.source {
            Some(src) if src.n == Approx::Infinite => src.spec.integrates_magnitude(),
            _ => true,
        }
    }
}

/// One `(b, c, ν)` record, rated per unit of clock.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub b: Vector,
    pub c: Matrix,
    pub nu: JumpMeasure,
    /// Clock jump `ΔG` on this segment; zero for a continuous clock.
    pub dg_jump: f64,
}

impl Triplet {
    pub fn new(b: Vector, c: Matrix, nu: JumpMeasure, dg_jump: f64) -> Result<Self> {
        let d = b.len();
        if c.nrows() != d || c.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: c.nrows() });
        }
        if let Some(a) = nu.atoms.iter().find(|a| a.x.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: a.x.len() });
        }
        if !(dg_jump >= 0.0 && dg_jump.is_finite()) {
            return Err(Error::InvalidMarket(format!("dG_jump must be a nonnegative real, got {dg_jump}")));
        }
        if b.iter().chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidMarket("b and c must be finite".into()));
        }
        Ok(Self { b, c, nu, dg_jump })
    }

    /// Continuous-path triplet `(b, c, 0)`.
    pub fn diffusion(b: Vector, c: Matrix) -> Result<Self> {
        Self::new(b, c, JumpMeasure::empty(), 0.0)
    }

    pub fn d(&self) -> usize {
        self.b.len()
    }

    /// The same triplet with `c` replaced by its PSD clip.
    pub fn with_clipped_diffusion(&self) -> Self {
        Self { c: linalg::clip_psd(&self.c), ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub c_symmetric: bool,
    pub c_min_eigenvalue: f64,
    pub c_psd: bool,
    pub intensities_positive: bool,
    pub big_jump_intensity: f64,
    pub big_jump_intensity_finite: bool,
    pub integrates_log: bool,
    pub clock_jump_consistent: bool,
    pub failures: Vec<String>,
}

impl ValidationReport {
    /// Structural checks only; `integrates_log = false` is a flag, not a failure.
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn validate_triplet(t: &Triplet) -> ValidationReport {
    let mut failures = Vec::new();
    let psd = linalg::psd_check(&t.c);
    if !psd.symmetric {
        failures.push("c is not symmetric".to_string());
    }
    if !psd.passed {
        failures.push(format!("c is not positive semidefinite (min eigenvalue {:e})", psd.min_eigenvalue));
    }
    let intensities_positive = t.nu.atoms.iter().all(|a| a.intensity > 0.0 && a.intensity.is_finite());
    if !intensities_positive {
        failures.push("atom intensities must be positive and finite".to_string());
    }
    let big = t.nu.big_jump_intensity();
    let big_finite = big.is_finite();
    if !big_finite {
        failures.push("ν[|x| > 1] is not finite".to_string());
    }
    let clock_jump_consistent = if t.dg_jump > 0.0 {
        let small_mean = t.nu.small_jump_mean(t.d());
        let scale = 1.0 + t.b.amax().max(small_mean.amax());
        let c_zero = t.c.amax() == 0.0;
        let b_ok = (&t.b - &small_mean).amax() <= 1e-12 * scale;
        let mass_ok = t.nu.total_intensity() * t.dg_jump <= 1.0 + 1e-12;
        if !c_zero {
            failures.push("c must vanish on a clock jump".to_string());
        }
        if !b_ok {
            failures.push("b must equal ∫ x 1{|x|≤1} ν(dx) on a clock jump".to_string());
        }
        if !mass_ok {
            failures.push("ν[ℝ^d] · ΔG must not exceed 1 on a clock jump".to_string());
        }
        c_zero && b_ok && mass_ok
    } else {
        true
    };
    ValidationReport {
        c_symmetric: psd.symmetric,
        c_min_eigenvalue: psd.min_eigenvalue,
        c_psd: psd.passed,
        intensities_positive,
        big_jump_intensity: big,
        big_jump_intensity_finite: big_finite,
        integrates_log: t.nu.integrates_log(),
        clock_jump_consistent,
        failures,
    }
}

/// `b + ∫ x 1{|x|>1} ν(dx)`, or `None` when the big jumps are not integrable.
pub fn drift_rate(t: &Triplet) -> Option<Vector> {
    if !t.nu.integrates_magnitude() {
        return None;
    }
    let mut rate = t.b.clone();
    for a in t.nu.atoms.iter().filter(|a| !a.is_small()) {
        rate.axpy(a.intensity, &a.x, 1.0);
    }
    if rate.iter().all(|v| v.is_finite()) {
        Some(rate)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClockIntegral {
    pub total: f64,
    pub diverged: bool,
    pub partials: Vec<f64>,
}

/// `Σ_k value_k ΔG_k` with running sums; `+∞` values mark divergence.
pub fn clock_integral(values: &[f64], clock: &OperationalClock) -> Result<ClockIntegral> {
    if values.len() != clock.len() {
        return Err(Error::LengthMismatch { expected: clock.len(), got: values.len() });
    }
    let mut partials = Vec::with_capacity(values.len());
    let mut total = 0.0;
    let mut diverged = false;
    for (k, v) in values.iter().enumerate() {
        if v.is_nan() || *v < 0.0 {
            return Err(Error::Domain(format!("clock integrand must be nonnegative, got {v} at {k}")));
        }
        total += v * clock.increment(k);
        if !total.is_finite() {
            diverged = true;
            total = f64::INFINITY;
        }
        partials.push(total);
    }
    Ok(ClockIntegral { total, diverged, partials })
}

/// Evidence that a piecewise-constant integrand blows up non-integrably at
/// the end of the clock.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementStudy {
    /// Fitted `α` in `value ≈ C (T − t)^{-α}` near the horizon.
    pub exponent: Option<f64>,
    pub points_used: usize,
    /// Extrapolated integral beyond the fitted range over the computed total.
    pub tail_ratio: f64,
    pub diverged: bool,
}

pub const DIVERGENCE_EXPONENT: f64 = 0.98;
pub const DIVERGENCE_TAIL_RATIO: f64 = 10.0;

/// Treats the grid as a sequence of refinements toward the horizon: fits the
/// power law on segments whose distance to the horizon is at least 1000× the
/// last step (nearest half of that range in log-distance), then flags
/// divergence when `α ≥ 0.98` or the extrapolated tail exceeds 10× the total.
pub fn refinement_study(values: &[f64], clock: &OperationalClock) -> Result<RefinementStudy> {
    if values.len() != clock.len() {
        return Err(Error::LengthMismatch { expected: clock.len(), got: values.len() });
    }
    let total: f64 = values.iter().enumerate().map(|(k, v)| v * clock.increment(k)).sum();
    let no_evidence =
        |n| RefinementStudy { exponent: None, points_used: n, tail_ratio: 0.0, diverged: !total.is_finite() };
    let horizon = clock.horizon();
    let last_step = clock.increment(clock.len() - 1);
    let pts: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(k, &v)| {
            let tau = horizon - clock.times()[k];
            (v > 0.0 && v.is_finite() && tau >= 1000.0 * last_step).then(|| (tau.ln(), v.ln()))
        })
        .collect();
    if pts.len() < 8 {
        return Ok(no_evidence(pts.len()));
    }
    let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 10f64.ln() {
        return Ok(no_evidence(pts.len()));
    }
    let cut = 0.5 * (lo + hi);
    let near: Vec<(f64, f64)> = pts.into_iter().filter(|p| p.0 <= cut).collect();
    if near.len() < 4 {
        return Ok(no_evidence(near.len()));
    }
    let n = near.len() as f64;
    let mx = near.iter().map(|p| p.0).sum::<f64>() / n;
    let my = near.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = near.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = near.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let alpha = -slope;
    let intercept = my - slope * mx;
    let tail_ratio = if alpha >= 1.0 {
        f64::INFINITY
    } else {
        let tau_min = lo.exp();
        let tail = intercept.exp() * tau_min.powf(1.0 - alpha) / (1.0 - alpha);
        if total > 0.0 {
            tail / total
        } else {
            0.0
        }
    };
    Ok(RefinementStudy {
        exponent: Some(alpha),
        points_used: near.len(),
        tail_ratio,
        diverged: !total.is_finite() || alpha >= DIVERGENCE_EXPONENT || tail_ratio > DIVERGENCE_TAIL_RATIO,
    })
}

/// One constant-characteristics block covering clock intervals `from..to`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub from: usize,
    pub to: usize,
    pub b: Vector,
    pub c: Matrix,
    pub atoms: Vec<JumpAtom>,
    pub density: Option<DensitySpec>,
    pub dg_jump: f64,
}

impl Segment {
    /// Triplet with the density (if any) atomized under `f_n`.
    pub fn triplet(&self, n: Approx) -> Result<Triplet> {
        let mut atoms = self.atoms.clone();
        let source = self.density.as_ref().map(|spec| {
            atoms.extend(quadrature_atoms(spec, n));
            DensitySource { spec: spec.clone(), n }
        });
        Triplet::new(self.b.clone(), self.c.clone(), JumpMeasure { atoms, source }, self.dg_jump)
    }

    /// The raw triplet (`n = ∞`).
    pub fn raw_triplet(&self) -> Result<Triplet> {
        self.triplet(Approx::Infinite)
    }

    pub fn integrates_log(&self) -> bool {
        self.density.as_ref().is_none_or(|s| s.integrates_log())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec {
    pub d: usize,
    pub clock: OperationalClock,
    pub segments: Vec<Segment>,
    /// Closed-form declaration that the ψ clock-integral diverges at the horizon.
    pub psi_diverges: bool,
}

impl MarketSpec {
    pub fn new(d: usize, clock: OperationalClock, mut segments: Vec<Segment>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidMarket("asset count d must be positive".into()));
        }
        segments.sort_by_key(|s| s.from);
        let mut next = 0;
        for (i, s) in segments.iter().enumerate() {
            if s.from != next || s.to <= s.from {
                return Err(Error::InvalidMarket(format!(
                    "segment {i} covers [{}, {}) but the next uncovered interval is {next}",
                    s.from, s.to
                )));
            }
            next = s.to;
            if s.b.len() != d || s.c.nrows() != d || s.c.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, got: s.b.len() });
            }
            if let Some(a) = s.atoms.iter().find(|a| a.x.len() != d) {
                return Err(Error::DimensionMismatch { expected: d, got: a.x.len() });
            }
            if let Some(ds) = &s.density {
                if ds.dim() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: ds.dim() });
                }
            }
            if s.dg_jump > 0.0 {
                for k in s.from..s.to.min(clock.len()) {
                    let dg = clock.increment(k);
                    if (dg - s.dg_jump).abs() > 1e-12 * dg.max(1.0) {
                        return Err(Error::InvalidMarket(format!(
                            "segment {i}: dG_jump {} differs from clock increment {dg} of interval {k}",
                            s.dg_jump
                        )));
                    }
                }
            }
        }
        if next != clock.len() {
            return Err(Error::InvalidMarket(format!(
                "segments cover {next} intervals but the clock has {}",
                clock.len()
            )));
        }
        Ok(Self { d, clock, segments, psi_diverges: false })
    }

    /// A single triplet held on every interval of `clock` (a Lévy market).
    /// The triplet's atoms are taken as explicit atoms.
    pub fn levy(triplet: &Triplet, clock: OperationalClock) -> Result<Self> {
        let seg = Segment {
            from: 0,
            to: clock.len(),
            b: triplet.b.clone(),
            c: triplet.c.clone(),
            atoms: triplet.nu.atoms.clone(),
            density: None,
            dg_jump: triplet.dg_jump,
        };
        Self::new(triplet.d(), clock, vec![seg])
    }

    pub fn horizon(&self) -> f64 {
        self.clock.horizon()
    }

    /// Segment index owning clock interval `k`.
    pub fn segment_of(&self, k: usize) -> usize {
        self.segments.partition_point(|s| s.to <= k)
    }

    /// For every clock interval, the index of its segment.
    pub fn interval_segments(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.clock.len());
        for (i, s) in self.segments.iter().enumerate() {
            out.extend(std::iter::repeat_n(i, s.to - s.from));
        }
        out
    }
}
