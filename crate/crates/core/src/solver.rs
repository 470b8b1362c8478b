//! Growth rate, relative rate of return, and the pointwise program
//! `ρ = argmax_{C ∩ N⊥} g`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::arbitrage::detect_uip;
use crate::constraints::{guarded_natural_constraints, natural_constraints, null_space, ConstraintSet};
use crate::error::{ApproxStep, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::market::{
    clock_integral, refinement_study, validate_triplet, Approx, ClockIntegral, MarketSpec, RefinementStudy, Triplet,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Stop once `|P(z + ∇) − z| ≤ pg_tol`.
    pub pg_tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    /// Iterates keep `1 + πᵀx_j ≥ guard`.
    pub guard: f64,
    /// Cauchy tolerance for the approximation ladder.
    pub approx_tol: f64,
    pub n_max: u32,
    /// Pass threshold for the `rel` certificate.
    pub cert_tol: f64,
    /// Random feasible portfolios tested by the certificate inside `solve_numeraire`.
    pub cert_dirs: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            pg_tol: 1e-9,
            max_iter: 100_000,
            armijo: 1e-4,
            guard: 1e-12,
            approx_tol: 1e-6,
            n_max: 64,
            cert_tol: 1e-7,
            cert_dirs: 64,
        }
    }
}

/// `πᵀb − ½πᵀcπ + Σ [log(1+πᵀx_j) − πᵀx_j 1{|x_j|≤1}] λ_j`, or `−∞` off the
/// natural domain.
pub fn growth_rate(pi: &Vector, t: &Triplet) -> f64 {
    let mut g = pi.dot(&t.b) - 0.5 * pi.dot(&(&t.c * pi));
    for a in &t.nu.atoms {
        let s = pi.dot(&a.x);
        if 1.0 + s <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let compensator = if a.is_small() { s } else { 0.0 };
        g += (s.ln_1p() - compensator) * a.intensity;
    }
    g
}

fn check_admissible(pi: &Vector, t: &Triplet) -> Result<()> {
    for a in &t.nu.atoms {
        let f = 1.0 + pi.dot(&a.x);
        if f <= 0.0 {
            return Err(Error::Inadmissible(f));
        }
    }
    Ok(())
}

/// `b − cπ + Σ [x_j/(1+πᵀx_j) − x_j 1{|x_j|≤1}] λ_j`.
pub fn growth_gradient(pi: &Vector, t: &Triplet) -> Result<Vector> {
    check_admissible(pi, t)?;
    let mut g = &t.b - &t.c * pi;
    for a in &t.nu.atoms {
        let s = pi.dot(&a.x);
        let w = 1.0 / (1.0 + s) - if a.is_small() { 1.0 } else { 0.0 };
        g.axpy(w * a.intensity, &a.x, 1.0);
    }
    Ok(g)
}

/// Rate of return of `W^π/W^ρ`:
/// `(π−ρ)ᵀb − (π−ρ)ᵀcρ + Σ θ_{π|ρ}(x_j) λ_j`.
pub fn rel_rate(pi: &Vector, rho: &Vector, t: &Triplet) -> Result<f64> {
    check_admissible(rho, t)?;
    let delta = pi - rho;
    let mut r = delta.dot(&t.b) - delta.dot(&(&t.c * rho));
    for a in &t.nu.atoms {
        let ratio = (1.0 + pi.dot(&a.x)) / (1.0 + rho.dot(&a.x));
        let compensator = if a.is_small() { delta.dot(&a.x) } else { 0.0 };
        r += (ratio - 1.0 - compensator) * a.intensity;
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiRecord {
    pub psi1: f64,
    pub psi2: f64,
    pub psi: f64,
    pub psi_hat1: f64,
    pub psi_hat2: f64,
    pub psi_hat3: f64,
}

pub fn psi_rho(rho: &Vector, t: &Triplet) -> PsiRecord {
    let mut psi1 = 0.0;
    let mut psi2 = rho.dot(&t.b);
    let mut psi_hat2 = 0.0;
    for a in &t.nu.atoms {
        let s = rho.dot(&a.x);
        if s > 1.0 {
            psi1 += a.intensity;
        }
        let big_x = if a.is_small() { 0.0 } else { 1.0 };
        let big_s = if s.abs() > 1.0 { 1.0 } else { 0.0 };
        psi2 += s * (big_x - big_s) * a.intensity;
        psi_hat2 += (s * s).min(1.0) * a.intensity;
    }
    PsiRecord { psi1, psi2, psi: psi1 + psi2.abs(), psi_hat1: rho.dot(&(&t.c * rho)), psi_hat2, psi_hat3: psi2 }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveTrace {
    pub iterations: usize,
    pub pg_norm: f64,
    pub null_dim: usize,
    /// `g` has (numerically) zero curvature along some direction of `N⊥`
    /// at the solution, so the maximizer may not be unique.
    pub flat_directions: bool,
    pub start: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSolve {
    pub rho: Vector,
    pub g_value: f64,
    pub trace: SolveTrace,
}

fn structural_check(t: &Triplet) -> Result<()> {
    let r = validate_triplet(t);
    if !(r.c_symmetric && r.c_psd && r.intensities_positive && r.clock_jump_consistent) {
        let msg = r.failures.iter().filter(|f| !f.contains("log")).cloned().collect::<Vec<_>>().join("; ");
        return Err(Error::InvalidMarket(msg));
    }
    Ok(())
}

/// Maximizes `g` over `C ∩ C₀ ∩ N⊥` from the projection of 0.
pub fn solve_segment(t: &Triplet, c: &ConstraintSet, opts: &SolveOptions) -> Result<SegmentSolve> {
    solve_segment_from(t, c, opts, &Vector::zeros(t.d()))
}

/// As [`solve_segment`], starting from the projection of `start`.
pub fn solve_segment_from(t: &Triplet, c: &ConstraintSet, opts: &SolveOptions, start: &Vector) -> Result<SegmentSolve> {
    let d = t.d();
    if c.dim() != d || start.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: if c.dim() != d { c.dim() } else { start.len() } });
    }
    structural_check(t)?;
    let t = t.with_clipped_diffusion();
    let nuip = detect_uip(&t, c)?;
    if nuip.uip_exists {
        return Err(Error::Uip { segment: 0, witness: nuip.witness.unwrap_or_default() });
    }
    let null = null_space(&t);
    let basis = null.complement_matrix();
    let r = basis.ncols();
    let feasible = c.intersect(&guarded_natural_constraints(&t.nu, d, opts.guard))?.restrict(&basis)?;
    let z_start = basis.transpose() * start;
    let mut z = feasible.project(&z_start)?;
    let trace_start: Vec<f64> = (&basis * &z).iter().copied().collect();
    if r == 0 {
        return Ok(SegmentSolve {
            rho: Vector::zeros(d),
            g_value: 0.0,
            trace: SolveTrace {
                iterations: 0,
                pg_norm: 0.0,
                null_dim: null.dim(),
                flat_directions: false,
                start: trace_start,
            },
        });
    }

    let phi = |z: &Vector| growth_rate(&(&basis * z), &t);
    let grad = |z: &Vector| growth_gradient(&(&basis * z), &t).map(|g| basis.transpose() * g);
    let mut f = phi(&z);
    let mut gz = grad(&z)?;
    let mut alpha = 1.0;
    let mut pg_norm = f64::INFINITY;
    let mut iterations = 0;
    // once pg_tol is met, keep polishing toward pg_tol·1e-3 for a bounded number of steps
    let mut polish = 0;
    while iterations < opts.max_iter {
        pg_norm = (feasible.project_from(&(&z + &gz), &z)? - &z).norm();
        if pg_norm <= opts.pg_tol {
            if pg_norm <= 1e-3 * opts.pg_tol || polish >= 100 {
                break;
            }
            polish += 1;
        }
        iterations += 1;
        let noise = 1e-15 * (1.0 + f.abs());
        let mut step = alpha;
        let mut accepted = None;
        for _ in 0..1100 {
            let zn = feasible.project_from(&(&z + step * &gz), &z)?;
            let fz = phi(&zn);
            if fz.is_finite() && fz - f >= opts.armijo * gz.dot(&(&zn - &z)) - noise {
                accepted = Some((zn, fz));
                break;
            }
            step *= 0.5;
        }
        let Some((zn, fz)) = accepted else {
            if pg_norm <= opts.pg_tol {
                break;
            }
            return Err(Error::NonConvergence {
                iterations,
                residual: pg_norm,
                last: (&basis * &z).iter().copied().collect(),
            });
        };
        let gn = grad(&zn)?;
        let s = &zn - &z;
        let y = &gn - &gz;
        let sy = s.dot(&y);
        alpha = if sy < 0.0 { s.norm_squared() / -sy } else { 2.0 * step };
        alpha = alpha.clamp(1e-12, 1e12);
        z = zn;
        f = fz;
        gz = gn;
    }
    if pg_norm > opts.pg_tol {
        return Err(Error::NonConvergence {
            iterations,
            residual: pg_norm,
            last: (&basis * &z).iter().copied().collect(),
        });
    }
    let rho = &basis * &z;
    let flat_directions = is_flat(&rho, &t, &basis);
    Ok(SegmentSolve {
        g_value: f,
        trace: SolveTrace { iterations, pg_norm, null_dim: null.dim(), flat_directions, start: trace_start },
        rho,
    })
}

fn is_flat(rho: &Vector, t: &Triplet, basis: &Matrix) -> bool {
    let mut h = t.c.clone();
    for a in &t.nu.atoms {
        let w = a.intensity / (1.0 + rho.dot(&a.x)).powi(2);
        h += w * &a.x * a.x.transpose();
    }
    let hz = basis.transpose() * h * basis;
    let eig = linalg::symmetrize(&hz).symmetric_eigenvalues();
    let max = eig.amax();
    eig.min() <= 1e-10 * max.max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentResult {
    pub index: usize,
    pub from: usize,
    pub to: usize,
    pub rho: Vec<f64>,
    pub g_value: f64,
    pub iterations: usize,
    pub pg_norm: f64,
    pub null_dim: usize,
    pub flat_directions: bool,
    pub psi: PsiRecord,
    /// Ladder index of the triplet actually solved; absent for the raw measure.
    pub solved_n: Option<u32>,
    pub approx_trace: Vec<ApproxStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Integrability {
    pub psi_integral: ClockIntegral,
    pub refinement: RefinementStudy,
    pub declared_divergent: bool,
    pub integrable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumeraireSolution {
    pub segments: Vec<SegmentResult>,
    /// Largest `rel(π|ρ)` found by the built-in certificate.
    pub rel_cert: f64,
    pub integrability: Integrability,
}

impl NumeraireSolution {
    pub fn rho(&self, segment: usize) -> Vector {
        Vector::from_vec(self.segments[segment].rho.clone())
    }

    /// `ρ` on each clock interval.
    pub fn rho_per_interval(&self) -> Vec<Vector> {
        let mut out = Vec::new();
        for s in &self.segments {
            let r = Vector::from_vec(s.rho.clone());
            out.extend(std::iter::repeat_n(r, s.to - s.from));
        }
        out
    }

    pub fn integrable(&self) -> bool {
        self.integrability.integrable
    }
}

fn with_segment(e: Error, segment: usize) -> Error {
    match e {
        Error::Uip { witness, .. } => Error::Uip { segment, witness },
        Error::ApproximationNonconvergent { n_max, trace, .. } => {
            Error::ApproximationNonconvergent { segment, n_max, trace }
        }
        other => other,
    }
}

fn solve_one(m: &MarketSpec, index: usize, c: &ConstraintSet, opts: &SolveOptions) -> Result<SegmentResult> {
    let seg = &m.segments[index];
    let raw = seg.raw_triplet()?;
    structural_check(&raw)?;
    let (solve, solved_n, approx_trace) = if seg.integrates_log() {
        (solve_segment(&raw, c, opts)?, None, Vec::new())
    } else {
        let nuip = detect_uip(&raw.with_clipped_diffusion(), c)?;
        if nuip.uip_exists {
            return Err(Error::Uip { segment: index, witness: nuip.witness.unwrap_or_default() });
        }
        let mut trace: Vec<ApproxStep> = Vec::new();
        let mut n = 1u32;
        loop {
            let sol = solve_segment(&seg.triplet(Approx::Index(n))?, c, opts)?;
            let rho: Vec<f64> = sol.rho.iter().copied().collect();
            let gap =
                trace.last().map(|prev| prev.rho.iter().zip(&rho).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            trace.push(ApproxStep { n, rho, cauchy_gap: gap });
            if gap.is_some_and(|g| g <= opts.approx_tol) {
                break (sol, Some(n), trace);
            }
            if n >= opts.n_max {
                return Err(Error::ApproximationNonconvergent { segment: index, n_max: opts.n_max, trace });
            }
            n *= 2;
        }
    };
    Ok(SegmentResult {
        index,
        from: seg.from,
        to: seg.to,
        rho: solve.rho.iter().copied().collect(),
        g_value: solve.g_value,
        iterations: solve.trace.iterations,
        pg_norm: solve.trace.pg_norm,
        null_dim: solve.trace.null_dim,
        flat_directions: solve.trace.flat_directions,
        psi: psi_rho(&solve.rho, &raw),
        solved_n,
        approx_trace,
    })
}

/// Solves every segment (concurrently), then certifies `ρ` and decides
/// integrability of the `ψ` clock-integral.
pub fn solve_numeraire(m: &MarketSpec, c: &ConstraintSet, opts: &SolveOptions) -> Result<NumeraireSolution> {
    if c.dim() != m.d {
        return Err(Error::DimensionMismatch { expected: m.d, got: c.dim() });
    }
    let results: Vec<Result<SegmentResult>> = (0..m.segments.len())
        .into_par_iter()
        .map(|i| solve_one(m, i, c, opts).map_err(|e| with_segment(e, i)))
        .collect();
    let segments = results.into_iter().collect::<Result<Vec<_>>>()?;

    let owner = m.interval_segments();
    let values: Vec<f64> = owner.iter().map(|&s| segments[s].psi.psi).collect();
    let psi_integral = clock_integral(&values, &m.clock)?;
    let refinement = refinement_study(&values, &m.clock)?;
    let declared_divergent = m.psi_diverges;
    let integrable = !(psi_integral.diverged || refinement.diverged || declared_divergent);
    let mut sol = NumeraireSolution {
        segments,
        rel_cert: f64::NAN,
        integrability: Integrability { psi_integral, refinement, declared_divergent, integrable },
    };
    sol.rel_cert = verify_solution(&sol, m, c, opts.cert_dirs, 0, opts.cert_tol)?.max_rel;
    Ok(sol)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentCertificate {
    pub index: usize,
    pub max_rel: f64,
    pub argmax: Vec<f64>,
    pub vertices_tested: usize,
    pub random_tested: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub segments: Vec<SegmentCertificate>,
    pub max_rel: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Vertex enumeration is skipped above this many row subsets.
const VERTEX_LIMIT: usize = 20_000;

fn certify_segment(
    sol: &SegmentResult,
    t: &Triplet,
    c: &ConstraintSet,
    n_dirs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SegmentCertificate> {
    let rho = Vector::from_vec(sol.rho.clone());
    let d = rho.len();
    let region = c.intersect(&natural_constraints(&t.nu, d))?;
    let mut candidates = region.vertices(VERTEX_LIMIT)?.unwrap_or_default();
    let vertices_tested = candidates.len();
    let radius = 1.0 + 2.0 * linalg::norm_inf(&rho);
    let mut random_tested = 0;
    for _ in 0..200 * n_dirs {
        if random_tested == n_dirs {
            break;
        }
        let p = Vector::from_fn(d, |i, _| rho[i] + radius * rng.random_range(-1.0..=1.0));
        if region.contains(&p, 0.0) {
            candidates.push(p);
            random_tested += 1;
        }
    }
    let mut max_rel = 0.0;
    let mut argmax = rho.clone();
    for p in candidates {
        let r = rel_rate(&p, &rho, t)?;
        if r > max_rel || r.is_nan() {
            max_rel = r;
            argmax = p;
        }
    }
    Ok(SegmentCertificate {
        index: sol.index,
        max_rel,
        argmax: argmax.iter().copied().collect(),
        vertices_tested,
        random_tested,
    })
}

/// Evaluates `rel(π|ρ)` at the vertices of `C ∩ C₀` and at `n_dirs` random
/// feasible portfolios per segment; passes when the maximum is `≤ tol`.
pub fn verify_solution(
    sol: &NumeraireSolution,
    m: &MarketSpec,
    c: &ConstraintSet,
    n_dirs: usize,
    seed: u64,
    tol: f64,
) -> Result<Certificate> {
    if sol.segments.len() != m.segments.len() {
        return Err(Error::LengthMismatch { expected: m.segments.len(), got: sol.segments.len() });
    }
    let segments = sol
        .segments
        .par_iter()
        .map(|s| {
            let seg = &m.segments[s.index];
            let t = match s.solved_n {
                Some(n) => seg.triplet(Approx::Index(n))?,
                None => seg.raw_triplet()?,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s.index as u64);
            certify_segment(s, &t, c, n_dirs, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let max_rel = segments.iter().map(|s| s.max_rel).fold(0.0, f64::max);
    Ok(Certificate { pass: max_rel <= tol, segments, max_rel, tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{JumpAtom, JumpMeasure, OperationalClock};
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    fn m1(x: f64) -> Matrix {
        Matrix::from_element(1, 1, x)
    }

    fn jumps(atoms: &[(&[f64], f64)]) -> JumpMeasure {
        JumpMeasure::explicit(atoms.iter().map(|(x, l)| JumpAtom::new(v(x), *l).unwrap()).collect())
    }

    fn interval(lo: f64, hi: f64) -> ConstraintSet {
        ConstraintSet::new(Matrix::from_row_slice(2, 1, &[1.0, -1.0]), v(&[hi, -lo])).unwrap()
    }

    #[test]
    fn growth_rate_examples() {
        let t = Triplet::diffusion(v(&[0.1]), m1(0.04)).unwrap();
        assert_eq!(growth_rate(&v(&[0.0]), &t), 0.0);
        assert!((growth_rate(&v(&[2.5]), &t) - 0.125).abs() < 1e-15);
        let t = Triplet::new(v(&[0.0]), m1(0.0), jumps(&[(&[-0.5], 1.0)]), 0.0).unwrap();
        assert_eq!(growth_rate(&v(&[3.0]), &t), f64::NEG_INFINITY);
    }

    #[test]
    fn gradient_examples() {
        let t = Triplet::diffusion(v(&[0.3, 0.1]), Matrix::from_row_slice(2, 2, &[0.2, 0.05, 0.05, 0.1])).unwrap();
        let pi = v(&[0.7, -1.2]);
        assert!((growth_gradient(&pi, &t).unwrap() - (&t.b - &t.c * &pi)).norm() < 1e-15);
        let t = Triplet::new(v(&[0.2]), m1(0.0), jumps(&[(&[0.5], 1.0), (&[-0.3], 2.0)]), 0.0).unwrap();
        assert!((growth_gradient(&v(&[0.0]), &t).unwrap()[0] - 0.2).abs() < 1e-15);
        assert!(matches!(growth_gradient(&v(&[-3.0]), &t), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn rel_rate_examples() {
        let t = Triplet::new(v(&[0.0]), m1(0.0), jumps(&[(&[1.0], 1.0)]), 0.0).unwrap();
        assert_eq!(rel_rate(&v(&[1.0]), &v(&[0.0]), &t).unwrap(), 0.0);
        assert_eq!(rel_rate(&v(&[0.4]), &v(&[0.4]), &t).unwrap(), 0.0);
        let c = Matrix::from_row_slice(2, 2, &[0.2, 0.05, 0.05, 0.1]);
        let rho = v(&[1.0, -2.0]);
        let t = Triplet::diffusion(&c * &rho, c).unwrap();
        assert!(rel_rate(&v(&[5.0, 3.0]), &rho, &t).unwrap().abs() < 1e-15);
        assert!(matches!(
            rel_rate(&v(&[0.0]), &v(&[-1.0]), &Triplet::new(v(&[0.0]), m1(0.0), jumps(&[(&[1.0], 1.0)]), 0.0).unwrap()),
            Err(Error::Inadmissible(_))
        ));
    }

    #[test]
    fn psi_examples() {
        let t = Triplet::new(v(&[0.3]), m1(0.2), jumps(&[(&[2.0], 0.5)]), 0.0).unwrap();
        let p = psi_rho(&v(&[1.0]), &t);
        assert_eq!(p.psi1, 0.5);
        assert!((p.psi2 - 0.3).abs() < 1e-15);
        assert!((p.psi_hat1 - 0.2).abs() < 1e-15);
        assert_eq!(p.psi_hat2, 0.5);
        assert_eq!(p.psi_hat3, p.psi2);
        let z = psi_rho(&v(&[0.0]), &t);
        assert_eq!([z.psi1, z.psi2, z.psi, z.psi_hat1, z.psi_hat2, z.psi_hat3], [0.0; 6]);
    }

    #[test]
    fn continuous_closed_form() {
        let c = Matrix::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.09]);
        let b = v(&[0.05, -0.02]);
        let t = Triplet::diffusion(b.clone(), c.clone()).unwrap();
        let s = solve_segment(&t, &ConstraintSet::unconstrained(2), &SolveOptions::default()).unwrap();
        let expected = c.clone().try_inverse().unwrap() * b;
        assert!((s.rho - expected).amax() < 1e-9);
    }

    #[test]
    fn bessel_segment_has_unit_numeraire() {
        let t = Triplet::diffusion(v(&[2.7]), m1(2.7)).unwrap();
        let s = solve_segment(&t, &ConstraintSet::unconstrained(1), &SolveOptions::default()).unwrap();
        assert!((s.rho[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_jumps_give_zero() {
        let t = Triplet::new(v(&[0.0]), m1(0.0), jumps(&[(&[0.5], 1.0), (&[-0.5], 1.0)]), 0.0).unwrap();
        let s = solve_segment(&t, &interval(-1.0, 1.0), &SolveOptions::default()).unwrap();
        assert!(s.rho[0].abs() < 1e-9);
        let grid_best = (-100..=100)
            .map(|i| i as f64 / 100.0)
            .max_by(|a, b| growth_rate(&v(&[*a]), &t).total_cmp(&growth_rate(&v(&[*b]), &t)))
            .unwrap();
        assert_eq!(grid_best, 0.0);
    }

    #[test]
    fn uip_is_rejected() {
        let t = Triplet::new(v(&[1.0]), m1(0.0), jumps(&[(&[1.0], 1.0)]), 0.0).unwrap();
        let e = solve_segment(&t, &ConstraintSet::long_only(1), &SolveOptions::default()).unwrap_err();
        assert!(matches!(e, Error::Uip { .. }));
    }

    #[test]
    fn binding_constraint_and_null_direction() {
        // b has a component that only a bounded constraint tames
        let t = Triplet::diffusion(v(&[0.5, 0.0]), Matrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.0])).unwrap();
        let s = solve_segment(&t, &ConstraintSet::simplex(2), &SolveOptions::default()).unwrap();
        assert!((s.rho[0] - 1.0).abs() < 1e-9, "{:?}", s.rho);
        assert_eq!(s.trace.null_dim, 1);
    }

    #[test]
    fn single_segment_solution_is_integrable() {
        let c = Matrix::from_row_slice(2, 2, &[0.04, 0.0, 0.0, 0.09]);
        let t = Triplet::diffusion(v(&[0.02, 0.03]), c).unwrap();
        let m = MarketSpec::levy(&t, OperationalClock::uniform(1.0, 16).unwrap()).unwrap();
        let sol = solve_numeraire(&m, &ConstraintSet::unconstrained(2), &SolveOptions::default()).unwrap();
        assert!(sol.integrable());
        assert!((sol.rho(0) - v(&[0.5, 1.0 / 3.0])).amax() < 1e-9);
        assert!(sol.rel_cert <= 1e-7);
    }

    #[test]
    fn singular_market_flagged() {
        let times: Vec<f64> = (0..=26 * 8).map(|j| 1.0 - 2f64.powf(-(j as f64) / 8.0)).collect();
        let clock = OperationalClock::new(times).unwrap();
        let segs = (0..clock.len())
            .map(|k| crate::market::Segment {
                from: k,
                to: k + 1,
                b: v(&[(1.0 - clock.times()[k]).powf(-0.5)]),
                c: m1(1.0),
                atoms: vec![],
                density: None,
                dg_jump: 0.0,
            })
            .collect();
        let m = MarketSpec::new(1, clock, segs).unwrap();
        let sol = solve_numeraire(&m, &ConstraintSet::unconstrained(1), &SolveOptions::default()).unwrap();
        assert!(!sol.integrable());
        assert!(sol.integrability.refinement.diverged);
        let k = 100;
        assert!((sol.segments[k].rho[0] - m.segments[k].b[0]).abs() < 1e-9);
    }

    #[test]
    fn certificate_rejects_perturbed_rho() {
        let c = Matrix::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.09]);
        let t = Triplet::diffusion(v(&[0.05, -0.02]), c).unwrap();
        let m = MarketSpec::levy(&t, OperationalClock::uniform(1.0, 4).unwrap()).unwrap();
        let cs = ConstraintSet::unconstrained(2);
        let mut sol = solve_numeraire(&m, &cs, &SolveOptions::default()).unwrap();
        assert!(verify_solution(&sol, &m, &cs, 256, 1, 1e-7).unwrap().pass);
        sol.segments[0].rho[0] += 0.3;
        assert!(!verify_solution(&sol, &m, &cs, 256, 1, 1e-7).unwrap().pass);
    }

    #[test]
    fn zero_constraint_set() {
        let t = Triplet::diffusion(v(&[0.3]), m1(0.1)).unwrap();
        let cs = interval(0.0, 0.0);
        let m = MarketSpec::levy(&t, OperationalClock::uniform(1.0, 2).unwrap()).unwrap();
        let sol = solve_numeraire(&m, &cs, &SolveOptions::default()).unwrap();
        assert!(sol.rho(0)[0].abs() < 1e-12);
        assert!(verify_solution(&sol, &m, &cs, 16, 0, 1e-7).unwrap().pass);
    }

    fn triplet_strategy() -> impl Strategy<Value = Triplet> {
        (1usize..=3).prop_flat_map(|d| {
            (
                prop::collection::vec(-0.3..0.3f64, d),
                prop::collection::vec(-0.4..0.4f64, d * d),
                prop::collection::vec((prop::collection::vec(-0.6..0.9f64, d), 0.05..1.5f64), 0..=3),
            )
                .prop_map(move |(b, l, atoms)| {
                    let l = Matrix::from_row_slice(d, d, &l);
                    let c = &l * l.transpose() + Matrix::identity(d, d) * 0.05;
                    let atoms =
                        atoms.into_iter().map(|(x, lam)| JumpAtom::new(Vector::from_vec(x), lam).unwrap()).collect();
                    Triplet::new(Vector::from_vec(b), c, JumpMeasure::explicit(atoms), 0.0).unwrap()
                })
        })
    }

    fn admissible_point(t: &Triplet, raw: &[f64]) -> Vector {
        let mut p = Vector::from_fn(t.d(), |i, _| raw[i % raw.len()]);
        // shrink toward 0 until strictly inside the natural domain
        while t.nu.atoms.iter().any(|a| 1.0 + p.dot(&a.x) <= 0.05) {
            p *= 0.5;
        }
        p
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gradient_identity(t in triplet_strategy(), a in prop::collection::vec(-2.0..2.0f64, 3), b in prop::collection::vec(-2.0..2.0f64, 3)) {
            let rho = admissible_point(&t, &a);
            let pi = admissible_point(&t, &b);
            let lhs = growth_gradient(&rho, &t).unwrap().dot(&(&pi - &rho));
            let rhs = rel_rate(&pi, &rho, &t).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs().max(rhs.abs())), "{lhs} vs {rhs}");
        }

        #[test]
        fn gradient_matches_finite_differences(t in triplet_strategy(), a in prop::collection::vec(-2.0..2.0f64, 3)) {
            let pi = admissible_point(&t, &a);
            let g = growth_gradient(&pi, &t).unwrap();
            let h = 1e-6;
            for i in 0..t.d() {
                let mut up = pi.clone();
                up[i] += h;
                let mut dn = pi.clone();
                dn[i] -= h;
                let fd = (growth_rate(&up, &t) - growth_rate(&dn, &t)) / (2.0 * h);
                prop_assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()), "{fd} vs {}", g[i]);
            }
        }

        #[test]
        fn concavity(t in triplet_strategy(), a in prop::collection::vec(-2.0..2.0f64, 3), b in prop::collection::vec(-2.0..2.0f64, 3), l in 0.01..0.99f64) {
            let p1 = admissible_point(&t, &a);
            let p2 = admissible_point(&t, &b);
            let mid = l * &p1 + (1.0 - l) * &p2;
            prop_assert!(growth_rate(&mid, &t) >= l * growth_rate(&p1, &t) + (1.0 - l) * growth_rate(&p2, &t) - 1e-12);
        }

        #[test]
        fn uniqueness_and_scalar_family(t in triplet_strategy(), a in prop::collection::vec(-1.0..1.0f64, 3)) {
            let cs = ConstraintSet::unconstrained(t.d());
            let opts = SolveOptions::default();
            let s0 = solve_segment(&t, &cs, &opts);
            prop_assume!(s0.is_ok());
            let s0 = s0.unwrap();
            let start = admissible_point(&t, &a);
            let s1 = solve_segment_from(&t, &cs, &opts, &start).unwrap();
            prop_assert!((&s0.rho - &s1.rho).amax() <= 1e-6);
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=20 {
                let g = growth_rate(&(k as f64 / 20.0 * &s0.rho), &t);
                prop_assert!(g >= prev - 1e-12);
                prev = g;
            }
            prop_assert_eq!(psi_rho(&s0.rho, &t).psi_hat3, psi_rho(&s0.rho, &t).psi2);
        }
    }

    #[test]
    fn null_direction_invariance() {
        let t = Triplet::new(
            v(&[0.2, 0.2, 0.0]),
            Matrix::from_row_slice(3, 3, &[0.1, 0.1, 0.0, 0.1, 0.1, 0.0, 0.0, 0.0, 0.0]),
            jumps(&[(&[0.3, 0.3, 0.0], 1.0)]),
            0.0,
        )
        .unwrap();
        let ns = null_space(&t);
        assert_eq!(ns.dim(), 2);
        let pi = v(&[0.4, -0.1, 0.2]);
        let rho = v(&[0.1, 0.2, 0.0]);
        for z in &ns.basis {
            let moved = &pi + 3.0 * z;
            assert!((growth_rate(&moved, &t) - growth_rate(&pi, &t)).abs() < 1e-14);
            assert!((rel_rate(&moved, &rho, &t).unwrap() - rel_rate(&pi, &rho, &t).unwrap()).abs() < 1e-14);
        }
    }
}
