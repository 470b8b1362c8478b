use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::linalg::{self, Matrix, Vector};
use crate::market::{JumpAtom, MarketSpec, OperationalClock};

/// Per-step Poisson means above this trigger an accuracy warning.
pub const POISSON_ADVISORY: f64 = 0.1;

/// Words reserved per step in a path's stream; the stream is repositioned
/// at every step so that draws are keyed by `(seed, path, step)`.
const WORDS_PER_STEP_LOG2: u32 = 24;

/// Seeded generator for one `(seed, path, step)` cell.
pub fn step_rng(seed: u64, path: usize, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng.set_word_pos((step as u128) << WORDS_PER_STEP_LOG2);
    rng
}

#[derive(Debug, Clone, PartialEq)]
struct SegmentLaw {
    /// `b − ∫ x 1{|x|≤1} ν(dx)`
    drift: Vector,
    factor: Matrix,
    atoms: Vec<JumpAtom>,
    dg_jump: f64,
}

/// The increment law of a market on its clock.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulator {
    d: usize,
    seed: u64,
    clock: OperationalClock,
    owner: Vec<usize>,
    laws: Vec<SegmentLaw>,
    warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct JumpEvent {
    pub step: u32,
    pub atom: u32,
    pub count: u32,
}

/// One sampled path: continuous increments `ΔX^c_k` (row-major, `K × d`)
/// and the atoms that fired.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub index: usize,
    pub continuous: Vec<f64>,
    pub jumps: Vec<JumpEvent>,
}

impl Simulator {
    pub fn new(m: &MarketSpec, seed: u64) -> Result<Self> {
        let mut laws = Vec::with_capacity(m.segments.len());
        let mut warnings = Vec::new();
        for (i, seg) in m.segments.iter().enumerate() {
            let t = seg.raw_triplet()?;
            let drift = &t.b - t.nu.small_jump_mean(m.d);
            if t.dg_jump == 0.0 {
                let max_dg = (seg.from..seg.to).map(|k| m.clock.increment(k)).fold(0.0, f64::max);
                let worst = t.nu.atoms.iter().map(|a| a.intensity).fold(0.0, f64::max) * max_dg;
                if worst > POISSON_ADVISORY {
                    warnings.push(format!(
                        "segment {i}: λΔG reaches {worst:.3} > {POISSON_ADVISORY}; jump steps may be coarse"
                    ));
                }
            }
            laws.push(SegmentLaw { drift, factor: linalg::psd_factor(&t.c), atoms: t.nu.atoms, dg_jump: t.dg_jump });
        }
        Ok(Self { d: m.d, seed, clock: m.clock.clone(), owner: m.interval_segments(), laws, warnings })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn clock(&self) -> &OperationalClock {
        &self.clock
    }

    pub fn steps(&self) -> usize {
        self.clock.len()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Segment owning step `k`.
    pub fn segment_of(&self, k: usize) -> usize {
        self.owner[k]
    }

    pub fn atom(&self, step: usize, atom: usize) -> &JumpAtom {
        &self.laws[self.owner[step]].atoms[atom]
    }

    pub fn path(&self, index: usize) -> SamplePath {
        let d = self.d;
        let k_max = self.steps();
        let mut continuous = vec![0.0; k_max * d];
        let mut jumps = Vec::new();
        let mut rng = step_rng(self.seed, index, 0);
        let mut z = Vector::zeros(d);
        for k in 0..k_max {
            rng.set_word_pos((k as u128) << WORDS_PER_STEP_LOG2);
            let law = &self.laws[self.owner[k]];
            let dg = self.clock.increment(k);
            let out = &mut continuous[k * d..(k + 1) * d];
            if law.dg_jump > 0.0 {
                // at most one jump on a clock jump, with probabilities λ_j ΔG
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (j, a) in law.atoms.iter().enumerate() {
                    acc += a.intensity * dg;
                    if u < acc {
                        jumps.push(JumpEvent { step: k as u32, atom: j as u32, count: 1 });
                        break;
                    }
                }
                for (o, b) in out.iter_mut().zip(law.drift.iter()) {
                    *o = b * dg;
                }
                continue;
            }
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            let diffusion = &law.factor * &z;
            let sq = dg.sqrt();
            for i in 0..d {
                out[i] = law.drift[i] * dg + diffusion[i] * sq;
            }
            for (j, a) in law.atoms.iter().enumerate() {
                let mean = a.intensity * dg;
                if mean <= 0.0 {
                    continue;
                }
                let count = Poisson::new(mean).map(|p| p.sample(&mut rng)).unwrap_or(0.0) as u32;
                if count > 0 {
                    jumps.push(JumpEvent { step: k as u32, atom: j as u32, count });
                }
            }
        }
        SamplePath { index, continuous, jumps }
    }

    /// Total increments `ΔX_k` of a path, row-major `K × d`.
    pub fn increments(&self, path: &SamplePath) -> Vec<f64> {
        let d = self.d;
        let mut out = path.continuous.clone();
        for e in &path.jumps {
            let x = &self.atom(e.step as usize, e.atom as usize).x;
            let row = &mut out[e.step as usize * d..(e.step as usize + 1) * d];
            for (r, xi) in row.iter_mut().zip(x.iter()) {
                *r += e.count as f64 * xi;
            }
        }
        out
    }

    /// Per-step wealth factors `(1 + πᵀΔX^c) Π_j (1 + πᵀx_j)^{N_j}` for a
    /// per-step strategy.
    pub fn wealth_factors(&self, path: &SamplePath, strategy: &[Vector]) -> Vec<f64> {
        let d = self.d;
        let mut f: Vec<f64> = (0..self.steps())
            .map(|k| {
                let pi = &strategy[k];
                1.0 + (0..d).map(|i| pi[i] * path.continuous[k * d + i]).sum::<f64>()
            })
            .collect();
        for e in &path.jumps {
            let k = e.step as usize;
            let s = strategy[k].dot(&self.atom(k, e.atom as usize).x);
            f[k] *= (1.0 + s).powi(e.count as i32);
        }
        f
    }
}

/// A seeded ensemble of sampled paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub simulator: Simulator,
    pub paths: Vec<SamplePath>,
}

impl PathBundle {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn seed(&self) -> u64 {
        self.simulator.seed
    }

    pub fn clock(&self) -> &OperationalClock {
        &self.simulator.clock
    }
}

pub fn simulate_paths(m: &MarketSpec, n_paths: usize, seed: u64) -> Result<PathBundle> {
    let simulator = Simulator::new(m, seed)?;
    let paths = (0..n_paths).into_par_iter().map(|i| simulator.path(i)).collect();
    Ok(PathBundle { simulator, paths })
}
