//! JSON market specifications.
//!
//! ```json
//! {
//!   "d": 1,
//!   "clock": { "uniform": { "horizon": 1.0, "steps": 128 } },
//!   "segments": [
//!     { "b": [0.05], "c": [[0.04]], "atoms": [{ "x": [0.5], "intensity": 1.0 }] }
//!   ],
//!   "constraints": "long-only"
//! }
//! ```
//!
//! The clock is `{"times": [...]}`, `{"uniform": {...}}` or
//! `{"geometric": {"octaves": n, "per_octave": m}}` (times `1 − 2^{−j/m}`).
//! Segment `from` defaults to the end of the previous segment and `to` of
//! the last segment to the clock length.

use serde::Deserialize;

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::market::{DensitySpec, JumpAtom, MarketSpec, OperationalClock, Segment};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
enum ClockDoc {
    Times(Vec<f64>),
    Uniform { horizon: f64, steps: usize },
    Geometric { octaves: usize, per_octave: usize },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomDoc {
    x: Vec<f64>,
    intensity: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityDoc {
    family: String,
    scale: f64,
    tail_index: f64,
    direction: Vec<f64>,
    #[serde(default = "half")]
    up_fraction: f64,
    #[serde(default = "one")]
    x_min: f64,
    #[serde(default)]
    x_max: Option<f64>,
    #[serde(default = "default_nodes")]
    quad_nodes: usize,
}

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

fn default_nodes() -> usize {
    48
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentDoc {
    #[serde(default)]
    from: Option<usize>,
    #[serde(default)]
    to: Option<usize>,
    b: Vec<f64>,
    c: Vec<Vec<f64>>,
    #[serde(default)]
    atoms: Vec<AtomDoc>,
    #[serde(default)]
    density: Option<DensityDoc>,
    #[serde(default, rename = "dG_jump")]
    dg_jump: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolyhedronDoc {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    u: Vec<f64>,
    #[serde(default)]
    is_cone: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ConstraintDoc {
    Preset(String),
    Polyhedron(PolyhedronDoc),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    d: usize,
    clock: ClockDoc,
    segments: Vec<SegmentDoc>,
    #[serde(default)]
    constraints: Option<ConstraintDoc>,
    #[serde(default)]
    psi_diverges: bool,
}

/// A parsed specification file.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecFile {
    pub market: MarketSpec,
    pub constraints: Option<ConstraintSet>,
}

fn matrix(rows: &[Vec<f64>], d: usize, what: &str) -> Result<Matrix> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidMarket(format!("{what} must be a {d}×{d} matrix")));
    }
    Ok(Matrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn vector(xs: &[f64], d: usize, what: &str) -> Result<Vector> {
    if xs.len() != d {
        return Err(Error::InvalidMarket(format!("{what} has length {} instead of {d}", xs.len())));
    }
    Ok(Vector::from_row_slice(xs))
}

fn build_constraints(doc: ConstraintDoc, d: usize) -> Result<ConstraintSet> {
    match doc {
        ConstraintDoc::Preset(name) => ConstraintSet::preset(&name, d),
        ConstraintDoc::Polyhedron(p) => {
            if p.a.iter().any(|r| r.len() != d) {
                return Err(Error::InvalidMarket(format!("every constraint row needs {d} entries")));
            }
            let a = Matrix::from_fn(p.a.len(), d, |i, j| p.a[i][j]);
            ConstraintSet::from_parts(a, Vector::from_vec(p.u), p.is_cone)
        }
    }
}

fn build_clock(doc: ClockDoc) -> Result<OperationalClock> {
    match doc {
        ClockDoc::Times(t) => OperationalClock::new(t),
        ClockDoc::Uniform { horizon, steps } => OperationalClock::uniform(horizon, steps),
        ClockDoc::Geometric { octaves, per_octave } => {
            if octaves == 0 || per_octave == 0 {
                return Err(Error::InvalidClock("geometric clock needs positive octaves and per_octave".into()));
            }
            OperationalClock::new(crate::simulation::geometric_clock_times(octaves, per_octave))
        }
    }
}

pub fn parse_spec(text: &str) -> Result<SpecFile> {
    let doc: SpecDoc = serde_json::from_str(text).map_err(Error::from)?;
    let d = doc.d;
    if d == 0 {
        return Err(Error::InvalidMarket("asset count d must be positive".into()));
    }
    let clock = build_clock(doc.clock)?;
    let n_seg = doc.segments.len();
    let mut segments = Vec::with_capacity(n_seg);
    let mut next = 0;
    for (i, s) in doc.segments.into_iter().enumerate() {
        let from = s.from.unwrap_or(next);
        let to = match s.to {
            Some(t) => t,
            None if i + 1 == n_seg => clock.len(),
            None => return Err(Error::InvalidMarket(format!("segment {i} needs `to`"))),
        };
        next = to;
        let atoms = s
            .atoms
            .iter()
            .map(|a| JumpAtom::new(vector(&a.x, d, "atom x")?, a.intensity))
            .collect::<Result<Vec<_>>>()?;
        let density = s
            .density
            .map(|ds| {
                DensitySpec::new(
                    &ds.family,
                    ds.scale,
                    ds.tail_index,
                    vector(&ds.direction, d, "density direction")?,
                    ds.up_fraction,
                    ds.x_min,
                    ds.x_max,
                    ds.quad_nodes,
                )
            })
            .transpose()?;
        segments.push(Segment {
            from,
            to,
            b: vector(&s.b, d, "b")?,
            c: matrix(&s.c, d, "c")?,
            atoms,
            density,
            dg_jump: s.dg_jump,
        });
    }
    let mut market = MarketSpec::new(d, clock, segments)?;
    market.psi_diverges = doc.psi_diverges;
    let constraints = doc.constraints.map(|c| build_constraints(c, d)).transpose()?;
    Ok(SpecFile { market, constraints })
}

/// A standalone constraint block: a preset name (as a JSON string) or
/// `{"A": [[...]], "u": [...], "is_cone": bool}`.
pub fn parse_constraints(text: &str, d: usize) -> Result<ConstraintSet> {
    let doc: ConstraintDoc = serde_json::from_str(text).map_err(Error::from)?;
    build_constraints(doc, d)
}
