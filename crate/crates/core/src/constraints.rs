//! Polyhedral constraint geometry: `{p : A p ≤ u}`, natural constraints,
//! recession cones, the null-investment subspace and Euclidean projection.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::lp::{Cmp, LinearProgram, LpOutcome};
use crate::market::{JumpMeasure, Triplet};

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    a: Matrix,
    u: Vector,
    is_cone: bool,
}

impl ConstraintSet {
    pub fn new(a: Matrix, u: Vector) -> Result<Self> {
        if a.nrows() != u.len() {
            return Err(Error::LengthMismatch { expected: a.nrows(), got: u.len() });
        }
        if a.iter().chain(u.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidMarket("constraint coefficients must be finite".into()));
        }
        let is_cone = u.iter().all(|v| *v == 0.0) && a.nrows() > 0;
        Ok(Self { a, u, is_cone })
    }

    /// `{p : A p ≤ 0}`.
    pub fn cone(a: Matrix) -> Result<Self> {
        let m = a.nrows();
        let mut s = Self::new(a, Vector::zeros(m))?;
        s.is_cone = true;
        Ok(s)
    }

    /// Builds from rows; `is_cone` requires `u = 0`.
    pub fn from_parts(a: Matrix, u: Vector, is_cone: bool) -> Result<Self> {
        if is_cone && u.iter().any(|v| *v != 0.0) {
            return Err(Error::InvalidMarket("a cone constraint must have u = 0".into()));
        }
        let mut s = Self::new(a, u)?;
        s.is_cone = is_cone || s.is_cone;
        Ok(s)
    }

    /// All of ℝ^d.
    pub fn unconstrained(d: usize) -> Self {
        Self { a: Matrix::zeros(0, d), u: Vector::zeros(0), is_cone: true }
    }

    /// `{p ≥ 0}`.
    pub fn long_only(d: usize) -> Self {
        Self { a: -Matrix::identity(d, d), u: Vector::zeros(d), is_cone: true }
    }

    /// `{p ≥ 0, Σ p ≤ 1}`: no short sales, no borrowing.
    pub fn simplex(d: usize) -> Self {
        let mut a = Matrix::zeros(d + 1, d);
        a.view_mut((0, 0), (d, d)).copy_from(&(-Matrix::identity(d, d)));
        a.row_mut(d).fill(1.0);
        let mut u = Vector::zeros(d + 1);
        u[d] = 1.0;
        Self { a, u, is_cone: false }
    }

    pub fn preset(name: &str, d: usize) -> Result<Self> {
        match name {
            "unconstrained" => Ok(Self::unconstrained(d)),
            "long-only" | "long_only" => Ok(Self::long_only(d)),
            "simplex" => Ok(Self::simplex(d)),
            other => Err(Error::InvalidMarket(format!("unknown constraint preset `{other}`"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn u(&self) -> &Vector {
        &self.u
    }

    pub fn is_cone(&self) -> bool {
        self.is_cone
    }

    /// Stacked rows; a cone only when both inputs are.
    pub fn intersect(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        let d = self.dim();
        let m = self.n_rows() + other.n_rows();
        let mut a = Matrix::zeros(m, d);
        a.view_mut((0, 0), (self.n_rows(), d)).copy_from(&self.a);
        a.view_mut((self.n_rows(), 0), (other.n_rows(), d)).copy_from(&other.a);
        let mut u = Vector::zeros(m);
        u.rows_mut(0, self.n_rows()).copy_from(&self.u);
        u.rows_mut(self.n_rows(), other.n_rows()).copy_from(&other.u);
        Ok(Self { a, u, is_cone: self.is_cone && other.is_cone })
    }

    /// `{p : A p ≤ 0}`, the set of cone points of a nonempty polyhedron.
    pub fn recession_cone(&self) -> Self {
        Self { a: self.a.clone(), u: Vector::zeros(self.n_rows()), is_cone: true }
    }

    pub fn contains(&self, p: &Vector, tol: f64) -> bool {
        if p.len() != self.dim() {
            return false;
        }
        let ap = &self.a * p;
        ap.iter().zip(self.u.iter()).all(|(l, r)| *l <= r + tol)
    }

    /// Largest violation `max_i (A p − u)_i`, or `0` when there are no rows.
    pub fn max_violation(&self, p: &Vector) -> f64 {
        let ap = &self.a * p;
        ap.iter().zip(self.u.iter()).map(|(l, r)| l - r).fold(0.0, f64::max)
    }

    /// The set in coordinates `z` with `p = B z`, for `B` with orthonormal
    /// columns. Rows that vanish on the range of `B` are dropped after
    /// checking their right-hand side.
    pub fn restrict(&self, basis: &Matrix) -> Result<Self> {
        let ab = &self.a * basis;
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..self.n_rows() {
            let row = ab.row(i);
            let scale = self.a.row(i).norm().max(f64::MIN_POSITIVE);
            if row.norm() <= 1e-12 * scale {
                if self.u[i] < -1e-12 * scale {
                    return Err(Error::Infeasible);
                }
                continue;
            }
            rows.push(row.into_owned());
            rhs.push(self.u[i]);
        }
        let r = basis.ncols();
        let mut a = Matrix::zeros(rows.len(), r);
        for (i, row) in rows.iter().enumerate() {
            a.set_row(i, row);
        }
        Ok(Self { a, u: Vector::from_vec(rhs), is_cone: self.is_cone })
    }

    /// Row-normalized copy with zero rows removed and parallel rows merged
    /// into the tightest one.
    fn normalized(&self) -> Result<Self> {
        let mut rows: Vec<Vector> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        for i in 0..self.n_rows() {
            let row = self.a.row(i).transpose();
            let big = row.amax();
            if big == 0.0 {
                if self.u[i] < 0.0 {
                    return Err(Error::Infeasible);
                }
                continue;
            }
            // scale first so huge jump sizes cannot overflow the norm
            let unit = &row / big;
            let n = unit.norm();
            let unit = unit / n;
            let bound = self.u[i] / big / n;
            match rows.iter().position(|r| (r - &unit).amax() <= 1e-14) {
                Some(k) => rhs[k] = rhs[k].min(bound),
                None => {
                    rows.push(unit);
                    rhs.push(bound);
                }
            }
        }
        let mut a = Matrix::zeros(rows.len(), self.dim());
        for (i, row) in rows.iter().enumerate() {
            a.set_row(i, &row.transpose());
        }
        Ok(Self { a, u: Vector::from_vec(rhs), is_cone: self.is_cone })
    }

    /// A point of the set closest to `target` in the 1-norm, if any.
    fn feasible_point_near(&self, target: &Vector) -> Result<Option<Vector>> {
        let d = self.dim();
        if self.n_rows() == 0 {
            return Ok(Some(target.clone()));
        }
        // variables: x (free), t ≥ 0 with |x − target| ≤ t
        let mut obj = vec![0.0; 2 * d];
        obj[d..].iter_mut().for_each(|c| *c = 1.0);
        let mut lp = LinearProgram::minimize(obj);
        for j in 0..d {
            lp.bound(d + j, 0.0, f64::INFINITY);
            let mut up = vec![0.0; 2 * d];
            up[j] = 1.0;
            up[d + j] = -1.0;
            lp.row(up, Cmp::Le, target[j]);
            let mut down = vec![0.0; 2 * d];
            down[j] = -1.0;
            down[d + j] = -1.0;
            lp.row(down, Cmp::Le, -target[j]);
        }
        for i in 0..self.n_rows() {
            let mut row = vec![0.0; 2 * d];
            for (j, slot) in row.iter_mut().take(d).enumerate() {
                *slot = self.a[(i, j)];
            }
            lp.row(row, Cmp::Le, self.u[i]);
        }
        match lp.solve()? {
            LpOutcome::Optimal { x, .. } => Ok(Some(Vector::from_column_slice(&x[..d]))),
            LpOutcome::Infeasible => Ok(None),
            LpOutcome::Unbounded => Err(Error::Lp("distance LP reported unbounded".into())),
        }
    }

    pub fn feasible_point(&self) -> Result<Option<Vector>> {
        self.normalized()?.feasible_point_near(&Vector::zeros(self.dim()))
    }

    pub fn is_empty(&self) -> Result<bool> {
        match self.normalized() {
            Ok(n) => Ok(n.feasible_point_near(&Vector::zeros(self.dim()))?.is_none()),
            Err(Error::Infeasible) => Ok(true),
            Err(e) => Err(e),
        }
    }

    /// Euclidean projection by a primal active-set method.
    ///
    /// The iterate stays feasible; the working set stays linearly
    /// independent because a blocking row always has `a_iᵀ s > 0` while
    /// `A_W s = 0`.
    pub fn project(&self, p: &Vector) -> Result<Vector> {
        if p.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: p.len() });
        }
        let set = self.normalized()?;
        if set.contains(p, 0.0) {
            return Ok(p.clone());
        }
        let x = set.feasible_point_near(p)?.ok_or(Error::Infeasible)?;
        let violation = set.max_violation(&x);
        if violation > 1e-9 * (1.0 + x.amax()) {
            return Err(Error::Lp(format!("phase-1 point violates the constraints by {violation:e}")));
        }
        set.active_set_projection(p, x)
    }

    /// Projection warm-started from a point already in the set, skipping
    /// the initial linear program.
    pub fn project_from(&self, p: &Vector, start: &Vector) -> Result<Vector> {
        if p.len() != self.dim() || start.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: p.len().min(start.len()) });
        }
        let set = self.normalized()?;
        if set.contains(p, 0.0) {
            return Ok(p.clone());
        }
        if set.max_violation(start) > 1e-9 * (1.0 + start.amax()) {
            return self.project(p);
        }
        set.active_set_projection(p, start.clone())
    }

    fn active_set_projection(&self, p: &Vector, mut x: Vector) -> Result<Vector> {
        let set = self;
        let m = set.n_rows();
        let scale = 1.0 + p.amax();
        let mut working: Vec<usize> = Vec::new();
        for i in 0..m {
            let slack = set.u[i] - set.a.row(i).dot(&x.transpose());
            if slack.abs() <= 1e-10 * scale && independent_of(&set.a, &working, i) {
                working.push(i);
            }
        }
        let max_iter = 50 * (m + self.dim()) + 100;
        for _ in 0..max_iter {
            let r = p - &x;
            let (step, mult) = equality_step(&set.a, &working, &r);
            if step.norm() <= 1e-13 * scale {
                let worst = mult
                    .iter()
                    .enumerate()
                    .filter(|(_, l)| **l < -1e-12 * scale)
                    .min_by(|a, b| a.1.total_cmp(b.1).then(working[a.0].cmp(&working[b.0])));
                match worst {
                    None => return Ok(x),
                    Some((pos, _)) => {
                        working.remove(pos);
                    }
                }
                continue;
            }
            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..m {
                if working.contains(&i) {
                    continue;
                }
                let row = set.a.row(i);
                let as_ = row.dot(&step.transpose());
                if as_ > 1e-14 * step.norm() {
                    let ratio = ((set.u[i] - row.dot(&x.transpose())) / as_).max(0.0);
                    if ratio < alpha {
                        alpha = ratio;
                        blocking = Some(i);
                    }
                }
            }
            x.axpy(alpha, &step, 1.0);
            if let Some(i) = blocking {
                working.push(i);
            }
        }
        Err(Error::NonConvergence { iterations: max_iter, residual: f64::NAN, last: x.iter().copied().collect() })
    }

    /// Vertices found by solving every `d`-subset of rows, when there are at
    /// most `limit` subsets. `None` when enumeration is too large.
    pub fn vertices(&self, limit: usize) -> Result<Option<Vec<Vector>>> {
        let set = self.normalized()?;
        let d = set.dim();
        let m = set.n_rows();
        if d == 0 || m < d {
            return Ok(Some(Vec::new()));
        }
        if binomial(m, d) > limit as f64 {
            return Ok(None);
        }
        let mut out: Vec<Vector> = Vec::new();
        let mut idx: Vec<usize> = (0..d).collect();
        loop {
            let mut sub = Matrix::zeros(d, d);
            let mut rhs = Vector::zeros(d);
            for (r, &i) in idx.iter().enumerate() {
                sub.set_row(r, &set.a.row(i));
                rhs[r] = set.u[i];
            }
            let lu = sub.clone().lu();
            if let Some(v) = lu.solve(&rhs) {
                let sv = sub.svd(false, false).singular_values;
                let well_posed = sv.min() > 1e-10 * sv.max();
                if well_posed
                    && set.contains(&v, 1e-9 * (1.0 + v.amax()))
                    && !out.iter().any(|w| (w - &v).amax() <= 1e-9 * (1.0 + v.amax()))
                {
                    out.push(v);
                }
            }
            // next combination
            let mut k = d;
            loop {
                if k == 0 {
                    return Ok(Some(out));
                }
                k -= 1;
                if idx[k] < m - d + k {
                    idx[k] += 1;
                    for j in k + 1..d {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn independent_of(a: &Matrix, working: &[usize], candidate: usize) -> bool {
    let mut rows: Vec<usize> = working.to_vec();
    rows.push(candidate);
    let mut sub = Matrix::zeros(rows.len(), a.ncols());
    for (r, &i) in rows.iter().enumerate() {
        sub.set_row(r, &a.row(i));
    }
    let sv = sub.svd(false, false).singular_values;
    sv.min() > 1e-10 * sv.max().max(1.0)
}

/// `s = r − A_Wᵀ μ` with `A_W A_Wᵀ μ = A_W r`: the projection of `r` onto
/// the null space of the working rows, and the multipliers `μ`.
fn equality_step(a: &Matrix, working: &[usize], r: &Vector) -> (Vector, Vec<f64>) {
    if working.is_empty() {
        return (r.clone(), Vec::new());
    }
    let mut aw = Matrix::zeros(working.len(), a.ncols());
    for (k, &i) in working.iter().enumerate() {
        aw.set_row(k, &a.row(i));
    }
    let gram = &aw * aw.transpose();
    let rhs = &aw * r;
    let mu = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram.pseudo_inverse(1e-12).map(|pi| pi * &rhs).unwrap_or_else(|_| Vector::zeros(rhs.len())),
    };
    let step = r - aw.transpose() * &mu;
    (step, mu.iter().copied().collect())
}

/// `{p : 1 + pᵀx_j ≥ 0 for every atom}`, written `−x_jᵀ p ≤ 1`.
pub fn natural_constraints(nu: &JumpMeasure, d: usize) -> ConstraintSet {
    guarded_natural_constraints(nu, d, 0.0)
}

/// Natural constraints tightened to `1 + pᵀx_j ≥ guard`.
pub fn guarded_natural_constraints(nu: &JumpMeasure, d: usize, guard: f64) -> ConstraintSet {
    let m = nu.atoms.len();
    let mut a = Matrix::zeros(m, d);
    for (i, atom) in nu.atoms.iter().enumerate() {
        a.set_row(i, &(-atom.x.transpose()));
    }
    ConstraintSet { a, u: Vector::from_element(m, 1.0 - guard), is_cone: m == 0 }
}

/// The null-investment subspace `N` and the projector onto `N⊥`.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSpace {
    pub basis: Vec<Vector>,
    /// Orthonormal basis of `N⊥`.
    pub complement: Vec<Vector>,
    pub projector_complement: Matrix,
}

impl NullSpace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `d × r` matrix whose columns span `N⊥`.
    pub fn complement_matrix(&self) -> Matrix {
        linalg::columns_to_matrix(self.projector_complement.nrows(), &self.complement)
    }

    /// Euclidean distance from `N`.
    pub fn distance(&self, xi: &Vector) -> f64 {
        (&self.projector_complement * xi).norm()
    }
}

/// Kernel of `[c; x_jᵀ; bᵀ]` by SVD with cutoff `1e-10 σ_max`.
pub fn null_space(t: &Triplet) -> NullSpace {
    let d = t.d();
    let m = d + t.nu.atoms.len() + 1;
    let mut rows = Matrix::zeros(m, d);
    rows.view_mut((0, 0), (d, d)).copy_from(&t.c);
    for (i, atom) in t.nu.atoms.iter().enumerate() {
        rows.set_row(d + i, &atom.x.transpose());
    }
    rows.set_row(m - 1, &t.b.transpose());
    let (basis, complement) = linalg::kernel_split(&rows, d);
    let q = linalg::columns_to_matrix(d, &complement);
    let projector_complement = &q * q.transpose();
    NullSpace { basis, complement, projector_complement }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::JumpAtom;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    fn interval(lo: f64, hi: f64) -> ConstraintSet {
        ConstraintSet::new(Matrix::from_row_slice(2, 1, &[1.0, -1.0]), v(&[hi, -lo])).unwrap()
    }

    fn measure(atoms: &[(&[f64], f64)]) -> JumpMeasure {
        JumpMeasure::explicit(atoms.iter().map(|(x, l)| JumpAtom::new(v(x), *l).unwrap()).collect())
    }

    #[test]
    fn natural_constraints_examples() {
        let full = natural_constraints(&JumpMeasure::empty(), 2);
        assert_eq!(full.n_rows(), 0);
        assert!(full.contains(&v(&[1e6, -1e6]), 0.0));

        let half = natural_constraints(&measure(&[(&[-0.5], 1.0)]), 1);
        assert!(half.contains(&v(&[2.0]), 0.0));
        assert!(!half.contains(&v(&[2.001]), 0.0));
        assert!(half.contains(&v(&[-1e9]), 0.0));

        let both = natural_constraints(&measure(&[(&[1.0], 1.0), (&[-1.0], 1.0)]), 1);
        assert!(both.contains(&v(&[1.0]), 0.0) && both.contains(&v(&[-1.0]), 0.0));
        assert!(!both.contains(&v(&[1.01]), 0.0) && !both.contains(&v(&[-1.01]), 0.0));
    }

    #[test]
    fn intersect_examples() {
        let c = interval(-1.0, 1.0).intersect(&interval(0.0, 2.0)).unwrap();
        for (p, inside) in [(0.0, true), (1.0, true), (0.5, true), (-0.1, false), (1.1, false)] {
            assert_eq!(c.contains(&v(&[p]), 1e-12), inside, "{p}");
        }
        let same = interval(-1.0, 1.0).intersect(&ConstraintSet::unconstrained(1)).unwrap();
        assert!(same.contains(&v(&[1.0]), 0.0) && !same.contains(&v(&[1.5]), 0.0));
        assert!(interval(0.0, 1.0).intersect(&ConstraintSet::unconstrained(2)).is_err());
    }

    #[test]
    fn simplex_with_its_natural_constraints_is_unchanged() {
        // atoms bounded below by −1 in every coordinate: C₀ ⊇ simplex
        let nu = measure(&[(&[-0.9, 0.4], 1.0), (&[0.3, -1.0], 0.5), (&[2.0, 2.0], 0.1)]);
        let s = ConstraintSet::simplex(2);
        let both = s.intersect(&natural_constraints(&nu, 2)).unwrap();
        for p in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.3, 0.6], [0.5, 0.5]] {
            assert!(both.contains(&v(&p), 1e-12));
        }
        let vs = both.vertices(1000).unwrap().unwrap();
        assert_eq!(vs.len(), 3);
    }

    #[test]
    fn recession_cone_examples() {
        let boxed = interval(-1.0, 1.0).intersect(&interval(-1.0, 1.0)).unwrap().recession_cone();
        assert!(boxed.contains(&v(&[0.0]), 0.0));
        assert!(!boxed.contains(&v(&[1e-6]), 0.0) && !boxed.contains(&v(&[-1e-6]), 0.0));
        let half = ConstraintSet::new(Matrix::from_row_slice(1, 1, &[1.0]), v(&[2.0])).unwrap().recession_cone();
        assert!(half.is_cone());
        assert!(half.contains(&v(&[-5.0]), 0.0) && !half.contains(&v(&[0.1]), 0.0));
        let cone = ConstraintSet::long_only(3);
        assert_eq!(cone.recession_cone(), cone);
    }

    #[test]
    fn null_space_examples() {
        let t = Triplet::diffusion(v(&[0.3, 0.1]), Matrix::identity(2, 2)).unwrap();
        let n = null_space(&t);
        assert_eq!(n.dim(), 0);
        assert!((&n.projector_complement - Matrix::identity(2, 2)).amax() < 1e-12);

        let t = Triplet::diffusion(v(&[1.0, 0.0]), Matrix::zeros(2, 2)).unwrap();
        let n = null_space(&t);
        assert_eq!(n.dim(), 1);
        assert!(n.basis[0][0].abs() < 1e-12 && (n.basis[0][1].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_asset_has_one_null_direction() {
        let dir = v(&[1.0, 1.0]);
        let c = &dir * dir.transpose() * 0.04;
        let nu = measure(&[(&[0.2, 0.2], 1.0), (&[-0.3, -0.3], 0.5)]);
        let t = Triplet::new(&dir * 0.05, c, nu, 0.0).unwrap();
        let n = null_space(&t);
        assert_eq!(n.dim(), 1);
        let z = &n.basis[0];
        assert!((z[0] + z[1]).abs() < 1e-10);
    }

    #[test]
    fn project_examples() {
        let unit_box = interval(-1.0, 1.0);
        let boxed = ConstraintSet::new(
            Matrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]),
            v(&[1.0, 1.0, 1.0, 1.0]),
        )
        .unwrap();
        assert_eq!(unit_box.project(&v(&[0.3])).unwrap(), v(&[0.3]));
        let p = boxed.project(&v(&[2.0, 0.0])).unwrap();
        assert!((p - v(&[1.0, 0.0])).amax() < 1e-12);
        let p = ConstraintSet::simplex(2).project(&v(&[1.0, 1.0])).unwrap();
        assert!((p - v(&[0.5, 0.5])).amax() < 1e-12);
        let p = ConstraintSet::simplex(3).project(&v(&[-1.0, 3.0, 0.2])).unwrap();
        assert!((p - v(&[0.0, 1.0, 0.0])).amax() < 1e-12);
    }

    #[test]
    fn parallel_rows_with_huge_norms() {
        // natural constraints of a two-sided heavy tail: 1 + πx ≥ 0 for x = ±10^k
        let mut xs = Vec::new();
        for k in [0, 3, 18, 54, 133, 160, 200] {
            xs.push(10f64.powi(k));
            xs.push(-(10f64.powi(k)));
        }
        let atoms: Vec<JumpAtom> = xs.iter().map(|x| JumpAtom::new(v(&[*x]), 1e-3).unwrap()).collect();
        let set = natural_constraints(&JumpMeasure::explicit(atoms), 1);
        for target in [0.02, -3.0, 1e10] {
            let p = set.project(&v(&[target])).unwrap();
            assert!(p[0].abs() <= 1e-150, "{target} -> {p}");
            let q = set.project_from(&v(&[target]), &v(&[0.0])).unwrap();
            assert!(q[0].abs() <= 1e-150);
        }
        // same in two dimensions along a single direction
        let atoms: Vec<JumpAtom> = xs.iter().map(|x| JumpAtom::new(v(&[*x * 0.6, *x * 0.8]), 1e-3).unwrap()).collect();
        let set = natural_constraints(&JumpMeasure::explicit(atoms), 2);
        let p = set.project(&v(&[1.0, 1.0])).unwrap();
        assert!((0.6 * p[0] + 0.8 * p[1]).abs() <= 1e-12, "{p}");
        assert!((&p - v(&[0.16, -0.12])).amax() <= 1e-12, "{p}");
    }

    #[test]
    fn project_onto_empty_set_errors() {
        let empty = interval(1.0, 0.0);
        assert!(matches!(empty.project(&v(&[0.0])), Err(Error::Infeasible)));
        assert!(empty.is_empty().unwrap());
        assert!(!interval(0.0, 1.0).is_empty().unwrap());
    }

    #[test]
    fn contains_examples() {
        assert!(ConstraintSet::long_only(3).contains(&Vector::zeros(3), 0.0));
        assert!(interval(-1.0, 1.0).contains(&v(&[1.0 + 1e-12]), 1e-9));
        assert!(!interval(-1.0, 1.0).contains(&v(&[2.0]), 1e-9));
    }

    #[test]
    fn cone_flag_requires_zero_rhs() {
        assert!(ConstraintSet::from_parts(Matrix::identity(1, 1), v(&[1.0]), true).is_err());
        assert!(ConstraintSet::preset("simplex", 2).is_ok());
        assert!(ConstraintSet::preset("levered", 2).is_err());
    }

    /// Brute-force optimality check: projection beats every vertex and random feasible point.
    fn random_polytope(seed: &[f64], d: usize) -> ConstraintSet {
        let m = seed.len() / (d + 1);
        let mut a = Matrix::zeros(m + 2 * d, d);
        let mut u = Vector::zeros(m + 2 * d);
        for i in 0..m {
            for j in 0..d {
                a[(i, j)] = seed[i * (d + 1) + j];
            }
            u[i] = seed[i * (d + 1) + d].abs() + 0.1;
        }
        for j in 0..d {
            a[(m + 2 * j, j)] = 1.0;
            a[(m + 2 * j + 1, j)] = -1.0;
            u[m + 2 * j] = 3.0;
            u[m + 2 * j + 1] = 3.0;
        }
        ConstraintSet::new(a, u).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn projection_is_idempotent_nonexpansive_and_optimal(
            seed in proptest::collection::vec(-1.0f64..1.0, 12),
            p in proptest::collection::vec(-6.0f64..6.0, 3),
            q in proptest::collection::vec(-6.0f64..6.0, 3),
        ) {
            let set = random_polytope(&seed, 3);
            let p = Vector::from_vec(p);
            let q = Vector::from_vec(q);
            let pp = set.project(&p).unwrap();
            let pq = set.project(&q).unwrap();
            prop_assert!(set.contains(&pp, 1e-9));
            let again = set.project(&pp).unwrap();
            prop_assert!((&again - &pp).norm() <= 1e-9);
            prop_assert!((&pp - &pq).norm() <= (&p - &q).norm() + 1e-9);
            // variational inequality: (p − proj)ᵀ(y − proj) ≤ 0 for feasible y
            for y in set.vertices(10_000).unwrap().unwrap() {
                prop_assert!((&p - &pp).dot(&(&y - &pp)) <= 1e-8);
            }
        }

        #[test]
        fn recession_of_intersection_is_intersection_of_recessions(
            s1 in proptest::collection::vec(-1.0f64..1.0, 6),
            s2 in proptest::collection::vec(-1.0f64..1.0, 6),
            pts in proptest::collection::vec(-2.0f64..2.0, 40),
        ) {
            let mk = |s: &[f64]| {
                let a = Matrix::from_row_slice(2, 2, &[s[0], s[1], s[2], s[3]]);
                ConstraintSet::new(a, v(&[s[4].abs(), s[5].abs()])).unwrap()
            };
            let (a, b) = (mk(&s1), mk(&s2));
            let lhs = a.intersect(&b).unwrap().recession_cone();
            let rhs = a.recession_cone().intersect(&b.recession_cone()).unwrap();
            for w in pts.chunks(2) {
                let p = v(w);
                prop_assert_eq!(lhs.contains(&p, 1e-12), rhs.contains(&p, 1e-12));
            }
        }

        #[test]
        fn natural_constraints_contain_origin(xs in proptest::collection::vec(-3.0f64..3.0, 1..12)) {
            let atoms: Vec<JumpAtom> = xs
                .chunks(2)
                .filter(|c| c.len() == 2 && (c[0] != 0.0 || c[1] != 0.0))
                .map(|c| JumpAtom::new(v(c), 1.0).unwrap())
                .collect();
            let c0 = natural_constraints(&JumpMeasure::explicit(atoms), 2);
            prop_assert!(c0.contains(&Vector::zeros(2), 0.0));
        }

        #[test]
        fn null_space_basis_annihilates_characteristics(
            w in proptest::collection::vec(-1.0f64..1.0, 3),
            scale in 0.1f64..2.0,
            xs in proptest::collection::vec(-1.0f64..1.0, 0..4),
        ) {
            // every characteristic lives on span{w}: N = w⊥
            let w = Vector::from_vec(w);
            prop_assume!(w.norm() > 0.1);
            let c = &w * w.transpose() * scale;
            let atoms: Vec<JumpAtom> = xs.iter().filter(|s| s.abs() > 1e-3).map(|s| JumpAtom::new(&w * *s, 0.7).unwrap()).collect();
            let t = Triplet::new(&w * 0.3, c.clone(), JumpMeasure::explicit(atoms.clone()), 0.0).unwrap();
            let n = null_space(&t);
            prop_assert_eq!(n.dim(), 2);
            for z in &n.basis {
                prop_assert!((&c * z).norm() <= 1e-8);
                prop_assert!(t.b.dot(z).abs() <= 1e-8);
                for a in &atoms {
                    prop_assert!(a.x.dot(z).abs() <= 1e-8);
                }
            }
            let p = &n.projector_complement;
            prop_assert!((p * p - p).amax() <= 1e-10);
            prop_assert!((p - p.transpose()).amax() <= 1e-10);
        }
    }
}
