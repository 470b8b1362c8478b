//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Relative eigenvalue floor used to accept a matrix as positive semidefinite.
pub const PSD_REL_TOL: f64 = 1e-10;

/// Relative singular-value cutoff below which a direction counts as null.
pub const SVD_REL_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdCheck {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub symmetric: bool,
    pub passed: bool,
}

pub fn asymmetry(c: &Matrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..c.nrows() {
        for j in 0..i {
            worst = worst.max((c[(i, j)] - c[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(c: &Matrix) -> Matrix {
    (c + c.transpose()) * 0.5
}

/// Smallest eigenvalue must be at least `-1e-10 * (largest + 1)`.
pub fn psd_check(c: &Matrix) -> PsdCheck {
    if c.nrows() == 0 {
        return PsdCheck { min_eigenvalue: 0.0, max_eigenvalue: 0.0, symmetric: true, passed: true };
    }
    let scale = c.amax().max(1.0);
    let symmetric = asymmetry(c) <= 1e-10 * scale;
    let eig = symmetrize(c).symmetric_eigen();
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    let passed = symmetric && min >= -PSD_REL_TOL * (max.max(0.0) + 1.0);
    PsdCheck { min_eigenvalue: min, max_eigenvalue: max, symmetric, passed }
}

/// Zeroes negative eigenvalues of the symmetric part.
pub fn clip_psd(c: &Matrix) -> Matrix {
    if c.nrows() == 0 {
        return c.clone();
    }
    let eig = symmetrize(c).symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    &eig.eigenvectors * Matrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// A factor `L` with `L Lᵀ = c` for a PSD matrix, singular or not.
pub fn psd_factor(c: &Matrix) -> Matrix {
    if c.nrows() == 0 {
        return c.clone();
    }
    let eig = symmetrize(c).symmetric_eigen();
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * Matrix::from_diagonal(&roots)
}

/// Orthonormal bases of the kernel and of its orthogonal complement for the
/// row space of `rows` (each row a vector in ℝ^d).
pub fn kernel_split(rows: &Matrix, d: usize) -> (Vec<Vector>, Vec<Vector>) {
    if d == 0 {
        return (Vec::new(), Vec::new());
    }
    // pad to at least d rows so that the SVD returns a full d×d Vᵀ
    let m = rows.nrows().max(d);
    let mut padded = Matrix::zeros(m, d);
    padded.view_mut((0, 0), (rows.nrows(), d)).copy_from(rows);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let sigma_max = svd.singular_values.max();
    let cutoff = SVD_REL_CUTOFF * sigma_max;
    let mut kernel = Vec::new();
    let mut range = Vec::new();
    for (i, s) in svd.singular_values.iter().enumerate() {
        let v = v_t.row(i).transpose().into_owned();
        if sigma_max == 0.0 || *s <= cutoff {
            kernel.push(v);
        } else {
            range.push(v);
        }
    }
    (kernel, range)
}

pub fn columns_to_matrix(d: usize, cols: &[Vector]) -> Matrix {
    let mut m = Matrix::zeros(d, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

pub fn norm_inf(v: &Vector) -> f64 {
    v.amax()
}

/// Pairwise summation; the result does not depend on how the input was produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psd_check_accepts_identity_and_rejects_negative() {
        assert!(psd_check(&Matrix::identity(3, 3)).passed);
        let bad = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        assert!(!psd_check(&bad).passed);
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(!psd_check(&asym).passed);
    }

    #[test]
    fn psd_check_tolerates_roundoff() {
        let c = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-13]);
        assert!(psd_check(&c).passed);
        let clipped = clip_psd(&c);
        assert!(clipped.symmetric_eigen().eigenvalues.min() >= 0.0);
    }

    #[test]
    fn factor_reproduces_singular_matrix() {
        let v = Vector::from_vec(vec![1.0, 2.0, -1.0]);
        let c = &v * v.transpose();
        let l = psd_factor(&c);
        assert!((&l * l.transpose() - &c).amax() < 1e-12);
    }

    #[test]
    fn kernel_split_of_single_row() {
        let rows = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let (ker, range) = kernel_split(&rows, 2);
        assert_eq!(ker.len(), 1);
        assert_eq!(range.len(), 1);
        assert!(ker[0][0].abs() < 1e-12);
        assert!((ker[0][1].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.25).collect();
        assert_eq!(pairwise_sum(&xs), xs.iter().sum::<f64>());
    }
}
