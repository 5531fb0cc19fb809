//! Dense floating-point helpers shared by the numerical modules.
//!
//! Coordinates on `R^{2n}` are interleaved, `(x_1, y_1, x_2, y_2, ...)`, so a
//! direct sum of planar blocks is block diagonal and `J0` is a direct sum of
//! quarter turns.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// The standard complex structure on `R^{2n}`, `(x, y) -> (-y, x)` per plane.
pub fn j0(n: usize) -> Mat {
    let mut j = Mat::zeros(2 * n, 2 * n);
    for b in 0..n {
        j[(2 * b, 2 * b + 1)] = -1.0;
        j[(2 * b + 1, 2 * b)] = 1.0;
    }
    j
}

/// `omega0(u, v) = <J0 u, v>`.
pub fn omega0(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut s = 0.0;
    for b in 0..u.len() / 2 {
        s += u[2 * b] * v[2 * b + 1] - u[2 * b + 1] * v[2 * b];
    }
    s
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

/// `max |M^T J0 M - J0|`.
pub fn symplectic_defect(m: &Mat) -> f64 {
    let n = m.nrows() / 2;
    let j = j0(n);
    max_abs(&(m.transpose() * &j * m - j))
}

pub fn det(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    m.clone().lu().determinant()
}

pub fn singular_values_sorted(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s
}

pub fn smallest_singular_value(m: &Mat) -> f64 {
    singular_values_sorted(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Numerical rank with singular values above `tol * max(1, sigma_max)`.
pub fn rank(m: &Mat, tol: f64) -> usize {
    let s = singular_values_sorted(m);
    let top = s.last().copied().unwrap_or(0.0).max(1.0);
    s.iter().filter(|&&x| x > tol * top).count()
}

/// Sorted eigenvalues of a symmetric matrix.
pub fn symmetric_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let sym = (m + m.transpose()) * 0.5;
    let mut e: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e
}

/// Orthonormal basis (as columns) of the numerical kernel of `m`: right
/// singular vectors whose singular value is at most `tol`.
pub fn kernel_basis(m: &Mat, tol: f64) -> Mat {
    let ncols = m.ncols();
    if m.nrows() == 0 {
        return Mat::identity(ncols, ncols);
    }
    // Pad to a square matrix so the SVD returns a full set of right vectors.
    let mut sq = Mat::zeros(ncols.max(m.nrows()), ncols);
    sq.view_mut((0, 0), (m.nrows(), ncols)).copy_from(m);
    let svd = sq.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let cols: Vec<Vector> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= tol)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    columns_to_matrix(ncols, &cols)
}

pub fn columns_to_matrix(nrows: usize, cols: &[Vector]) -> Mat {
    let mut m = Mat::zeros(nrows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Modified Gram-Schmidt on the columns of `m` in order, dropping columns
/// whose residual norm falls below `tol`.
pub fn gram_schmidt(m: &Mat, tol: f64) -> Mat {
    let mut out: Vec<Vector> = Vec::new();
    for j in 0..m.ncols() {
        let mut v = m.column(j).into_owned();
        for _ in 0..2 {
            for q in &out {
                let c = q.dot(&v);
                v -= q * c;
            }
        }
        let nv = v.norm();
        if nv > tol {
            out.push(v / nv);
        }
    }
    columns_to_matrix(m.nrows(), &out)
}

/// Orthonormal basis of the orthogonal complement of `span(sub)` inside
/// `span(space)`; both given as columns.
pub fn relative_complement(space: &Mat, sub: &Mat, tol: f64) -> Mat {
    let mut joined = Mat::zeros(space.nrows(), sub.ncols() + space.ncols());
    joined.view_mut((0, 0), (space.nrows(), sub.ncols())).copy_from(sub);
    joined
        .view_mut((0, sub.ncols()), (space.nrows(), space.ncols()))
        .copy_from(space);
    let q = gram_schmidt(&joined, tol);
    let k = sub.ncols();
    q.columns(k, q.ncols() - k).into_owned()
}

pub fn hstack(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.nrows(), b.nrows());
    let mut m = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    m.view_mut((0, a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    m
}

pub fn vstack(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.ncols(), b.ncols());
    let mut m = Mat::zeros(a.nrows() + b.nrows(), a.ncols());
    m.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    m.view_mut((a.nrows(), 0), (b.nrows(), b.ncols())).copy_from(b);
    m
}

pub fn block_diagonal(blocks: &[Mat]) -> Mat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut m = Mat::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        m.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
        off += b.nrows();
    }
    m
}

pub fn rotation(angle: f64) -> Mat {
    let (s, c) = angle.sin_cos();
    Mat::from_row_slice(2, 2, &[c, -s, s, c])
}

/// `(I - A/2)^{-1} (I + A/2)`, symplectic whenever `A` is Hamiltonian.
pub fn cayley(a: &Mat) -> Mat {
    let n = a.nrows();
    let id = Mat::identity(n, n);
    let lhs = &id - a * 0.5;
    let rhs = &id + a * 0.5;
    lhs.lu().solve(&rhs).expect("Cayley transform of a Hamiltonian step is invertible")
}

pub fn solve(a: &Mat, b: &Vector) -> Option<Vector> {
    a.clone().lu().solve(b)
}

pub fn sign(x: f64) -> i32 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_matches_matrix_form() {
        let u = [1.0, 2.0, -0.5, 3.0];
        let v = [0.3, -1.0, 2.0, 0.25];
        let j = j0(2);
        let jv = &j * Vector::from_row_slice(&u);
        let direct: f64 = jv.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        assert!((omega0(&u, &v) - direct).abs() < 1e-15);
    }

    #[test]
    fn rotation_is_symplectic() {
        assert!(symplectic_defect(&rotation(0.7)) < 1e-15);
    }

    #[test]
    fn kernel_of_projection() {
        let m = Mat::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let k = kernel_basis(&m, 1e-12);
        assert_eq!(k.ncols(), 1);
        assert!((k[(2, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complement_inside_space() {
        let space = Mat::identity(3, 3);
        let sub = Mat::from_column_slice(3, 1, &[1.0, 1.0, 0.0]);
        let c = relative_complement(&space, &sub, 1e-12);
        assert_eq!(c.ncols(), 2);
        assert!((c.transpose() * &sub).norm() < 1e-12);
    }
}
