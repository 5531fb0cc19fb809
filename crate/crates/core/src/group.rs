//! Cyclic group actions on `R^m`, with a signed-permutation form for actions
//! that preserve cubical grids.

use serde::Serialize;

use crate::exact::gcd_u64;
use crate::linalg::{gram_schmidt, j0, max_abs, Mat};
use crate::{Error, Result};

/// `(g x)_i = signs[i] * x[perm[i]]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SignedPermutation {
    perm: Vec<usize>,
    signs: Vec<i8>,
}

impl SignedPermutation {
    pub fn new(perm: Vec<usize>, signs: Vec<i8>) -> Result<Self> {
        let m = perm.len();
        if signs.len() != m {
            return Err(Error::DimensionMismatch(format!("{} signs for {m} axes", signs.len())));
        }
        let mut seen = vec![false; m];
        for &p in &perm {
            if p >= m || seen[p] {
                return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation")));
            }
            seen[p] = true;
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument("signs must be +1 or -1".into()));
        }
        Ok(SignedPermutation { perm, signs })
    }

    pub fn identity(m: usize) -> Self {
        SignedPermutation { perm: (0..m).collect(), signs: vec![1; m] }
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|i| self.signs[i] as f64 * x[self.perm[i]]).collect()
    }

    pub fn matrix(&self) -> Mat {
        let m = self.dim();
        let mut g = Mat::zeros(m, m);
        for i in 0..m {
            g[(i, self.perm[i])] = self.signs[i] as f64;
        }
        g
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &SignedPermutation) -> SignedPermutation {
        let m = self.dim();
        let perm = (0..m).map(|i| other.perm[self.perm[i]]).collect();
        let signs = (0..m).map(|i| self.signs[i] * other.signs[self.perm[i]]).collect();
        SignedPermutation { perm, signs }
    }

    pub fn pow(&self, k: usize) -> SignedPermutation {
        let mut out = SignedPermutation::identity(self.dim());
        for _ in 0..k {
            out = self.compose(&out);
        }
        out
    }

    pub fn is_identity(&self) -> bool {
        *self == SignedPermutation::identity(self.dim())
    }

    pub fn order(&self) -> usize {
        let mut g = self.clone();
        let mut k = 1;
        while !g.is_identity() {
            g = self.compose(&g);
            k += 1;
        }
        k
    }
}

/// A `Z_k` action given by a generator.
#[derive(Clone, Debug, Serialize)]
pub struct GroupAction {
    order: usize,
    #[serde(skip)]
    generator: Mat,
    signed: Option<SignedPermutation>,
}

impl GroupAction {
    pub fn from_signed_permutation(g: SignedPermutation) -> Self {
        GroupAction { order: g.order(), generator: g.matrix(), signed: Some(g) }
    }

    /// `g^order = I` is checked to 1e-12; `order` need not be minimal.
    pub fn from_matrix(generator: Mat, order: usize) -> Result<Self> {
        if generator.nrows() != generator.ncols() || order == 0 {
            return Err(Error::InvalidArgument("generator must be square and order positive".into()));
        }
        let m = generator.nrows();
        let power = (0..order).fold(Mat::identity(m, m), |acc, _| &generator * acc);
        let defect = max_abs(&(power - Mat::identity(m, m)));
        if defect > 1e-12 {
            return Err(Error::InvalidArgument(format!("g^{order} differs from I by {defect:.3e}")));
        }
        Ok(GroupAction { order, generator, signed: None })
    }

    pub fn trivial(m: usize) -> Self {
        Self::from_signed_permutation(SignedPermutation::identity(m))
    }

    /// Flips the sign of one axis.
    pub fn reflection(m: usize, axis: usize) -> Self {
        let mut signs = vec![1; m];
        signs[axis] = -1;
        Self::from_signed_permutation(SignedPermutation { perm: (0..m).collect(), signs })
    }

    /// `(x_1, ..., x_p) -> (x_2, ..., x_p, x_1)` on `p` blocks of size `block`.
    pub fn block_shift(block: usize, p: usize) -> Self {
        let perm = (0..block * p).map(|i| ((i / block + 1) % p) * block + i % block).collect();
        Self::from_signed_permutation(SignedPermutation { perm, signs: vec![1; block * p] })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.generator.nrows()
    }

    pub fn generator(&self) -> &Mat {
        &self.generator
    }

    pub fn signed_permutation(&self) -> Option<&SignedPermutation> {
        self.signed.as_ref()
    }

    pub fn is_signed_permutation(&self) -> bool {
        self.signed.is_some()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match &self.signed {
            Some(s) => s.apply(x),
            None => (&self.generator * nalgebra::DVector::from_column_slice(x)).iter().copied().collect(),
        }
    }

    /// The subgroup generated by `g^j`.
    pub fn power(&self, j: usize) -> GroupAction {
        let order = self.order / gcd_u64(self.order as u64, j as u64) as usize;
        match &self.signed {
            Some(s) => GroupAction { order, generator: s.pow(j).matrix(), signed: Some(s.pow(j)) },
            None => {
                let m = self.dim();
                let g = (0..j).fold(Mat::identity(m, m), |acc, _| &self.generator * acc);
                GroupAction { order, generator: g, signed: None }
            }
        }
    }

    /// `(1/k) sum g^j`, the orthogonal projection onto the fixed subspace for
    /// orthogonal generators.
    pub fn averaging_projector(&self) -> Mat {
        let m = self.dim();
        let mut acc = Mat::zeros(m, m);
        let mut gj = Mat::identity(m, m);
        for _ in 0..self.order {
            acc += &gj;
            gj = &self.generator * gj;
        }
        acc / self.order as f64
    }

    /// `(1/k) sum g^j a g^-j`, which commutes with `g`.
    pub fn equivariant_average(&self, a: &Mat) -> Mat {
        let m = self.dim();
        let mut acc = Mat::zeros(m, m);
        let mut gj = Mat::identity(m, m);
        for _ in 0..self.order {
            let inverse = gj.transpose();
            acc += &gj * a * inverse;
            gj = &self.generator * gj;
        }
        acc / self.order as f64
    }

    /// Orthonormal basis of `ker(g - I)`: Gram-Schmidt on the projected
    /// standard basis, in axis order.
    pub fn fixed_basis(&self) -> Mat {
        gram_schmidt(&self.averaging_projector(), 1e-9)
    }

    pub fn is_symplectic(&self) -> bool {
        let m = self.dim();
        m % 2 == 0 && {
            let j = j0(m / 2);
            max_abs(&(self.generator.transpose() * &j * &self.generator - j)) <= 1e-12
        }
    }

    /// Checks that the order is a power of `p`.
    pub fn require_p_group(&self, p: u32) -> Result<u32> {
        let mut k = self.order;
        let mut e = 0;
        while k > 1 && k % p as usize == 0 {
            k /= p as usize;
            e += 1;
        }
        if k != 1 {
            return Err(Error::NotPGroup { order: self.order, p });
        }
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_shift_has_order_p() {
        let g = GroupAction::block_shift(2, 3);
        assert_eq!(g.order(), 3);
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(g.apply(&x), vec![3.0, 4.0, 5.0, 6.0, 1.0, 2.0]);
        assert!(g.is_symplectic());
        assert_eq!(g.fixed_basis().ncols(), 2);
    }

    #[test]
    fn composition_matches_matrices() {
        let a = SignedPermutation::new(vec![2, 0, 1], vec![1, -1, 1]).unwrap();
        let b = SignedPermutation::new(vec![1, 0, 2], vec![-1, 1, 1]).unwrap();
        let lhs = a.compose(&b).matrix();
        let rhs = a.matrix() * b.matrix();
        assert_eq!(lhs, rhs);
        assert_eq!(a.order(), 6);
    }

    #[test]
    fn reflection_fixes_a_line() {
        let g = GroupAction::reflection(2, 1);
        let basis = g.fixed_basis();
        assert_eq!(basis.ncols(), 1);
        assert!((basis[(0, 0)].abs() - 1.0).abs() < 1e-15);
        assert!(!g.is_symplectic());
    }

    #[test]
    fn subgroups_and_p_groups() {
        let g = GroupAction::block_shift(1, 4);
        assert_eq!(g.require_p_group(2).unwrap(), 2);
        assert_eq!(g.power(2).order(), 2);
        assert_eq!(
            GroupAction::block_shift(1, 6).require_p_group(2),
            Err(Error::NotPGroup { order: 6, p: 2 })
        );
    }
}
