//! Germs of symplectomorphisms of `(R^{2n}, 0)` and the cyclic twisted
//! product `(x_1, ..., x_p) -> (phi(x_2), ..., phi(x_p), phi(x_1))`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::group::GroupAction;
use crate::linalg::{j0, symplectic_defect, Mat, Vector};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Linear,
    /// Time-one map of `H = a |z|^2 + b |z|^4`.
    HamiltonianFlow { a: f64, b: f64 },
    DoldProduct { p: usize },
}

#[derive(Clone, Debug)]
enum Kind {
    Linear(Mat),
    Twist { a: f64, b: f64 },
    Dold { inner: Arc<SymplecticGerm>, p: usize },
}

#[derive(Clone, Debug)]
pub struct SymplecticGerm {
    dim_half: usize,
    radius: f64,
    kind: Kind,
}

impl SymplecticGerm {
    pub fn linear(m: Mat, radius: f64) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() % 2 != 0 || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!("{}x{} is not a symplectic shape", m.nrows(), m.ncols())));
        }
        let defect = symplectic_defect(&m);
        if defect > 1e-10 {
            return Err(Error::InvalidArgument(format!("linear germ is not symplectic (defect {defect:.3e})")));
        }
        Ok(SymplecticGerm { dim_half: m.nrows() / 2, radius, kind: Kind::Linear(m) })
    }

    /// Time-one map of `H = a |z|^2 + b |z|^4` on `R^{2n}`: every plane turns
    /// by `2a + 4b |z|^2`.
    pub fn twist(dim_half: usize, a: f64, b: f64, radius: f64) -> Self {
        SymplecticGerm { dim_half, radius, kind: Kind::Twist { a, b } }
    }

    pub fn dim_half(&self) -> usize {
        self.dim_half
    }

    pub fn dim(&self) -> usize {
        2 * self.dim_half
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn provenance(&self) -> Provenance {
        match &self.kind {
            Kind::Linear(_) => Provenance::Linear,
            Kind::Twist { a, b } => Provenance::HamiltonianFlow { a: *a, b: *b },
            Kind::Dold { p, .. } => Provenance::DoldProduct { p: *p },
        }
    }

    pub fn is_linear(&self) -> bool {
        match &self.kind {
            Kind::Linear(_) => true,
            Kind::Twist { b, .. } => *b == 0.0,
            Kind::Dold { inner, .. } => inner.is_linear(),
        }
    }

    /// The inner germ and period of a twisted product.
    pub fn dold_inner(&self) -> Option<(&SymplecticGerm, usize)> {
        match &self.kind {
            Kind::Dold { inner, p } => Some((inner, *p)),
            _ => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vector {
        match &self.kind {
            Kind::Linear(m) => m * Vector::from_column_slice(x),
            Kind::Twist { a, b } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let (s, c) = (2.0 * a + 4.0 * b * r2).sin_cos();
                let mut out = Vector::zeros(x.len());
                for k in 0..self.dim_half {
                    let (u, v) = (x[2 * k], x[2 * k + 1]);
                    out[2 * k] = c * u - s * v;
                    out[2 * k + 1] = s * u + c * v;
                }
                out
            }
            Kind::Dold { inner, p } => {
                let d = inner.dim();
                let mut out = Vector::zeros(d * p);
                for i in 0..*p {
                    let src = (i + 1) % p;
                    let y = inner.eval(&x[src * d..(src + 1) * d]);
                    out.rows_mut(i * d, d).copy_from(&y);
                }
                out
            }
        }
    }

    pub fn jacobian(&self, x: &[f64]) -> Mat {
        match &self.kind {
            Kind::Linear(m) => m.clone(),
            Kind::Twist { a, b } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let omega = 2.0 * a + 4.0 * b * r2;
                let rot = crate::linalg::block_diagonal(&vec![crate::linalg::rotation(omega); self.dim_half]);
                let z = Vector::from_column_slice(x);
                let jrz = j0(self.dim_half) * &rot * &z;
                rot + jrz * (z.transpose() * (8.0 * b))
            }
            Kind::Dold { inner, p } => {
                let d = inner.dim();
                let mut out = Mat::zeros(d * p, d * p);
                for i in 0..*p {
                    let src = (i + 1) % p;
                    let block = inner.jacobian(&x[src * d..(src + 1) * d]);
                    out.view_mut((i * d, src * d), (d, d)).copy_from(&block);
                }
                out
            }
        }
    }

    pub fn linearization(&self) -> Mat {
        self.jacobian(&vec![0.0; self.dim()])
    }

    /// Checks `phi(0) = 0` and symplecticity of `D phi` on the `3^m` grid of
    /// the box (a seeded random sample of 729 points above dimension 6).
    pub fn validate(&self, tol_symp: f64) -> Result<()> {
        let origin = self.eval(&vec![0.0; self.dim()]);
        if origin.amax() > 1e-12 {
            return Err(Error::InvalidArgument(format!("phi(0) = {:.3e} is not 0", origin.amax())));
        }
        for x in sample_points(self.dim(), self.radius, 0) {
            let d = symplectic_defect(&self.jacobian(&x));
            if d > tol_symp {
                return Err(Error::InvalidArgument(format!("D phi fails symplecticity by {d:.3e} at {x:?}")));
            }
        }
        Ok(())
    }

    /// `phi^k` for linear germs and twists; a twist iterates to the twist
    /// with `k a, k b` since `|z|` is preserved.
    pub fn iterate(&self, k: u32) -> Result<Self> {
        let kind = match &self.kind {
            Kind::Linear(m) => Kind::Linear(m.pow(k)),
            Kind::Twist { a, b } => Kind::Twist { a: a * k as f64, b: b * k as f64 },
            Kind::Dold { .. } => return Err(Error::InvalidArgument("iterates of twisted products are not supported".into())),
        };
        Ok(SymplecticGerm { kind, ..self.clone() })
    }

    /// Same germ on a smaller box.
    pub fn with_radius(&self, radius: f64) -> Self {
        SymplecticGerm { radius, ..self.clone() }
    }
}

/// `3^m` grid of `[-R, R]^m` for `m <= 6`, else 729 seeded random points.
pub(crate) fn sample_points(m: usize, radius: f64, seed: u64) -> Vec<Vec<f64>> {
    if m <= 6 {
        let n = 3usize.pow(m as u32);
        (0..n)
            .map(|mut i| {
                (0..m)
                    .map(|_| {
                        let d = i % 3;
                        i /= 3;
                        (d as f64 - 1.0) * radius
                    })
                    .collect()
            })
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..729).map(|_| (0..m).map(|_| rng.gen_range(-radius..=radius)).collect()).collect()
    }
}

/// Seeded uniform samples from `[-R, R]^m`.
pub fn random_points(m: usize, radius: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..m).map(|_| rng.gen_range(-radius..=radius)).collect()).collect()
}

/// `max |phi(g x) - g phi(x)|` over seeded samples.
pub fn commutation_defect(phi: &SymplecticGerm, g: &GroupAction, samples: usize, seed: u64) -> f64 {
    random_points(phi.dim(), phi.radius(), samples, seed)
        .iter()
        .map(|x| {
            let lhs = phi.eval(&g.apply(x));
            let rhs = g.apply(phi.eval(x).as_slice());
            lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// The cyclic twisted product of `phi` with its block-shift action.
pub fn dold_product(phi: &SymplecticGerm, p: usize) -> Result<(SymplecticGerm, GroupAction)> {
    if p < 2 {
        return Err(Error::InvalidArgument(format!("period {p} must be at least 2")));
    }
    let d = phi.dim();
    let product = SymplecticGerm {
        dim_half: phi.dim_half * p,
        radius: phi.radius,
        kind: Kind::Dold { inner: Arc::new(phi.clone()), p },
    };
    let g = GroupAction::block_shift(d, p);
    let defect = commutation_defect(&product, &g, 100, 0x5eed);
    if defect > 1e-12 {
        return Err(Error::NotInvariant { defect });
    }
    for x in random_points(d, phi.radius, 20, 0xd1a9) {
        let diagonal: Vec<f64> = x.iter().copied().cycle().take(d * p).collect();
        let image = product.eval(&diagonal);
        let expected = phi.eval(&x);
        for i in 0..p {
            let gap = (image.rows(i * d, d) - &expected).amax();
            if gap > 1e-12 {
                return Err(Error::InvalidArgument(format!("multidiagonal restriction differs by {gap:.3e}")));
            }
        }
    }
    Ok((product, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, rotation};

    #[test]
    fn dold_of_rotation_is_block_antidiagonal() {
        let r = rotation(2.0 * std::f64::consts::PI / 5.0);
        let phi = SymplecticGerm::linear(r.clone(), 1.0).unwrap();
        let (phi2, g) = dold_product(&phi, 2).unwrap();
        let m = phi2.linearization();
        let mut expected = Mat::zeros(4, 4);
        expected.view_mut((0, 2), (2, 2)).copy_from(&r);
        expected.view_mut((2, 0), (2, 2)).copy_from(&r);
        assert!(max_abs(&(m - expected)) < 1e-15);
        assert_eq!(g.order(), 2);
    }

    #[test]
    fn twist_jacobian_is_symplectic_and_matches_differences() {
        let phi = SymplecticGerm::twist(1, 0.4, 0.3, 1.0);
        phi.validate(1e-10).unwrap();
        let x = [0.3, -0.5];
        let jac = phi.jacobian(&x);
        let h = 1e-6;
        for j in 0..2 {
            let mut xp = x.to_vec();
            xp[j] += h;
            let mut xm = x.to_vec();
            xm[j] -= h;
            let col = (phi.eval(&xp) - phi.eval(&xm)) / (2.0 * h);
            for i in 0..2 {
                assert!((jac[(i, j)] - col[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn iterates_agree_with_composition() {
        let x = [0.3, -0.2];
        for phi in [SymplecticGerm::twist(1, 0.4, 0.3, 1.0), SymplecticGerm::linear(rotation(0.7), 1.0).unwrap()] {
            let twice = phi.eval(phi.eval(&x).as_slice());
            let thrice = phi.eval(twice.as_slice());
            assert!((phi.iterate(3).unwrap().eval(&x) - thrice).amax() < 1e-14);
        }
    }

    #[test]
    fn diagonal_fixed_points_of_the_product() {
        let phi = SymplecticGerm::twist(1, 0.4, 0.3, 1.0);
        let (phi3, g) = dold_product(&phi, 3).unwrap();
        phi3.validate(1e-10).unwrap();
        assert!(commutation_defect(&phi3, &g, 100, 1) <= 1e-12);
        let origin = vec![0.0; 6];
        assert!(phi3.eval(&origin).amax() == 0.0);
        // A non-fixed point of phi gives a non-fixed diagonal point.
        let x = [0.2, 0.1, 0.2, 0.1, 0.2, 0.1];
        assert!((phi3.eval(&x) - Vector::from_column_slice(&x)).amax() > 1e-3);
    }
}
