//! Generating functions of germs with respect to a splitting `Delta x N` of
//! the twisted product `(R^{2n}, -omega0) x (R^{2n}, omega0)`, and their
//! restrictions to fixed subspaces of cyclic actions.
//!
//! With `D = [I; I]` spanning the diagonal, a point `(x, phi(x))` of the graph
//! is written `D z + n` with `n` in `N`. The 1-form `alpha_z(u) = -Omega(D u, n)`
//! is closed because the graph is Lagrangian, and evaluates to
//! `grad f(z) = J0 (phi(x) - x)`. The sign makes `f` approximately `-H` for
//! the time-one map of a small quadratic Hamiltonian `H`.

use std::sync::{Arc, OnceLock};

use serde::Serialize;

use crate::field::{Quadratic, Restricted, ScalarField, SharedField};
use crate::germ::{random_points, sample_points, SymplecticGerm};
use crate::group::GroupAction;
use crate::linalg::{
    block_diagonal, gram_schmidt, hstack, j0, kernel_basis, max_abs, relative_complement, smallest_singular_value, vstack,
    Mat, Vector,
};
use crate::{Error, Result};

/// `Omega(u, v) = u^T W v` on the twisted product of `R^m`.
pub fn twisted_form(m: usize) -> Mat {
    let j = j0(m / 2);
    block_diagonal(&[j.clone(), -j])
}

/// The compatible complex structure `diag(-J0, J0)`: `Omega(u, J v) = <u, v>`.
pub fn twisted_complex_structure(m: usize) -> Mat {
    let j = j0(m / 2);
    block_diagonal(&[-j.clone(), j])
}

fn diagonal_basis(m: usize) -> Mat {
    let id = Mat::identity(m, m);
    vstack(&id, &id)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComplementRecipe {
    /// Split along `S = Delta ∩ graph`: pair the orthogonal complements of `S`
    /// by `Omega` and add `J S`.
    Averaged,
    /// `N = J Delta`, valid whenever `-1` is not an eigenvalue of `D phi`.
    Reference,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplittingCase {
    Transverse,
    Equal,
    General,
}

#[derive(Clone, Debug, Serialize)]
pub struct Complement {
    #[serde(skip)]
    pub basis: Mat,
    pub recipe: ComplementRecipe,
    pub case: SplittingCase,
    pub lagrangian_defect: f64,
    pub sigma_diagonal: f64,
    pub sigma_graph: f64,
    pub invariance_defect: f64,
}

/// A Lagrangian complement to both the diagonal and the graph of `dphi`,
/// invariant under `g x g`.
pub fn invariant_complement(dphi: &Mat, g: &GroupAction, recipe: ComplementRecipe) -> Result<Complement> {
    let m = dphi.nrows();
    if g.dim() != m {
        return Err(Error::DimensionMismatch(format!("action on R^{} for a germ on R^{m}", g.dim())));
    }
    let w = twisted_form(m);
    let jt = twisted_complex_structure(m);
    let id = Mat::identity(m, m);
    let delta = gram_schmidt(&diagonal_basis(m), 1e-12);
    let graph = gram_schmidt(&vstack(&id, dphi), 1e-12);
    let scale = max_abs(dphi).max(1.0);
    let kernel = kernel_basis(&(dphi - &id), 1e-8 * scale);
    let case = match kernel.ncols() {
        0 => SplittingCase::Transverse,
        d if d == m => SplittingCase::Equal,
        _ => SplittingCase::General,
    };
    let raw = match recipe {
        ComplementRecipe::Reference => &jt * &delta,
        ComplementRecipe::Averaged => {
            let s = vstack(&kernel, &kernel) / std::f64::consts::SQRT_2;
            let s1 = relative_complement(&delta, &s, 1e-9);
            let s2 = relative_complement(&graph, &s, 1e-9);
            let js = &jt * &s;
            if s1.ncols() == 0 {
                js
            } else {
                let pairing = s1.transpose() * &w * &s2;
                let sigma = smallest_singular_value(&pairing);
                let Some(inv) = pairing.try_inverse().filter(|_| sigma > 1e-8) else {
                    return Err(Error::NotComplementary { sigma });
                };
                hstack(&(&s1 + &s2 * inv), &js)
            }
        }
    };
    let basis = gram_schmidt(&raw, 1e-12);
    if basis.ncols() != m {
        return Err(Error::NotLagrangian { defect: f64::INFINITY });
    }
    let lagrangian_defect = max_abs(&(basis.transpose() * &w * &basis));
    if lagrangian_defect > 1e-12 {
        return Err(Error::NotLagrangian { defect: lagrangian_defect });
    }
    let sigma_diagonal = smallest_singular_value(&hstack(&delta, &basis));
    let sigma_graph = smallest_singular_value(&hstack(&graph, &basis));
    let sigma = sigma_diagonal.min(sigma_graph);
    if sigma <= 1e-8 {
        return Err(Error::NotComplementary { sigma });
    }
    let gg = block_diagonal(&[g.generator().clone(), g.generator().clone()]);
    let moved = &gg * &basis;
    let invariance_defect = max_abs(&(&moved - &basis * (basis.transpose() * &moved)));
    if invariance_defect > 1e-10 {
        return Err(Error::NotInvariant { defect: invariance_defect });
    }
    Ok(Complement { basis, recipe, case, lagrangian_defect, sigma_diagonal, sigma_graph, invariance_defect })
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

fn nodes() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre(12))
}

/// Generating function of a nonlinear germ, evaluated by inverting the
/// projection `Psi(x) = proj_Delta(x, phi(x))` and integrating radially.
pub struct GeneratingFunction {
    germ: Arc<SymplecticGerm>,
    projection: Mat,
    radius: f64,
}

impl GeneratingFunction {
    fn psi(&self, x: &[f64]) -> Vector {
        let y = self.germ.eval(x);
        let m = x.len();
        self.projection.columns(0, m) * Vector::from_column_slice(x) + self.projection.columns(m, m) * y
    }

    fn dpsi(&self, x: &[f64]) -> Mat {
        let m = x.len();
        self.projection.columns(0, m) + self.projection.columns(m, m) * self.germ.jacobian(x)
    }

    /// Damped Newton for `Psi(x) = z` from `x0`.
    pub fn invert(&self, z: &[f64], x0: Vector) -> Option<Vector> {
        let target = Vector::from_column_slice(z);
        let mut x = x0;
        let mut r = self.psi(x.as_slice()) - &target;
        let tol = 1e-15 * (1.0 + target.amax());
        for _ in 0..60 {
            if r.amax() <= tol {
                return Some(x);
            }
            let step = self.dpsi(x.as_slice()).lu().solve(&r)?;
            let mut t = 1.0;
            loop {
                let trial = &x - &step * t;
                let rt = self.psi(trial.as_slice()) - &target;
                if rt.norm() < r.norm() || t < 1e-6 {
                    x = trial;
                    r = rt;
                    break;
                }
                t *= 0.5;
            }
        }
        (r.amax() <= 1e-12 * (1.0 + target.amax())).then_some(x)
    }

    fn linear_guess(&self, z: &[f64]) -> Vector {
        let m = z.len();
        let d0 = self.dpsi(&vec![0.0; m]);
        d0.lu().solve(&Vector::from_column_slice(z)).unwrap_or_else(|| Vector::from_column_slice(z))
    }

    /// Preimage of `z`, continued along the ray from 0.
    pub fn preimage(&self, z: &[f64]) -> Option<Vector> {
        if let Some(x) = self.invert(z, self.linear_guess(z)) {
            return Some(x);
        }
        let mut x = Vector::zeros(z.len());
        let steps = 16;
        for s in 1..=steps {
            let zt: Vec<f64> = z.iter().map(|v| v * s as f64 / steps as f64).collect();
            x = self.invert(&zt, x)?;
        }
        Some(x)
    }

    fn gradient_at_preimage(&self, x: &Vector) -> Vector {
        let m = x.len();
        let jm = j0(m / 2);
        jm * (self.germ.eval(x.as_slice()) - x)
    }

    pub fn germ(&self) -> &SymplecticGerm {
        &self.germ
    }
}

impl ScalarField for GeneratingFunction {
    fn dim(&self) -> usize {
        self.germ.dim()
    }

    fn radius(&self) -> f64 {
        self.radius
    }

    fn value(&self, z: &[f64]) -> f64 {
        let zv = Vector::from_column_slice(z);
        let mut x = Vector::zeros(z.len());
        let mut last_t = 0.0;
        let mut acc = 0.0;
        for &(t, w) in nodes() {
            let zt = &zv * t;
            let guess = if last_t > 0.0 { &x * (t / last_t) } else { self.linear_guess(zt.as_slice()) };
            let Some(next) = self.invert(zt.as_slice(), guess).or_else(|| self.preimage(zt.as_slice())) else {
                return f64::NAN;
            };
            x = next;
            last_t = t;
            acc += w * self.gradient_at_preimage(&x).dot(&zv);
        }
        acc
    }

    fn gradient(&self, z: &[f64]) -> Vector {
        match self.preimage(z) {
            Some(x) => self.gradient_at_preimage(&x),
            None => Vector::from_element(z.len(), f64::NAN),
        }
    }

    fn hessian(&self, z: &[f64]) -> Mat {
        let m = z.len();
        let Some(x) = self.preimage(z) else {
            return Mat::from_element(m, m, f64::NAN);
        };
        let dphi = self.germ.jacobian(x.as_slice());
        let dx = self.dpsi(x.as_slice()).try_inverse().unwrap_or_else(|| Mat::from_element(m, m, f64::NAN));
        let h = j0(m / 2) * (dphi - Mat::identity(m, m)) * dx;
        (&h + h.transpose()) * 0.5
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenFuncReport {
    pub radius: f64,
    pub halvings: u32,
    pub closedness_defect: f64,
    pub quadratic: bool,
}

/// First `m` rows of `[D | N]^{-1}`: the projection to diagonal coordinates.
fn diagonal_projection(m: usize, complement: &Complement) -> Result<Mat> {
    let full = hstack(&diagonal_basis(m), &complement.basis);
    let sigma = smallest_singular_value(&full);
    let inv = full.try_inverse().filter(|_| sigma > 1e-8).ok_or(Error::NotComplementary { sigma })?;
    Ok(inv.rows(0, m).into_owned())
}

/// Generating function of `phi` with respect to `Delta x N`, on the largest
/// box `R / 2^j` (`j <= 8`) on which the projection inverts.
pub fn generating_function(phi: &SymplecticGerm, complement: &Complement) -> Result<(SharedField, GenFuncReport)> {
    let m = phi.dim();
    if complement.basis.nrows() != 2 * m {
        return Err(Error::DimensionMismatch(format!("complement in R^{} for a germ on R^{m}", complement.basis.nrows())));
    }
    let projection = diagonal_projection(m, complement)?;
    if phi.is_linear() {
        let a = phi.linearization();
        let dpsi = projection.columns(0, m) + projection.columns(m, m) * &a;
        let sigma = smallest_singular_value(&dpsi);
        let inv = dpsi.try_inverse().filter(|_| sigma > 1e-8).ok_or(Error::ProjectionNotInvertible { radius: phi.radius() })?;
        let q = j0(m / 2) * (&a - Mat::identity(m, m)) * inv;
        let defect = max_abs(&(&q - q.transpose()));
        if defect > 1e-9 {
            return Err(Error::FormNotClosed { defect });
        }
        let field = Quadratic::new(&q, phi.radius());
        let report = GenFuncReport { radius: phi.radius(), halvings: 0, closedness_defect: defect, quadratic: true };
        return Ok((Arc::new(field), report));
    }
    let germ = Arc::new(phi.clone());
    let mut radius = phi.radius();
    for halvings in 0..=8u32 {
        let gf = GeneratingFunction { germ: germ.clone(), projection: projection.clone(), radius };
        if projection_inverts(&gf, radius) {
            let closedness_defect = closedness_defect(&gf, 100, 0xc105ed);
            if closedness_defect > 1e-9 {
                return Err(Error::FormNotClosed { defect: closedness_defect });
            }
            let report = GenFuncReport { radius, halvings, closedness_defect, quadratic: false };
            return Ok((Arc::new(gf), report));
        }
        radius *= 0.5;
    }
    Err(Error::ProjectionNotInvertible { radius })
}

fn projection_inverts(gf: &GeneratingFunction, radius: f64) -> bool {
    let limit = gf.germ.radius();
    sample_points(gf.dim(), radius, 7).iter().all(|z| match gf.preimage(z) {
        Some(x) => x.amax() <= limit && smallest_singular_value(&gf.dpsi(x.as_slice())) > 1e-8,
        None => false,
    })
}

/// Largest loop integral of `grad f` around small coordinate rectangles.
pub fn closedness_defect(f: &dyn ScalarField, loops: usize, seed: u64) -> f64 {
    let m = f.dim();
    if m < 2 {
        return 0.0;
    }
    let side = 0.1 * f.radius();
    let gl = gauss_legendre(8);
    let centers = random_points(m, 0.8 * f.radius(), loops, seed);
    centers
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            let i = idx % m;
            let j = (i + 1 + (idx / m) % (m - 1)) % m;
            let corner = |a: f64, b: f64| {
                let mut p = c.clone();
                p[i] += a;
                p[j] += b;
                p
            };
            let corners = [corner(0.0, 0.0), corner(side, 0.0), corner(side, side), corner(0.0, side)];
            let mut total = 0.0;
            for k in 0..4 {
                let (p, q) = (&corners[k], &corners[(k + 1) % 4]);
                let dir: Vec<f64> = p.iter().zip(q).map(|(a, b)| b - a).collect();
                for &(t, w) in &gl {
                    let pt: Vec<f64> = p.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
                    total += w * f.gradient(&pt).iter().zip(&dir).map(|(g, d)| g * d).sum::<f64>();
                }
            }
            total.abs()
        })
        .fold(0.0, f64::max)
}

/// `max |f(g z) - f(z)|` over seeded samples of the box.
pub fn invariance_defect(f: &dyn ScalarField, g: &GroupAction, samples: usize, seed: u64) -> f64 {
    random_points(f.dim(), f.radius(), samples, seed)
        .iter()
        .map(|z| (f.value(&g.apply(z)) - f.value(z)).abs())
        .fold(0.0, f64::max)
}

/// `f` restricted to an orthonormal chart of the fixed subspace of `g`.
pub fn restrict_to_fixed(f: SharedField, g: &GroupAction) -> Result<Restricted> {
    if g.dim() != f.dim() {
        return Err(Error::DimensionMismatch(format!("action on R^{} for a field on R^{}", g.dim(), f.dim())));
    }
    let defect = invariance_defect(f.as_ref(), g, 100, 0xf1eed);
    if defect > 1e-9 {
        return Err(Error::NotInvariant { defect });
    }
    Ok(Restricted::new(f, g.fixed_basis()))
}

/// For a twisted product of period `p` over `f_inner`, the diagonal chart
/// `y -> (y, ..., y) / sqrt(p)` gives `F^G(y) = p f_inner(y / sqrt(p))`;
/// returns the largest deviation over seeded samples.
pub fn dold_restriction_defect(restricted: &dyn ScalarField, inner: &dyn ScalarField, p: usize, samples: usize, seed: u64) -> f64 {
    let s = (p as f64).sqrt();
    let radius = restricted.radius().min(inner.radius() * s);
    random_points(restricted.dim(), radius, samples, seed)
        .iter()
        .map(|y| {
            let scaled: Vec<f64> = y.iter().map(|v| v / s).collect();
            (restricted.value(y) - p as f64 * inner.value(&scaled)).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::germ::dold_product;
    use crate::linalg::{rotation, symmetric_eigenvalues};
    use std::f64::consts::PI;

    fn reference(phi: &SymplecticGerm) -> Complement {
        invariant_complement(&phi.linearization(), &GroupAction::trivial(phi.dim()), ComplementRecipe::Reference).unwrap()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let gl = gauss_legendre(20);
        let s: f64 = gl.iter().map(|(t, w)| w * t.powi(30)).sum();
        assert!((s - 1.0 / 31.0).abs() < 1e-15);
        assert!(gl.windows(2).all(|p| p[0].0 < p[1].0));
    }

    #[test]
    fn identity_germ_has_zero_generating_function() {
        let phi = SymplecticGerm::linear(Mat::identity(2, 2), 1.0).unwrap();
        let c = invariant_complement(&phi.linearization(), &GroupAction::trivial(2), ComplementRecipe::Averaged).unwrap();
        assert_eq!(c.case, SplittingCase::Equal);
        // Equal case: N is J Delta.
        let jd = gram_schmidt(&(twisted_complex_structure(2) * diagonal_basis(2)), 1e-12);
        assert!(max_abs(&(&c.basis - &jd)) < 1e-15);
        let (f, _) = generating_function(&phi, &c).unwrap();
        assert_eq!(f.value(&[0.3, -0.2]), 0.0);
    }

    #[test]
    fn rotation_generating_function_matches_half_angle_formula() {
        // Midpoint splitting: f(z) = -tan(pi theta) |z|^2.
        let theta: f64 = 0.1;
        let phi = SymplecticGerm::linear(rotation(2.0 * PI * theta), 1.0).unwrap();
        let (f, report) = generating_function(&phi, &reference(&phi)).unwrap();
        assert!(report.quadratic);
        let z = [0.4, -0.3];
        let expected = -(PI * theta).tan() * 0.25;
        assert!((f.value(&z) - expected).abs() < 1e-14);
    }

    #[test]
    fn transverse_and_general_cases() {
        let r = rotation(2.0 * PI / 5.0);
        let c = invariant_complement(&r, &GroupAction::trivial(2), ComplementRecipe::Averaged).unwrap();
        assert_eq!(c.case, SplittingCase::Transverse);
        assert!(c.sigma_diagonal > 1e-8 && c.sigma_graph > 1e-8);
        let shear = Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let a = block_diagonal(&[shear, r]);
        let c = invariant_complement(&a, &GroupAction::trivial(4), ComplementRecipe::Averaged).unwrap();
        assert_eq!(c.case, SplittingCase::General);
        assert!(c.lagrangian_defect <= 1e-12);
    }

    #[test]
    fn reference_complement_rejects_half_turn() {
        let err = invariant_complement(&rotation(PI), &GroupAction::trivial(2), ComplementRecipe::Reference).unwrap_err();
        assert!(matches!(err, Error::NotComplementary { .. }));
    }

    #[test]
    fn twist_generating_function_critical_points_are_fixed_points() {
        let phi = SymplecticGerm::twist(1, PI * 0.1, 0.2, 1.0);
        let (f, report) = generating_function(&phi, &reference(&phi)).unwrap();
        assert!(!report.quadratic);
        assert!(report.closedness_defect <= 1e-9);
        assert!(f.gradient(&[0.0, 0.0]).norm() < 1e-14);
        // Radial symmetry: f depends on |z| only.
        assert!((f.value(&[0.3, 0.4]) - f.value(&[0.5, 0.0])).abs() < 1e-13);
        // Hessian agrees with finite differences of the gradient.
        let z = [0.2, -0.35];
        let h = f.hessian(&z);
        let step = 1e-6;
        for j in 0..2 {
            let mut zp = z.to_vec();
            zp[j] += step;
            let mut zm = z.to_vec();
            zm[j] -= step;
            let col = (f.gradient(&zp) - f.gradient(&zm)) / (2.0 * step);
            for i in 0..2 {
                assert!((h[(i, j)] - col[i]).abs() < 1e-7);
            }
        }
        // Gradient of the value agrees with the 1-form.
        let g = f.gradient(&z);
        for i in 0..2 {
            let mut zp = z.to_vec();
            zp[i] += step;
            let mut zm = z.to_vec();
            zm[i] -= step;
            assert!(((f.value(&zp) - f.value(&zm)) / (2.0 * step) - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn dold_generating_function_is_invariant_and_restricts_to_inner() {
        for (inner, p) in [
            (SymplecticGerm::linear(rotation(2.0 * PI * 0.15), 1.0).unwrap(), 2),
            (SymplecticGerm::twist(1, PI * 0.1, 0.1, 1.0), 3),
        ] {
            let (phi_p, g) = dold_product(&inner, p).unwrap();
            let c = invariant_complement(&phi_p.linearization(), &g, ComplementRecipe::Reference).unwrap();
            let (big, _) = generating_function(&phi_p, &c).unwrap();
            assert!(invariance_defect(big.as_ref(), &g, 50, 3) <= 1e-9);
            let fixed = restrict_to_fixed(big, &g).unwrap();
            let (small, _) = generating_function(&inner, &reference(&inner)).unwrap();
            assert!(dold_restriction_defect(&fixed, small.as_ref(), p, 50, 4) <= 1e-8);
        }
    }

    #[test]
    fn averaged_complement_is_invariant_for_dold_products() {
        let inner = SymplecticGerm::linear(rotation(2.0 * PI * 0.2), 1.0).unwrap();
        let (phi3, g) = dold_product(&inner, 3).unwrap();
        let c = invariant_complement(&phi3.linearization(), &g, ComplementRecipe::Averaged).unwrap();
        assert!(c.invariance_defect <= 1e-10);
        let (f, _) = generating_function(&phi3, &c).unwrap();
        assert!(invariance_defect(f.as_ref(), &g, 50, 5) <= 1e-9);
        let eig = symmetric_eigenvalues(&f.hessian(&[0.0; 6]));
        assert!(eig.iter().all(|e| e.abs() > 1e-6));
    }

    #[test]
    fn restriction_by_reflection() {
        let f: SharedField = Arc::new(crate::field::Polynomial::quadratic(&[1, 1]));
        let r = restrict_to_fixed(f, &GroupAction::reflection(2, 1)).unwrap();
        assert_eq!(r.dim(), 1);
        assert!((r.value(&[0.5]) - 0.25).abs() < 1e-15);
    }
}
