//! Conley-Zehnder indices by closed forms and by the crossing form, and the
//! sign rules built on them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::symplectic::{PathEval, SymplecticPath, Tolerances};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    CrossingForm,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Crossing {
    pub time: f64,
    pub kernel_dim: usize,
    pub signature: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CZReport {
    pub index: i64,
    pub crossings: Vec<Crossing>,
    pub method: Method,
    /// Rotation rate of the perturbation that made every crossing regular.
    pub perturbation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrossingOptions {
    pub samples_per_unit: usize,
    pub localize_tol: f64,
    pub signature_tol: f64,
    pub perturbations: Vec<f64>,
}

impl Default for CrossingOptions {
    fn default() -> Self {
        CrossingOptions {
            samples_per_unit: 2000,
            localize_tol: 1e-12,
            signature_tol: 1e-9,
            perturbations: vec![1e-3, -1e-3, 3e-3, -3e-3, 1e-2, -1e-2],
        }
    }
}

/// Index of a path with nondegenerate endpoint: closed forms for block
/// paths, the crossing form otherwise.
pub fn cz_index(path: &SymplecticPath, tol: &Tolerances) -> Result<CZReport> {
    let nd = path.endpoint_nondegeneracy(tol);
    if !nd.nondegenerate {
        return Err(Error::DegenerateEndpoint { det: nd.det_minus_identity });
    }
    match path.blocks() {
        Some(blocks) => {
            let mut index = 0;
            for b in blocks {
                index += b
                    .closed_form_cz(path.iterations())
                    .ok_or(Error::DegenerateEndpoint { det: nd.det_minus_identity })?;
            }
            Ok(CZReport { index, crossings: Vec::new(), method: Method::ClosedForm, perturbation: 0.0 })
        }
        None => crossing_form_index(path, &CrossingOptions::default()),
    }
}

/// Crossing-form index of any path, regardless of representation.
pub fn crossing_form_index(path: &dyn PathEval, opts: &CrossingOptions) -> Result<CZReport> {
    let n2 = 2 * path.dim_half();
    let t_end = path.duration();
    let end_sigma = linalg::smallest_singular_value(&(path.matrix_at(t_end) - Mat::identity(n2, n2)));
    if end_sigma < 1e-9 {
        return Err(Error::DegenerateEndpoint { det: linalg::det(&(path.matrix_at(t_end) - Mat::identity(n2, n2))) });
    }
    let mut last_time = match crossing_sum(path, opts) {
        Ok((index, crossings)) => {
            return Ok(CZReport { index, crossings, method: Method::CrossingForm, perturbation: 0.0 })
        }
        Err(Error::NonRegularCrossing { time, .. }) => time,
        Err(e) => return Err(e),
    };
    let end_det_sign = linalg::sign(linalg::det(&(path.matrix_at(t_end) - Mat::identity(n2, n2))));
    for &delta in &opts.perturbations {
        let perturbed = Rotated { inner: path, rate: delta };
        let end = perturbed.matrix_at(t_end) - Mat::identity(n2, n2);
        // The perturbation must keep the endpoint in its nondegenerate component.
        if linalg::smallest_singular_value(&end) < 0.5 * end_sigma || linalg::sign(linalg::det(&end)) != end_det_sign {
            continue;
        }
        match crossing_sum(&perturbed, opts) {
            Ok((index, crossings)) => {
                return Ok(CZReport { index, crossings, method: Method::CrossingForm, perturbation: delta })
            }
            Err(Error::NonRegularCrossing { time, .. }) => last_time = time,
            Err(e) => return Err(e),
        }
    }
    Err(Error::NonRegularCrossing { time: last_time, attempts: opts.perturbations.len() as u32 })
}

/// `t -> exp(rate t J0) Phi_t`, generated by `rate I + R S R^T`.
struct Rotated<'a> {
    inner: &'a dyn PathEval,
    rate: f64,
}

impl Rotated<'_> {
    fn rotation(&self, t: f64) -> Mat {
        let r = linalg::rotation(self.rate * t);
        linalg::block_diagonal(&vec![r; self.inner.dim_half()])
    }
}

impl PathEval for Rotated<'_> {
    fn dim_half(&self) -> usize {
        self.inner.dim_half()
    }

    fn duration(&self) -> f64 {
        self.inner.duration()
    }

    fn matrix_at(&self, t: f64) -> Mat {
        self.rotation(t) * self.inner.matrix_at(t)
    }

    fn generator_at(&self, t: f64) -> Mat {
        let r = self.rotation(t);
        let n2 = 2 * self.inner.dim_half();
        Mat::identity(n2, n2) * self.rate + &r * self.inner.generator_at(t) * r.transpose()
    }
}

fn distance_to_identity(path: &dyn PathEval, t: f64) -> f64 {
    let n2 = 2 * path.dim_half();
    linalg::smallest_singular_value(&(path.matrix_at(t) - Mat::identity(n2, n2)))
}

fn signature_on(s: &Mat, basis: &Mat, tol: f64, time: f64) -> Result<i64> {
    signature_with_slack(s, basis, tol, 0.0, time)
}

/// Signature of `s` restricted to `span(basis)`; eigenvalues within
/// `tol * scale + slack` of zero make the crossing non-regular.
fn signature_with_slack(s: &Mat, basis: &Mat, tol: f64, slack: f64, time: f64) -> Result<i64> {
    let form = basis.transpose() * s * basis;
    let scale = linalg::max_abs(s).max(1.0);
    let mut sig = 0;
    for e in linalg::symmetric_eigenvalues(&form) {
        if e.abs() <= tol * scale + slack {
            return Err(Error::NonRegularCrossing { time, attempts: 0 });
        }
        sig += if e > 0.0 { 1 } else { -1 };
    }
    Ok(sig)
}

/// Symmetric `B` with `Phi = (I + J0 B / 2)(I - J0 B / 2)^{-1}`; defined while
/// `-1` is not an eigenvalue of `Phi`.
fn cayley_symmetric(phi: &Mat) -> Mat {
    let n2 = phi.nrows();
    let id = Mat::identity(n2, n2);
    let plus_inv = (phi + &id).try_inverse().expect("no eigenvalue -1 near the identity");
    let c = (phi - &id) * plus_inv;
    let b = -(linalg::j0(n2 / 2) * c) * 2.0;
    (&b + b.transpose()) * 0.5
}

/// Contribution of an initial segment `[0, tau]` that stays in the Cayley
/// chart around the identity: there the index depends only on `Phi_tau`.
fn initial_segment(path: &dyn PathEval, g: &[f64], dt: f64, opts: &CrossingOptions) -> Result<(usize, i64)> {
    let n2 = 2 * path.dim_half();
    for (i, &gi) in g.iter().enumerate().skip(1) {
        let phi = path.matrix_at(i as f64 * dt);
        let dist = (&phi - Mat::identity(n2, n2)).norm();
        if dist >= 0.5 {
            break;
        }
        if gi < 1e-6 {
            continue;
        }
        if let Ok(sig) = signature_on(&cayley_symmetric(&phi), &Mat::identity(n2, n2), opts.signature_tol, 0.0) {
            return Ok((i, sig));
        }
    }
    Err(Error::NonRegularCrossing { time: 0.0, attempts: 0 })
}

fn crossing_sum(path: &dyn PathEval, opts: &CrossingOptions) -> Result<(i64, Vec<Crossing>)> {
    let n2 = 2 * path.dim_half();
    let t_end = path.duration();
    let samples = ((opts.samples_per_unit as f64) * t_end).ceil() as usize;
    let dt = t_end / samples as f64;
    let g: Vec<f64> = (0..=samples).map(|i| distance_to_identity(path, i as f64 * dt)).collect();

    // t = 0 is always a crossing with full kernel; it contributes half its
    // signature. A degenerate form there is replaced by the chart segment.
    let (start, sig0, tau) = match signature_on(&path.generator_at(0.0), &Mat::identity(n2, n2), opts.signature_tol, 0.0) {
        Ok(sig) => (1, sig, 0.0),
        Err(Error::NonRegularCrossing { .. }) => {
            let (i, sig) = initial_segment(path, &g, dt, opts)?;
            (i, sig, i as f64 * dt)
        }
        Err(e) => return Err(e),
    };
    let mut crossings = vec![Crossing { time: 0.0, kernel_dim: n2, signature: sig0 }];
    let mut twice_index = sig0;

    for i in start..samples {
        if !(g[i] <= g[i - 1] && g[i] <= g[i + 1]) {
            continue;
        }
        let t = i as f64 * dt;
        let speed = linalg::max_abs(&(linalg::j0(n2 / 2) * path.generator_at(t) * path.matrix_at(t)));
        if g[i] > 2.0 * speed * dt * (n2 as f64) + 1e-9 {
            continue;
        }
        let (t_star, g_star) = golden_minimum(|t| distance_to_identity(path, t), t - dt, t + dt, opts.localize_tol);
        if t_star <= tau {
            continue;
        }
        let phi = path.matrix_at(t_star);
        let scale = linalg::max_abs(&phi).max(1.0);
        if g_star > 1e-7 * scale {
            continue;
        }
        let kernel = linalg::kernel_basis(&(phi - Mat::identity(n2, n2)), 1e-5 * scale);
        let slack = localization_slack(path, t_star, dt, scale);
        let sig = signature_with_slack(&path.generator_at(t_star), &kernel, opts.signature_tol, slack, t_star)?;
        twice_index += 2 * sig;
        crossings.push(Crossing { time: t_star, kernel_dim: kernel.ncols(), signature: sig });
    }
    debug_assert!(twice_index % 2 == 0);
    Ok((twice_index / 2, crossings))
}

/// How far the crossing form can move within the time window on which the
/// path is numerically indistinguishable from a crossing. Tangential
/// crossings have wide windows and are flagged as non-regular.
fn localization_slack(path: &dyn PathEval, t_star: f64, dt: f64, scale: f64) -> f64 {
    let floor = 1e-9 * scale;
    let mut eta = 1e-12;
    while eta < dt {
        let left = distance_to_identity(path, t_star - eta);
        let right = distance_to_identity(path, t_star + eta);
        if left > floor && right > floor {
            break;
        }
        eta *= 2.0;
    }
    let h = 1e-6;
    let rate = linalg::max_abs(&(path.generator_at(t_star + h) - path.generator_at(t_star - h))) / (2.0 * h);
    4.0 * eta * rate
}

fn golden_minimum(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeterminantIdentity {
    pub index: i64,
    pub lhs: i32,
    pub rhs: i32,
    pub equal: bool,
}

/// `sign det(Phi_T - I)` against `(-1)^(n - mu)`.
pub fn determinant_identity_check(path: &SymplecticPath, tol: &Tolerances) -> Result<DeterminantIdentity> {
    let nd = path.endpoint_nondegeneracy(tol);
    if !nd.nondegenerate {
        return Err(Error::DegenerateEndpoint { det: nd.det_minus_identity });
    }
    let index = cz_index(path, tol)?.index;
    let lhs = nd.sign();
    let rhs = parity_sign(path.dim_half() as i64 - index);
    Ok(DeterminantIdentity { index, lhs, rhs, equal: lhs == rhs })
}

pub fn parity_sign(e: i64) -> i32 {
    if e.rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

/// `(-1)^(mu(Phi) - mu(Phi^k))`.
pub fn iterated_sign(path: &SymplecticPath, k: u32, tol: &Tolerances) -> Result<i32> {
    let mu = cz_index(path, tol)?.index;
    let mu_k = cz_index(&crate::symplectic::iterate_path(path, k), tol)?.index;
    Ok(parity_sign(mu - mu_k))
}

/// `(-1)^(m - mu(full) + mu(fixed))` with `2m` the codimension of the fixed part.
pub fn equivariant_sign(full: &SymplecticPath, fixed: &SymplecticPath, tol: &Tolerances) -> Result<i32> {
    if fixed.dim_half() > full.dim_half() {
        return Err(Error::DimensionMismatch(format!(
            "fixed part has dimension {} but the full path has {}",
            2 * fixed.dim_half(),
            2 * full.dim_half()
        )));
    }
    let m = (full.dim_half() - fixed.dim_half()) as i64;
    let mu_full = cz_index(full, tol)?.index;
    let mu_fixed = cz_index(fixed, tol)?.index;
    Ok(parity_sign(m - mu_full + mu_fixed))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixedlessSign {
    pub dim: usize,
    pub det_sign: i32,
    pub expected: i32,
    pub equal: bool,
}

/// Sign of `det g` for a finite-order orthogonal `g` without fixed vectors.
pub fn det_sign_fixedless(g: &Mat, order: usize) -> Result<FixedlessSign> {
    let dim = g.nrows();
    if g.ncols() != dim || order == 0 {
        return Err(Error::DimensionMismatch("generator must be square with positive order".into()));
    }
    let id = Mat::identity(dim, dim);
    let defect = linalg::max_abs(&(g.pow(order as u32) - &id));
    if defect > 1e-9 {
        return Err(Error::InvalidArgument(format!("g^{order} differs from the identity by {defect:.3e}")));
    }
    let fixed = linalg::kernel_basis(&(g - &id), 1e-8).ncols();
    if fixed > 0 {
        return Err(Error::NontrivialFixedSubspace { dim: fixed });
    }
    let det_sign = linalg::sign(linalg::det(g));
    let expected = parity_sign(dim as i64);
    Ok(FixedlessSign { dim, det_sign, expected, equal: det_sign == expected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{int, rat};
    use crate::symplectic::{integrate_flow, iterate_path, make_block_path, BlockSpec, PeriodicGenerator};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn path(specs: &[&str]) -> SymplecticPath {
        make_block_path(specs.iter().map(|s| s.parse().unwrap()).collect()).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(cz_index(&path(&["rotation:1/3"]), &tol()).unwrap().index, 1);
        assert_eq!(cz_index(&path(&["rotation:-1/3"]), &tol()).unwrap().index, -1);
        assert_eq!(cz_index(&path(&["positive-hyperbolic:2"]), &tol()).unwrap().index, 0);
        assert_eq!(cz_index(&path(&["rotation:4/3"]), &tol()).unwrap().index, 3);
    }

    #[test]
    fn crossing_form_matches_closed_form_on_examples() {
        for (spec, mu) in [
            ("rotation:1/3", 1),
            ("rotation:-1/3", -1),
            ("rotation:4/3", 3),
            ("rotation:7/5", 3),
            ("positive-hyperbolic:2", 0),
            ("negative-hyperbolic:2", 1),
        ] {
            let r = crossing_form_index(&path(&[spec]), &CrossingOptions::default()).unwrap();
            assert_eq!(r.index, mu, "{spec}");
        }
    }

    #[test]
    fn crossing_times_of_long_rotation() {
        let r = crossing_form_index(&path(&["rotation:7/3"]), &CrossingOptions::default()).unwrap();
        let interior: Vec<f64> = r.crossings.iter().skip(1).map(|c| c.time).collect();
        assert_eq!(interior.len(), 2);
        assert!((interior[0] - 3.0 / 7.0).abs() < 1e-9);
        assert!((interior[1] - 6.0 / 7.0).abs() < 1e-9);
        assert!(r.crossings.iter().skip(1).all(|c| c.kernel_dim == 2 && c.signature == 2));
    }

    #[test]
    fn large_negative_hyperbolic_has_interior_crossing() {
        // ln(30) exceeds pi, so S(0) is indefinite and the index comes from the interior.
        let r = crossing_form_index(&path(&["negative-hyperbolic:30"]), &CrossingOptions::default()).unwrap();
        assert_eq!(r.index, 1);
        assert_eq!(r.crossings[0].signature, 0);
        assert_eq!(r.crossings.len(), 2);
    }

    #[test]
    fn doubled_negative_hyperbolic() {
        let p = iterate_path(&path(&["negative-hyperbolic:2"]), 2);
        let r = crossing_form_index(&p, &CrossingOptions::default()).unwrap();
        assert_eq!(r.index, 2);
        assert_eq!(cz_index(&p, &tol()).unwrap().index, 2);
        assert_eq!(iterated_sign(&path(&["negative-hyperbolic:2"]), 2, &tol()).unwrap(), -1);
    }

    #[test]
    fn determinant_identity_examples() {
        let d = determinant_identity_check(&path(&["rotation:1/3"]), &tol()).unwrap();
        assert_eq!((d.lhs, d.rhs, d.equal), (1, 1, true));
        let d = determinant_identity_check(&path(&["positive-hyperbolic:2"]), &tol()).unwrap();
        assert_eq!((d.lhs, d.rhs, d.equal), (-1, -1, true));
        let d = determinant_identity_check(&path(&["rotation:1/5", "positive-hyperbolic:3"]), &tol()).unwrap();
        assert_eq!((d.lhs, d.rhs, d.equal), (-1, -1, true));
    }

    #[test]
    fn degenerate_endpoint_is_reported() {
        let p = path(&["rotation:1"]);
        assert!(matches!(cz_index(&p, &tol()), Err(Error::DegenerateEndpoint { .. })));
        let p = path(&["rotation:1/2"]);
        assert!(matches!(iterated_sign(&p, 2, &tol()), Err(Error::DegenerateEndpoint { .. })));
    }

    #[test]
    fn iterated_sign_examples() {
        assert_eq!(iterated_sign(&path(&["rotation:1/5"]), 3, &tol()).unwrap(), 1);
        assert_eq!(iterated_sign(&path(&["rotation:2/7"]), 1, &tol()).unwrap(), 1);
    }

    #[test]
    fn equivariant_sign_examples() {
        let fixed = path(&["rotation:1/5"]);
        let full = path(&["rotation:1/5", "rotation:1/3"]);
        assert_eq!(equivariant_sign(&full, &fixed, &tol()).unwrap(), 1);
        assert_eq!(equivariant_sign(&fixed, &fixed, &tol()).unwrap(), 1);
        let full = path(&["rotation:1/5", "negative-hyperbolic:2"]);
        assert_eq!(equivariant_sign(&full, &fixed, &tol()).unwrap(), 1);
        assert!(matches!(equivariant_sign(&fixed, &full, &tol()), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn fixedless_sign_examples() {
        let minus = Mat::from_element(1, 1, -1.0);
        assert_eq!(det_sign_fixedless(&minus, 2).unwrap().det_sign, -1);
        let r = linalg::rotation(2.0 * std::f64::consts::PI / 3.0);
        let s = det_sign_fixedless(&r, 3).unwrap();
        assert_eq!((s.det_sign, s.equal), (1, true));
        let g = linalg::block_diagonal(&[
            minus.clone(),
            linalg::rotation(2.0 * std::f64::consts::PI / 5.0),
            linalg::rotation(4.0 * std::f64::consts::PI / 5.0),
        ]);
        let s = det_sign_fixedless(&g, 10).unwrap();
        assert_eq!((s.det_sign, s.expected), (-1, -1));
        let with_fixed = linalg::block_diagonal(&[Mat::identity(1, 1), minus]);
        assert!(matches!(det_sign_fixedless(&with_fixed, 2), Err(Error::NontrivialFixedSubspace { dim: 1 })));
    }

    #[test]
    fn sampled_path_uses_crossing_form() {
        let theta = 1.4;
        let s = Mat::identity(2, 2) * (2.0 * std::f64::consts::PI * theta);
        let p = integrate_flow(&PeriodicGenerator::constant(s), 10000, &tol()).unwrap();
        let r = cz_index(&p, &tol()).unwrap();
        assert_eq!(r.method, Method::CrossingForm);
        assert_eq!(r.index, 3);
    }

    /// Rotation by `2 pi theta t^2`: the crossing at t = 0 has a vanishing form.
    struct SlowStart {
        theta: f64,
    }

    impl PathEval for SlowStart {
        fn dim_half(&self) -> usize {
            1
        }
        fn duration(&self) -> f64 {
            1.0
        }
        fn matrix_at(&self, t: f64) -> Mat {
            linalg::rotation(2.0 * std::f64::consts::PI * self.theta * t * t)
        }
        fn generator_at(&self, t: f64) -> Mat {
            Mat::identity(2, 2) * (4.0 * std::f64::consts::PI * self.theta * t)
        }
    }

    #[test]
    fn degenerate_start_uses_initial_chart() {
        for (theta, mu) in [(0.3, 1), (1.3, 3), (-0.4, -1)] {
            let r = crossing_form_index(&SlowStart { theta }, &CrossingOptions::default()).unwrap();
            assert_eq!(r.index, mu, "theta = {theta}");
            assert_eq!(r.perturbation, 0.0);
        }
    }

    /// Rotation whose angle touches one full turn at t = 1/2 with zero speed,
    /// then falls back to 0.6 turns.
    struct Touching;

    impl Touching {
        fn turns(t: f64) -> (f64, f64) {
            if t <= 0.5 {
                let u = 1.0 - 2.0 * t;
                (1.0 - u * u, 4.0 * u)
            } else {
                let u = 2.0 * t - 1.0;
                (1.0 - 0.4 * u * u, -1.6 * u)
            }
        }
    }

    impl PathEval for Touching {
        fn dim_half(&self) -> usize {
            1
        }
        fn duration(&self) -> f64 {
            1.0
        }
        fn matrix_at(&self, t: f64) -> Mat {
            linalg::rotation(2.0 * std::f64::consts::PI * Self::turns(t).0)
        }
        fn generator_at(&self, t: f64) -> Mat {
            Mat::identity(2, 2) * (2.0 * std::f64::consts::PI * Self::turns(t).1)
        }
    }

    #[test]
    fn non_regular_interior_crossing_is_perturbed_away() {
        let r = crossing_form_index(&Touching, &CrossingOptions::default()).unwrap();
        assert_eq!(r.index, 1);
        assert!(r.perturbation != 0.0);
        let opts = CrossingOptions { perturbations: vec![], ..CrossingOptions::default() };
        assert!(matches!(crossing_form_index(&Touching, &opts), Err(Error::NonRegularCrossing { .. })));
    }

    #[test]
    fn exact_parameters_drive_closed_forms() {
        let b = BlockSpec::rotation(rat(-7, 5));
        assert_eq!(b.closed_form_cz(1), Some(-3));
        assert_eq!(BlockSpec::negative_hyperbolic(int(2)).unwrap().closed_form_cz(3), Some(3));
    }
}
