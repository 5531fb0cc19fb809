//! Local Brouwer degree of gradient fields and Lefschetz indices of fixed
//! points by signed root counting at a random regular value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::field::ScalarField;
use crate::germ::SymplecticGerm;
use crate::linalg::{det, smallest_singular_value, Mat, Vector};
use crate::{Error, Result};

/// Roots closer than this are the same root.
pub const DEDUPE_RADIUS: f64 = 1e-7;

const MAX_NEWTON: usize = 200;
const MAX_ATTEMPTS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegreeReport {
    pub degree: i64,
    /// Each root with the sign of its Jacobian determinant.
    pub roots_found: Vec<(Vec<f64>, i32)>,
    pub regular_value_used: Vec<f64>,
    /// Regular values tried, over all repetitions.
    pub attempts: usize,
    /// Smallest norm of the map over the boundary samples.
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct DegreeOptions {
    pub seed: u64,
    /// Independent regular values that must give the same degree.
    pub repetitions: usize,
    /// Grid resolution for the boundary margin; chosen by dimension if unset.
    pub margin_resolution: Option<usize>,
}

impl Default for DegreeOptions {
    fn default() -> Self {
        DegreeOptions { seed: 0, repetitions: 1, margin_resolution: None }
    }
}

fn margin_resolution(m: usize) -> usize {
    match m {
        0..=2 => 64,
        3 => 24,
        4 => 12,
        _ => 6,
    }
}

/// Smallest value of `norm` over the boundary vertices of the grid.
fn boundary_margin(m: usize, radius: f64, resolution: usize, norm: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
    let base = resolution + 1;
    let h = 2.0 * radius / resolution as f64;
    (0..base.pow(m as u32))
        .into_par_iter()
        .filter_map(|mut i| {
            let mut x = Vec::with_capacity(m);
            let mut on_boundary = false;
            for _ in 0..m {
                let a = i % base;
                i /= base;
                on_boundary |= a == 0 || a == resolution;
                x.push(-radius + a as f64 * h);
            }
            on_boundary.then(|| norm(&x))
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Newton seeds: the `9^m` cell centers for `m <= 4`, else 4000 random points.
fn seeds(m: usize, radius: f64, rng: &mut ChaCha8Rng) -> Vec<Vector> {
    if m <= 4 {
        (0..9usize.pow(m as u32))
            .map(|mut i| {
                Vector::from_iterator(
                    m,
                    (0..m).map(|_| {
                        let a = i % 9;
                        i /= 9;
                        radius * (-1.0 + (2 * a + 1) as f64 / 9.0)
                    }),
                )
            })
            .collect()
    } else {
        (0..4000).map(|_| Vector::from_iterator(m, (0..m).map(|_| rng.gen_range(-radius..=radius)))).collect()
    }
}

/// Damped Newton for `map(x) = 0`, with backtracking on `|map|^2`.
fn newton(map: &(impl Fn(&Vector) -> (Vector, Mat) + Sync), x0: &Vector, radius: f64, tol: f64) -> Option<Vector> {
    let mut x = x0.clone();
    let (mut r, mut jac) = map(&x);
    for _ in 0..MAX_NEWTON {
        let res = r.norm();
        if res <= tol {
            // Two more steps to settle the last digits.
            for _ in 0..2 {
                if let Some(step) = jac.clone().lu().solve(&(-&r)) {
                    x += step;
                    (r, jac) = map(&x);
                }
            }
            return Some(x);
        }
        let step = jac.clone().lu().solve(&(-&r))?;
        let mut t = 1.0;
        loop {
            let trial = &x + &step * t;
            let (rt, jt) = map(&trial);
            if rt.norm() < (1.0 - 1e-4 * t) * res {
                x = trial;
                r = rt;
                jac = jt;
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                return None;
            }
        }
        if x.amax() > 1.5 * radius || !x.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    None
}

enum Count {
    Done { degree: i64, roots: Vec<(Vec<f64>, i32)> },
    /// A root with a numerically singular Jacobian; try another value.
    Degenerate,
}

/// Signed count of the roots of `map` in `[-R, R]^m`.
fn count_roots(
    map: &(impl Fn(&Vector) -> (Vector, Mat) + Sync),
    m: usize,
    radius: f64,
    tol: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Count> {
    let starts = seeds(m, radius, rng);
    let mut found: Vec<Vector> = starts.par_iter().filter_map(|x0| newton(map, x0, radius, tol)).collect();
    found.sort_by(|a, b| a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    let mut roots: Vec<Vector> = Vec::new();
    for x in found {
        if x.amax() > radius {
            continue;
        }
        if !roots.iter().any(|y| (y - &x).norm() < DEDUPE_RADIUS) {
            roots.push(x);
        }
    }
    let mut degree = 0;
    let mut out = Vec::with_capacity(roots.len());
    for x in roots {
        let distance = radius - x.amax();
        if distance < 2.0 * DEDUPE_RADIUS {
            return Err(Error::RootNearBoundary { distance });
        }
        let jac = map(&x).1;
        let scale = jac.amax().max(1.0);
        if smallest_singular_value(&jac) < 1e-9 * scale {
            return Ok(Count::Degenerate);
        }
        let s = if det(&jac) > 0.0 { 1 } else { -1 };
        degree += s as i64;
        out.push((x.iter().copied().collect(), s));
    }
    Ok(Count::Done { degree, roots: out })
}

/// Runs `count_roots` on `repetitions` independent perturbations built by
/// `perturb`, which returns the perturbed map, its defining vector and the
/// Newton tolerance.
fn repeated<M>(
    m: usize,
    radius: f64,
    margin: f64,
    opts: &DegreeOptions,
    perturb: impl Fn(&mut ChaCha8Rng) -> (M, Vec<f64>, f64),
) -> Result<DegreeReport>
where
    M: Fn(&Vector) -> (Vector, Mat) + Sync,
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut attempts = 0;
    let mut first: Option<DegreeReport> = None;
    for _ in 0..opts.repetitions.max(1) {
        let mut report = None;
        for _ in 0..MAX_ATTEMPTS {
            attempts += 1;
            let (map, value, tol) = perturb(&mut rng);
            if let Count::Done { degree, roots } = count_roots(&map, m, radius, tol, &mut rng)? {
                report = Some(DegreeReport { degree, roots_found: roots, regular_value_used: value, attempts: 0, margin });
                break;
            }
        }
        let report = report.ok_or_else(|| Error::InvalidArgument(format!("no regular value found in {MAX_ATTEMPTS} attempts")))?;
        match &first {
            None => first = Some(report),
            Some(f) if f.degree != report.degree => {
                return Err(Error::DegreeUnstable { first: f.degree, second: report.degree });
            }
            Some(_) => {}
        }
    }
    let mut report = first.expect("at least one repetition");
    report.attempts = attempts;
    Ok(report)
}

fn random_direction(m: usize, rng: &mut ChaCha8Rng) -> Vector {
    loop {
        let v = Vector::from_iterator(m, (0..m).map(|_| rng.gen_range(-1.0..=1.0)));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Degree of `grad f` at its zero 0: the signed count of the solutions of
/// `grad f = v` for a random `v` much smaller than the boundary margin.
pub fn gradient_degree(f: &dyn ScalarField, opts: &DegreeOptions) -> Result<DegreeReport> {
    let m = f.dim();
    let radius = f.radius();
    let res = opts.margin_resolution.unwrap_or_else(|| margin_resolution(m));
    let margin = boundary_margin(m, radius, res, |x| f.gradient(x).norm());
    if !(margin > 1e-9) {
        return Err(Error::BoundaryZeroSuspected { margin });
    }
    repeated(m, radius, margin, opts, |rng| {
        let v = random_direction(m, rng) * (1e-2 * margin);
        let tol = 1e-10 * v.norm();
        let target = v.clone();
        let map = move |x: &Vector| (f.gradient(x.as_slice()) - &target, f.hessian(x.as_slice()));
        (map, v.iter().copied().collect(), tol)
    })
}

/// Lefschetz index of the fixed point 0 of `phi`: the sum of
/// `sign det(D phi~ - I)` over the fixed points of a random affine
/// perturbation `phi~ = phi + c + B x` of size `perturbation_scale` (default
/// `1e-4 R`, capped at a tenth of the boundary margin).
pub fn lefschetz_index(phi: &SymplecticGerm, perturbation_scale: Option<f64>, opts: &DegreeOptions) -> Result<DegreeReport> {
    let m = phi.dim();
    let radius = phi.radius();
    let res = opts.margin_resolution.unwrap_or_else(|| margin_resolution(m));
    let displacement = |x: &[f64]| (phi.eval(x) - Vector::from_column_slice(x)).norm();
    let margin = boundary_margin(m, radius, res, displacement);
    if !(margin > 1e-9) {
        return Err(Error::BoundaryZeroSuspected { margin });
    }
    let scale = perturbation_scale.unwrap_or(1e-4 * radius).min(0.1 * margin);
    let identity = Mat::identity(m, m);
    repeated(m, radius, margin, opts, |rng| {
        let c = random_direction(m, rng) * (0.5 * scale);
        let b = Mat::from_fn(m, m, |_, _| rng.gen_range(-1.0..=1.0)) * (0.5 * scale / (radius * m as f64));
        let tol = 1e-10 * c.norm();
        let value = c.iter().copied().collect();
        let id = identity.clone();
        let map = move |x: &Vector| {
            let r = phi.eval(x.as_slice()) + &c + &b * x - x;
            let jac = phi.jacobian(x.as_slice()) + &b - &id;
            (r, jac)
        };
        (map, value, tol)
    })
}
