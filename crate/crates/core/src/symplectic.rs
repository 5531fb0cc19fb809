//! Symplectic matrices, block-family paths and integrated linear flows.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::exact::{self, int, ExactMatrix, Rational};
use crate::linalg::{self, Mat};

/// Numerical tolerances for structural checks and nondegeneracy decisions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub symp: f64,
    pub nondeg: f64,
    /// Bound on the estimated global error of an integrated flow.
    pub flow: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { symp: 1e-10, nondeg: 1e-8, flow: 1e-6 }
    }
}

#[derive(Clone, Debug)]
pub struct SymplecticMatrix {
    dim_half: usize,
    entries: Mat,
    exact: Option<ExactMatrix>,
}

impl SymplecticMatrix {
    pub fn from_f64(entries: Mat, tol_symp: f64) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() % 2 != 0 || entries.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "symplectic matrix must be 2n x 2n, got {} x {}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let defect = linalg::symplectic_defect(&entries);
        if !(defect <= tol_symp) {
            return Err(Error::DriftExceeded { drift: defect, tol: tol_symp });
        }
        Ok(SymplecticMatrix { dim_half: entries.nrows() / 2, entries, exact: None })
    }

    pub fn from_exact(m: ExactMatrix) -> Result<Self> {
        let n2 = m.nrows();
        if n2 != m.ncols() || n2 % 2 != 0 || n2 == 0 {
            return Err(Error::DimensionMismatch("symplectic matrix must be 2n x 2n".into()));
        }
        let j = exact::j0_exact(n2 / 2);
        if m.transpose().mul(&j).mul(&m) != j {
            return Err(Error::InvalidArgument("exact matrix is not symplectic".into()));
        }
        Ok(SymplecticMatrix { dim_half: n2 / 2, entries: m.to_f64(), exact: Some(m) })
    }

    pub fn identity(n: usize) -> Self {
        SymplecticMatrix {
            dim_half: n,
            entries: Mat::identity(2 * n, 2 * n),
            exact: Some(ExactMatrix::identity(2 * n)),
        }
    }

    pub fn dim_half(&self) -> usize {
        self.dim_half
    }

    pub fn entries(&self) -> &Mat {
        &self.entries
    }

    pub fn exact(&self) -> Option<&ExactMatrix> {
        self.exact.as_ref()
    }

    pub fn compose(&self, other: &SymplecticMatrix) -> SymplecticMatrix {
        assert_eq!(self.dim_half, other.dim_half);
        let exact = match (&self.exact, &other.exact) {
            (Some(a), Some(b)) => Some(a.mul(b)),
            _ => None,
        };
        SymplecticMatrix { dim_half: self.dim_half, entries: &self.entries * &other.entries, exact }
    }

    pub fn direct_sum(parts: &[SymplecticMatrix]) -> SymplecticMatrix {
        let entries = linalg::block_diagonal(&parts.iter().map(|p| p.entries.clone()).collect::<Vec<_>>());
        let exact = parts
            .iter()
            .map(|p| p.exact.clone())
            .collect::<Option<Vec<_>>>()
            .map(|v| ExactMatrix::direct_sum(&v));
        SymplecticMatrix { dim_half: parts.iter().map(|p| p.dim_half).sum(), entries, exact }
    }

    /// `M^{-1} = -J0 M^T J0`.
    pub fn inverse(&self) -> SymplecticMatrix {
        let j = linalg::j0(self.dim_half);
        let entries = -(&j * self.entries.transpose() * &j);
        let exact = self.exact.as_ref().map(|e| {
            let je = exact::j0_exact(self.dim_half);
            let prod = je.mul(&e.transpose()).mul(&je);
            ExactMatrix::zeros(prod.nrows(), prod.ncols()).sub(&prod)
        });
        SymplecticMatrix { dim_half: self.dim_half, entries, exact }
    }

    pub fn pow(&self, k: u32) -> SymplecticMatrix {
        let mut out = SymplecticMatrix::identity(self.dim_half);
        for _ in 0..k {
            out = out.compose(self);
        }
        out
    }

    pub fn symplectic_defect(&self) -> f64 {
        linalg::symplectic_defect(&self.entries)
    }
}

/// `det(M - I)` together with the nondegeneracy decision.
#[derive(Clone, Debug, PartialEq)]
pub struct Nondegeneracy {
    pub det_minus_identity: f64,
    pub exact: Option<Rational>,
    pub nondegenerate: bool,
}

impl Nondegeneracy {
    fn from_values(value: f64, exact: Option<Rational>, tol_nondeg: f64) -> Self {
        let v = exact.as_ref().map(exact::to_f64).unwrap_or(value);
        Nondegeneracy { det_minus_identity: v, exact, nondegenerate: v.abs() > tol_nondeg }
    }

    /// Sign of `det(M - I)`, taken from the exact value when present.
    pub fn sign(&self) -> i32 {
        match &self.exact {
            Some(q) => exact::sign(q),
            None => linalg::sign(self.det_minus_identity),
        }
    }
}

pub fn is_nondegenerate(m: &SymplecticMatrix, tol_nondeg: f64) -> Nondegeneracy {
    let n2 = 2 * m.dim_half;
    let exact = m.exact.as_ref().map(|e| e.sub(&ExactMatrix::identity(n2)).det());
    let value = linalg::det(&(m.entries.clone() - Mat::identity(n2, n2)));
    Nondegeneracy::from_values(value, exact, tol_nondeg)
}

/// Canonical planar path families on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockSpec {
    /// `t -> R(2 pi theta t)`, `theta` in turns.
    Rotation { turns: Rational },
    /// `t -> diag(lambda^t, lambda^-t)`.
    PositiveHyperbolic { lambda: Rational },
    /// `t -> R(pi t) diag(lambda^t, lambda^-t)`.
    NegativeHyperbolic { lambda: Rational },
    /// `t -> [[1, c t], [0, 1]]`.
    Shear { c: Rational },
}

impl BlockSpec {
    pub fn rotation(turns: Rational) -> Self {
        BlockSpec::Rotation { turns }
    }

    pub fn positive_hyperbolic(lambda: Rational) -> Result<Self> {
        check_lambda(&lambda)?;
        Ok(BlockSpec::PositiveHyperbolic { lambda })
    }

    pub fn negative_hyperbolic(lambda: Rational) -> Result<Self> {
        check_lambda(&lambda)?;
        Ok(BlockSpec::NegativeHyperbolic { lambda })
    }

    pub fn shear(c: Rational) -> Self {
        BlockSpec::Shear { c }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BlockSpec::Rotation { .. } => "rotation",
            BlockSpec::PositiveHyperbolic { .. } => "positive-hyperbolic",
            BlockSpec::NegativeHyperbolic { .. } => "negative-hyperbolic",
            BlockSpec::Shear { .. } => "shear",
        }
    }

    fn parameter(&self) -> &Rational {
        match self {
            BlockSpec::Rotation { turns } => turns,
            BlockSpec::PositiveHyperbolic { lambda } | BlockSpec::NegativeHyperbolic { lambda } => lambda,
            BlockSpec::Shear { c } => c,
        }
    }

    pub fn matrix_at(&self, t: f64) -> Mat {
        match self {
            BlockSpec::Rotation { turns } => linalg::rotation(2.0 * std::f64::consts::PI * exact::to_f64(turns) * t),
            BlockSpec::PositiveHyperbolic { lambda } => hyperbolic(exact::to_f64(lambda), t),
            BlockSpec::NegativeHyperbolic { lambda } => {
                linalg::rotation(std::f64::consts::PI * t) * hyperbolic(exact::to_f64(lambda), t)
            }
            BlockSpec::Shear { c } => Mat::from_row_slice(2, 2, &[1.0, exact::to_f64(c) * t, 0.0, 1.0]),
        }
    }

    /// Symmetric `S(t)` with `d/dt Phi = J0 S Phi`.
    pub fn generator_at(&self, t: f64) -> Mat {
        match self {
            BlockSpec::Rotation { turns } => {
                Mat::identity(2, 2) * (2.0 * std::f64::consts::PI * exact::to_f64(turns))
            }
            BlockSpec::PositiveHyperbolic { lambda } => {
                let c = exact::to_f64(lambda).ln();
                Mat::from_row_slice(2, 2, &[0.0, -c, -c, 0.0])
            }
            BlockSpec::NegativeHyperbolic { lambda } => {
                let c = exact::to_f64(lambda).ln();
                let r = linalg::rotation(std::f64::consts::PI * t);
                let k = Mat::from_row_slice(2, 2, &[0.0, -c, -c, 0.0]);
                Mat::identity(2, 2) * std::f64::consts::PI + &r * k * r.transpose()
            }
            BlockSpec::Shear { c } => Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -exact::to_f64(c)]),
        }
    }

    /// Exact endpoint of the `k`-fold iterated block path, when its entries
    /// are rational.
    pub fn endpoint_exact(&self, k: u32) -> Option<ExactMatrix> {
        let kq = int(k as i64);
        match self {
            BlockSpec::Rotation { turns } => {
                let q = turns * &kq;
                let c = exact::cos_turns(&q)?;
                let s = exact::sin_turns(&q)?;
                Some(ExactMatrix::from_rows(2, 2, vec![c.clone(), -s.clone(), s, c]))
            }
            BlockSpec::PositiveHyperbolic { lambda } => {
                let l = pow_rat(lambda, k);
                Some(ExactMatrix::from_rows(2, 2, vec![l.clone(), Rational::zero(), Rational::zero(), l.recip()]))
            }
            BlockSpec::NegativeHyperbolic { lambda } => {
                let l = pow_rat(lambda, k);
                let s = if k % 2 == 0 { int(1) } else { int(-1) };
                Some(ExactMatrix::from_rows(
                    2,
                    2,
                    vec![&s * &l, Rational::zero(), Rational::zero(), &s * l.recip()],
                ))
            }
            BlockSpec::Shear { c } => Some(ExactMatrix::from_rows(
                2,
                2,
                vec![int(1), c * &kq, Rational::zero(), int(1)],
            )),
        }
    }

    /// Exact `det(M - I)` of the iterated endpoint: `2 - tr M` for planar
    /// blocks, rational whenever the trace is.
    pub fn endpoint_det_exact(&self, k: u32) -> Option<Rational> {
        let kq = int(k as i64);
        let two = int(2);
        match self {
            BlockSpec::Rotation { turns } => {
                let c = exact::cos_turns(&(turns * &kq))?;
                Some(&two - &two * c)
            }
            BlockSpec::PositiveHyperbolic { lambda } => {
                let l = pow_rat(lambda, k);
                Some(&two - &l - l.recip())
            }
            BlockSpec::NegativeHyperbolic { lambda } => {
                let l = pow_rat(lambda, k);
                let tr = &l + l.recip();
                Some(if k % 2 == 0 { &two - tr } else { &two + tr })
            }
            BlockSpec::Shear { .. } => Some(Rational::zero()),
        }
    }

    /// Closed-form index of the `k`-fold iterated canonical path; `None` when
    /// the endpoint is degenerate.
    pub fn closed_form_cz(&self, k: u32) -> Option<i64> {
        match self {
            BlockSpec::Rotation { turns } => {
                let q = turns * int(k as i64);
                if exact::is_integer(&q) {
                    None
                } else {
                    Some(2 * exact::floor_i64(&q) + 1)
                }
            }
            BlockSpec::PositiveHyperbolic { .. } => Some(0),
            BlockSpec::NegativeHyperbolic { .. } => Some(k as i64),
            BlockSpec::Shear { .. } => None,
        }
    }
}

fn check_lambda(lambda: &Rational) -> Result<()> {
    if lambda <= &Rational::one() {
        return Err(Error::InvalidArgument(format!("hyperbolic parameter must exceed 1, got {lambda}")));
    }
    Ok(())
}

fn pow_rat(q: &Rational, k: u32) -> Rational {
    let mut out = Rational::one();
    for _ in 0..k {
        out *= q;
    }
    out
}

fn hyperbolic(lambda: f64, t: f64) -> Mat {
    let a = lambda.powf(t);
    Mat::from_row_slice(2, 2, &[a, 0.0, 0.0, 1.0 / a])
}

impl fmt::Display for BlockSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind(), self.parameter())
    }
}

impl FromStr for BlockSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("block spec `{s}` must look like kind:value")))?;
        let q = parse_rational(value.trim())?;
        match kind.trim() {
            "rotation" => Ok(BlockSpec::rotation(q)),
            "positive-hyperbolic" => BlockSpec::positive_hyperbolic(q),
            "negative-hyperbolic" => BlockSpec::negative_hyperbolic(q),
            "shear" => Ok(BlockSpec::shear(q)),
            other => Err(Error::InvalidArgument(format!("unknown block kind `{other}`"))),
        }
    }
}

/// Parses `"3/5"`, `"-2"` or `"7"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let parsed = if s.contains('/') {
        s.parse::<Rational>().ok()
    } else {
        s.parse::<num_bigint::BigInt>().ok().map(Rational::from_integer)
    };
    match parsed {
        Some(q) if !(s.contains('/') && q.denom().is_zero()) => Ok(q),
        _ => Err(Error::InvalidArgument(format!("`{s}` is not an exact rational literal"))),
    }
}

/// A continuous, 1-periodic path of symmetric matrices.
#[derive(Clone)]
pub struct PeriodicGenerator {
    dim_half: usize,
    f: Arc<dyn Fn(f64) -> Mat + Send + Sync>,
}

impl PeriodicGenerator {
    pub fn new(dim_half: usize, f: impl Fn(f64) -> Mat + Send + Sync + 'static) -> Self {
        PeriodicGenerator { dim_half, f: Arc::new(f) }
    }

    pub fn constant(s: Mat) -> Self {
        let n = s.nrows() / 2;
        PeriodicGenerator::new(n, move |_| s.clone())
    }

    /// `S(t) = S0 + S1 cos(2 pi t) + S2 sin(2 pi t)`.
    pub fn trigonometric(s0: Mat, s1: Mat, s2: Mat) -> Self {
        let n = s0.nrows() / 2;
        PeriodicGenerator::new(n, move |t| {
            let (s, c) = (2.0 * std::f64::consts::PI * t).sin_cos();
            &s0 + &s1 * c + &s2 * s
        })
    }

    pub fn dim_half(&self) -> usize {
        self.dim_half
    }

    pub fn at(&self, t: f64) -> Mat {
        (self.f)(t)
    }
}

impl fmt::Debug for PeriodicGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PeriodicGenerator(n = {})", self.dim_half)
    }
}

/// Uniform samples of an integrated flow on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct SampledPath {
    steps: usize,
    samples: Vec<Mat>,
    generator: PeriodicGenerator,
}

impl SampledPath {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn samples(&self) -> &[Mat] {
        &self.samples
    }

    fn at(&self, s: f64) -> Mat {
        let h = 1.0 / self.steps as f64;
        let x = s / h;
        let nearest = x.round();
        if (x - nearest).abs() < 1e-9 {
            return self.samples[(nearest as usize).min(self.steps)].clone();
        }
        let i = (x.floor() as usize).min(self.steps - 1);
        let rest = s - i as f64 * h;
        let sub = 8;
        let dt = rest / sub as f64;
        let mut phi = self.samples[i].clone();
        let j = linalg::j0(self.generator.dim_half);
        for q in 0..sub {
            let tm = i as f64 * h + (q as f64 + 0.5) * dt;
            phi = linalg::cayley(&(&j * self.generator.at(tm) * dt)) * phi;
        }
        phi
    }
}

#[derive(Clone, Debug)]
pub enum PathBase {
    Blocks(Arc<Vec<BlockSpec>>),
    Sampled(Arc<SampledPath>),
}

/// A path `Phi_t` in `Sp(2n)` on `[0, k]`: a base path on `[0, 1]` extended by
/// `Phi_{t + j} = Phi_t Phi_1^j`.
#[derive(Clone, Debug)]
pub struct SymplecticPath {
    dim_half: usize,
    iterations: u32,
    base: PathBase,
}

/// Evaluation interface used by the crossing-form algorithm.
pub trait PathEval: Sync {
    fn dim_half(&self) -> usize;
    fn duration(&self) -> f64;
    fn matrix_at(&self, t: f64) -> Mat;
    /// Symmetric `S(t)` with `d/dt Phi = J0 S Phi`.
    fn generator_at(&self, t: f64) -> Mat;
}

pub fn make_block_path(blocks: Vec<BlockSpec>) -> Result<SymplecticPath> {
    if blocks.is_empty() {
        return Err(Error::InvalidArgument("block list is empty".into()));
    }
    Ok(SymplecticPath { dim_half: blocks.len(), iterations: 1, base: PathBase::Blocks(Arc::new(blocks)) })
}

pub fn iterate_path(path: &SymplecticPath, k: u32) -> SymplecticPath {
    assert!(k >= 1, "iteration count must be positive");
    SymplecticPath { dim_half: path.dim_half, iterations: path.iterations * k, base: path.base.clone() }
}

/// Integrates `d/dt Phi = J0 S(t) Phi` on `[0, 1]` with the implicit midpoint
/// rule. The result is refused when a sample drifts off `Sp(2n)` or when the
/// step-doubling error estimate exceeds `tol.flow`.
pub fn integrate_flow(generator: &PeriodicGenerator, steps: usize, tol: &Tolerances) -> Result<SymplecticPath> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be positive".into()));
    }
    let n = generator.dim_half();
    let samples = midpoint_samples(generator, steps);
    let mut drift = 0.0f64;
    for s in &samples {
        drift = drift.max(linalg::symplectic_defect(s));
    }
    if !(drift <= tol.symp) {
        return Err(Error::DriftExceeded { drift, tol: tol.symp });
    }
    let fine = midpoint_samples(generator, 2 * steps);
    let coarse_end = samples.last().unwrap();
    let fine_end = fine.last().unwrap();
    let scale = linalg::max_abs(fine_end).max(1.0);
    let estimate = linalg::max_abs(&(coarse_end - fine_end)) * 4.0 / 3.0 / scale;
    if !(estimate <= tol.flow) {
        return Err(Error::DriftExceeded { drift: estimate, tol: tol.flow });
    }
    let sampled = SampledPath { steps, samples, generator: generator.clone() };
    Ok(SymplecticPath { dim_half: n, iterations: 1, base: PathBase::Sampled(Arc::new(sampled)) })
}

fn midpoint_samples(generator: &PeriodicGenerator, steps: usize) -> Vec<Mat> {
    let n = generator.dim_half();
    let j = linalg::j0(n);
    let h = 1.0 / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut phi = Mat::identity(2 * n, 2 * n);
    out.push(phi.clone());
    for i in 0..steps {
        let a = &j * generator.at((i as f64 + 0.5) * h) * h;
        phi = linalg::cayley(&a) * phi;
        out.push(phi.clone());
    }
    out
}

impl SymplecticPath {
    pub fn dim_half(&self) -> usize {
        self.dim_half
    }

    pub fn iterations(&self) -> u32 {
        self.iterations
    }

    pub fn duration(&self) -> f64 {
        self.iterations as f64
    }

    pub fn base(&self) -> &PathBase {
        &self.base
    }

    pub fn blocks(&self) -> Option<&[BlockSpec]> {
        match &self.base {
            PathBase::Blocks(b) => Some(b),
            PathBase::Sampled(_) => None,
        }
    }

    /// The same path with its base path only (iteration count reset to 1).
    pub fn base_path(&self) -> SymplecticPath {
        SymplecticPath { dim_half: self.dim_half, iterations: 1, base: self.base.clone() }
    }

    /// Direct sum of two block paths with equal iteration counts.
    pub fn direct_sum(&self, other: &SymplecticPath) -> Result<SymplecticPath> {
        match (self.blocks(), other.blocks()) {
            (Some(a), Some(b)) if self.iterations == other.iterations => {
                let mut blocks = a.to_vec();
                blocks.extend_from_slice(b);
                let mut p = make_block_path(blocks)?;
                p.iterations = self.iterations;
                Ok(p)
            }
            _ => Err(Error::InvalidArgument("direct sum needs block paths with equal iteration counts".into())),
        }
    }

    fn base_matrix_at(&self, s: f64) -> Mat {
        match &self.base {
            PathBase::Blocks(blocks) => {
                linalg::block_diagonal(&blocks.iter().map(|b| b.matrix_at(s)).collect::<Vec<_>>())
            }
            PathBase::Sampled(sp) => sp.at(s),
        }
    }

    fn base_generator_at(&self, s: f64) -> Mat {
        match &self.base {
            PathBase::Blocks(blocks) => {
                linalg::block_diagonal(&blocks.iter().map(|b| b.generator_at(s)).collect::<Vec<_>>())
            }
            PathBase::Sampled(sp) => sp.generator.at(s),
        }
    }

    /// `Phi_1` of the base path, exact where the block entries are rational.
    pub fn base_endpoint(&self) -> SymplecticMatrix {
        match &self.base {
            PathBase::Blocks(blocks) => {
                let parts: Vec<SymplecticMatrix> = blocks
                    .iter()
                    .map(|b| match b.endpoint_exact(1) {
                        Some(e) => SymplecticMatrix::from_exact(e).expect("block endpoints are symplectic"),
                        None => SymplecticMatrix { dim_half: 1, entries: b.matrix_at(1.0), exact: None },
                    })
                    .collect();
                SymplecticMatrix::direct_sum(&parts)
            }
            PathBase::Sampled(sp) => SymplecticMatrix {
                dim_half: self.dim_half,
                entries: sp.samples.last().unwrap().clone(),
                exact: None,
            },
        }
    }

    /// `Phi_T`, equal to `Phi_1^k` for a `k`-fold iterate.
    pub fn endpoint(&self) -> SymplecticMatrix {
        match &self.base {
            PathBase::Blocks(blocks) => {
                let k = self.iterations;
                let parts: Vec<SymplecticMatrix> = blocks
                    .iter()
                    .map(|b| match b.endpoint_exact(k) {
                        Some(e) => SymplecticMatrix::from_exact(e).expect("block endpoints are symplectic"),
                        None => SymplecticMatrix { dim_half: 1, entries: b.matrix_at(k as f64), exact: None },
                    })
                    .collect();
                SymplecticMatrix::direct_sum(&parts)
            }
            PathBase::Sampled(_) => self.base_endpoint().pow(self.iterations),
        }
    }

    /// `det(Phi_T - I)`, exact for block paths whose planar traces are rational.
    pub fn endpoint_nondegeneracy(&self, tol: &Tolerances) -> Nondegeneracy {
        let end = self.endpoint();
        let numeric = is_nondegenerate(&end, tol.nondeg);
        if numeric.exact.is_some() {
            return numeric;
        }
        if let PathBase::Blocks(blocks) = &self.base {
            let exact: Option<Rational> = blocks
                .iter()
                .map(|b| b.endpoint_det_exact(self.iterations))
                .try_fold(Rational::one(), |acc, d| d.map(|d| acc * d));
            if exact.is_some() {
                return Nondegeneracy::from_values(numeric.det_minus_identity, exact, tol.nondeg);
            }
            // Per-block determinants are far better conditioned than the full one.
            let value: f64 = blocks
                .iter()
                .map(|b| {
                    let m = b.matrix_at(self.iterations as f64);
                    2.0 - m[(0, 0)] - m[(1, 1)]
                })
                .product();
            return Nondegeneracy::from_values(value, None, tol.nondeg);
        }
        numeric
    }
}

impl PathEval for SymplecticPath {
    fn dim_half(&self) -> usize {
        self.dim_half
    }

    fn duration(&self) -> f64 {
        self.iterations as f64
    }

    fn matrix_at(&self, t: f64) -> Mat {
        let t = t.clamp(0.0, self.duration());
        let mut j = t.floor() as u32;
        if j >= self.iterations {
            j = self.iterations - 1;
        }
        let s = t - j as f64;
        let head = self.base_matrix_at(s);
        if j == 0 {
            head
        } else {
            head * self.base_endpoint().entries().pow(j)
        }
    }

    fn generator_at(&self, t: f64) -> Mat {
        let t = t.clamp(0.0, self.duration());
        let mut j = t.floor();
        if j >= self.iterations as f64 {
            j = self.iterations as f64 - 1.0;
        }
        self.base_generator_at(t - j)
    }
}

impl BlockSpec {
    /// Whether `theta` (for rotations) is a whole number of turns.
    pub fn is_integral_rotation(&self) -> bool {
        matches!(self, BlockSpec::Rotation { turns } if exact::is_integer(turns))
    }

    pub fn turns(&self) -> Option<&Rational> {
        match self {
            BlockSpec::Rotation { turns } => Some(turns),
            _ => None,
        }
    }

    pub fn is_positive_parameter(&self) -> bool {
        self.parameter().is_positive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;

    fn rot(n: i64, d: i64) -> BlockSpec {
        BlockSpec::rotation(rat(n, d))
    }

    #[test]
    fn quarter_turn_is_exact() {
        let p = make_block_path(vec![rot(1, 4)]).unwrap();
        let e = p.endpoint();
        let ex = e.exact().expect("quarter turn has rational entries");
        assert_eq!(ex.get(0, 1), &int(-1));
        assert_eq!(ex.get(1, 0), &int(1));
        let mid = p.matrix_at(0.5);
        assert!((mid - linalg::rotation(std::f64::consts::PI / 4.0)).norm() < 1e-15);
    }

    #[test]
    fn empty_block_list_is_rejected() {
        assert!(make_block_path(vec![]).is_err());
    }

    #[test]
    fn direct_sum_is_block_diagonal() {
        let p = make_block_path(vec![rot(1, 5), BlockSpec::positive_hyperbolic(int(2)).unwrap()]).unwrap();
        let m = p.matrix_at(0.3);
        assert_eq!(m.nrows(), 4);
        assert_eq!(m[(0, 2)], 0.0);
        assert_eq!(m[(3, 1)], 0.0);
        assert!(linalg::symplectic_defect(&m) < 1e-14);
    }

    #[test]
    fn iterate_rotation_endpoint() {
        let p = iterate_path(&make_block_path(vec![rot(1, 5)]).unwrap(), 3);
        let end = p.endpoint();
        let expected = linalg::rotation(6.0 * std::f64::consts::PI / 5.0);
        assert!((end.entries() - expected).norm() < 1e-14);
    }

    #[test]
    fn iterate_once_is_identity_operation() {
        let p = make_block_path(vec![rot(2, 7)]).unwrap();
        let q = iterate_path(&p, 1);
        for &t in &[0.0, 0.3, 1.0] {
            assert_eq!(p.matrix_at(t), q.matrix_at(t));
        }
    }

    #[test]
    fn negative_hyperbolic_doubled_endpoint() {
        let p = iterate_path(&make_block_path(vec![BlockSpec::negative_hyperbolic(int(2)).unwrap()]).unwrap(), 2);
        let e = p.endpoint();
        let ex = e.exact().unwrap();
        assert_eq!(ex.get(0, 0), &int(4));
        assert_eq!(ex.get(1, 1), &rat(1, 4));
        // Oracle: direct product of the numerically evaluated one-period map.
        let one = p.base_path().matrix_at(1.0);
        assert!((&one * &one - p.matrix_at(2.0)).norm() < 1e-13);
        assert!((p.matrix_at(2.0) - e.entries()).norm() < 1e-13);
    }

    #[test]
    fn iterated_path_matches_powers_at_integers() {
        let blocks = vec![rot(2, 7), BlockSpec::negative_hyperbolic(rat(3, 2)).unwrap()];
        let p = iterate_path(&make_block_path(blocks).unwrap(), 4);
        let one = p.base_endpoint();
        for j in 0..=4u32 {
            let expected = one.pow(j);
            assert!((p.matrix_at(j as f64) - expected.entries()).norm() < 1e-12);
        }
    }

    #[test]
    fn generators_match_derivatives() {
        let specs = vec![
            rot(3, 7),
            BlockSpec::positive_hyperbolic(int(3)).unwrap(),
            BlockSpec::negative_hyperbolic(int(2)).unwrap(),
            BlockSpec::shear(rat(5, 2)),
        ];
        let j = linalg::j0(1);
        for b in specs {
            for &t in &[0.1, 0.5, 0.9] {
                let h = 1e-6;
                let d = (b.matrix_at(t + h) - b.matrix_at(t - h)) / (2.0 * h);
                let rhs = &j * b.generator_at(t) * b.matrix_at(t);
                assert!((d - rhs).norm() < 1e-7, "{b}");
                let s = b.generator_at(t);
                assert!((&s - s.transpose()).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn nondegeneracy_examples() {
        let r = SymplecticMatrix::from_f64(linalg::rotation(2.0 * std::f64::consts::PI / 3.0), 1e-10).unwrap();
        let nd = is_nondegenerate(&r, 1e-8);
        assert!((nd.det_minus_identity - 3.0).abs() < 1e-12);
        assert!(nd.nondegenerate);
        assert!(!is_nondegenerate(&SymplecticMatrix::identity(2), 1e-8).nondegenerate);
        let e = std::f64::consts::E;
        let h = SymplecticMatrix::from_f64(Mat::from_row_slice(2, 2, &[e, 0.0, 0.0, 1.0 / e]), 1e-10).unwrap();
        let nd = is_nondegenerate(&h, 1e-8);
        assert!(nd.det_minus_identity < 0.0 && nd.nondegenerate);
        assert!((nd.det_minus_identity - (e - 1.0) * (1.0 / e - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn sixth_turn_determinant_is_exact() {
        let p = make_block_path(vec![rot(1, 6)]).unwrap();
        let nd = p.endpoint_nondegeneracy(&Tolerances::default());
        assert_eq!(nd.exact, Some(int(1)));
    }

    #[test]
    fn inverse_and_composition() {
        let p = make_block_path(vec![rot(1, 5), BlockSpec::negative_hyperbolic(int(3)).unwrap()]).unwrap();
        let m = p.endpoint();
        let prod = m.compose(&m.inverse());
        assert!((prod.entries() - Mat::identity(4, 4)).norm() < 1e-13);
        let q = make_block_path(vec![rot(1, 4), BlockSpec::shear(int(2))]).unwrap().endpoint();
        assert!(q.compose(&q.inverse()).exact().unwrap().is_identity());
    }

    #[test]
    fn constant_rotation_flow() {
        let theta = 0.3;
        let s = Mat::identity(2, 2) * (2.0 * std::f64::consts::PI * theta);
        let path = integrate_flow(&PeriodicGenerator::constant(s), 1000, &Tolerances::default()).unwrap();
        for &t in &[0.25, 0.5, 1.0] {
            let exact = linalg::rotation(2.0 * std::f64::consts::PI * theta * t);
            assert!((path.matrix_at(t) - exact).norm() < 1e-5);
        }
    }

    #[test]
    fn zero_generator_gives_constant_identity() {
        let path = integrate_flow(&PeriodicGenerator::constant(Mat::zeros(2, 2)), 100, &Tolerances::default()).unwrap();
        assert_eq!(path.matrix_at(0.77), Mat::identity(2, 2));
    }

    #[test]
    fn coarse_stiff_flow_is_refused() {
        let s = Mat::identity(2, 2) * (2.0 * std::f64::consts::PI * 50.0);
        let r = integrate_flow(&PeriodicGenerator::constant(s), 10, &Tolerances::default());
        assert!(matches!(r, Err(Error::DriftExceeded { .. })));
    }

    #[test]
    fn midpoint_error_is_second_order() {
        let theta = 0.7;
        let s = Mat::identity(2, 2) * (2.0 * std::f64::consts::PI * theta);
        let exact = linalg::rotation(2.0 * std::f64::consts::PI * theta);
        let g = PeriodicGenerator::constant(s);
        let e1 = (midpoint_samples(&g, 200).pop().unwrap() - &exact).norm();
        let e2 = (midpoint_samples(&g, 400).pop().unwrap() - &exact).norm();
        assert!(e2 <= e1 / 2.0, "{e1} {e2}");
        assert!(e2 <= e1 / 3.5, "{e1} {e2}");
    }

    #[test]
    fn periodic_flow_extends_by_monodromy() {
        let s0 = Mat::from_row_slice(4, 4, &[
            2.0, 0.3, 0.0, 0.1, 0.3, 1.0, 0.2, 0.0, 0.0, 0.2, -1.0, 0.4, 0.1, 0.0, 0.4, 0.5,
        ]);
        let s1 = Mat::from_row_slice(4, 4, &[
            0.5, 0.0, 0.1, 0.0, 0.0, -0.5, 0.0, 0.2, 0.1, 0.0, 0.3, 0.0, 0.0, 0.2, 0.0, 0.1,
        ]);
        let g = PeriodicGenerator::trigonometric(s0, s1, Mat::zeros(4, 4));
        let path = iterate_path(&integrate_flow(&g, 2000, &Tolerances::default()).unwrap(), 2);
        let one = path.base_endpoint();
        for &t in &[0.2, 0.55, 0.9] {
            let lhs = path.matrix_at(t + 1.0);
            let rhs = path.matrix_at(t) * one.entries();
            assert!((lhs - rhs).norm() < 1e-10);
            assert!(linalg::symplectic_defect(&path.matrix_at(t + 1.0)) < 1e-10);
        }
    }

    #[test]
    fn block_spec_round_trip() {
        for s in ["rotation:-1/3", "positive-hyperbolic:2", "negative-hyperbolic:5/2", "shear:1"] {
            let b: BlockSpec = s.parse().unwrap();
            assert_eq!(b.to_string(), s);
        }
        assert!("positive-hyperbolic:1".parse::<BlockSpec>().is_err());
        assert!("spiral:1".parse::<BlockSpec>().is_err());
        assert!(parse_rational("3/0").is_err());
        assert!(parse_rational("0.5").is_err());
    }
}
