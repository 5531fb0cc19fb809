//! Cyclic actions on cubical pairs and their homology, supertraces, and the
//! Smith and supertrace checks built on them.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rayon::prelude::*;
use serde::Serialize;

use crate::coeff::{identity, matmul, reduce_integer, Coefficients, DenseMatrix, PrimeField, Rationals};
use crate::cubical::{cell_dim, for_each_face, CellAction, CubicalPair};
use crate::cz::{cz_index, iterated_sign, parity_sign};
use crate::degree::{gradient_degree, lefschetz_index, DegreeOptions};
use crate::field::{Restricted, ScalarField, SharedField};
use crate::genfunc::{generating_function, invariant_complement, restrict_to_fixed, ComplementRecipe, GenFuncReport};
use crate::germ::{dold_product, SymplecticGerm};
use crate::group::GroupAction;
use crate::exact::{rat, Rational};
use crate::linalg::{block_diagonal, Mat};
use crate::morse::{refine_with_pair, GradedDims, MorseComplex, Reduction, RefineOptions, StableHomology};
use crate::symplectic::{make_block_path, BlockSpec, SymplecticPath, Tolerances};
use crate::{Error, Result};

/// The cellular chain map of a signed axis permutation on an invariant pair.
#[derive(Clone, Debug)]
pub struct InducedChainMap {
    action: CellAction,
    order: usize,
}

impl InducedChainMap {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Image cell and sign.
    pub fn apply_cell(&self, pair: &CubicalPair, cell: usize) -> (usize, i8) {
        self.action.apply(pair.grid(), pair.shapes()[cell], cell)
    }

    pub fn apply<F: Coefficients>(&self, k: &F, pair: &CubicalPair, chain: &HashMap<usize, F::E>) -> HashMap<usize, F::E> {
        chain
            .iter()
            .map(|(&c, v)| {
                let (image, s) = self.apply_cell(pair, c);
                (image, k.mul(v, &k.from_i64(s as i64)))
            })
            .collect()
    }
}

/// Faces of `cell` outside `U_-` with incidence numbers, sorted.
fn relative_faces(pair: &CubicalPair, cell: usize) -> Vec<(usize, i64)> {
    let mut out = Vec::with_capacity(2 * pair.dim());
    for_each_face(pair.grid(), pair.shapes()[cell], cell, |y, s| {
        if !pair.in_uminus(y) {
            out.push((y, s as i64));
        }
    });
    out.sort_unstable();
    out
}

/// Checks that `g` preserves the grid and `U_-`, commutes with the relative
/// boundary over the integers, and has `g^k = id` on every relative cell.
pub fn induced_chain_map(g: &GroupAction, pair: &CubicalPair) -> Result<InducedChainMap> {
    let sp = g
        .signed_permutation()
        .ok_or_else(|| Error::GridNotInvariant("generator is not a signed axis permutation".into()))?;
    if sp.dim() != pair.dim() {
        return Err(Error::GridNotInvariant(format!("action on R^{} for a pair in R^{}", sp.dim(), pair.dim())));
    }
    let map = InducedChainMap { action: CellAction::new(sp.clone()), order: g.order() };
    let relative = |c: &usize| !pair.in_uminus(*c);
    if (0..pair.len()).into_par_iter().filter(relative).any(|c| pair.in_uminus(map.apply_cell(pair, c).0)) {
        return Err(Error::PairNotInvariant);
    }
    let defect = (0..pair.len()).into_par_iter().filter(relative).find_map_any(|c| {
        let (image, sign) = map.apply_cell(pair, c);
        let mut mapped: Vec<(usize, i64)> = relative_faces(pair, c)
            .into_iter()
            .map(|(y, e)| {
                let (gy, s) = map.apply_cell(pair, y);
                (gy, e * s as i64)
            })
            .collect();
        mapped.sort_unstable();
        let expected: Vec<(usize, i64)> = relative_faces(pair, image).into_iter().map(|(y, e)| (y, e * sign as i64)).collect();
        if mapped != expected {
            return Some(Error::Homology(format!("cell map does not commute with the boundary at cell {c}")));
        }
        let (mut cell, mut total) = (c, 1i8);
        for _ in 0..map.order {
            let (next, s) = map.apply_cell(pair, cell);
            cell = next;
            total *= s;
        }
        if cell != c || total != 1 {
            return Some(Error::Homology(format!("g^{} is not the identity on cell {c}", map.order)));
        }
        None
    });
    match defect {
        Some(e) => Err(e),
        None => Ok(map),
    }
}

/// `sum (-1)^dim c * sign` over relative cells fixed by `g`: the Hopf trace.
pub fn chain_supertrace(map: &InducedChainMap, pair: &CubicalPair) -> i64 {
    (0..pair.len())
        .into_par_iter()
        .filter(|&c| !pair.in_uminus(c))
        .map(|c| {
            let (image, s) = map.apply_cell(pair, c);
            if image == c {
                parity_sign(cell_dim(pair.shapes()[c]) as i64) as i64 * s as i64
            } else {
                0
            }
        })
        .sum()
}

/// Matrices of `g` on the homology basis of `complex`, one per degree:
/// representatives are lifted to cycles, moved by `g`, and projected back.
pub fn homology_action<F: Coefficients>(
    map: &InducedChainMap,
    pair: &CubicalPair,
    red: &Reduction,
    complex: &MorseComplex<F>,
) -> Result<Vec<DenseMatrix<F::E>>> {
    let k = &complex.field;
    let mut out = Vec::with_capacity(complex.betti.len());
    for (q, reps) in complex.representatives.iter().enumerate() {
        let b = reps.len();
        let mut matrix = DenseMatrix::filled(b, b, k.zero());
        for (j, rep) in reps.iter().enumerate() {
            let cycle = red.lift(k, pair, rep, q);
            let moved = map.apply(k, pair, &cycle);
            let morse = red.project(k, pair, &moved, q);
            for (i, v) in complex.coordinates(&morse, q)?.into_iter().enumerate() {
                matrix.set(i, j, v);
            }
        }
        let power = (0..map.order).fold(identity(k, b), |acc, _| matmul(k, &matrix, &acc));
        if power != identity(k, b) {
            return Err(Error::Homology(format!("g^{} is not the identity on degree-{q} homology", map.order)));
        }
        out.push(matrix);
    }
    Ok(out)
}

/// `sum (-1)^i tr(g_i)`.
pub fn supertrace<F: Coefficients>(k: &F, matrices: &[DenseMatrix<F::E>]) -> F::E {
    matrices.iter().enumerate().fold(k.zero(), |acc, (q, m)| {
        let tr = (0..m.rows).fold(k.zero(), |t, i| k.add(&t, m.get(i, i)));
        if q % 2 == 0 {
            k.add(&acc, &tr)
        } else {
            k.sub(&acc, &tr)
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub expected: i64,
    pub observed: i64,
    pub verdict: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionReport {
    /// 0 for the rationals.
    pub p: u32,
    pub dims: GradedDims,
    /// Matrix of `g` on each degree, entries printed in the field.
    pub homology_matrices: Vec<Vec<Vec<String>>>,
    /// The supertrace as a residue in `[0, p)`, or the integer for `p = 0`.
    pub supertrace: i64,
    /// The integer supertrace when computed over the rationals.
    pub supertrace_lift: Option<i64>,
    /// Hopf trace on relative chains; agrees with the supertrace.
    pub chain_trace: i64,
    pub fixed_dims: Option<GradedDims>,
    pub comparison: Option<Comparison>,
}

fn report_over<F: Coefficients>(field: F, map: &InducedChainMap, pair: &CubicalPair, red: &Reduction) -> Result<ActionReport> {
    let p = field.characteristic();
    let complex = MorseComplex::new(field, pair, red)?;
    let matrices = homology_action(map, pair, red, &complex)?;
    let k = &complex.field;
    let str_g = supertrace(k, &matrices);
    let (supertrace, supertrace_lift) = if p == 0 {
        let v = k.lift(&str_g).ok_or_else(|| Error::Homology(format!("supertrace {str_g} is not an integer")))?;
        (v, Some(v))
    } else {
        (k.lift(&str_g).expect("residues lift"), None)
    };
    let chain_trace = chain_supertrace(map, pair);
    if reduce_integer(chain_trace, p) != supertrace {
        return Err(Error::Homology(format!("supertrace {supertrace} differs from the chain-level trace {chain_trace}")));
    }
    let homology_matrices = matrices
        .iter()
        .map(|m| (0..m.rows).map(|i| (0..m.cols).map(|j| m.get(i, j).to_string()).collect()).collect())
        .collect();
    Ok(ActionReport {
        p,
        dims: GradedDims::new(p, complex.betti.clone()),
        homology_matrices,
        supertrace,
        supertrace_lift,
        chain_trace,
        fixed_dims: None,
        comparison: None,
    })
}

/// Homology action of `g` on `(U, U_-)` over `F_p`, or over `Q` for `p = 0`.
pub fn action_report(g: &GroupAction, pair: &CubicalPair, red: &Reduction, p: u32) -> Result<ActionReport> {
    let map = induced_chain_map(g, pair)?;
    if p == 0 {
        report_over(Rationals, &map, pair, red)
    } else {
        report_over(PrimeField::new(p), &map, pair, red)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainLevelReport {
    pub k: u32,
    /// `sum m * sign_k(x) * (-1)^mu(x^k)`.
    pub lhs: i64,
    /// `sum m * (-1)^mu(x)`.
    pub rhs: i64,
    /// `sum m * (-1)^n sign det(Phi - I)`, the Lefschetz count of the orbits.
    pub chi: i64,
    pub verdict: bool,
}

/// The supertrace identity at chain level: only the `k`-th iterates of
/// one-periodic orbits contribute, each with the sign of its iteration.
pub fn chain_level_supertrace(orbits: &[(SymplecticPath, i64)], k: u32, tol: &Tolerances) -> Result<ChainLevelReport> {
    let (mut lhs, mut rhs, mut chi) = (0, 0, 0);
    for (path, multiplicity) in orbits {
        let iterate = crate::symplectic::iterate_path(path, k);
        let mu_k = cz_index(&iterate, tol)?.index;
        let sign = iterated_sign(path, k, tol)?;
        lhs += multiplicity * (sign * parity_sign(mu_k)) as i64;
        rhs += multiplicity * parity_sign(cz_index(path, tol)?.index) as i64;
        let nd = path.endpoint_nondegeneracy(tol);
        chi += multiplicity * (parity_sign(path.dim_half() as i64) * nd.sign()) as i64;
    }
    Ok(ChainLevelReport { k, lhs, rhs, chi, verdict: lhs == rhs && rhs == chi })
}

/// A generic linear change of coordinates commuting with `g`: the average of
/// `I + delta R` for a seeded random `R`. Homology is computed in this chart so
/// that the box boundary meets the zero set of a structured quadratic
/// transversally; `I + t delta R` stays invertible, so the local homology and
/// the action on it do not change.
pub fn generic_chart(g: &GroupAction, seed: u64) -> Mat {
    let m = g.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = Mat::from_fn(m, m, |_, _| rng.gen_range(-1.0..=1.0)) * (CHART_DELTA / m as f64);
    g.equivariant_average(&(Mat::identity(m, m) + r))
}

const CHART_DELTA: f64 = 0.3;
const CHART_SEED: u64 = 0xc4a7;

/// `y -> f(C y)` for the generic chart of `g`, or `f` itself when disabled.
pub fn in_generic_chart(f: SharedField, g: &GroupAction, enabled: bool) -> SharedField {
    if !enabled || f.dim() == 0 {
        return f;
    }
    Arc::new(Restricted::new(f, generic_chart(g, CHART_SEED)))
}

/// Default starting resolution: finer grids in low dimension.
pub fn default_r0(dim: usize) -> usize {
    match dim {
        0..=2 => 16,
        3..=4 => 8,
        _ => 2,
    }
}

#[derive(Clone, Debug)]
pub struct SmithOptions {
    pub epsilon: Option<f64>,
    pub r0: Option<usize>,
    pub fixed_r0: Option<usize>,
    /// Compute homology in the generic chart of the group.
    pub chart: bool,
    pub refine: RefineOptions,
}

impl Default for SmithOptions {
    fn default() -> Self {
        SmithOptions { epsilon: None, r0: None, fixed_r0: None, chart: true, refine: RefineOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmithReport {
    pub p: u32,
    pub group_order: usize,
    pub full: StableHomology,
    /// Dimension of the fixed subspace.
    pub fixed_dim: usize,
    pub fixed: StableHomology,
    pub verdict: bool,
    pub strict: bool,
}

/// Stable homology of `f` over `F_p` (`Q` for `p = 0`) with samples made
/// invariant under `symmetry`.
pub fn stable_homology(f: &dyn ScalarField, symmetry: Option<&GroupAction>, p: u32, epsilon: Option<f64>, r0: Option<usize>, refine: &RefineOptions) -> Result<StableHomology> {
    if f.dim() == 0 {
        // A point with f = 0 > -epsilon: U_- is empty.
        let v = f.value(&[]);
        let betti = if v < 0.0 { vec![0] } else { vec![1] };
        return Ok(StableHomology { dims: GradedDims::new(p, betti), resolution: 0, epsilon: epsilon.unwrap_or(0.0) });
    }
    let mut opts = refine.clone();
    opts.pair.symmetry = symmetry.filter(|g| g.is_signed_permutation()).cloned();
    Ok(refine_with_pair(f, epsilon, p, r0.unwrap_or_else(|| default_r0(f.dim())), &opts)?.homology)
}

/// `total_dim HM(f^G) <= total_dim HM(f)` over `F_p` for a `p`-group `G`.
pub fn smith_check(f: SharedField, g: &GroupAction, p: u32, opts: &SmithOptions) -> Result<SmithReport> {
    g.require_p_group(p)?;
    let f = in_generic_chart(f, g, opts.chart);
    let fixed_field = restrict_to_fixed(f.clone(), g)?;
    let full = stable_homology(f.as_ref(), Some(g), p, opts.epsilon, opts.r0, &opts.refine)?;
    let fixed = stable_homology(&fixed_field, None, p, None, opts.fixed_r0, &opts.refine)?;
    let verdict = fixed.dims.total_dim <= full.dims.total_dim;
    Ok(SmithReport {
        p,
        group_order: g.order(),
        fixed_dim: fixed_field.dim(),
        strict: fixed.dims.total_dim < full.dims.total_dim,
        full,
        fixed,
        verdict,
    })
}

/// Generating function of a germ, equivariant for `g` when given.
pub fn germ_generating_function(phi: &SymplecticGerm, g: Option<&GroupAction>, recipe: ComplementRecipe) -> Result<(SharedField, GenFuncReport)> {
    let trivial = GroupAction::trivial(phi.dim());
    let complement = invariant_complement(&phi.linearization(), g.unwrap_or(&trivial), recipe)?;
    generating_function(phi, &complement)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TowerLevel {
    /// The level works with `phi^iterate`.
    pub iterate: u32,
    pub inner_total: usize,
    pub fixed_total: usize,
    pub product_total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TowerReport {
    pub p: u32,
    pub levels: Vec<TowerLevel>,
    /// `dim HM(phi^(p^j))` for `j = 0..=levels`.
    pub chain: Vec<usize>,
    pub verdict: bool,
}

/// Iterates the Smith inequality up the tower `phi, phi^p, phi^(p^2), ...`:
/// at level `j` the product of `p` copies of `phi^(p^j)` has the diagonal as
/// fixed set, and its total dimension must match that of `phi^(p^(j+1))`.
pub fn smith_tower(phi: &SymplecticGerm, p: u32, levels: u32, recipe: ComplementRecipe, opts: &SmithOptions) -> Result<TowerReport> {
    let total = |psi: &SymplecticGerm| -> Result<usize> {
        let (f, _) = germ_generating_function(psi, None, recipe)?;
        let trivial = GroupAction::trivial(f.dim());
        let f = in_generic_chart(f, &trivial, opts.chart);
        Ok(stable_homology(f.as_ref(), None, p, None, opts.fixed_r0, &opts.refine)?.dims.total_dim)
    };
    let mut chain = vec![total(phi)?];
    let mut out = Vec::new();
    let mut verdict = true;
    for j in 0..levels {
        let iterate = p.pow(j);
        let psi = phi.iterate(iterate)?;
        let (product, g) = dold_product(&psi, p as usize)?;
        let (f, _) = germ_generating_function(&product, Some(&g), recipe)?;
        let smith = smith_check(f, &g, p, opts)?;
        let next = total(&phi.iterate(iterate * p)?)?;
        verdict &= smith.verdict && smith.fixed.dims.total_dim == chain[j as usize] && smith.full.dims.total_dim == next;
        out.push(TowerLevel {
            iterate,
            inner_total: chain[j as usize],
            fixed_total: smith.fixed.dims.total_dim,
            product_total: smith.full.dims.total_dim,
        });
        chain.push(next);
    }
    verdict &= chain.windows(2).all(|w| w[0] <= w[1]);
    Ok(TowerReport { p, levels: out, chain, verdict })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationEntry {
    /// Half dimension `n` of the space the Morse homology lives on.
    pub dim_half: usize,
    /// Index of the rotation model, where its Floer homology sits.
    pub expected_degree: i64,
    pub observed_degree: i64,
    /// `s = expected - observed`.
    pub shift: i64,
    /// `(-1)^s`.
    pub sigma: i32,
    pub hyperbolic_shift: i64,
    /// `chi(x) / deg grad f` for the rotation model.
    pub lefschetz_sign: i32,
    /// The same ratio for the hyperbolic model.
    pub hyperbolic_lefschetz_sign: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Calibration {
    pub recipe: ComplementRecipe,
    pub entries: Vec<CalibrationEntry>,
}

impl Calibration {
    pub fn entry(&self, dim_half: usize) -> Option<&CalibrationEntry> {
        self.entries.iter().find(|e| e.dim_half == dim_half)
    }
}

#[derive(Clone, Debug)]
pub struct CalibrationOptions {
    pub recipe: ComplementRecipe,
    /// Turns of the rotation model, in `(0, 1/2)`.
    pub turns: Rational,
    pub seed: u64,
    pub chart: bool,
    pub refine: RefineOptions,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions { recipe: ComplementRecipe::Reference, turns: rat(1, 5), seed: 0, chart: true, refine: RefineOptions::default() }
    }
}

/// The single degree of a rank-one homology.
fn rank_one_degree(d: &GradedDims) -> Result<i64> {
    if d.total_dim != 1 {
        return Err(Error::Homology(format!("calibration model has homology {:?}, expected rank one", d.betti)));
    }
    Ok(d.betti.iter().position(|&b| b == 1).expect("rank one") as i64)
}

/// Observed Morse degree, Floer degree (the index) and Lefschetz sign of the
/// time-one map of `n` copies of a block path.
fn calibrate_model(block: &BlockSpec, n: usize, opts: &CalibrationOptions) -> Result<(i64, i64, i32)> {
    let path = make_block_path(vec![block.clone(); n])?;
    let a = block_diagonal(&vec![block.matrix_at(1.0); n]);
    let phi = SymplecticGerm::linear(a, 1.0)?;
    let (f, _) = germ_generating_function(&phi, None, opts.recipe)?;
    let f = in_generic_chart(f, &GroupAction::trivial(2 * n), opts.chart);
    let dims = stable_homology(f.as_ref(), None, 0, None, None, &opts.refine)?.dims;
    let degree_opts = DegreeOptions { seed: opts.seed, repetitions: 2, ..Default::default() };
    let chi = lefschetz_index(&phi, None, &degree_opts)?.degree;
    let deg = gradient_degree(f.as_ref(), &degree_opts)?.degree;
    let mu = cz_index(&path, &Tolerances::default())?.index;
    Ok((rank_one_degree(&dims)?, mu, (chi * deg).signum() as i32))
}

/// Fixes the degree shift between Morse homology of generating functions and
/// Floer homology on `R^{2n}` for each requested `n`, from the rotation model
/// `R(2 pi theta)^n`, and cross-checks it on `diag(2, 1/2)^n`.
pub fn calibrate_shift(dims_half: &[usize], opts: &CalibrationOptions) -> Result<Calibration> {
    let rotation_block = BlockSpec::rotation(opts.turns.clone());
    let hyperbolic_block = BlockSpec::positive_hyperbolic(rat(2, 1))?;
    let mut entries = Vec::new();
    for &n in dims_half {
        let (observed, expected, lefschetz_sign) = calibrate_model(&rotation_block, n, opts)?;
        let (h_observed, h_expected, hyperbolic_lefschetz_sign) = calibrate_model(&hyperbolic_block, n, opts)?;
        let shift = expected - observed;
        let hyperbolic_shift = h_expected - h_observed;
        if shift != hyperbolic_shift {
            return Err(Error::CalibrationInconsistent { rotation: shift, hyperbolic: hyperbolic_shift });
        }
        entries.push(CalibrationEntry {
            dim_half: n,
            expected_degree: expected,
            observed_degree: observed,
            shift,
            sigma: parity_sign(shift),
            hyperbolic_shift,
            lefschetz_sign,
            hyperbolic_lefschetz_sign,
        });
    }
    Ok(Calibration { recipe: opts.recipe, entries })
}

#[derive(Clone, Debug)]
pub struct SupertraceOptions {
    pub recipe: ComplementRecipe,
    pub r0: Option<usize>,
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub chart: bool,
    pub refine: RefineOptions,
}

impl Default for SupertraceOptions {
    fn default() -> Self {
        SupertraceOptions { recipe: ComplementRecipe::Reference, r0: None, epsilon: None, seed: 0, chart: true, refine: RefineOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupertraceReport {
    pub k: usize,
    pub p: u32,
    pub dim_half: usize,
    /// Lefschetz index of the fixed point of `phi`.
    pub lefschetz: i64,
    pub sigma: i32,
    /// `(-1)^n chi(x)`, compared with `sigma` times the Morse supertrace.
    pub expected: i64,
    pub rational: ActionReport,
    /// The same action over `F_p` when `p > 0`.
    pub modular: Option<ActionReport>,
    pub homology: StableHomology,
    pub genfunc: GenFuncReport,
    pub verdict: bool,
}

/// `str(g) = (-1)^n chi(x)` for the cyclic shift on the homology of the
/// twisted product of `k` copies of `phi`, with the Morse supertrace moved to
/// Floer degrees by the calibrated sign.
pub fn supertrace_check(phi: &SymplecticGerm, k: usize, p: u32, calibration: Option<&Calibration>, opts: &SupertraceOptions) -> Result<SupertraceReport> {
    let calibration = calibration.ok_or(Error::CalibrationMissing)?;
    if k < 2 {
        return Err(Error::InvalidArgument(format!("period {k} must be at least 2")));
    }
    let n = phi.dim_half();
    // Only critical points on the diagonal survive in the chain-level trace,
    // so the Morse/Floer sign is the one for the space the orbit lives in.
    let entry = calibration.entry(n).ok_or(Error::CalibrationMissing)?;
    let lefschetz = lefschetz_index(phi, None, &DegreeOptions { seed: opts.seed, repetitions: 2, ..Default::default() })?.degree;
    let (product, g) = dold_product(phi, k)?;
    let (f, genfunc) = germ_generating_function(&product, Some(&g), opts.recipe)?;
    let f = in_generic_chart(f, &g, opts.chart);
    let mut refine = opts.refine.clone();
    refine.pair.symmetry = Some(g.clone());
    let r0 = opts.r0.unwrap_or_else(|| default_r0(f.dim()));
    let stable = refine_with_pair(f.as_ref(), opts.epsilon, p, r0, &refine)?;
    let fixed_field = restrict_to_fixed(f.clone(), &g)?;
    let fixed_dims = stable_homology(&fixed_field, None, p, None, None, &opts.refine)?.dims;

    // Morse degrees sit `s` below Floer degrees, so the Floer supertrace is
    // `sigma` times the one computed here.
    let sigma = entry.sigma as i64;
    let expected = parity_sign(n as i64) as i64 * lefschetz;
    let mut rational = action_report(&g, &stable.pair, &stable.reduction, 0)?;
    let observed = sigma * rational.supertrace;
    rational.fixed_dims = Some(fixed_dims.clone());
    rational.comparison = Some(Comparison { expected, observed, verdict: observed == expected });
    let mut verdict = observed == expected && rational.dims.total_dim >= 1;
    let modular = if p > 0 {
        let mut m = action_report(&g, &stable.pair, &stable.reduction, p)?;
        let want = reduce_integer(expected, p);
        let observed = reduce_integer(sigma * m.supertrace, p);
        let ok = observed == want && reduce_integer(rational.supertrace, p) == m.supertrace;
        verdict &= ok && m.dims == stable.homology.dims;
        m.fixed_dims = Some(fixed_dims);
        m.comparison = Some(Comparison { expected: want, observed, verdict: ok });
        Some(m)
    } else {
        verdict &= rational.dims == stable.homology.dims;
        None
    };
    Ok(SupertraceReport {
        k,
        p,
        dim_half: n,
        lefschetz,
        sigma: entry.sigma,
        expected,
        rational,
        modular,
        homology: stable.homology,
        genfunc,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubical::{build_pair, PairOptions};
    use crate::field::{field_suite, Polynomial};
    use crate::linalg::{max_abs, rotation};

fn model_path(spec: &str, n: usize) -> Result<SymplecticPath> {
    let block: BlockSpec = spec.parse()?;
    make_block_path(vec![block; n])
}

    fn pair_of(f: &dyn ScalarField, eps: f64, r: usize, g: Option<&GroupAction>) -> CubicalPair {
        build_pair(f, eps, r, &PairOptions { symmetry: g.cloned(), ..Default::default() }).unwrap()
    }

    #[test]
    fn identity_action_has_supertrace_chi() {
        for entry in field_suite().into_iter().filter(|e| e.field.dim() == 2) {
            let pair = pair_of(&entry.field, 1e-3, 16, None);
            let red = Reduction::new(&pair);
            let g = GroupAction::trivial(2);
            for p in [0, 2, 3] {
                let report = action_report(&g, &pair, &red, p).unwrap();
                assert_eq!(report.supertrace, reduce_integer(entry.chi, p), "{} p={p}", entry.name);
                for (q, m) in report.homology_matrices.iter().enumerate() {
                    for (i, row) in m.iter().enumerate() {
                        for (j, v) in row.iter().enumerate() {
                            assert_eq!(v, if i == j { "1" } else { "0" }, "{} degree {q}", entry.name);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn reflection_on_the_saddle() {
        // x^2 - y^2 with (x, y) -> (x, -y): the 1-cycle across the x-lobes is
        // a path along y, which the reflection reverses.
        let f = Polynomial::quadratic(&[1, -1]);
        let g = GroupAction::reflection(2, 1);
        let pair = pair_of(&f, 1e-2, 16, Some(&g));
        let red = Reduction::new(&pair);
        let over_q = action_report(&g, &pair, &red, 0).unwrap();
        assert_eq!(over_q.homology_matrices[1], vec![vec!["-1".to_string()]]);
        assert_eq!(over_q.supertrace, 1);
        let over_f2 = action_report(&g, &pair, &red, 2).unwrap();
        assert_eq!(over_f2.homology_matrices[1], vec![vec!["1".to_string()]]);
        // Reflecting x instead fixes the class.
        let gx = GroupAction::reflection(2, 0);
        let fixed = action_report(&gx, &pair, &red, 0).unwrap();
        assert_eq!(fixed.supertrace, -1);
    }

    #[test]
    fn cyclic_shift_on_a_quadratic_pair() {
        // x_i^2 - 4 y_i^2 on three planes: steep enough that r = 4 resolves
        // the negative directions.
        let terms = (0..6).map(|i| (if i % 2 == 0 { 1.0 } else { -4.0 }, (0..6).map(|j| if j == i { 2 } else { 0 }).collect())).collect();
        let f = Polynomial::new(6, 1.0, terms);
        let g = GroupAction::block_shift(2, 3);
        let pair = pair_of(&f, 1e-2, 4, Some(&g));
        let map = induced_chain_map(&g, &pair).unwrap();
        assert_eq!(map.order(), 3);
        let red = Reduction::new(&pair);
        let report = action_report(&g, &pair, &red, 3).unwrap();
        assert_eq!(report.dims.betti, vec![0, 0, 0, 1, 0, 0, 0]);
        // The shift cycles the three negative axes, an even permutation, so
        // it fixes the degree-3 class: str = (-1)^3.
        let over_q = action_report(&g, &pair, &red, 0).unwrap();
        assert_eq!(over_q.homology_matrices[3], vec![vec!["1".to_string()]]);
        assert_eq!((over_q.supertrace, over_q.chain_trace), (-1, -1));
        assert_eq!(report.supertrace, 2);
    }

    #[test]
    fn asymmetric_pair_is_rejected() {
        let f = Polynomial::new(2, 1.0, vec![(1.0, vec![2, 0]), (-1.0, vec![0, 2]), (0.8, vec![0, 3])]);
        let pair = pair_of(&f, 1e-2, 16, None);
        assert!(matches!(induced_chain_map(&GroupAction::reflection(2, 1), &pair), Err(Error::PairNotInvariant)));
        let rot = GroupAction::from_matrix(rotation(std::f64::consts::PI / 2.0), 4).unwrap();
        assert!(matches!(induced_chain_map(&rot, &pair), Err(Error::GridNotInvariant(_))));
    }

    #[test]
    fn chain_level_examples() {
        let tol = Tolerances::default();
        let rot = model_path("rotation:1/5", 1).unwrap();
        let r = chain_level_supertrace(&[(rot, 1)], 3, &tol).unwrap();
        assert_eq!((r.lhs, r.rhs), (-1, -1));
        let hyp = model_path("negative-hyperbolic:2", 1).unwrap();
        let r = chain_level_supertrace(&[(hyp, 1)], 2, &tol).unwrap();
        assert_eq!((r.lhs, r.rhs, r.verdict), (-1, -1, true));
        let r = chain_level_supertrace(&[], 4, &tol).unwrap();
        assert_eq!((r.lhs, r.rhs, r.verdict), (0, 0, true));
    }

    #[test]
    fn smith_examples() {
        let opts = SmithOptions::default();
        let min: SharedField = Arc::new(Polynomial::quadratic(&[1, 1]));
        let r = smith_check(min, &GroupAction::reflection(2, 1), 2, &opts).unwrap();
        assert_eq!((r.fixed.dims.total_dim, r.full.dims.total_dim, r.verdict, r.strict), (1, 1, true, false));
        let monkey: SharedField = Arc::new(Polynomial::new(2, 1.0, vec![(1.0, vec![3, 0]), (-3.0, vec![1, 2])]));
        let r = smith_check(monkey.clone(), &GroupAction::reflection(2, 1), 2, &opts).unwrap();
        assert_eq!((r.fixed.dims.total_dim, r.full.dims.total_dim, r.strict), (0, 2, true));
        assert!(matches!(smith_check(monkey, &GroupAction::reflection(2, 1), 3, &opts), Err(Error::NotPGroup { .. })));
    }

    #[test]
    fn calibration_in_two_dimensions() {
        let c = calibrate_shift(&[1], &CalibrationOptions::default()).unwrap();
        let e = c.entry(1).unwrap();
        assert_eq!(e.shift, e.hyperbolic_shift);
        assert_eq!(c, calibrate_shift(&[1], &CalibrationOptions::default()).unwrap());
    }

    #[test]
    fn generic_chart_commutes_with_the_shift() {
        let g = GroupAction::block_shift(2, 3);
        let c = generic_chart(&g, 5);
        assert!(max_abs(&(&c * g.generator() - g.generator() * &c)) < 1e-12);
        assert!(c.determinant().abs() > 0.1);
        assert_eq!(c, generic_chart(&g, 5));
    }

    #[test]
    fn supertrace_of_doubled_planar_germs() {
        let c = calibrate_shift(&[1], &CalibrationOptions::default()).unwrap();
        let rot = SymplecticGerm::linear(rotation(0.4 * std::f64::consts::PI), 1.0).unwrap();
        let hyp = SymplecticGerm::linear(Mat::from_diagonal(&crate::linalg::Vector::from_vec(vec![2.0, 0.5])), 1.0).unwrap();
        for (phi, chi) in [(rot, 1), (hyp, -1)] {
            let r = supertrace_check(&phi, 2, 2, Some(&c), &SupertraceOptions::default()).unwrap();
            assert_eq!(r.lefschetz, chi);
            assert_eq!(r.expected, -chi);
            assert_eq!(r.homology.dims.total_dim, 1);
            assert!(r.verdict, "{:?}", r.rational.comparison);
        }
    }

    #[test]
    fn supertrace_needs_calibration() {
        let phi = SymplecticGerm::linear(rotation(0.9), 1.0).unwrap();
        assert!(matches!(supertrace_check(&phi, 2, 2, None, &SupertraceOptions::default()), Err(Error::CalibrationMissing)));
    }
}
