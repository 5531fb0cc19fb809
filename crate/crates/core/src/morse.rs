//! Relative homology of cubical pairs by coreduction.
//!
//! Coreductions pair every cell of `U \ U_-` except a few critical ones into
//! an acyclic matching. The Morse complex on the critical cells has boundary
//! `pi o d`, where the projection `pi` rewrites a matched lower cell `a_k` as
//! `-lambda^{-1} (d b_k - lambda a_k)` in decreasing pair order and drops
//! matched upper cells. The lift `iota` adds upper cells until no matched
//! lower cell is left in the boundary. Both are chain equivalences with
//! `pi o iota = id`.

use std::collections::{BinaryHeap, HashMap, VecDeque};

use serde::Serialize;

use crate::coeff::{nullspace, rank, rref, solve, Coefficients, DenseMatrix, PrimeField, Rationals};
use crate::cubical::{cell_dim, default_epsilon, for_each_coface, for_each_face, pair_from_samples, CubicalPair, PairOptions, Samples};
use crate::field::ScalarField;
use crate::{Error, Result};

const REMOVED: u8 = 1;
const CRITICAL: u8 = 2;
const LOWER: u8 = 4;
const UPPER: u8 = 8;

/// An acyclic matching on `U \ U_-` from a coreduction sequence.
pub struct Reduction {
    flags: Vec<u8>,
    /// Pair index for matched lower cells.
    order: Vec<u32>,
    /// Matched upper cell, for lower cells.
    partner: HashMap<u32, u32>,
    critical: Vec<Vec<usize>>,
    position: HashMap<usize, usize>,
    pairs: usize,
}

impl Reduction {
    pub fn new(pair: &CubicalPair) -> Self {
        let grid = pair.grid();
        let shapes = pair.shapes();
        let n = pair.len();
        let mut flags = vec![0u8; n];
        let mut live_faces = vec![0u8; n];
        let mut singles = VecDeque::new();
        let mut leaves = VecDeque::new();
        for c in 0..n {
            if pair.in_uminus(c) {
                flags[c] = REMOVED;
                continue;
            }
            let mut k = 0u8;
            for_each_face(grid, shapes[c], c, |y, _| {
                if !pair.in_uminus(y) {
                    k += 1;
                }
            });
            live_faces[c] = k;
            match k {
                0 => leaves.push_back(c as u32),
                1 => singles.push_back(c as u32),
                _ => {}
            }
        }
        let mut order = vec![u32::MAX; n];
        let mut partner = HashMap::new();
        let mut critical = vec![Vec::new(); grid.dim() + 1];
        let mut pairs = 0usize;

        let remove = |c: usize, flags: &mut Vec<u8>, live: &mut Vec<u8>, singles: &mut VecDeque<u32>, leaves: &mut VecDeque<u32>| {
            flags[c] |= REMOVED;
            for_each_coface(grid, shapes[c], c, |y, _| {
                if flags[y] & REMOVED == 0 {
                    live[y] -= 1;
                    match live[y] {
                        0 => leaves.push_back(y as u32),
                        1 => singles.push_back(y as u32),
                        _ => {}
                    }
                }
            });
        };

        loop {
            while let Some(b) = singles.pop_front() {
                let b = b as usize;
                if flags[b] & REMOVED != 0 || live_faces[b] != 1 {
                    continue;
                }
                let mut a = usize::MAX;
                for_each_face(grid, shapes[b], b, |y, _| {
                    if flags[y] & REMOVED == 0 {
                        a = y;
                    }
                });
                flags[b] |= UPPER;
                flags[a] |= LOWER;
                order[a] = pairs as u32;
                partner.insert(a as u32, b as u32);
                pairs += 1;
                remove(b, &mut flags, &mut live_faces, &mut singles, &mut leaves);
                remove(a, &mut flags, &mut live_faces, &mut singles, &mut leaves);
            }
            let Some(c) = leaves.pop_front() else { break };
            let c = c as usize;
            if flags[c] & REMOVED != 0 || live_faces[c] != 0 {
                continue;
            }
            flags[c] |= CRITICAL;
            critical[cell_dim(shapes[c])].push(c);
            remove(c, &mut flags, &mut live_faces, &mut singles, &mut leaves);
        }
        debug_assert!(flags.iter().all(|f| f & REMOVED != 0));
        for list in &mut critical {
            list.sort_unstable();
        }
        let position = critical.iter().flat_map(|l| l.iter().enumerate().map(|(i, &c)| (c, i))).collect();
        Reduction { flags, order, partner, critical, position, pairs }
    }

    pub fn critical(&self) -> &[Vec<usize>] {
        &self.critical
    }

    pub fn pairs(&self) -> usize {
        self.pairs
    }

    pub fn is_critical(&self, c: usize) -> bool {
        self.flags[c] & CRITICAL != 0
    }

    /// Projects a chain of `U \ U_-` (cells of one dimension, given with
    /// coefficients) to Morse coordinates.
    pub fn project<F: Coefficients>(&self, k: &F, pair: &CubicalPair, chain: &HashMap<usize, F::E>, q: usize) -> Vec<F::E> {
        let grid = pair.grid();
        let shapes = pair.shapes();
        let mut out = vec![k.zero(); self.critical[q].len()];
        let mut pending: HashMap<usize, F::E> = HashMap::new();
        let mut heap = BinaryHeap::new();
        let absorb = |c: usize, v: F::E, out: &mut Vec<F::E>, pending: &mut HashMap<usize, F::E>, heap: &mut BinaryHeap<(u32, usize)>| {
            if pair.in_uminus(c) || k.is_zero(&v) {
                return;
            }
            let f = self.flags[c];
            if f & CRITICAL != 0 {
                let i = self.position[&c];
                out[i] = k.add(&out[i], &v);
            } else if f & LOWER != 0 {
                let e = pending.entry(c).or_insert_with(|| {
                    heap.push((self.order[c], c));
                    k.zero()
                });
                *e = k.add(e, &v);
            }
        };
        for (&c, v) in chain {
            absorb(c, v.clone(), &mut out, &mut pending, &mut heap);
        }
        while let Some((_, a)) = heap.pop() {
            let coef = pending.remove(&a).expect("queued cell is pending");
            if k.is_zero(&coef) {
                continue;
            }
            let b = self.partner[&(a as u32)] as usize;
            let mut lambda = 0i8;
            for_each_face(grid, shapes[b], b, |y, s| {
                if y == a {
                    lambda = s;
                }
            });
            // a -> -lambda^{-1} (d b - lambda a); lambda = +-1.
            let scale = k.neg(&k.mul(&coef, &k.from_i64(lambda as i64)));
            for_each_face(grid, shapes[b], b, |y, s| {
                if y != a {
                    absorb(y, k.mul(&scale, &k.from_i64(s as i64)), &mut out, &mut pending, &mut heap);
                }
            });
        }
        out
    }

    /// Lifts a Morse chain of degree `q` to a relative cycle representative.
    pub fn lift<F: Coefficients>(&self, k: &F, pair: &CubicalPair, morse: &[F::E], q: usize) -> HashMap<usize, F::E> {
        let grid = pair.grid();
        let shapes = pair.shapes();
        let mut chain: HashMap<usize, F::E> = HashMap::new();
        let mut boundary: HashMap<usize, F::E> = HashMap::new();
        let mut heap = BinaryHeap::new();
        let touch = |c: usize, v: F::E, boundary: &mut HashMap<usize, F::E>, heap: &mut BinaryHeap<(u32, usize)>| {
            if pair.in_uminus(c) || self.flags[c] & LOWER == 0 {
                return;
            }
            let e = boundary.entry(c).or_insert_with(|| {
                heap.push((self.order[c], c));
                k.zero()
            });
            *e = k.add(e, &v);
        };
        for (i, v) in morse.iter().enumerate() {
            if k.is_zero(v) {
                continue;
            }
            let c = self.critical[q][i];
            chain.insert(c, v.clone());
            for_each_face(grid, shapes[c], c, |y, s| touch(y, k.mul(v, &k.from_i64(s as i64)), &mut boundary, &mut heap));
        }
        while let Some((_, a)) = heap.pop() {
            let beta = boundary.remove(&a).expect("queued cell is tracked");
            if k.is_zero(&beta) {
                continue;
            }
            let b = self.partner[&(a as u32)] as usize;
            let mut lambda = 0i8;
            for_each_face(grid, shapes[b], b, |y, s| {
                if y == a {
                    lambda = s;
                }
            });
            let gamma = k.neg(&k.mul(&beta, &k.from_i64(lambda as i64)));
            chain.insert(b, gamma.clone());
            for_each_face(grid, shapes[b], b, |y, s| {
                if y != a {
                    touch(y, k.mul(&gamma, &k.from_i64(s as i64)), &mut boundary, &mut heap);
                }
            });
        }
        chain
    }
}

/// Relative boundary of a chain, dropping cells of `U_-`.
pub fn relative_boundary<F: Coefficients>(k: &F, pair: &CubicalPair, chain: &HashMap<usize, F::E>) -> HashMap<usize, F::E> {
    let mut out: HashMap<usize, F::E> = HashMap::new();
    for (&c, v) in chain {
        for_each_face(pair.grid(), pair.shapes()[c], c, |y, s| {
            if !pair.in_uminus(y) {
                let e = out.entry(y).or_insert_with(|| k.zero());
                *e = k.add(e, &k.mul(v, &k.from_i64(s as i64)));
            }
        });
    }
    out.retain(|_, v| !k.is_zero(v));
    out
}

/// The Morse complex over a field with a homology basis in every degree.
pub struct MorseComplex<F: Coefficients> {
    pub field: F,
    /// `boundary[q]` maps degree `q` to degree `q - 1` (empty for `q = 0`).
    pub boundary: Vec<DenseMatrix<F::E>>,
    pub betti: Vec<usize>,
    /// Homology representatives in Morse coordinates.
    pub representatives: Vec<Vec<Vec<F::E>>>,
    /// `[independent boundaries | representatives]`, for coordinates.
    coordinate_basis: Vec<DenseMatrix<F::E>>,
    boundary_rank: Vec<usize>,
}

impl<F: Coefficients> MorseComplex<F> {
    pub fn new(field: F, pair: &CubicalPair, red: &Reduction) -> Result<Self> {
        let k = &field;
        let top = pair.dim();
        let sizes: Vec<usize> = red.critical.iter().map(Vec::len).collect();
        let mut boundary = Vec::with_capacity(top + 1);
        boundary.push(DenseMatrix::filled(0, sizes[0], k.zero()));
        for q in 1..=top {
            let mut d = DenseMatrix::filled(sizes[q - 1], sizes[q], k.zero());
            for (j, &c) in red.critical[q].iter().enumerate() {
                let chain: HashMap<usize, F::E> = [(c, k.one())].into_iter().collect();
                let faces = relative_boundary(k, pair, &chain);
                for (i, v) in red.project(k, pair, &faces, q - 1).into_iter().enumerate() {
                    d.set(i, j, v);
                }
            }
            boundary.push(d);
        }
        for q in 2..=top {
            let dd = crate::coeff::matmul(k, &boundary[q - 1], &boundary[q]);
            if dd.data.iter().any(|v| !k.is_zero(v)) {
                return Err(Error::Homology(format!("Morse boundary squares to nonzero in degree {q}")));
            }
        }
        let mut betti = Vec::with_capacity(top + 1);
        let mut representatives = Vec::with_capacity(top + 1);
        let mut coordinate_basis = Vec::with_capacity(top + 1);
        let mut boundary_rank = Vec::with_capacity(top + 1);
        for q in 0..=top {
            let cycles = if q == 0 {
                (0..sizes[0])
                    .map(|i| {
                        let mut v = vec![k.zero(); sizes[0]];
                        v[i] = k.one();
                        v
                    })
                    .collect()
            } else {
                nullspace(k, &boundary[q])
            };
            let incoming: Vec<Vec<F::E>> = if q < top { (0..sizes[q + 1]).map(|j| boundary[q + 1].column(j)).collect() } else { Vec::new() };
            let columns: Vec<&Vec<F::E>> = incoming.iter().chain(cycles.iter()).collect();
            let mut stacked = DenseMatrix::filled(sizes[q], columns.len(), k.zero());
            for (j, col) in columns.iter().enumerate() {
                for (i, v) in col.iter().enumerate() {
                    stacked.set(i, j, v.clone());
                }
            }
            let pivots = rref(k, &mut stacked.clone());
            let boundaries: Vec<usize> = pivots.iter().copied().filter(|&j| j < incoming.len()).collect();
            let reps: Vec<Vec<F::E>> = pivots.iter().filter(|&&j| j >= incoming.len()).map(|&j| columns[j].clone()).collect();
            let mut basis = DenseMatrix::filled(sizes[q], boundaries.len() + reps.len(), k.zero());
            for (j, col) in boundaries.iter().map(|&j| columns[j]).chain(reps.iter()).enumerate() {
                for (i, v) in col.iter().enumerate() {
                    basis.set(i, j, v.clone());
                }
            }
            betti.push(reps.len());
            boundary_rank.push(boundaries.len());
            representatives.push(reps);
            coordinate_basis.push(basis);
        }
        debug_assert!((1..=top).all(|q| rank(k, &boundary[q]) == boundary_rank[q - 1]));
        Ok(MorseComplex { field, boundary, betti, representatives, coordinate_basis, boundary_rank })
    }

    /// Homology coordinates of a Morse cycle of degree `q`.
    pub fn coordinates(&self, cycle: &[F::E], q: usize) -> Result<Vec<F::E>> {
        let x = solve(&self.field, &self.coordinate_basis[q], cycle)
            .ok_or_else(|| Error::Homology(format!("degree-{q} chain is not a cycle")))?;
        Ok(x[self.boundary_rank[q]..].to_vec())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GradedDims {
    /// 0 stands for the rationals.
    pub p: u32,
    pub betti: Vec<usize>,
    pub total_dim: usize,
    pub chi: i64,
}

impl GradedDims {
    pub fn new(p: u32, betti: Vec<usize>) -> Self {
        let total_dim = betti.iter().sum();
        let chi = euler_characteristic_of(&betti);
        GradedDims { p, betti, total_dim, chi }
    }
}

fn euler_characteristic_of(betti: &[usize]) -> i64 {
    betti.iter().enumerate().map(|(i, &b)| if i % 2 == 0 { b as i64 } else { -(b as i64) }).sum()
}

pub fn betti_numbers<F: Coefficients>(field: F, pair: &CubicalPair, red: &Reduction) -> Result<Vec<usize>> {
    Ok(MorseComplex::new(field, pair, red)?.betti)
}

/// Betti numbers of `(U, U_-)` over `F_p`, or over `Q` for `p = 0`.
pub fn relative_homology(pair: &CubicalPair, p: u32) -> Result<GradedDims> {
    let red = Reduction::new(pair);
    let betti = if p == 0 { betti_numbers(Rationals, pair, &red)? } else { betti_numbers(PrimeField::new(p), pair, &red)? };
    Ok(GradedDims::new(p, betti))
}

#[derive(Clone, Debug)]
pub struct RefineOptions {
    pub max_doublings: usize,
    /// Also require the same answer at `epsilon / 2` on the final grid.
    pub check_epsilon: bool,
    pub pair: PairOptions,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions { max_doublings: 4, check_epsilon: true, pair: PairOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StableHomology {
    pub dims: GradedDims,
    pub resolution: usize,
    pub epsilon: f64,
}

/// Homology at `r0, 2 r0, 4 r0, ...` until two consecutive resolutions
/// agree. `epsilon` defaults to the rule of [`default_epsilon`] at `r0` and is
/// then held fixed.
pub fn refine_until_stable(
    f: &dyn ScalarField,
    epsilon: Option<f64>,
    p: u32,
    r0: usize,
    opts: &RefineOptions,
) -> Result<StableHomology> {
    Ok(refine_with_pair(f, epsilon, p, r0, opts)?.homology)
}

/// The stable answer with the pair and matching it was computed from.
pub struct StablePair {
    pub homology: StableHomology,
    pub pair: CubicalPair,
    pub reduction: Reduction,
}

/// [`refine_until_stable`], keeping the final pair for further use.
pub fn refine_with_pair(
    f: &dyn ScalarField,
    epsilon: Option<f64>,
    p: u32,
    r0: usize,
    opts: &RefineOptions,
) -> Result<StablePair> {
    let margin = crate::cubical::boundary_gradient_margin(f, r0);
    if !(margin > 1e-9) {
        return Err(Error::CriticalPointOnBoundarySuspected { margin });
    }
    let first = Samples::compute(f, r0, opts.pair.symmetry.as_ref())?;
    let eps = epsilon.unwrap_or_else(|| default_epsilon(&first));
    let level = |samples: &Samples, e: f64| -> Result<(GradedDims, CubicalPair, Reduction)> {
        let pair = pair_from_samples(samples, e, opts.pair.cell_budget)?;
        let red = Reduction::new(&pair);
        let betti = if p == 0 { betti_numbers(Rationals, &pair, &red)? } else { betti_numbers(PrimeField::new(p), &pair, &red)? };
        Ok((GradedDims::new(p, betti), pair, red))
    };
    let mut previous = level(&first, eps)?.0;
    drop(first);
    let mut r = r0;
    for _ in 0..opts.max_doublings {
        r *= 2;
        let samples = Samples::compute(f, r, opts.pair.symmetry.as_ref())?;
        let (current, pair, reduction) = level(&samples, eps)?;
        if current == previous {
            if opts.check_epsilon && level(&samples, 0.5 * eps)?.0 != current {
                return Err(Error::EpsilonInadmissible {
                    epsilon: eps,
                    reason: "homology changes at epsilon / 2".into(),
                });
            }
            let homology = StableHomology { dims: current, resolution: r, epsilon: eps };
            return Ok(StablePair { homology, pair, reduction });
        }
        previous = current;
    }
    Err(Error::NotStabilized { r0, doublings: opts.max_doublings })
}

/// `sum (-1)^i dim_i`, with its image in `F_p` (the integer itself for `p = 0`).
pub fn euler_characteristic(d: &GradedDims) -> (i64, i64) {
    let chi = euler_characteristic_of(&d.betti);
    (chi, crate::coeff::reduce_integer(chi, d.p))
}
