//! Cubical approximations `(U, U_-)` of local sublevel pairs on `[-R, R]^m`.
//!
//! Cells are stored implicitly on the doubled lattice `{0, ..., 2r}^m`: a
//! coordinate is odd along the axes the cell spans, so the dimension of a cell
//! is its number of odd coordinates. Vertex `v` sits at `-R + v h` with
//! `h = 2R / r`.

use rayon::prelude::*;
use serde::Serialize;

use crate::field::ScalarField;
use crate::group::{GroupAction, SignedPermutation};
use crate::{Error, Result};

pub const MAX_DIM: usize = 8;
pub const DEFAULT_CELL_BUDGET: u64 = 40_000_000;

const EVEN: u16 = 0;
const ODD: u16 = 1;
const LOWER: u16 = 2;
const UPPER: u16 = 3;

/// The doubled lattice of a cubical grid with `r` intervals per axis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Grid {
    dim: usize,
    resolution: usize,
    side: usize,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(dim: usize, resolution: usize, budget: u64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM || resolution == 0 {
            return Err(Error::InvalidArgument(format!("grid needs 1 <= m <= {MAX_DIM} and r >= 1")));
        }
        let side = 2 * resolution + 1;
        let cells = (side as u64).checked_pow(dim as u32).unwrap_or(u64::MAX);
        if cells > budget || cells > u32::MAX as u64 {
            return Err(Error::ComplexTooLarge { cells, budget });
        }
        let strides = (0..dim).map(|i| side.pow(i as u32)).collect();
        Ok(Grid { dim, resolution, side, strides })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn coords(&self, mut idx: usize) -> [usize; MAX_DIM] {
        let mut c = [0; MAX_DIM];
        for slot in c.iter_mut().take(self.dim) {
            *slot = idx % self.side;
            idx /= self.side;
        }
        c
    }

    pub fn index(&self, c: &[usize]) -> usize {
        c.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    /// Two bits per axis: even interior, odd, even at the lower bound, even
    /// at the upper bound.
    pub fn shapes(&self) -> Vec<u16> {
        let n = self.len();
        let top = 2 * self.resolution;
        let axis_code = |a: usize| -> u16 {
            if a % 2 == 1 {
                ODD
            } else if a == 0 {
                LOWER
            } else if a == top {
                UPPER
            } else {
                EVEN
            }
        };
        let mut out = Vec::with_capacity(n);
        let mut c = [0usize; MAX_DIM];
        for _ in 0..n {
            let mut s = 0u16;
            for (j, &a) in c.iter().enumerate().take(self.dim) {
                s |= axis_code(a) << (2 * j);
            }
            out.push(s);
            for a in c.iter_mut().take(self.dim) {
                *a += 1;
                if *a < self.side {
                    break;
                }
                *a = 0;
            }
        }
        out
    }
}

/// Bitmask of odd axes in a shape code.
pub fn odd_axes(shape: u16) -> u16 {
    let low = shape & 0x5555;
    let high = (shape >> 1) & 0x5555;
    let odd = low & !high;
    // Compress bit 2j to bit j.
    let mut mask = 0u16;
    for j in 0..MAX_DIM {
        if odd & (1 << (2 * j)) != 0 {
            mask |= 1 << j;
        }
    }
    mask
}

pub fn cell_dim(shape: u16) -> usize {
    let low = shape & 0x5555;
    let high = (shape >> 1) & 0x5555;
    (low & !high).count_ones() as usize
}

/// Calls `f(face, incidence)` for each codimension-one face.
#[inline]
pub fn for_each_face(grid: &Grid, shape: u16, cell: usize, mut f: impl FnMut(usize, i8)) {
    let mut sign = 1i8;
    for j in 0..grid.dim {
        if (shape >> (2 * j)) & 3 == ODD {
            let s = grid.strides[j];
            f(cell - s, -sign);
            f(cell + s, sign);
            sign = -sign;
        }
    }
}

/// Calls `f(coface, incidence of cell in the coface's boundary)`.
#[inline]
pub fn for_each_coface(grid: &Grid, shape: u16, cell: usize, mut f: impl FnMut(usize, i8)) {
    let mut sign = 1i8;
    for j in 0..grid.dim {
        let code = (shape >> (2 * j)) & 3;
        if code == ODD {
            sign = -sign;
            continue;
        }
        let s = grid.strides[j];
        if code != LOWER {
            f(cell - s, sign);
        }
        if code != UPPER {
            f(cell + s, -sign);
        }
    }
}

/// Field values at the grid vertices and top-cell centers.
#[derive(Clone, Debug)]
pub struct Samples {
    pub dim: usize,
    pub resolution: usize,
    pub radius: f64,
    pub vertex: Vec<f64>,
    pub center: Vec<f64>,
}

fn digits(mut idx: usize, base: usize, m: usize) -> [usize; MAX_DIM] {
    let mut d = [0; MAX_DIM];
    for slot in d.iter_mut().take(m) {
        *slot = idx % base;
        idx /= base;
    }
    d
}

fn undigits(d: &[usize], base: usize) -> usize {
    d.iter().rev().fold(0, |acc, &x| acc * base + x)
}

/// Image of a lattice point with `base` positions per axis under a signed
/// permutation; `flip(a) = base - 1 - a`.
fn permute_digits(g: &SignedPermutation, d: &[usize], base: usize) -> [usize; MAX_DIM] {
    let mut out = [0; MAX_DIM];
    for i in 0..g.dim() {
        let a = d[g.perm()[i]];
        out[i] = if g.signs()[i] > 0 { a } else { base - 1 - a };
    }
    out
}

/// Smallest index in the orbit of every lattice point.
fn orbit_representatives(count: usize, base: usize, m: usize, g: Option<&SignedPermutation>) -> Vec<usize> {
    let Some(g) = g else {
        return (0..count).collect();
    };
    let order = g.order();
    (0..count)
        .into_par_iter()
        .map(|idx| {
            let mut d = digits(idx, base, m);
            let mut rep = idx;
            for _ in 1..order {
                d = permute_digits(g, &d[..m], base);
                rep = rep.min(undigits(&d[..m], base));
            }
            rep
        })
        .collect()
}

/// Values on a lattice with `base` points per axis at `-R + (a + shift) h`,
/// evaluated once per orbit so that they are exactly invariant.
fn lattice_values(f: &dyn ScalarField, base: usize, shift: f64, h: f64, g: Option<&SignedPermutation>) -> Vec<f64> {
    let m = f.dim();
    let radius = f.radius();
    let count = base.pow(m as u32);
    let reps = orbit_representatives(count, base, m, g);
    let own: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|i| {
            if reps[i] != i {
                return f64::NAN;
            }
            let d = digits(i, base, m);
            let x: Vec<f64> = d[..m].iter().map(|&a| -radius + (a as f64 + shift) * h).collect();
            f.value(&x)
        })
        .collect();
    reps.iter().map(|&r| own[r]).collect()
}

impl Samples {
    /// With `symmetry`, the samples are made exactly invariant by evaluating
    /// one point per orbit.
    pub fn compute(f: &dyn ScalarField, resolution: usize, symmetry: Option<&GroupAction>) -> Result<Self> {
        let m = f.dim();
        let radius = f.radius();
        let h = 2.0 * radius / resolution as f64;
        let sp = match symmetry {
            Some(g) => {
                let sp = g
                    .signed_permutation()
                    .ok_or_else(|| Error::GridNotInvariant("generator is not a signed permutation".into()))?;
                if sp.dim() != m {
                    return Err(Error::DimensionMismatch(format!("action on R^{} for a field on R^{m}", sp.dim())));
                }
                Some(sp)
            }
            None => None,
        };
        let vertex = lattice_values(f, resolution + 1, 0.0, h, sp);
        let center = lattice_values(f, resolution, 0.5, h, sp);
        if vertex.iter().chain(&center).any(|v| !v.is_finite()) {
            return Err(Error::ProjectionNotInvertible { radius });
        }
        Ok(Samples { dim: m, resolution, radius, vertex, center })
    }

    fn is_boundary(&self, d: &[usize], top: usize) -> bool {
        d.iter().any(|&a| a == 0 || a == top)
    }

    fn corner_offsets(&self) -> Vec<usize> {
        let m = self.dim;
        let base = self.resolution + 1;
        (0..1usize << m)
            .map(|mask| (0..m).filter(|j| mask >> j & 1 == 1).map(|j| base.pow(j as u32)).sum())
            .collect()
    }

    /// Largest value over the corners and center of each top cell.
    fn cell_maxima(&self) -> Vec<f64> {
        let m = self.dim;
        let offsets = self.corner_offsets();
        (0..self.center.len())
            .into_par_iter()
            .map(|i| {
                let d = digits(i, self.resolution, m);
                let base = undigits(&d[..m], self.resolution + 1);
                offsets.iter().map(|o| self.vertex[base + o]).fold(self.center[i], f64::max)
            })
            .collect()
    }

    /// Largest depth `-f` over boundary vertices, 0 if `f >= 0` there.
    pub fn boundary_depth(&self) -> f64 {
        let m = self.dim;
        let r = self.resolution;
        self.vertex
            .iter()
            .enumerate()
            .filter(|(i, _)| self.is_boundary(&digits(*i, r + 1, m)[..m], r))
            .map(|(_, v)| -v)
            .fold(0.0, f64::max)
    }
}

/// `1/4` of the smallest lobe depth, capped at `1e-2` of the sample scale:
/// negative top cells are grouped into face-connected lobes, each lobe
/// touching the boundary contributes its largest depth `-max f`, and lobes no
/// deeper than round-off are ignored. Falls back to `1e-3` of the scale when
/// no lobe touches the boundary.
pub fn default_epsilon(samples: &Samples) -> f64 {
    let m = samples.dim;
    let r = samples.resolution;
    let maxima = samples.cell_maxima();
    let scale = samples.vertex.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut parent: Vec<usize> = (0..maxima.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..maxima.len() {
        if maxima[i] >= 0.0 {
            continue;
        }
        let d = digits(i, r, m);
        let mut stride = 1;
        for &a in d.iter().take(m) {
            if a + 1 < r && maxima[i + stride] < 0.0 {
                let (x, y) = (find(&mut parent, i), find(&mut parent, i + stride));
                parent[x] = y;
            }
            stride *= r;
        }
    }
    let mut lobe_depth: std::collections::HashMap<usize, (f64, bool)> = std::collections::HashMap::new();
    for (i, &v) in maxima.iter().enumerate() {
        if v >= 0.0 {
            continue;
        }
        let root = find(&mut parent, i);
        let touches = samples.is_boundary(&digits(i, r, m)[..m], r - 1);
        let e = lobe_depth.entry(root).or_insert((0.0, false));
        e.0 = e.0.max(-v);
        e.1 |= touches;
    }
    let depth = lobe_depth
        .values()
        .filter(|(d, touches)| *touches && *d > 1e-9 * scale)
        .map(|(d, _)| *d)
        .fold(f64::INFINITY, f64::min);
    if depth.is_finite() {
        (0.25 * depth).min(1e-2 * scale)
    } else {
        1e-3 * scale
    }
}

#[derive(Clone, Debug)]
pub struct PairOptions {
    pub cell_budget: u64,
    /// Samples are made exactly invariant under this action.
    pub symmetry: Option<GroupAction>,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions { cell_budget: DEFAULT_CELL_BUDGET, symmetry: None }
    }
}

/// The pair `(U, U_-)`: `U` is the whole box complex and `U_-` the closure of
/// the top cells with `f <= -epsilon` at every corner and the center.
#[derive(Clone, Debug)]
pub struct CubicalPair {
    grid: Grid,
    radius: f64,
    epsilon: f64,
    shapes: Vec<u16>,
    uminus: Vec<bool>,
    top_cells_below: usize,
}

impl CubicalPair {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn shapes(&self) -> &[u16] {
        &self.shapes
    }

    pub fn in_uminus(&self, cell: usize) -> bool {
        self.uminus[cell]
    }

    pub fn uminus(&self) -> &[bool] {
        &self.uminus
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    /// Number of top cells in `U_-`.
    pub fn top_cells_below(&self) -> usize {
        self.top_cells_below
    }

    /// Checks that `U_-` is closed under faces.
    pub fn is_closed(&self) -> bool {
        (0..self.len()).filter(|&c| self.uminus[c]).all(|c| {
            let mut ok = true;
            for_each_face(&self.grid, self.shapes[c], c, |y, _| ok &= self.uminus[y]);
            ok
        })
    }
}

/// Smallest gradient norm over boundary vertices.
pub fn boundary_gradient_margin(f: &dyn ScalarField, resolution: usize) -> f64 {
    let m = f.dim();
    let radius = f.radius();
    let h = 2.0 * radius / resolution as f64;
    let nv = (resolution + 1).pow(m as u32);
    (0..nv)
        .into_par_iter()
        .filter_map(|i| {
            let d = digits(i, resolution + 1, m);
            if !d[..m].iter().any(|&a| a == 0 || a == resolution) {
                return None;
            }
            let x: Vec<f64> = d[..m].iter().map(|&a| -radius + a as f64 * h).collect();
            Some(f.gradient(&x).norm())
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Builds the pair at resolution `r`.
pub fn build_pair(f: &dyn ScalarField, epsilon: f64, resolution: usize, opts: &PairOptions) -> Result<CubicalPair> {
    let samples = Samples::compute(f, resolution, opts.symmetry.as_ref())?;
    let margin = boundary_gradient_margin(f, resolution);
    if !(margin > 1e-9) {
        return Err(Error::CriticalPointOnBoundarySuspected { margin });
    }
    pair_from_samples(&samples, epsilon, opts.cell_budget)
}

/// Builds the pair from precomputed samples.
pub fn pair_from_samples(samples: &Samples, epsilon: f64, cell_budget: u64) -> Result<CubicalPair> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::EpsilonInadmissible { epsilon, reason: "must be positive and finite".into() });
    }
    let depth = samples.boundary_depth();
    if depth > 0.0 && epsilon >= 0.5 * depth {
        return Err(Error::EpsilonInadmissible {
            epsilon,
            reason: format!("not below half the boundary depth {depth:.3e}"),
        });
    }
    let m = samples.dim;
    let r = samples.resolution;
    let grid = Grid::new(m, r, cell_budget)?;
    let shapes = grid.shapes();
    let mut uminus = vec![false; grid.len()];
    let maxima = samples.cell_maxima();
    let mut top_cells_below = 0;
    for (i, v) in maxima.iter().enumerate() {
        if *v <= -epsilon {
            let d = digits(i, r, m);
            let lattice: Vec<usize> = d[..m].iter().map(|a| 2 * a + 1).collect();
            uminus[grid.index(&lattice)] = true;
            top_cells_below += 1;
        }
    }
    // Downward closure, one axis at a time: a cell with even coordinate j
    // lies in U_- iff one of its two neighbours along j does.
    for j in 0..m {
        let s = grid.stride(j);
        for c in 0..grid.len() {
            let code = (shapes[c] >> (2 * j)) & 3;
            if code == ODD || uminus[c] {
                continue;
            }
            let below = code != LOWER && uminus[c - s];
            let above = code != UPPER && uminus[c + s];
            if below || above {
                uminus[c] = true;
            }
        }
    }
    Ok(CubicalPair { grid, radius: samples.radius, epsilon, shapes, uminus, top_cells_below })
}

/// A signed permutation of axes acting on cells of the lattice.
#[derive(Clone, Debug)]
pub struct CellAction {
    perm: SignedPermutation,
    inverse: Vec<usize>,
}

impl CellAction {
    pub fn new(perm: SignedPermutation) -> Self {
        let mut inverse = vec![0; perm.dim()];
        for (i, &p) in perm.perm().iter().enumerate() {
            inverse[p] = i;
        }
        CellAction { perm, inverse }
    }

    pub fn permutation(&self) -> &SignedPermutation {
        &self.perm
    }

    /// Image cell and the orientation sign of the map on the cell's frame.
    pub fn apply(&self, grid: &Grid, shape: u16, cell: usize) -> (usize, i8) {
        let m = grid.dim;
        let c = grid.coords(cell);
        let top = 2 * grid.resolution;
        let mut image = [0usize; MAX_DIM];
        for i in 0..m {
            let a = c[self.perm.perm()[i]];
            image[i] = if self.perm.signs()[i] > 0 { a } else { top - a };
        }
        // The frame e_j (j odd, increasing) maps to s_i e_i with i = inverse[j].
        let odd = odd_axes(shape);
        let mut targets = [0usize; MAX_DIM];
        let mut q = 0;
        let mut sign = 1i8;
        for j in 0..m {
            if odd >> j & 1 == 1 {
                let i = self.inverse[j];
                sign *= self.perm.signs()[i];
                targets[q] = i;
                q += 1;
            }
        }
        let mut inversions = 0;
        for a in 0..q {
            for b in a + 1..q {
                if targets[a] > targets[b] {
                    inversions += 1;
                }
            }
        }
        if inversions % 2 == 1 {
            sign = -sign;
        }
        (grid.index(&image[..m]), sign)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Polynomial;

    #[test]
    fn boundary_of_boundary_vanishes() {
        let grid = Grid::new(3, 3, u64::MAX).unwrap();
        let shapes = grid.shapes();
        for c in 0..grid.len() {
            let mut acc = std::collections::HashMap::new();
            for_each_face(&grid, shapes[c], c, |y, s| {
                for_each_face(&grid, shapes[y], y, |z, t| *acc.entry(z).or_insert(0i32) += (s * t) as i32);
            });
            assert!(acc.values().all(|&v| v == 0));
        }
    }

    #[test]
    fn cofaces_invert_faces() {
        let grid = Grid::new(3, 2, u64::MAX).unwrap();
        let shapes = grid.shapes();
        for c in 0..grid.len() {
            for_each_coface(&grid, shapes[c], c, |y, s| {
                let mut found = 0;
                for_each_face(&grid, shapes[y], y, |z, t| {
                    if z == c {
                        found = t;
                    }
                });
                assert_eq!(found, s);
            });
        }
    }

    #[test]
    fn saddle_has_two_lobes() {
        let f = Polynomial::quadratic(&[1, -1]);
        let pair = build_pair(&f, 0.1, 64, &PairOptions::default()).unwrap();
        assert!(pair.is_closed());
        assert!(pair.top_cells_below() > 0);
        // Cells near (0, +-0.9) are below, cells near (+-0.9, 0) are not.
        let g = pair.grid();
        let at = |x: f64, y: f64| {
            let to = |v: f64| 2 * (((v + 1.0) / 2.0 * 64.0).floor() as usize) + 1;
            g.index(&[to(x), to(y)])
        };
        assert!(pair.in_uminus(at(0.01, 0.9)) && pair.in_uminus(at(0.01, -0.9)));
        assert!(!pair.in_uminus(at(0.9, 0.01)) && !pair.in_uminus(at(-0.9, 0.01)));
    }

    #[test]
    fn minimum_has_empty_sublevel() {
        let f = Polynomial::quadratic(&[1, 1]);
        let samples = Samples::compute(&f, 8, None).unwrap();
        let pair = pair_from_samples(&samples, default_epsilon(&samples), 1 << 20).unwrap();
        assert_eq!(pair.top_cells_below(), 0);
        assert!(pair.uminus().iter().all(|&b| !b));
    }

    #[test]
    fn epsilon_admissibility() {
        let f = Polynomial::quadratic(&[1, -1]);
        let opts = PairOptions::default();
        assert!(matches!(build_pair(&f, 0.0, 8, &opts), Err(Error::EpsilonInadmissible { .. })));
        assert!(matches!(build_pair(&f, 0.6, 8, &opts), Err(Error::EpsilonInadmissible { .. })));
        assert!(build_pair(&f, 0.1, 8, &opts).is_ok());
    }

    #[test]
    fn reflection_reverses_vertical_edges() {
        let grid = Grid::new(2, 2, u64::MAX).unwrap();
        let shapes = grid.shapes();
        let g = CellAction::new(SignedPermutation::new(vec![0, 1], vec![1, -1]).unwrap());
        let vertical = grid.index(&[2, 1]);
        let horizontal = grid.index(&[1, 2]);
        assert_eq!(g.apply(&grid, shapes[vertical], vertical), (grid.index(&[2, 3]), -1));
        assert_eq!(g.apply(&grid, shapes[horizontal], horizontal), (horizontal, 1));
        let square = grid.index(&[1, 1]);
        assert_eq!(g.apply(&grid, shapes[square], square).1, -1);
    }

    #[test]
    fn cell_action_commutes_with_boundary() {
        let grid = Grid::new(3, 2, u64::MAX).unwrap();
        let shapes = grid.shapes();
        let g = CellAction::new(SignedPermutation::new(vec![2, 0, 1], vec![1, -1, 1]).unwrap());
        for c in 0..grid.len() {
            let (gc, s) = g.apply(&grid, shapes[c], c);
            let mut lhs = std::collections::BTreeMap::new();
            for_each_face(&grid, shapes[gc], gc, |y, t| *lhs.entry(y).or_insert(0) += (s * t) as i32);
            let mut rhs = std::collections::BTreeMap::new();
            for_each_face(&grid, shapes[c], c, |y, t| {
                let (gy, u) = g.apply(&grid, shapes[y], y);
                *rhs.entry(gy).or_insert(0) += (t * u) as i32;
            });
            assert_eq!(lhs, rhs);
        }
    }
}
