//! Coefficient fields for homology: prime fields and the rationals, with the
//! dense elimination routines the Morse complex needs.

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

pub trait Coefficients: Clone + Send + Sync {
    type E: Clone + PartialEq + Debug + Display + Send + Sync;

    /// 0 for the rationals.
    fn characteristic(&self) -> u32;
    fn zero(&self) -> Self::E;
    fn from_i64(&self, v: i64) -> Self::E;
    fn add(&self, a: &Self::E, b: &Self::E) -> Self::E;
    fn mul(&self, a: &Self::E, b: &Self::E) -> Self::E;
    fn neg(&self, a: &Self::E) -> Self::E;
    fn inv(&self, a: &Self::E) -> Self::E;
    fn is_zero(&self, a: &Self::E) -> bool;
    /// Integer representative: the residue in `[0, p)` for prime fields, the
    /// value itself for integral rationals.
    fn lift(&self, a: &Self::E) -> Option<i64>;

    fn one(&self) -> Self::E {
        self.from_i64(1)
    }

    fn sub(&self, a: &Self::E, b: &Self::E) -> Self::E {
        self.add(a, &self.neg(b))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrimeField {
    p: u32,
}

impl PrimeField {
    pub fn new(p: u32) -> Self {
        assert!(p >= 2 && (2..p).take_while(|d| d * d <= p).all(|d| p % d != 0), "{p} is not prime");
        PrimeField { p }
    }
}

impl Coefficients for PrimeField {
    type E = u32;

    fn characteristic(&self) -> u32 {
        self.p
    }
    fn zero(&self) -> u32 {
        0
    }
    fn from_i64(&self, v: i64) -> u32 {
        v.rem_euclid(self.p as i64) as u32
    }
    fn add(&self, a: &u32, b: &u32) -> u32 {
        ((*a as u64 + *b as u64) % self.p as u64) as u32
    }
    fn mul(&self, a: &u32, b: &u32) -> u32 {
        ((*a as u64 * *b as u64) % self.p as u64) as u32
    }
    fn neg(&self, a: &u32) -> u32 {
        if *a == 0 {
            0
        } else {
            self.p - a
        }
    }
    fn inv(&self, a: &u32) -> u32 {
        assert!(*a != 0, "inverse of zero");
        // Fermat: a^(p-2).
        let mut result = 1u64;
        let mut base = *a as u64;
        let mut e = self.p - 2;
        let p = self.p as u64;
        while e > 0 {
            if e & 1 == 1 {
                result = result * base % p;
            }
            base = base * base % p;
            e >>= 1;
        }
        result as u32
    }
    fn is_zero(&self, a: &u32) -> bool {
        *a == 0
    }
    fn lift(&self, a: &u32) -> Option<i64> {
        Some(*a as i64)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Rationals;

impl Coefficients for Rationals {
    type E = BigRational;

    fn characteristic(&self) -> u32 {
        0
    }
    fn zero(&self) -> BigRational {
        BigRational::zero()
    }
    fn from_i64(&self, v: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(v))
    }
    fn add(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a + b
    }
    fn mul(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a * b
    }
    fn neg(&self, a: &BigRational) -> BigRational {
        -a
    }
    fn inv(&self, a: &BigRational) -> BigRational {
        assert!(!a.is_zero(), "inverse of zero");
        a.recip()
    }
    fn is_zero(&self, a: &BigRational) -> bool {
        a.is_zero()
    }
    fn lift(&self, a: &BigRational) -> Option<i64> {
        if a.is_integer() {
            a.to_integer().to_i64()
        } else {
            None
        }
    }
}

/// Reduces an integer into `F_p`, or keeps it for `p = 0`.
pub fn reduce_integer(v: i64, p: u32) -> i64 {
    if p == 0 {
        v
    } else {
        v.rem_euclid(p as i64)
    }
}

/// Dense matrix over a coefficient field, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<E> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<E>,
}

impl<E: Clone> DenseMatrix<E> {
    pub fn filled(rows: usize, cols: usize, v: E) -> Self {
        DenseMatrix { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn get(&self, i: usize, j: usize) -> &E {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: E) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<E> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }
}

pub fn identity<F: Coefficients>(k: &F, n: usize) -> DenseMatrix<F::E> {
    let mut m = DenseMatrix::filled(n, n, k.zero());
    for i in 0..n {
        m.set(i, i, k.one());
    }
    m
}

pub fn matmul<F: Coefficients>(k: &F, a: &DenseMatrix<F::E>, b: &DenseMatrix<F::E>) -> DenseMatrix<F::E> {
    assert_eq!(a.cols, b.rows);
    let mut out = DenseMatrix::filled(a.rows, b.cols, k.zero());
    for i in 0..a.rows {
        for l in 0..a.cols {
            let x = a.get(i, l);
            if k.is_zero(x) {
                continue;
            }
            for j in 0..b.cols {
                let y = b.get(l, j);
                if !k.is_zero(y) {
                    let v = k.add(out.get(i, j), &k.mul(x, y));
                    out.set(i, j, v);
                }
            }
        }
    }
    out
}

/// Reduced row echelon form in place; returns the pivot columns.
pub fn rref<F: Coefficients>(k: &F, m: &mut DenseMatrix<F::E>) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..m.cols {
        if row == m.rows {
            break;
        }
        let Some(p) = (row..m.rows).find(|&r| !k.is_zero(m.get(r, col))) else {
            continue;
        };
        if p != row {
            for j in 0..m.cols {
                m.data.swap(p * m.cols + j, row * m.cols + j);
            }
        }
        let inv = k.inv(m.get(row, col));
        for j in col..m.cols {
            let v = k.mul(m.get(row, j), &inv);
            m.set(row, j, v);
        }
        for r in 0..m.rows {
            if r == row || k.is_zero(m.get(r, col)) {
                continue;
            }
            let factor = m.get(r, col).clone();
            for j in col..m.cols {
                let v = k.sub(m.get(r, j), &k.mul(&factor, m.get(row, j)));
                m.set(r, j, v);
            }
        }
        pivots.push(col);
        row += 1;
    }
    pivots
}

pub fn rank<F: Coefficients>(k: &F, m: &DenseMatrix<F::E>) -> usize {
    let mut c = m.clone();
    rref(k, &mut c).len()
}

/// Basis of the null space, one vector per free column.
pub fn nullspace<F: Coefficients>(k: &F, m: &DenseMatrix<F::E>) -> Vec<Vec<F::E>> {
    let mut r = m.clone();
    let pivots = rref(k, &mut r);
    let mut basis = Vec::new();
    for free in (0..m.cols).filter(|c| !pivots.contains(c)) {
        let mut v = vec![k.zero(); m.cols];
        v[free] = k.one();
        for (row, &pc) in pivots.iter().enumerate() {
            v[pc] = k.neg(r.get(row, free));
        }
        basis.push(v);
    }
    basis
}

/// Solves `m x = b`, if consistent.
pub fn solve<F: Coefficients>(k: &F, m: &DenseMatrix<F::E>, b: &[F::E]) -> Option<Vec<F::E>> {
    let mut aug = DenseMatrix::filled(m.rows, m.cols + 1, k.zero());
    for i in 0..m.rows {
        for j in 0..m.cols {
            aug.set(i, j, m.get(i, j).clone());
        }
        aug.set(i, m.cols, b[i].clone());
    }
    let pivots = rref(k, &mut aug);
    if pivots.last() == Some(&m.cols) {
        return None;
    }
    let mut x = vec![k.zero(); m.cols];
    for (row, &pc) in pivots.iter().enumerate() {
        x[pc] = aug.get(row, m.cols).clone();
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prime_field_arithmetic() {
        let f = PrimeField::new(7);
        assert_eq!(f.mul(&3, &f.inv(&3)), 1);
        assert_eq!(f.from_i64(-1), 6);
        assert_eq!(f.neg(&0), 0);
        for a in 1..7 {
            assert_eq!(f.mul(&a, &f.inv(&a)), 1);
        }
    }

    #[test]
    fn rank_depends_on_characteristic() {
        // [[1, 1], [1, -1]] has determinant -2.
        let m2 = DenseMatrix { rows: 2, cols: 2, data: vec![1u32, 1, 1, 1] };
        assert_eq!(rank(&PrimeField::new(2), &m2), 1);
        let q = Rationals;
        let mq = DenseMatrix { rows: 2, cols: 2, data: vec![q.from_i64(1), q.from_i64(1), q.from_i64(1), q.from_i64(-1)] };
        assert_eq!(rank(&q, &mq), 2);
    }

    #[test]
    fn nullspace_and_solve() {
        let k = PrimeField::new(5);
        let m = DenseMatrix { rows: 2, cols: 3, data: vec![1u32, 2, 3, 0, 1, 4] };
        let ns = nullspace(&k, &m);
        assert_eq!(ns.len(), 1);
        let v = &ns[0];
        for i in 0..2 {
            let mut s = 0;
            for j in 0..3 {
                s = k.add(&s, &k.mul(m.get(i, j), &v[j]));
            }
            assert_eq!(s, 0);
        }
        let x = solve(&k, &m, &[1, 1]).unwrap();
        assert_eq!(k.add(&k.add(&x[0], &k.mul(&2, &x[1])), &k.mul(&3, &x[2])), 1);
        let inconsistent = DenseMatrix { rows: 2, cols: 1, data: vec![1u32, 1] };
        assert!(solve(&k, &inconsistent, &[1, 2]).is_none());
    }
}
