//! Exact rational matrices and the few trigonometric values that are rational.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn to_f64(q: &Rational) -> f64 {
    let n = q.numer().to_f64().unwrap_or(f64::NAN);
    let d = q.denom().to_f64().unwrap_or(f64::NAN);
    if n.is_finite() && d.is_finite() {
        n / d
    } else {
        // Huge components: divide in big integers first.
        let scale = BigInt::from(10u64).pow(18);
        let scaled = (q.numer() * &scale) / q.denom();
        scaled.to_f64().unwrap_or(f64::NAN) / 1e18
    }
}

pub fn floor_i64(q: &Rational) -> i64 {
    q.floor().to_integer().to_i64().expect("floor fits in i64")
}

pub fn is_integer(q: &Rational) -> bool {
    q.is_integer()
}

pub fn sign(q: &Rational) -> i32 {
    if q.is_positive() {
        1
    } else if q.is_negative() {
        -1
    } else {
        0
    }
}

/// Fractional part in `[0, 1)`.
fn frac(q: &Rational) -> Rational {
    q - q.floor()
}

/// `cos(2 pi q)` when it is rational, i.e. when the denominator of `q`
/// divides 4 or 6.
pub fn cos_turns(q: &Rational) -> Option<Rational> {
    let f = frac(q);
    let d = f.denom().to_i64()?;
    let n = f.numer().to_i64()?;
    match (n, d) {
        (0, 1) => Some(int(1)),
        (1, 2) => Some(int(-1)),
        (1, 4) | (3, 4) => Some(int(0)),
        (1, 3) | (2, 3) => Some(rat(-1, 2)),
        (1, 6) | (5, 6) => Some(rat(1, 2)),
        _ => None,
    }
}

/// `sin(2 pi q)` when it is rational (denominator dividing 4).
pub fn sin_turns(q: &Rational) -> Option<Rational> {
    let f = frac(q);
    let d = f.denom().to_i64()?;
    let n = f.numer().to_i64()?;
    match (n, d) {
        (0, 1) | (1, 2) => Some(int(0)),
        (1, 4) => Some(int(1)),
        (3, 4) => Some(int(-1)),
        _ => None,
    }
}

/// Small dense matrix over the rationals, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Rational>,
}

impl ExactMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ExactMatrix { rows, cols, data: vec![Rational::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Rational::one();
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<Rational>) -> Self {
        assert_eq!(data.len(), rows * cols);
        ExactMatrix { rows, cols, data }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Rational) {
        self.data[i * self.cols + j] = v;
    }

    pub fn mul(&self, other: &ExactMatrix) -> ExactMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = ExactMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(k, j);
                    if !b.is_zero() {
                        out.data[i * other.cols + j] += a * b;
                    }
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &ExactMatrix) -> ExactMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        ExactMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn transpose(&self) -> ExactMatrix {
        let mut out = ExactMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j).clone());
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> ExactMatrix {
        let mut result = ExactMatrix::identity(self.rows);
        for _ in 0..k {
            result = result.mul(self);
        }
        result
    }

    pub fn direct_sum(blocks: &[ExactMatrix]) -> ExactMatrix {
        let n: usize = blocks.iter().map(|b| b.rows).sum();
        let mut out = ExactMatrix::zeros(n, n);
        let mut off = 0;
        for b in blocks {
            for i in 0..b.rows {
                for j in 0..b.cols {
                    out.set(off + i, off + j, b.get(i, j).clone());
                }
            }
            off += b.rows;
        }
        out
    }

    /// Determinant by fraction-free-ish Gaussian elimination over `Q`.
    pub fn det(&self) -> Rational {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = Rational::one();
        for col in 0..n {
            let pivot = (col..n).find(|&r| !a[r * n + col].is_zero());
            let Some(p) = pivot else {
                return Rational::zero();
            };
            if p != col {
                for j in 0..n {
                    a.swap(p * n + j, col * n + j);
                }
                det = -det;
            }
            let pv = a[col * n + col].clone();
            det *= &pv;
            for r in col + 1..n {
                if a[r * n + col].is_zero() {
                    continue;
                }
                let factor = &a[r * n + col] / &pv;
                for j in col..n {
                    let delta = &factor * &a[col * n + j];
                    a[r * n + j] -= delta;
                }
            }
        }
        det
    }

    pub fn to_f64(&self) -> crate::linalg::Mat {
        crate::linalg::Mat::from_fn(self.rows, self.cols, |i, j| to_f64(self.get(i, j)))
    }

    pub fn is_identity(&self) -> bool {
        *self == ExactMatrix::identity(self.rows)
    }
}

/// Standard complex structure in exact arithmetic.
pub fn j0_exact(n: usize) -> ExactMatrix {
    let mut j = ExactMatrix::zeros(2 * n, 2 * n);
    for b in 0..n {
        j.set(2 * b, 2 * b + 1, int(-1));
        j.set(2 * b + 1, 2 * b, int(1));
    }
    j
}

pub fn gcd_u64(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_cosines() {
        assert_eq!(cos_turns(&rat(1, 3)), Some(rat(-1, 2)));
        assert_eq!(cos_turns(&rat(-1, 6)), Some(rat(1, 2)));
        assert_eq!(cos_turns(&rat(7, 4)), Some(int(0)));
        assert_eq!(cos_turns(&rat(1, 5)), None);
        assert_eq!(sin_turns(&rat(3, 4)), Some(int(-1)));
        assert_eq!(sin_turns(&rat(1, 6)), None);
    }

    #[test]
    fn determinant_of_small_matrices() {
        let m = ExactMatrix::from_rows(2, 2, vec![int(2), int(1), int(1), int(3)]);
        assert_eq!(m.det(), int(5));
        let p = ExactMatrix::from_rows(2, 2, vec![int(0), int(1), int(1), int(0)]);
        assert_eq!(p.det(), int(-1));
        let z = ExactMatrix::from_rows(2, 2, vec![int(1), int(2), int(2), int(4)]);
        assert_eq!(z.det(), int(0));
    }

    #[test]
    fn floor_of_negative_fraction() {
        assert_eq!(floor_i64(&rat(-1, 3)), -1);
        assert_eq!(floor_i64(&rat(7, 5)), 1);
    }
}
