//! Scalar fields on boxes `[-R, R]^m` with gradient and Hessian.

use std::sync::Arc;

use crate::linalg::{Mat, Vector};

pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    /// Half side of the domain box `[-R, R]^m`.
    fn radius(&self) -> f64;
    fn value(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64]) -> Vector;
    fn hessian(&self, z: &[f64]) -> Mat;

    fn critical_value_at_0(&self) -> f64 {
        self.value(&vec![0.0; self.dim()])
    }
}

pub type SharedField = Arc<dyn ScalarField>;

/// A real polynomial, `sum c * prod x_i^{k_i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    dim: usize,
    radius: f64,
    terms: Vec<(f64, Vec<u32>)>,
}

impl Polynomial {
    pub fn new(dim: usize, radius: f64, terms: Vec<(f64, Vec<u32>)>) -> Self {
        assert!(terms.iter().all(|(_, k)| k.len() == dim), "monomial arity must equal dim");
        Polynomial { dim, radius, terms }
    }

    /// `sum signs[i] * x_i^2`.
    pub fn quadratic(signs: &[i32]) -> Self {
        let m = signs.len();
        let terms = signs
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let mut k = vec![0; m];
                k[i] = 2;
                (s as f64, k)
            })
            .collect();
        Polynomial::new(m, 1.0, terms)
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    pub fn terms(&self) -> &[(f64, Vec<u32>)] {
        &self.terms
    }
}

fn power(x: f64, k: u32) -> f64 {
    x.powi(k as i32)
}

impl ScalarField for Polynomial {
    fn dim(&self) -> usize {
        self.dim
    }

    fn radius(&self) -> f64 {
        self.radius
    }

    fn value(&self, z: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, k)| c * k.iter().zip(z).map(|(&e, &x)| power(x, e)).product::<f64>())
            .sum()
    }

    fn gradient(&self, z: &[f64]) -> Vector {
        let mut g = Vector::zeros(self.dim);
        for (c, k) in &self.terms {
            for j in 0..self.dim {
                if k[j] == 0 {
                    continue;
                }
                let mut t = c * k[j] as f64 * power(z[j], k[j] - 1);
                for i in (0..self.dim).filter(|&i| i != j) {
                    t *= power(z[i], k[i]);
                }
                g[j] += t;
            }
        }
        g
    }

    fn hessian(&self, z: &[f64]) -> Mat {
        let m = self.dim;
        let mut h = Mat::zeros(m, m);
        for (c, k) in &self.terms {
            for a in 0..m {
                for b in a..m {
                    let mut e = k.clone();
                    let mut t = *c;
                    for &axis in &[a, b] {
                        if e[axis] == 0 {
                            t = 0.0;
                            break;
                        }
                        t *= e[axis] as f64;
                        e[axis] -= 1;
                    }
                    if t == 0.0 {
                        continue;
                    }
                    t *= e.iter().zip(z).map(|(&p, &x)| power(x, p)).product::<f64>();
                    h[(a, b)] += t;
                    if a != b {
                        h[(b, a)] += t;
                    }
                }
            }
        }
        h
    }
}

/// `z -> z^T Q z / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    q: Mat,
    radius: f64,
}

impl Quadratic {
    pub fn new(q: &Mat, radius: f64) -> Self {
        Quadratic { q: (q + q.transpose()) * 0.5, radius }
    }

    pub fn matrix(&self) -> &Mat {
        &self.q
    }
}

impl ScalarField for Quadratic {
    fn dim(&self) -> usize {
        self.q.nrows()
    }

    fn radius(&self) -> f64 {
        self.radius
    }

    fn value(&self, z: &[f64]) -> f64 {
        let v = Vector::from_column_slice(z);
        0.5 * v.dot(&(&self.q * &v))
    }

    fn gradient(&self, z: &[f64]) -> Vector {
        &self.q * Vector::from_column_slice(z)
    }

    fn hessian(&self, _z: &[f64]) -> Mat {
        self.q.clone()
    }
}

/// `y -> f(C y)` for a chart matrix `C` with orthonormal columns.
#[derive(Clone)]
pub struct Restricted {
    inner: SharedField,
    chart: Mat,
    radius: f64,
}

impl Restricted {
    /// The box radius is the largest one whose image stays in the inner box.
    pub fn new(inner: SharedField, chart: Mat) -> Self {
        let row_sum = (0..chart.nrows())
            .map(|i| chart.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        let radius = if row_sum > 0.0 { inner.radius() / row_sum } else { inner.radius() };
        Restricted { inner, chart, radius }
    }

    pub fn chart(&self) -> &Mat {
        &self.chart
    }

    pub fn inner(&self) -> &SharedField {
        &self.inner
    }

    pub fn embed(&self, y: &[f64]) -> Vec<f64> {
        (&self.chart * Vector::from_column_slice(y)).iter().copied().collect()
    }
}

impl ScalarField for Restricted {
    fn dim(&self) -> usize {
        self.chart.ncols()
    }

    fn radius(&self) -> f64 {
        self.radius
    }

    fn value(&self, y: &[f64]) -> f64 {
        self.inner.value(&self.embed(y))
    }

    fn gradient(&self, y: &[f64]) -> Vector {
        self.chart.transpose() * self.inner.gradient(&self.embed(y))
    }

    fn hessian(&self, y: &[f64]) -> Mat {
        self.chart.transpose() * self.inner.hessian(&self.embed(y)) * &self.chart
    }
}

/// A named polynomial field with the Euler characteristic of its local
/// homology at 0.
pub struct SuiteField {
    pub name: &'static str,
    pub field: Polynomial,
    pub chi: i64,
    pub betti: Vec<usize>,
}

fn mono(c: f64, k: &[u32]) -> (f64, Vec<u32>) {
    (c, k.to_vec())
}

/// Polynomial test fields with an isolated critical point at 0.
pub fn field_suite() -> Vec<SuiteField> {
    let p2 = |terms: Vec<(f64, Vec<u32>)>| Polynomial::new(2, 1.0, terms);
    vec![
        SuiteField { name: "min-2d", field: Polynomial::quadratic(&[1, 1]), chi: 1, betti: vec![1, 0, 0] },
        SuiteField { name: "saddle-2d", field: Polynomial::quadratic(&[1, -1]), chi: -1, betti: vec![0, 1, 0] },
        SuiteField { name: "max-2d", field: Polynomial::quadratic(&[-1, -1]), chi: 1, betti: vec![0, 0, 1] },
        SuiteField {
            name: "monkey-saddle",
            field: p2(vec![mono(1.0, &[3, 0]), mono(-3.0, &[1, 2])]),
            chi: -2,
            betti: vec![0, 2, 0],
        },
        SuiteField {
            name: "quartic-min",
            field: p2(vec![mono(1.0, &[4, 0]), mono(2.0, &[2, 2]), mono(1.0, &[0, 4])]),
            chi: 1,
            betti: vec![1, 0, 0],
        },
        SuiteField {
            name: "quartic-max",
            field: p2(vec![mono(-1.0, &[4, 0]), mono(-2.0, &[2, 2]), mono(-1.0, &[0, 4])]),
            chi: 1,
            betti: vec![0, 0, 1],
        },
        SuiteField {
            name: "re-z4",
            field: p2(vec![mono(1.0, &[4, 0]), mono(-6.0, &[2, 2]), mono(1.0, &[0, 4])]),
            chi: -3,
            betti: vec![0, 3, 0],
        },
        SuiteField { name: "x4-plus-y2", field: p2(vec![mono(1.0, &[4, 0]), mono(1.0, &[0, 2])]), chi: 1, betti: vec![1, 0, 0] },
        SuiteField { name: "x4-minus-y2", field: p2(vec![mono(1.0, &[4, 0]), mono(-1.0, &[0, 2])]), chi: -1, betti: vec![0, 1, 0] },
        SuiteField { name: "cusp", field: p2(vec![mono(1.0, &[3, 0]), mono(1.0, &[0, 2])]), chi: 0, betti: vec![0, 0, 0] },
        SuiteField { name: "saddle-3d", field: Polynomial::quadratic(&[1, 1, -1]), chi: -1, betti: vec![0, 1, 0, 0] },
        SuiteField { name: "saddle-4d", field: Polynomial::quadratic(&[1, -1, -1, 1]), chi: 1, betti: vec![0, 0, 1, 0, 0] },
    ]
}
