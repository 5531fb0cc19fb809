//! Inputs shared by the benchmarks.

use locfloer::field::Polynomial;
use locfloer::germ::SymplecticGerm;
use locfloer::linalg::rotation;
use locfloer::symplectic::{make_block_path, SymplecticPath};

pub fn monkey_saddle() -> Polynomial {
    Polynomial::new(2, 1.0, vec![(1.0, vec![3, 0]), (-3.0, vec![1, 2])])
}

/// A four-block path with interior crossings.
pub fn long_path() -> SymplecticPath {
    let specs = ["rotation:7/3", "negative-hyperbolic:3", "rotation:-2/5", "positive-hyperbolic:2"];
    make_block_path(specs.iter().map(|s| s.parse().expect("valid block")).collect()).expect("nonempty")
}

pub fn rotation_germ() -> SymplecticGerm {
    SymplecticGerm::linear(rotation(0.4 * std::f64::consts::PI), 1.0).expect("symplectic")
}

pub fn twist_germ() -> SymplecticGerm {
    SymplecticGerm::twist(1, 0.63, 0.1, 1.0)
}
