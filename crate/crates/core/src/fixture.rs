//! The two-hidden-layer worked example: 4-4-4-4 network, `p1(t) = c12 t^2 + c11 t + 1`,
//! `p2(t) = c21 t + c20`, two training pairs, exact minimizer `c = (1, -2, 1, -1)`.

use nalgebra::DMatrix;

use crate::net::{NetworkSpec, Sample, TrainingSet};

/// Known global minimizer `(c11, c12, c20, c21)`; the loss there is zero.
pub const C_STAR: [f64; 4] = [1.0, -2.0, 1.0, -1.0];

const W1: [[f64; 4]; 4] = [
    [1.0, 0.0, -1.0, 1.0],
    [0.0, 1.0, 1.0, 1.0],
    [-1.0, 0.0, 1.0, -1.0],
    [-2.0, 1.0, -1.0, 0.0],
];
const W2: [[f64; 4]; 4] = [
    [1.0, -1.0, 0.0, 2.0],
    [2.0, 1.0, 1.0, 0.0],
    [1.0, 1.0, 1.0, 2.0],
    [0.0, 1.0, 1.0, 1.0],
];
const W3: [[f64; 4]; 4] = [
    [1.0, 1.0, 0.0, 1.0],
    [-2.0, -1.0, 1.0, 1.0],
    [1.0, 0.0, 1.0, 1.0],
    [-1.0, 0.0, -2.0, 1.0],
];

fn matrix(rows: &[[f64; 4]; 4]) -> DMatrix<f64> {
    DMatrix::from_fn(4, 4, |r, c| rows[r][c])
}

pub fn network() -> NetworkSpec {
    NetworkSpec::new(
        vec![4, 4, 4, 4],
        vec![2, 1],
        vec![matrix(&W1), matrix(&W2), matrix(&W3)],
    )
    .expect("fixture network is well formed")
}

pub fn training_set() -> TrainingSet {
    TrainingSet::new(vec![
        Sample {
            x: vec![2.0, 1.0, 0.0, -1.0],
            y: vec![66.0, -22.0, 106.0, -104.0],
        },
        Sample {
            x: vec![-1.0, 1.0, 1.0, 1.0],
            y: vec![38.0, 30.0, 46.0, -33.0],
        },
    ])
    .expect("fixture data is well formed")
}
