//! Built-in plants of the three reference examples.

use crate::linalg::Mat;
use crate::lpv::{AffineMatrixFunction, LpvSystem};

fn afn(base: Mat, coeffs: Vec<Mat>) -> AffineMatrixFunction {
    AffineMatrixFunction::new(base, coeffs).expect("built-in matrices are consistent")
}

/// Two states, one input, two scheduling parameters, full state output.
pub fn example1_system() -> LpvSystem {
    let a0 = Mat::from_row_slice(2, 2, &[0.2485, -1.0355, 0.8910, 0.4065]);
    let a1 = Mat::from_row_slice(2, 2, &[-0.0063, -0.0938, 0.0, 0.0188]);
    let b0 = Mat::from_row_slice(2, 1, &[0.3190, -1.3080]);
    let b1 = Mat::from_row_slice(2, 1, &[0.3, 1.4]);
    LpvSystem::state_output(afn(a0, vec![a1.clone(), a1]), afn(b0, vec![b1, Mat::zeros(2, 1)]))
        .expect("built-in matrices are consistent")
}

/// Scalar plant with one input, one output and one scheduling parameter.
pub fn example2_plant() -> LpvSystem {
    let s = |v: f64| Mat::from_element(1, 1, v);
    LpvSystem::new(
        afn(s(0.3023), vec![s(0.5469)]),
        afn(s(0.9902), vec![s(0.6914)]),
        afn(s(0.1885), vec![s(0.0997)]),
        afn(s(0.9672), vec![s(0.0470)]),
    )
    .expect("built-in matrices are consistent")
}

/// Scalar state, two inputs, two outputs, one scheduling parameter.
pub fn example3_plant() -> LpvSystem {
    LpvSystem::new(
        afn(Mat::from_element(1, 1, 0.5387), vec![Mat::from_element(1, 1, 0.8871)]),
        afn(Mat::from_row_slice(1, 2, &[0.5450, 0.2260]), vec![Mat::from_row_slice(1, 2, &[0.5289, 0.2227])]),
        afn(Mat::from_row_slice(2, 1, &[0.2466, 0.3765]), vec![Mat::from_row_slice(2, 1, &[0.8401, 0.8190])]),
        afn(
            Mat::from_row_slice(2, 2, &[0.6290, 0.0160, 0.9022, 0.9636]),
            vec![Mat::from_row_slice(2, 2, &[0.2676, 0.8512, 0.7303, 0.4969])],
        ),
    )
    .expect("built-in matrices are consistent")
}
