// SPDX-License-Identifier: Apache-2.0

//! Dense matrix exponential by scaling and squaring of a truncated Taylor series.

use nalgebra::DMatrix;

fn norm_1(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `exp(a)`. The argument is scaled to 1-norm at most 1/2, where the Taylor
/// remainder after the stopping term is below one ulp.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let dim = a.nrows();
    let norm = norm_1(a);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);
    let mut result = DMatrix::<f64>::identity(dim, dim);
    let mut term = DMatrix::<f64>::identity(dim, dim);
    for k in 1..=40 {
        term = &term * &scaled / k as f64;
        result += &term;
        if norm_1(&term) <= f64::EPSILON * 1e-3 * norm_1(&result) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}
