//! Brute-force reference minimizer of `‖y - ReLU([B; -DB] x)‖₂`.
//!
//! Works directly in `x`-space. Each sign pattern of `Bx` fixes which output
//! rows are active, turning the objective into a strictly convex quadratic on a
//! polyhedral cone. Every face of every cone is visited by forcing a subset of
//! the rows of `Bx` to zero and solving the equality-constrained least-squares
//! problem through an orthonormal null-space basis. The global minimizer lies in
//! the relative interior of some face, so it is among the candidates.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid_arg, Result};

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub min_residual: f64,
    /// Distinct minimizers, clustered at `1e-6`.
    pub minimizers: Vec<DVector<f64>>,
    pub candidates_checked: usize,
}

fn objective(b: &DMatrix<f64>, d: &DVector<f64>, y: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let n = b.nrows();
    let z = b * x;
    let mut acc = 0.0;
    for i in 0..n {
        acc += (z[i].max(0.0) - y[i]).powi(2);
        acc += ((-d[i] * z[i]).max(0.0) - y[i + n]).powi(2);
    }
    acc.sqrt()
}

/// Null-space basis of the rows of `c` (columns of the result).
fn null_space(c: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if c.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let mut padded = DMatrix::zeros(n, n);
    padded.rows_mut(0, c.nrows()).copy_from(c);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let scale = svd.singular_values.max().max(1.0);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&k| svd.singular_values[k] <= 1e-12 * scale)
        .map(|k| v_t.row(k).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

pub fn relu_projection_oracle(b: &DMatrix<f64>, d: &DVector<f64>, y: &DVector<f64>) -> Result<OracleResult> {
    let n = b.ncols();
    if b.nrows() != n || d.len() != n || y.len() != 2 * n {
        return Err(invalid_arg("oracle needs n x n B, n-vector D and 2n-vector y"));
    }
    if n > 12 {
        return Err(invalid_arg("oracle enumeration is limited to n <= 12"));
    }
    let mut candidates: Vec<(f64, DVector<f64>)> = Vec::new();
    for signs in 0u32..(1 << n) {
        // design rows of the quadratic on this cone: active row i contributes
        // (Bx)_i - y_i when positive, -d_i (Bx)_i - y_{i+n} when negative
        let mut a = DMatrix::zeros(n, n);
        let mut h = DVector::zeros(n);
        let mut fixed = DVector::zeros(n);
        for i in 0..n {
            if signs & (1 << i) != 0 {
                a.set_row(i, &b.row(i));
                h[i] = y[i];
                fixed[i] = y[i + n];
            } else {
                a.set_row(i, &(b.row(i) * -d[i]));
                h[i] = y[i + n];
                fixed[i] = y[i];
            }
        }
        for zeros in 0u32..(1 << n) {
            let rows: Vec<usize> = (0..n).filter(|i| zeros & (1 << i) != 0).collect();
            let c = DMatrix::from_fn(rows.len(), n, |r, j| b[(rows[r], j)]);
            let basis = null_space(&c, n);
            let x = if basis.ncols() == 0 {
                DVector::zeros(n)
            } else {
                let an = &a * &basis;
                let u = an.clone().svd(true, true).solve(&h, 1e-14).expect("SVD with U and V");
                &basis * u
            };
            let value = objective(b, d, y, &x);
            candidates.push((value, x));
        }
    }
    let min_residual = candidates.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * min_residual.max(1.0);
    let mut minimizers: Vec<DVector<f64>> = Vec::new();
    for (v, x) in &candidates {
        if *v <= min_residual + tol && minimizers.iter().all(|m| (m - x).norm() > 1e-6) {
            minimizers.push(x.clone());
        }
    }
    Ok(OracleResult { min_residual, minimizers, candidates_checked: candidates.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_tie_has_two_minimizers() {
        let b = DMatrix::from_element(1, 1, 1.0);
        let d = DVector::from_element(1, 1.0);
        let r = relu_projection_oracle(&b, &d, &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert_eq!(r.minimizers.len(), 2);
        assert!((r.min_residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_query_minimizer_is_origin() {
        let b = DMatrix::from_element(1, 1, 1.0);
        let d = DVector::from_element(1, 1.0);
        let r = relu_projection_oracle(&b, &d, &DVector::from_vec(vec![-1.0, -2.0])).unwrap();
        assert_eq!(r.minimizers.len(), 1);
        assert!(r.minimizers[0][0].abs() < 1e-12);
        assert!((r.min_residual - 5f64.sqrt()).abs() < 1e-12);
    }
}
