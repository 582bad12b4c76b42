//! Small dense linear-algebra helpers shared by the layer modules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Deterministic generator used everywhere a seed is accepted.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Singular values in descending order.
pub fn singular_values_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// True when the matrix has full column rank, judged by the smallest singular
/// value relative to the largest.
pub fn has_full_column_rank(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if m.ncols() == 0 {
        return true;
    }
    if m.nrows() < m.ncols() {
        return false;
    }
    let sv = singular_values_desc(m);
    let largest = sv[0];
    if !(largest > 0.0) || !largest.is_finite() {
        return false;
    }
    sv[m.ncols() - 1] > rel_tol * largest
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_vector(rng: &mut impl Rng, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Random `rows x cols` matrix with orthonormal columns (`rows >= cols`).
pub fn random_orthonormal_columns(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    assert!(rows >= cols);
    loop {
        let g = gaussian_matrix(rng, rows, cols, 1.0);
        let qr = g.clone().qr();
        let r = qr.r();
        if (0..cols).all(|i| r[(i, i)].abs() > 1e-8) {
            let mut q = qr.q();
            // fix signs so the result is a deterministic function of g
            for j in 0..cols {
                if r[(j, j)] < 0.0 {
                    let mut col = q.column_mut(j);
                    col *= -1.0;
                }
            }
            return q;
        }
    }
}

/// Random square matrix whose condition number is at most `max_cond`.
pub fn random_well_conditioned(rng: &mut impl Rng, n: usize, max_cond: f64) -> DMatrix<f64> {
    loop {
        let b = gaussian_matrix(rng, n, n, 1.0);
        let sv = singular_values_desc(&b);
        let smallest = sv[n - 1];
        if smallest > 0.0 && sv[0] / smallest <= max_cond {
            return b;
        }
    }
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Packs points (all of equal length) as the columns of a matrix.
pub fn columns_to_matrix(points: &[DVector<f64>]) -> DMatrix<f64> {
    let dim = points.first().map_or(0, |p| p.len());
    DMatrix::from_fn(dim, points.len(), |i, j| points[j][i])
}

pub fn matrix_to_columns(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    m.column_iter().map(|c| c.into_owned()).collect()
}

/// Row-major serde representation of a dense matrix.
pub mod serde_matrix {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Repr { rows: m.nrows(), cols: m.ncols(), data }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let r = Repr::deserialize(d)?;
        if r.data.len() != r.rows * r.cols {
            return Err(serde::de::Error::custom(format!(
                "matrix data has {} entries, expected {}x{}",
                r.data.len(),
                r.rows,
                r.cols
            )));
        }
        Ok(DMatrix::from_row_slice(r.rows, r.cols, &r.data))
    }
}

pub mod serde_vector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        let data = Vec::<f64>::deserialize(d)?;
        Ok(DVector::from_vec(data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_columns_are_orthonormal() {
        let mut rng = seeded_rng(3);
        let q = random_orthonormal_columns(&mut rng, 5, 3);
        let gram = q.transpose() * &q;
        assert!((gram - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn rank_check() {
        let w = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        assert!(has_full_column_rank(&w, 1e-10));
        let z = DMatrix::from_row_slice(2, 1, &[0.0, 0.0]);
        assert!(!has_full_column_rank(&z, 1e-10));
        let dup = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(!has_full_column_rank(&dup, 1e-10));
    }
}
