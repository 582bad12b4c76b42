//! Embedding-gap bounds and Wasserstein-2 distances on point clouds.

mod gap;
mod ot;

pub use gap::{
    embedding_gap_upper, estimate_embedding_gap, fit_candidate_alignment, wasserstein_bound_check, BoundCheck,
    Candidate, CandidateFamily, EmbeddingGapEstimate, EmbeddingMap, FnMap,
};
pub use ot::{
    assignment_cost, slice_directions, wasserstein1d_squared, wasserstein2, wasserstein2_exact, wasserstein2_sliced, W2Method,
    DEFAULT_SLICES, EXACT_BUDGET, REFINEMENT_CAP,
};

use nalgebra::DVector;

use crate::error::{invalid_arg, Result};
use crate::linalg::dist2;

/// Weighted point cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(points: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid_arg("measure needs at least one point"));
        }
        if points.len() != weights.len() {
            return Err(invalid_arg("points and weights differ in length"));
        }
        let dim = points[0].len();
        if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
            return Err(invalid_arg("points must be finite and of equal dimension"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(invalid_arg("weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid_arg(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { points, weights })
    }

    pub fn uniform(points: Vec<DVector<f64>>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(invalid_arg("measure needs at least one point"));
        }
        Self::new(points, vec![1.0 / n as f64; n])
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|&v| (v - w).abs() <= 1e-15)
    }
}

/// `max_{p in F} min_{q in G} |p - q|`.
pub fn directed_supinf(f: &[DVector<f64>], g: &[DVector<f64>]) -> Result<f64> {
    if f.is_empty() || g.is_empty() {
        return Err(invalid_arg("directed sup-inf needs non-empty point sets"));
    }
    let dim = f[0].len();
    if f.iter().chain(g).any(|p| p.len() != dim) {
        return Err(invalid_arg("point sets must share one ambient dimension"));
    }
    let worst = f
        .iter()
        .map(|p| g.iter().map(|q| dist2(p.as_slice(), q.as_slice())).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    Ok(worst.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(rows: &[&[f64]]) -> Vec<DVector<f64>> {
        rows.iter().map(|r| DVector::from_row_slice(r)).collect()
    }

    #[test]
    fn supinf_examples() {
        let a = pts(&[&[0.0, 1.0], &[2.0, 3.0]]);
        assert_eq!(directed_supinf(&a, &a).unwrap(), 0.0);
        assert_eq!(directed_supinf(&pts(&[&[0.0, 0.0]]), &pts(&[&[3.0, 4.0]])).unwrap(), 5.0);
        assert_eq!(directed_supinf(&pts(&[&[0.0, 0.0], &[1.0, 0.0]]), &pts(&[&[0.0, 0.0]])).unwrap(), 1.0);
        assert!(directed_supinf(&[], &a).is_err());
        assert!(directed_supinf(&pts(&[&[0.0]]), &a).is_err());
    }

    #[test]
    fn measure_validation() {
        assert!(EmpiricalMeasure::new(pts(&[&[0.0]]), vec![0.5]).is_err());
        assert!(EmpiricalMeasure::new(pts(&[&[0.0], &[1.0]]), vec![1.5, -0.5]).is_err());
        let m = EmpiricalMeasure::uniform(pts(&[&[0.0], &[1.0], &[2.0]])).unwrap();
        assert!(m.is_uniform());
        assert_eq!(m.dim(), 1);
    }
}
