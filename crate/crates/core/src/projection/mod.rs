//! Layer-wise projection onto the range of an injective network.
//!
//! Flow blocks are inverted exactly. Linear expansive layers use the normal
//! equations and `[B; -DB]` ReLU layers use a closed-form least-squares
//! preimage selected by the sign pattern of `y`. The composed projection is
//! idempotent but in general not orthogonal.

pub mod oracle;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{invalid_arg, Error, Result};
use crate::expansive::{ExpansiveLayer, RANK_TOLERANCE};
use crate::geometry::CompactSampleSet;
use crate::linalg::has_full_column_rank;
use crate::network::{InjectiveNetwork, Stage};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectionResult {
    pub x: DVector<f64>,
    pub y_hat: DVector<f64>,
    pub residual: f64,
    pub tie_flag: bool,
}

/// Intermediate quantities of the ReLU pseudo-inverse for one query.
#[derive(Clone, Debug, PartialEq)]
pub struct ReluProjectionWorkspace {
    /// `max([I -I; -I I] y, 0)`.
    pub c: DVector<f64>,
    /// Diagonal of `Δ_y`: true where `c_{i+n} > 0`.
    pub delta: Vec<bool>,
    /// `[(I - Δ_y), Δ_y]`.
    pub m_y: DMatrix<f64>,
    /// Indices `i` with `y_i = y_{i+n} > 0`, where two preimages tie.
    pub tie_indices: Vec<usize>,
}

fn is_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(1.0)
}

pub fn relu_workspace(y: &DVector<f64>) -> Result<ReluProjectionWorkspace> {
    if !y.len().is_multiple_of(2) || y.is_empty() {
        return Err(invalid_arg("query must have even dimension 2n"));
    }
    let n = y.len() / 2;
    let mut c = DVector::zeros(2 * n);
    let mut delta = vec![false; n];
    let mut m_y = DMatrix::zeros(n, 2 * n);
    let mut tie_indices = Vec::new();
    for i in 0..n {
        c[i] = (y[i] - y[i + n]).max(0.0);
        c[i + n] = (y[i + n] - y[i]).max(0.0);
        delta[i] = c[i + n] > 0.0;
        if delta[i] {
            m_y[(i, i + n)] = 1.0;
        } else {
            m_y[(i, i)] = 1.0;
        }
        // a pair with y_i = y_{i+n} <= 0 is best matched by (Bx)_i = 0 alone
        if is_tie(y[i], y[i + n]) && y[i].max(y[i + n]) > 0.0 {
            tie_indices.push(i);
        }
    }
    Ok(ReluProjectionWorkspace { c, delta, m_y, tie_indices })
}

/// Bit pattern of `Δ_y`, one character per coordinate pair.
pub fn delta_pattern(delta: &[bool]) -> String {
    delta.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn relu_weight(b: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    crate::expansive::assemble_relu_weight(b, d, &DMatrix::zeros(0, b.ncols()))
}

fn check_relu_args(b: &DMatrix<f64>, d: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
    let n = b.ncols();
    if b.nrows() != n || d.len() != n {
        return Err(invalid_arg("B must be n x n and D must have n entries"));
    }
    if y.len() != 2 * n {
        return Err(invalid_arg(format!("query has dimension {}, expected {}", y.len(), 2 * n)));
    }
    Ok(())
}

/// Least-squares preimage of `y` under `x ↦ ReLU([B; -DB] x)`.
///
/// Solves `(M_y W) x = M_y max(y, 0)`. Clipping the right-hand side at zero
/// changes nothing on the nonnegative orthant (which holds the range) and keeps
/// the result optimal for queries with negative entries.
pub fn relu_pseudo_inverse(b: &DMatrix<f64>, d: &DVector<f64>, y: &DVector<f64>) -> Result<ProjectionResult> {
    check_relu_args(b, d, y)?;
    let ws = relu_workspace(y)?;
    let w = relu_weight(b, d);
    let lhs = &ws.m_y * &w;
    let rhs = &ws.m_y * y.map(|v| v.max(0.0));
    let x = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Internal("M_y W is singular although B is invertible and D positive".into()))?;
    let y_hat = (&w * &x).map(|v| v.max(0.0));
    let residual = (y - &y_hat).norm();
    Ok(ProjectionResult { x, y_hat, residual, tie_flag: !ws.tie_indices.is_empty() })
}

/// `x = (WᵀW)⁻¹ Wᵀ y`.
pub fn linear_pseudo_inverse(w: &DMatrix<f64>, y: &DVector<f64>) -> Result<ProjectionResult> {
    if y.len() != w.nrows() {
        return Err(invalid_arg(format!("query has dimension {}, expected {}", y.len(), w.nrows())));
    }
    if !has_full_column_rank(w, RANK_TOLERANCE) {
        return Err(Error::InvalidLayer("linear layer is rank deficient".into()));
    }
    let gram = w.transpose() * w;
    let rhs = w.transpose() * y;
    let x = gram
        .cholesky()
        .ok_or_else(|| Error::InvalidLayer("normal equations are not positive definite".into()))?
        .solve(&rhs);
    let y_hat = w * &x;
    let residual = (y - &y_hat).norm();
    Ok(ProjectionResult { x, y_hat, residual, tie_flag: false })
}

fn expansive_pseudo_inverse(layer: &ExpansiveLayer, y: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    match layer {
        ExpansiveLayer::ZeroPad { n, m } => {
            if y.len() != *m {
                return Err(invalid_arg("query dimension mismatch"));
            }
            Ok((y.rows(0, *n).into_owned(), false))
        }
        ExpansiveLayer::Linear { weight, .. } => linear_pseudo_inverse(weight, y).map(|r| (r.x, false)),
        ExpansiveLayer::InjectiveRelu { b, d, extra, .. } if extra.nrows() == 0 => {
            relu_pseudo_inverse(b, d, y).map(|r| (r.x, r.tie_flag))
        }
        ExpansiveLayer::InjectiveRelu { .. } => Err(Error::UnsupportedLayer(
            "ReLU layers with extra rows (m > 2n) have no closed-form projection".into(),
        )),
        ExpansiveLayer::InjectiveReluNetwork { .. } => {
            Err(Error::UnsupportedLayer("projection through multi-layer ReLU networks".into()))
        }
    }
}

/// True when every expansive stage admits a closed-form pseudo-inverse.
pub fn supports_projection(net: &InjectiveNetwork) -> bool {
    net.stages().iter().all(|s| match s {
        Stage::Flow(_) => true,
        Stage::Expansive(ExpansiveLayer::ZeroPad { .. } | ExpansiveLayer::Linear { .. }) => true,
        Stage::Expansive(ExpansiveLayer::InjectiveRelu { extra, .. }) => extra.nrows() == 0,
        Stage::Expansive(_) => false,
    })
}

/// Inverts the stages back to front and returns the preimage together with
/// its image under the network.
pub fn project_to_range(net: &InjectiveNetwork, y: &DVector<f64>) -> Result<ProjectionResult> {
    if y.len() != net.out_dim() {
        return Err(invalid_arg(format!("query has dimension {}, network outputs {}", y.len(), net.out_dim())));
    }
    let mut h = y.clone();
    let mut tie = false;
    for (k, stage) in net.stages().iter().enumerate().rev() {
        h = match stage {
            Stage::Flow(block) => {
                let m = block.inverse_batch(&DMatrix::from_column_slice(h.len(), 1, h.as_slice()));
                DVector::from_column_slice(m.map_err(|e| e.at_stage(k))?.as_slice())
            }
            Stage::Expansive(layer) => {
                let (x, t) = expansive_pseudo_inverse(layer, &h).map_err(|e| e.at_stage(k))?;
                tie |= t;
                x
            }
        };
    }
    let y_hat = DVector::from_vec(net.forward(h.as_slice())?);
    let residual = (y - &y_hat).norm();
    Ok(ProjectionResult { x: h, y_hat, residual, tie_flag: tie })
}

/// Labels every `2n`-dimensional grid point with the bit pattern of `Δ_y`.
pub fn map_projection_regions(b: &DMatrix<f64>, d: &DVector<f64>, grid: &CompactSampleSet) -> Result<Vec<String>> {
    let n = b.ncols();
    if grid.dim() != 2 * n || b.nrows() != n || d.len() != n {
        return Err(invalid_arg("grid must be 2n-dimensional for an n x n B"));
    }
    grid.points().iter().map(|y| relu_workspace(y).map(|ws| delta_pattern(&ws.delta))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::FlowBlock;
    use crate::geometry::{sample_box, SamplingLaw};

    fn one(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn relu_examples() {
        let (b, d) = (one(1.0), dv(&[1.0]));
        let r = relu_pseudo_inverse(&b, &d, &dv(&[2.0, 0.5])).unwrap();
        assert_eq!((r.x[0], r.residual, r.tie_flag), (2.0, 0.5, false));
        let r = relu_pseudo_inverse(&b, &d, &dv(&[0.5, 2.0])).unwrap();
        assert_eq!((r.x[0], r.residual, r.tie_flag), (-2.0, 0.5, false));
        let r = relu_pseudo_inverse(&b, &d, &dv(&[1.0, 1.0])).unwrap();
        assert_eq!((r.x[0], r.residual, r.tie_flag), (1.0, 1.0, true));
        let other = (dv(&[1.0, 1.0]) - dv(&[0.0, 1.0])).norm();
        assert_eq!(other, r.residual);
    }

    #[test]
    fn negative_queries_project_to_origin() {
        let r = relu_pseudo_inverse(&one(1.0), &dv(&[1.0]), &dv(&[-1.0, -2.0])).unwrap();
        assert_eq!(r.x[0], 0.0);
        assert!((r.residual - 5f64.sqrt()).abs() < 1e-15);
        assert!(!r.tie_flag);
    }

    #[test]
    fn linear_examples() {
        let pad = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let r = linear_pseudo_inverse(&pad, &dv(&[3.0, 4.0])).unwrap();
        assert_eq!((r.x[0], r.residual), (3.0, 4.0));
        let w = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let r = linear_pseudo_inverse(&w, &dv(&[1.0, 3.0])).unwrap();
        assert!((r.x[0] - 2.0).abs() < 1e-15 && (r.residual - 2f64.sqrt()).abs() < 1e-15);
        // grid search over x agrees with the normal equations
        let best = (0..=4000)
            .map(|k| -2.0 + k as f64 * 1e-3)
            .min_by(|a, b| {
                let f = |x: f64| (1.0 - x).powi(2) + (3.0 - x).powi(2);
                f(*a).total_cmp(&f(*b))
            })
            .unwrap();
        assert!((best - 2.0).abs() < 1e-9);
        let r = linear_pseudo_inverse(&pad, &dv(&[5.0, 0.0])).unwrap();
        assert_eq!((r.x[0], r.residual), (5.0, 0.0));
        assert!(matches!(
            linear_pseudo_inverse(&DMatrix::zeros(2, 1), &dv(&[1.0, 1.0])),
            Err(Error::InvalidLayer(_))
        ));
    }

    #[test]
    fn zero_pad_network_projection() {
        let net = InjectiveNetwork::new(
            FlowBlock::identity(1),
            vec![(ExpansiveLayer::zero_pad(1, 2).unwrap(), FlowBlock::identity(2))],
        )
        .unwrap();
        let r = project_to_range(&net, &dv(&[3.0, 4.0])).unwrap();
        assert_eq!(r.y_hat.as_slice(), &[3.0, 0.0]);
        assert_eq!(r.residual, 4.0);
    }

    #[test]
    fn unsupported_layers_are_rejected() {
        let mut rng = crate::linalg::seeded_rng(1);
        let relu = ExpansiveLayer::random_injective_relu(&mut rng, 1, 3).unwrap();
        let net = InjectiveNetwork::new(FlowBlock::identity(1), vec![(relu, FlowBlock::identity(3))]).unwrap();
        assert!(!supports_projection(&net));
        assert!(matches!(project_to_range(&net, &dv(&[1.0, 0.0, 0.0])), Err(Error::UnsupportedLayer(_))));
    }

    #[test]
    fn region_labels_split_along_diagonal() {
        let (b, d) = (one(1.0), dv(&[1.0]));
        let pts = CompactSampleSet::from_rows(&[vec![2.0, 0.5], vec![0.5, 2.0]], "manual").unwrap();
        assert_eq!(map_projection_regions(&b, &d, &pts).unwrap(), vec!["0", "1"]);
        let ws = relu_workspace(&dv(&[1.0, 1.0])).unwrap();
        assert_eq!(ws.tie_indices, vec![0]);
        let grid = sample_box(&[-2.0, -2.0], &[2.0, 2.0], 10_000, SamplingLaw::Grid).unwrap();
        let labels = map_projection_regions(&b, &d, &grid).unwrap();
        for (p, l) in grid.points().iter().zip(&labels) {
            assert_eq!(l == "1", p[1] > p[0]);
        }
    }
}
