//! Output-space losses with gradients, and the reverse pass through a network.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid_arg, Error, Result};
use crate::network::InjectiveNetwork;

/// Loss comparing network outputs (columns) with target points (columns).
#[derive(Clone, Debug)]
pub enum Loss {
    /// Symmetric mean-squared Chamfer distance between the two point sets.
    Manifold,
    /// Sliced squared W2 over the given unit directions, scaled by the ambient
    /// dimension; batches must have equal size.
    Density(Vec<DVector<f64>>),
    /// `Σ_j ‖E(x_j) - y_j‖²` for paired columns.
    Paired,
}

fn check_batches(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<()> {
    if pred.ncols() == 0 || target.ncols() == 0 {
        return Err(invalid_arg("loss needs non-empty batches"));
    }
    if pred.nrows() != target.nrows() {
        return Err(invalid_arg("prediction and target dimensions differ"));
    }
    Ok(())
}

fn nearest(from: &DMatrix<f64>, j: usize, to: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    let col = from.column(j);
    for k in 0..to.ncols() {
        let d2 = (col - to.column(k)).norm_squared();
        if d2 < best.1 {
            best = (k, d2);
        }
    }
    best
}

/// `mean_t min_p ‖t - p‖² + mean_p min_t ‖p - t‖²` and its gradient in `pred`.
pub fn chamfer(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    check_batches(pred, target)?;
    let (np, nt) = (pred.ncols() as f64, target.ncols() as f64);
    let mut grad = DMatrix::zeros(pred.nrows(), pred.ncols());
    let mut loss = 0.0;
    for j in 0..pred.ncols() {
        let (k, d2) = nearest(pred, j, target);
        loss += d2 / np;
        let g = (pred.column(j) - target.column(k)) * (2.0 / np);
        let mut gc = grad.column_mut(j);
        gc += g;
    }
    for k in 0..target.ncols() {
        let (j, d2) = nearest(target, k, pred);
        loss += d2 / nt;
        let g = (pred.column(j) - target.column(k)) * (2.0 / nt);
        let mut gc = grad.column_mut(j);
        gc += g;
    }
    Ok((loss, grad))
}

/// `(d / K) Σ_θ mean_i (θ·p_(i) - θ·t_(i))²` with order statistics matched.
pub fn sliced_w2_squared(
    pred: &DMatrix<f64>,
    target: &DMatrix<f64>,
    directions: &[DVector<f64>],
) -> Result<(f64, DMatrix<f64>)> {
    check_batches(pred, target)?;
    if pred.ncols() != target.ncols() {
        return Err(invalid_arg("sliced loss needs equal batch sizes"));
    }
    if directions.is_empty() {
        return Err(invalid_arg("sliced loss needs at least one direction"));
    }
    let n = pred.ncols();
    let dim = pred.nrows() as f64;
    let scale = dim / (directions.len() as f64 * n as f64);
    let mut grad = DMatrix::zeros(pred.nrows(), n);
    let mut loss = 0.0;
    for theta in directions {
        let pp: Vec<f64> = (0..n).map(|j| pred.column(j).dot(theta)).collect();
        let tp: Vec<f64> = (0..n).map(|j| target.column(j).dot(theta)).collect();
        let mut ip: Vec<usize> = (0..n).collect();
        let mut it: Vec<usize> = (0..n).collect();
        ip.sort_by(|&a, &b| pp[a].total_cmp(&pp[b]));
        it.sort_by(|&a, &b| tp[a].total_cmp(&tp[b]));
        for (&a, &b) in ip.iter().zip(&it) {
            let diff = pp[a] - tp[b];
            loss += scale * diff * diff;
            let mut gc = grad.column_mut(a);
            gc.axpy(2.0 * scale * diff, theta, 1.0);
        }
    }
    Ok((loss, grad))
}

pub fn paired_squared(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    check_batches(pred, target)?;
    if pred.ncols() != target.ncols() {
        return Err(invalid_arg("paired loss needs equal batch sizes"));
    }
    let diff = pred - target;
    Ok((diff.norm_squared(), diff * 2.0))
}

impl Loss {
    pub fn evaluate(&self, pred: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        match self {
            Loss::Manifold => chamfer(pred, target),
            Loss::Density(dirs) => sliced_w2_squared(pred, target, dirs),
            Loss::Paired => paired_squared(pred, target),
        }
    }
}

/// Loss value and gradient over the full parameter vector; entries of frozen
/// stages stay zero.
#[derive(Clone, Debug)]
pub struct Gradient {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Forward pass, loss, and reverse pass restricted to `trainable` stages.
pub fn compute_gradients(
    net: &InjectiveNetwork,
    loss: &Loss,
    latent: &DMatrix<f64>,
    target: &DMatrix<f64>,
    trainable: &[bool],
) -> Result<Gradient> {
    if trainable.len() != net.stage_count() {
        return Err(invalid_arg("trainable mask length must equal the stage count"));
    }
    let (pred, cache) = net.forward_cached(latent)?;
    let (value, dpred) = loss.evaluate(&pred, target)?;
    if !value.is_finite() {
        return Err(Error::numeric("loss is not finite"));
    }
    let mut grad = vec![0.0; net.param_count()];
    net.backward(&cache, &dpred, &mut grad, trainable);
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        let name = net.param_names().swap_remove(i);
        return Err(Error::numeric(format!("non-finite gradient for {name}")));
    }
    Ok(Gradient { loss: value, grad })
}

/// Loss only, for finite-difference checks and evaluation.
pub fn loss_value(net: &InjectiveNetwork, loss: &Loss, latent: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<f64> {
    let pred = net.forward_batch(latent)?;
    Ok(loss.evaluate(&pred, target)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(rows: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(rows, data.len() / rows, data)
    }

    #[test]
    fn chamfer_examples() {
        let a = cols(2, &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(chamfer(&a, &a).unwrap().0, 0.0);
        let (v, _) = chamfer(&cols(2, &[0.0, 0.0]), &cols(2, &[3.0, 4.0])).unwrap();
        assert_eq!(v, 50.0);
        assert!(chamfer(&DMatrix::zeros(2, 0), &a).is_err());
    }

    #[test]
    fn sliced_translation_in_one_dimension() {
        let a = cols(1, &[0.0, 0.3, 1.1, -0.4]);
        let b = a.map(|v| v + 0.7);
        let dirs = vec![DVector::from_element(1, 1.0)];
        let (v, _) = sliced_w2_squared(&a, &b, &dirs).unwrap();
        assert!((v - 0.49).abs() < 1e-12);
        assert_eq!(sliced_w2_squared(&a, &a, &dirs).unwrap().0, 0.0);
    }

    #[test]
    fn output_gradients_match_differences() {
        let pred = cols(2, &[0.1, 0.5, -0.3, 0.8, 1.2, -0.7]);
        let target = cols(2, &[0.0, 0.4, -0.2, 1.0, 0.9, -0.5]);
        let dirs = crate::metrics::slice_directions(2, 6, 3);
        for loss in [Loss::Manifold, Loss::Density(dirs), Loss::Paired] {
            let (_, g) = loss.evaluate(&pred, &target).unwrap();
            for i in 0..pred.len() {
                let h = 1e-6;
                let mut p = pred.clone();
                p[i] += h;
                let up = loss.evaluate(&p, &target).unwrap().0;
                p[i] -= 2.0 * h;
                let down = loss.evaluate(&p, &target).unwrap().0;
                assert!(((up - down) / (2.0 * h) - g[i]).abs() < 1e-6);
            }
        }
    }
}
