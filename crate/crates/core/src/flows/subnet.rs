//! Conditioner networks used inside the flow layers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{gaussian_matrix, serde_matrix, serde_vector, spectral_norm};

/// Default hidden width of conditioner MLPs.
pub const DEFAULT_HIDDEN_WIDTH: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    #[serde(with = "serde_matrix")]
    pub weight: DMatrix<f64>,
    #[serde(with = "serde_vector")]
    pub bias: DVector<f64>,
}

impl Dense {
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.weight * x;
        for mut col in z.column_iter_mut() {
            col += &self.bias;
        }
        z
    }

    fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// A map `R^k → R^d`: either a tanh MLP or a plain affine map.
///
/// The affine form covers the zero, constant and linear conditioners used in
/// analytic tests and hand-built networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Subnet {
    /// `tanh` between consecutive layers, linear output.
    Mlp { layers: Vec<Dense> },
    Affine {
        #[serde(with = "serde_matrix")]
        weight: DMatrix<f64>,
        #[serde(with = "serde_vector")]
        bias: DVector<f64>,
    },
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct SubnetCache {
    input: DMatrix<f64>,
    hidden: Vec<DMatrix<f64>>,
}

impl Subnet {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Subnet::Affine { weight: DMatrix::zeros(out_dim, in_dim), bias: DVector::zeros(out_dim) }
    }

    pub fn constant(in_dim: usize, value: &[f64]) -> Self {
        Subnet::Affine {
            weight: DMatrix::zeros(value.len(), in_dim),
            bias: DVector::from_column_slice(value),
        }
    }

    pub fn affine(weight: DMatrix<f64>, bias: DVector<f64>) -> Self {
        assert_eq!(weight.nrows(), bias.len());
        Subnet::Affine { weight, bias }
    }

    /// MLP with `hidden_layers` tanh layers of width `width`. Hidden weights use
    /// Glorot scaling; the output layer is scaled by `output_scale` so that a
    /// small value starts the conditioner near zero.
    pub fn mlp(
        rng: &mut impl Rng,
        in_dim: usize,
        out_dim: usize,
        width: usize,
        hidden_layers: usize,
        output_scale: f64,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden_layers + 1);
        let mut fan_in = in_dim;
        for _ in 0..hidden_layers {
            let scale = (2.0 / (fan_in + width) as f64).sqrt();
            layers.push(Dense {
                weight: gaussian_matrix(rng, width, fan_in, scale),
                bias: DVector::zeros(width),
            });
            fan_in = width;
        }
        let scale = output_scale * (2.0 / (fan_in + out_dim) as f64).sqrt();
        layers.push(Dense {
            weight: gaussian_matrix(rng, out_dim, fan_in, scale),
            bias: DVector::zeros(out_dim),
        });
        Subnet::Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Subnet::Mlp { layers } => layers[0].weight.ncols(),
            Subnet::Affine { weight, .. } => weight.ncols(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Subnet::Mlp { layers } => layers.last().map_or(0, |l| l.weight.nrows()),
            Subnet::Affine { weight, .. } => weight.nrows(),
        }
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Subnet::Affine { weight, bias } => {
                let mut z = weight * x;
                for mut col in z.column_iter_mut() {
                    col += bias;
                }
                z
            }
            Subnet::Mlp { layers } => {
                let (last, hidden) = layers.split_last().expect("mlp has an output layer");
                let mut h = x.clone();
                for layer in hidden {
                    h = layer.apply(&h).map(f64::tanh);
                }
                last.apply(&h)
            }
        }
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, SubnetCache) {
        match self {
            Subnet::Affine { .. } => {
                (self.forward(x), SubnetCache { input: x.clone(), hidden: Vec::new() })
            }
            Subnet::Mlp { layers } => {
                let (last, hidden_layers) = layers.split_last().expect("mlp has an output layer");
                let mut hidden = Vec::with_capacity(hidden_layers.len());
                let mut h = x.clone();
                for layer in hidden_layers {
                    h = layer.apply(&h).map(f64::tanh);
                    hidden.push(h.clone());
                }
                let out = last.apply(&h);
                (out, SubnetCache { input: x.clone(), hidden })
            }
        }
    }

    /// Backpropagates `dout` (same shape as the output). Parameter gradients
    /// are accumulated into `grad` when given; returns the input gradient.
    pub fn backward(&self, cache: &SubnetCache, dout: &DMatrix<f64>, grad: Option<&mut [f64]>) -> DMatrix<f64> {
        match self {
            Subnet::Affine { weight, .. } => {
                if let Some(g) = grad {
                    accumulate_dense(g, dout, &cache.input);
                }
                weight.transpose() * dout
            }
            Subnet::Mlp { layers } => {
                let mut grad = grad;
                let mut offsets = Vec::with_capacity(layers.len());
                let mut off = 0;
                for l in layers {
                    offsets.push(off);
                    off += l.param_count();
                }
                let mut delta = dout.clone();
                for k in (0..layers.len()).rev() {
                    let layer_input = if k == 0 { &cache.input } else { &cache.hidden[k - 1] };
                    if let Some(g) = grad.as_deref_mut() {
                        let n = layers[k].param_count();
                        accumulate_dense(&mut g[offsets[k]..offsets[k] + n], &delta, layer_input);
                    }
                    let dinput = layers[k].weight.transpose() * &delta;
                    if k == 0 {
                        return dinput;
                    }
                    let h = &cache.hidden[k - 1];
                    delta = dinput.zip_map(h, |d, hv| d * (1.0 - hv * hv));
                }
                unreachable!("loop returns at the first layer")
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Subnet::Mlp { layers } => layers.iter().map(Dense::param_count).sum(),
            Subnet::Affine { weight, bias } => weight.len() + bias.len(),
        }
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        let mut push = |w: &DMatrix<f64>, b: &DVector<f64>| {
            for i in 0..w.nrows() {
                for j in 0..w.ncols() {
                    out.push(w[(i, j)]);
                }
            }
            out.extend(b.iter());
        };
        match self {
            Subnet::Mlp { layers } => layers.iter().for_each(|l| push(&l.weight, &l.bias)),
            Subnet::Affine { weight, bias } => push(weight, bias),
        }
    }

    /// Reads parameters in `write_params` order; returns how many were consumed.
    pub fn read_params(&mut self, src: &[f64]) -> usize {
        let mut pos = 0;
        let mut pull = |w: &mut DMatrix<f64>, b: &mut DVector<f64>| {
            for i in 0..w.nrows() {
                for j in 0..w.ncols() {
                    w[(i, j)] = src[pos];
                    pos += 1;
                }
            }
            for v in b.iter_mut() {
                *v = src[pos];
                pos += 1;
            }
        };
        match self {
            Subnet::Mlp { layers } => layers.iter_mut().for_each(|l| pull(&mut l.weight, &mut l.bias)),
            Subnet::Affine { weight, bias } => pull(weight, bias),
        }
        pos
    }

    pub fn param_names(&self, prefix: &str, out: &mut Vec<String>) {
        let mut names = |tag: String, w: &DMatrix<f64>, b: &DVector<f64>| {
            for i in 0..w.nrows() {
                for j in 0..w.ncols() {
                    out.push(format!("{prefix}/{tag}.weight[{i},{j}]"));
                }
            }
            for i in 0..b.len() {
                out.push(format!("{prefix}/{tag}.bias[{i}]"));
            }
        };
        match self {
            Subnet::Mlp { layers } => {
                for (k, l) in layers.iter().enumerate() {
                    names(format!("dense{k}"), &l.weight, &l.bias);
                }
            }
            Subnet::Affine { weight, bias } => names("affine".into(), weight, bias),
        }
    }

    /// Global Lipschitz constant bound (tanh is 1-Lipschitz).
    pub fn lipschitz(&self) -> f64 {
        match self {
            Subnet::Mlp { layers } => layers.iter().map(|l| spectral_norm(&l.weight)).product(),
            Subnet::Affine { weight, .. } => spectral_norm(weight),
        }
    }

    /// Bound on the output norm for inputs of norm at most `input_radius`.
    pub fn output_bound(&self, input_radius: f64) -> f64 {
        match self {
            Subnet::Affine { weight, bias } => spectral_norm(weight) * input_radius + bias.norm(),
            Subnet::Mlp { layers } => {
                let last = layers.last().expect("mlp has an output layer");
                if layers.len() == 1 {
                    return spectral_norm(&last.weight) * input_radius + last.bias.norm();
                }
                // hidden activations lie in [-1, 1]^width
                let width = last.weight.ncols() as f64;
                let through_tanh = spectral_norm(&last.weight) * width.sqrt() + last.bias.norm();
                let linear = self.lipschitz() * input_radius + self.forward(&DMatrix::zeros(self.in_dim(), 1)).norm();
                through_tanh.min(linear)
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        let mut p = Vec::new();
        self.write_params(&mut p);
        p.iter().all(|v| v.is_finite())
    }
}

fn accumulate_dense(grad: &mut [f64], delta: &DMatrix<f64>, input: &DMatrix<f64>) {
    let rows = delta.nrows();
    let cols = input.nrows();
    let dw = delta * input.transpose();
    for i in 0..rows {
        for j in 0..cols {
            grad[i * cols + j] += dw[(i, j)];
        }
    }
    for i in 0..rows {
        grad[rows * cols + i] += delta.row(i).sum();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::seeded_rng;

    #[test]
    fn params_round_trip() {
        let mut rng = seeded_rng(1);
        let net = Subnet::mlp(&mut rng, 2, 3, 5, 2, 1.0);
        let mut p = Vec::new();
        net.write_params(&mut p);
        assert_eq!(p.len(), net.param_count());
        let mut other = Subnet::mlp(&mut rng, 2, 3, 5, 2, 1.0);
        assert_eq!(other.read_params(&p), p.len());
        assert_eq!(other, net);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = seeded_rng(5);
        let net = Subnet::mlp(&mut rng, 3, 2, 4, 2, 1.0);
        let x = gaussian_matrix(&mut rng, 3, 6, 1.0);
        let dout = gaussian_matrix(&mut rng, 2, 6, 1.0);
        let loss = |n: &Subnet, x: &DMatrix<f64>| n.forward(x).component_mul(&dout).sum();
        let (_, cache) = net.forward_cached(&x);
        let mut grad = vec![0.0; net.param_count()];
        let dx = net.backward(&cache, &dout, Some(&mut grad));

        let mut p = Vec::new();
        net.write_params(&mut p);
        let h = 1e-6;
        for k in 0..p.len() {
            let mut plus = net.clone();
            let mut q = p.clone();
            q[k] += h;
            plus.read_params(&q);
            let mut minus = net.clone();
            q[k] -= 2.0 * h;
            minus.read_params(&q);
            let fd = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-7, "param {k}: {fd} vs {}", grad[k]);
        }
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                let mut xp = x.clone();
                xp[(i, j)] += h;
                let mut xm = x.clone();
                xm[(i, j)] -= h;
                let fd = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * h);
                assert!((fd - dx[(i, j)]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn output_bound_holds() {
        let mut rng = seeded_rng(9);
        let net = Subnet::mlp(&mut rng, 2, 2, 8, 2, 1.0);
        let x = gaussian_matrix(&mut rng, 2, 200, 1.0);
        let radius = x.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
        let bound = net.output_bound(radius);
        let y = net.forward(&x);
        assert!(y.column_iter().all(|c| c.norm() <= bound));
    }
}
