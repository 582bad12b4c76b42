//! Bijective flow layers with exact inverses and log-determinants.

mod autoregressive;
mod coupling;
mod subnet;

pub use autoregressive::{AutoregressiveCache, AutoregressiveLayer};
pub use coupling::{CouplingCache, CouplingLayer};
pub use subnet::{Dense, Subnet, SubnetCache, DEFAULT_HIDDEN_WIDTH};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};

/// Log-scales are clamped to `[-c, c]` with this `c` before exponentiation.
pub const DEFAULT_SCALE_CLAMP: f64 = 5.0;

pub(crate) fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(format!("non-finite values in {what}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowLayer {
    AffineCoupling(CouplingLayer),
    AffineAutoregressive(AutoregressiveLayer),
}

#[derive(Clone, Debug)]
pub enum FlowLayerCache {
    Coupling(CouplingCache),
    Autoregressive(AutoregressiveCache),
}

impl FlowLayer {
    pub fn dim(&self) -> usize {
        match self {
            FlowLayer::AffineCoupling(l) => l.dim(),
            FlowLayer::AffineAutoregressive(l) => l.dim(),
        }
    }

    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            FlowLayer::AffineCoupling(l) => l.forward_batch(x),
            FlowLayer::AffineAutoregressive(l) => l.forward_batch(x),
        }
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, FlowLayerCache)> {
        match self {
            FlowLayer::AffineCoupling(l) => l.forward_cached(x).map(|(y, c)| (y, FlowLayerCache::Coupling(c))),
            FlowLayer::AffineAutoregressive(l) => {
                l.forward_cached(x).map(|(y, c)| (y, FlowLayerCache::Autoregressive(c)))
            }
        }
    }

    pub fn inverse_batch(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            FlowLayer::AffineCoupling(l) => l.inverse_batch(y),
            FlowLayer::AffineAutoregressive(l) => l.inverse_batch(y),
        }
    }

    pub fn log_det_batch(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        match self {
            FlowLayer::AffineCoupling(l) => l.log_det_batch(x),
            FlowLayer::AffineAutoregressive(l) => l.log_det_batch(x),
        }
    }

    pub fn backward(&self, cache: &FlowLayerCache, dy: &DMatrix<f64>, grad: Option<&mut [f64]>) -> DMatrix<f64> {
        match (self, cache) {
            (FlowLayer::AffineCoupling(l), FlowLayerCache::Coupling(c)) => l.backward(c, dy, grad),
            (FlowLayer::AffineAutoregressive(l), FlowLayerCache::Autoregressive(c)) => l.backward(c, dy, grad),
            _ => panic!("flow cache does not belong to this layer kind"),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            FlowLayer::AffineCoupling(l) => l.param_count(),
            FlowLayer::AffineAutoregressive(l) => l.param_count(),
        }
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        match self {
            FlowLayer::AffineCoupling(l) => l.write_params(out),
            FlowLayer::AffineAutoregressive(l) => l.write_params(out),
        }
    }

    pub fn read_params(&mut self, src: &[f64]) -> usize {
        match self {
            FlowLayer::AffineCoupling(l) => l.read_params(src),
            FlowLayer::AffineAutoregressive(l) => l.read_params(src),
        }
    }

    pub fn param_names(&self, prefix: &str, out: &mut Vec<String>) {
        match self {
            FlowLayer::AffineCoupling(l) => l.param_names(&format!("{prefix}/coupling"), out),
            FlowLayer::AffineAutoregressive(l) => l.param_names(&format!("{prefix}/autoregressive"), out),
        }
    }

    pub fn lipschitz_bound(&self, radius: f64) -> (f64, f64) {
        match self {
            FlowLayer::AffineCoupling(l) => l.lipschitz_bound(radius),
            FlowLayer::AffineAutoregressive(l) => l.lipschitz_bound(radius),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            FlowLayer::AffineCoupling(l) => {
                // re-run the constructor checks on deserialized data
                CouplingLayer::new(
                    l.dim(),
                    l.split(),
                    l.permutation().to_vec(),
                    l.scale_net().clone(),
                    l.shift_net().clone(),
                )?;
                if !(l.scale_clamp() > 0.0) {
                    return Err(Error::InvalidLayer("scale clamp must be positive".into()));
                }
                l.validate()
            }
            FlowLayer::AffineAutoregressive(l) => {
                if !(l.scale_clamp() > 0.0) {
                    return Err(Error::InvalidLayer("scale clamp must be positive".into()));
                }
                l.validate()
            }
        }
    }
}

/// Ordered composition of flow layers of a common dimension. An empty block
/// is the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowBlock {
    dim: usize,
    layers: Vec<FlowLayer>,
}

impl FlowBlock {
    pub fn new(dim: usize, layers: Vec<FlowLayer>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid_arg("flow block needs dim >= 1"));
        }
        if let Some(l) = layers.iter().find(|l| l.dim() != dim) {
            return Err(invalid_arg(format!("layer of dim {} in block of dim {dim}", l.dim())));
        }
        Ok(Self { dim, layers })
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, layers: Vec::new() }
    }

    /// Stack of `count` layers with MLP conditioners near zero. Coupling layers
    /// alternate identity/reversal permutations; in one dimension affine
    /// autoregressive layers are used since a coupling needs `n ≥ 2`.
    pub fn random(rng: &mut impl Rng, dim: usize, count: usize, width: usize, output_scale: f64) -> Self {
        let layers = (0..count)
            .map(|k| {
                if dim == 1 {
                    FlowLayer::AffineAutoregressive(AutoregressiveLayer::random(rng, 1, width, output_scale))
                } else {
                    let layer = CouplingLayer::random(rng, dim, k % 2 == 1, width, output_scale)
                        .expect("dimension >= 2 admits a coupling");
                    FlowLayer::AffineCoupling(layer)
                }
            })
            .collect();
        Self { dim, layers }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> &[FlowLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [FlowLayer] {
        &mut self.layers
    }

    pub fn push(&mut self, layer: FlowLayer) -> Result<()> {
        if layer.dim() != self.dim {
            return Err(invalid_arg("layer dimension does not match block"));
        }
        self.layers.push(layer);
        Ok(())
    }

    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.forward_batch(&h)?;
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<FlowLayerCache>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for l in &self.layers {
            let (y, c) = l.forward_cached(&h)?;
            caches.push(c);
            h = y;
        }
        Ok((h, caches))
    }

    pub fn inverse_batch(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut h = y.clone();
        for l in self.layers.iter().rev() {
            h = l.inverse_batch(&h)?;
        }
        Ok(h)
    }

    /// Sum of per-layer log-determinants along the forward pass.
    pub fn log_det_batch(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let mut total = vec![0.0; x.ncols()];
        let mut h = x.clone();
        for l in &self.layers {
            for (t, v) in total.iter_mut().zip(l.log_det_batch(&h)?) {
                *t += v;
            }
            h = l.forward_batch(&h)?;
        }
        Ok(total)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(&DMatrix::from_column_slice(x.len(), 1, x))?.as_slice().to_vec())
    }

    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.inverse_batch(&DMatrix::from_column_slice(y.len(), 1, y))?.as_slice().to_vec())
    }

    pub fn log_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_det_batch(&DMatrix::from_column_slice(x.len(), 1, x))?[0])
    }

    pub fn backward(&self, caches: &[FlowLayerCache], dy: &DMatrix<f64>, grad: Option<&mut [f64]>) -> DMatrix<f64> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.param_count();
        }
        let mut grad = grad;
        let mut d = dy.clone();
        for (k, l) in self.layers.iter().enumerate().rev() {
            let g = grad.as_deref_mut().map(|g| &mut g[offsets[k]..offsets[k] + l.param_count()]);
            d = l.backward(&caches[k], &d, g);
        }
        d
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(FlowLayer::param_count).sum()
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        self.layers.iter().for_each(|l| l.write_params(out));
    }

    pub fn read_params(&mut self, src: &[f64]) -> usize {
        let mut pos = 0;
        for l in &mut self.layers {
            pos += l.read_params(&src[pos..]);
        }
        pos
    }

    pub fn param_names(&self, prefix: &str, out: &mut Vec<String>) {
        for (k, l) in self.layers.iter().enumerate() {
            l.param_names(&format!("{prefix}/layer{k}"), out);
        }
    }

    /// Product of per-layer bounds on the ball of the given radius, with the
    /// radius propagated through the layers.
    pub fn lipschitz_bound(&self, radius: f64) -> (f64, f64) {
        let mut lip = 1.0;
        let mut r = radius;
        for l in &self.layers {
            let (li, ro) = l.lipschitz_bound(r);
            lip *= li;
            r = ro;
        }
        (lip, r)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        for l in &self.layers {
            if l.dim() != self.dim {
                return Err(Error::InvalidLayer("flow layer dimension does not match block".into()));
            }
            l.validate()?;
        }
        Ok(())
    }
}
