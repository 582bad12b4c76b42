//! Composition `T_L ∘ R_L ∘ … ∘ R_1 ∘ T_0` of flow blocks and expansive layers.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::expansive::{validate_injectivity, ExpansiveCache, ExpansiveLayer};
use crate::flows::{FlowBlock, FlowLayerCache};
use crate::geometry::CompactSampleSet;
use crate::linalg::dist;

pub const CHECKPOINT_FORMAT: &str = "injflow-network";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Axis-aligned box in latent space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl LatentBox {
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.lo.len()
            && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }

    /// Radius of the smallest origin-centred ball containing the box.
    pub fn radius(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| l.abs().max(h.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// One stage of the pipeline, in evaluation order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum Stage {
    Flow(FlowBlock),
    Expansive(ExpansiveLayer),
}

impl Stage {
    pub fn in_dim(&self) -> usize {
        match self {
            Stage::Flow(b) => b.dim(),
            Stage::Expansive(r) => r.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Stage::Flow(b) => b.dim(),
            Stage::Expansive(r) => r.out_dim(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Stage::Flow(b) => b.param_count(),
            Stage::Expansive(r) => r.param_count(),
        }
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        match self {
            Stage::Flow(b) => b.write_params(out),
            Stage::Expansive(r) => r.write_params(out),
        }
    }

    pub fn read_params(&mut self, src: &[f64]) -> usize {
        match self {
            Stage::Flow(b) => b.read_params(src),
            Stage::Expansive(r) => r.read_params(src),
        }
    }

    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            Stage::Flow(b) => b.forward_batch(x),
            Stage::Expansive(r) => r.apply_batch(x),
        }
    }

    /// Lipschitz bound on the ball of radius `radius` and the radius of the image.
    pub fn lipschitz_bound(&self, radius: f64) -> (f64, f64) {
        match self {
            Stage::Flow(b) => b.lipschitz_bound(radius),
            Stage::Expansive(r) => (r.lipschitz_bound(), r.output_radius(radius)),
        }
    }
}

#[derive(Clone, Debug)]
pub enum StageCache {
    Flow(Vec<FlowLayerCache>),
    Expansive(ExpansiveCache),
}

#[derive(Clone, Debug)]
pub struct NetworkCache {
    stages: Vec<StageCache>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectiveNetwork {
    stages: Vec<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    latent_domain: Option<LatentBox>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    #[serde(flatten)]
    network: InjectiveNetwork,
}

impl InjectiveNetwork {
    /// `stages` alternate `T_0, R_1, T_1, …, R_L, T_L`.
    pub fn from_stages(stages: Vec<Stage>) -> Result<Self> {
        let net = Self { stages, latent_domain: None };
        net.validate()?;
        Ok(net)
    }

    pub fn new(t0: FlowBlock, pairs: Vec<(ExpansiveLayer, FlowBlock)>) -> Result<Self> {
        let mut stages = vec![Stage::Flow(t0)];
        for (r, t) in pairs {
            stages.push(Stage::Expansive(r));
            stages.push(Stage::Flow(t));
        }
        Self::from_stages(stages)
    }

    pub fn with_latent_domain(mut self, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != self.in_dim() || hi.len() != self.in_dim() || lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(invalid_arg("latent box must match the input dimension with lo <= hi"));
        }
        self.latent_domain = Some(LatentBox { lo, hi });
        Ok(self)
    }

    pub fn latent_domain(&self) -> Option<&LatentBox> {
        self.latent_domain.as_ref()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() || self.stages.len().is_multiple_of(2) {
            return Err(Error::InvalidLayer("stages must alternate flow, expansive, …, flow".into()));
        }
        for (k, s) in self.stages.iter().enumerate() {
            match (k % 2, s) {
                (0, Stage::Flow(b)) => b.validate().map_err(|e| e.at_stage(k))?,
                (1, Stage::Expansive(r)) => {
                    let report = validate_injectivity(r);
                    if !report.ok {
                        return Err(Error::InvalidLayer(format!("stage {k}: {}", report.detail)));
                    }
                }
                _ => return Err(Error::InvalidLayer(format!("stage {k} has the wrong kind"))),
            }
            if k > 0 {
                let prev = self.stages[k - 1].out_dim();
                if s.in_dim() != prev {
                    return Err(Error::InvalidLayer(format!(
                        "stage {k} expects dimension {}, previous stage produces {prev}",
                        s.in_dim()
                    )));
                }
            }
        }
        if let Some(b) = &self.latent_domain {
            if b.lo.len() != self.in_dim() {
                return Err(Error::InvalidLayer("latent domain dimension mismatch".into()));
            }
        }
        Ok(())
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn stage_mut(&mut self, k: usize) -> &mut Stage {
        &mut self.stages[k]
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    /// Number of expansive layers `L`.
    pub fn depth(&self) -> usize {
        self.stages.len() / 2
    }

    pub fn in_dim(&self) -> usize {
        self.stages[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.stages[self.stages.len() - 1].out_dim()
    }

    /// `n_0, n_1, …, n_L`.
    pub fn dims(&self) -> Vec<usize> {
        self.stages.iter().step_by(2).map(Stage::in_dim).collect()
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.in_dim() {
            return Err(invalid_arg(format!("input has dimension {}, network expects {}", x.nrows(), self.in_dim())));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.forward_batch(&DMatrix::from_column_slice(x.len(), 1, x))?;
        Ok(y.as_slice().to_vec())
    }

    /// Evaluates columns of `x` through every stage in order.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (k, s) in self.stages.iter().enumerate() {
            h = s.forward_batch(&h).map_err(|e| e.at_stage(k))?;
        }
        Ok(h)
    }

    /// Outputs after each stage; entry `k` is the input of stage `k`.
    pub fn intermediates(&self, x: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
        self.check_input(x)?;
        let mut out = vec![x.clone()];
        for (k, s) in self.stages.iter().enumerate() {
            let next = s.forward_batch(out.last().expect("non-empty")).map_err(|e| e.at_stage(k))?;
            out.push(next);
        }
        Ok(out)
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, NetworkCache)> {
        self.check_input(x)?;
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.stages.len());
        for (k, s) in self.stages.iter().enumerate() {
            let (y, c) = match s {
                Stage::Flow(b) => b.forward_cached(&h).map(|(y, c)| (y, StageCache::Flow(c))),
                Stage::Expansive(r) => r.forward_cached(&h).map(|(y, c)| (y, StageCache::Expansive(c))),
            }
            .map_err(|e| e.at_stage(k))?;
            caches.push(c);
            h = y;
        }
        Ok((h, NetworkCache { stages: caches }))
    }

    /// Reverse pass. Parameter gradients are accumulated into `grad` (laid out
    /// as [`Self::params`]) for stages where `trainable[k]` holds. Returns the
    /// gradient with respect to the input.
    pub fn backward(
        &self,
        cache: &NetworkCache,
        dy: &DMatrix<f64>,
        grad: &mut [f64],
        trainable: &[bool],
    ) -> DMatrix<f64> {
        let ranges = self.param_ranges();
        let mut d = dy.clone();
        for k in (0..self.stages.len()).rev() {
            let g = if trainable[k] { Some(&mut grad[ranges[k].clone()]) } else { None };
            d = match (&self.stages[k], &cache.stages[k]) {
                (Stage::Flow(b), StageCache::Flow(c)) => b.backward(c, &d, g),
                (Stage::Expansive(r), StageCache::Expansive(c)) => r.backward(c, &d, g),
                _ => unreachable!("cache built by forward_cached"),
            };
        }
        d
    }

    pub fn param_ranges(&self) -> Vec<Range<usize>> {
        let mut out = Vec::with_capacity(self.stages.len());
        let mut off = 0;
        for s in &self.stages {
            let n = s.param_count();
            out.push(off..off + n);
            off += n;
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.stages.iter().map(Stage::param_count).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.stages.iter().for_each(|s| s.write_params(&mut out));
        out
    }

    pub fn stage_params(&self, k: usize) -> Vec<f64> {
        let mut out = Vec::new();
        self.stages[k].write_params(&mut out);
        out
    }

    pub fn set_params(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.param_count() {
            return Err(invalid_arg("parameter vector length mismatch"));
        }
        let mut pos = 0;
        for s in &mut self.stages {
            pos += s.read_params(&src[pos..]);
        }
        Ok(())
    }

    /// Writes only stage `k`'s slice of a full parameter vector.
    pub fn set_stage_params(&mut self, k: usize, full: &[f64]) -> Result<()> {
        let range = self.param_ranges()[k].clone();
        if full.len() != self.param_count() {
            return Err(invalid_arg("parameter vector length mismatch"));
        }
        self.stages[k].read_params(&full[range]);
        Ok(())
    }

    /// Human-readable path of every parameter, e.g. `stage2/layer0/scale/l1.w[3,0]`.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.param_count());
        for (k, s) in self.stages.iter().enumerate() {
            match s {
                Stage::Flow(b) => b.param_names(&format!("stage{k}"), &mut out),
                Stage::Expansive(r) => r.param_names(&format!("stage{k}"), &mut out),
            }
        }
        out
    }

    /// Product of per-stage Lipschitz bounds, valid on the latent ball of the
    /// given radius. Input-dependent coupling scales make any global bound
    /// infinite, so the radius is propagated stage by stage.
    pub fn lipschitz_bound(&self, radius: f64) -> f64 {
        let mut lip = 1.0;
        let mut r = radius;
        for s in &self.stages {
            let (l, next) = s.lipschitz_bound(r);
            lip *= l;
            r = next;
        }
        lip
    }

    /// Bound on the ball containing the latent domain, or the unit ball.
    pub fn lipschitz_bound_on_domain(&self) -> f64 {
        self.lipschitz_bound(self.latent_domain.as_ref().map_or(1.0, LatentBox::radius))
    }

    /// Largest observed difference quotient over all sample pairs at least
    /// `1e-9` apart.
    pub fn lipschitz_estimate(&self, samples: &CompactSampleSet) -> Result<f64> {
        let x = samples.to_matrix();
        let y = self.forward_batch(&x)?;
        let mut best: Option<f64> = None;
        for i in 0..x.ncols() {
            for j in i + 1..x.ncols() {
                let dx = dist(x.column(i).as_slice(), x.column(j).as_slice());
                if dx < 1e-9 {
                    continue;
                }
                let dy = dist(y.column(i).as_slice(), y.column(j).as_slice());
                let q = dy / dx;
                best = Some(best.map_or(q, |b| b.max(q)));
            }
        }
        best.ok_or_else(|| invalid_arg("need at least one pair of samples further apart than 1e-9"))
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = Checkpoint { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, network: self.clone() };
        serde_json::to_string_pretty(&ck).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("checkpoint line {} column {}: {e}", e.line(), e.column())))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint {} v{}", ck.format, ck.version)));
        }
        ck.network.validate()?;
        Ok(ck.network)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

