//! Layerwise training of injective networks toward manifold-supported targets.

mod loss;
mod obstruction;

pub use loss::{chamfer, compute_gradients, loss_value, paired_squared, sliced_w2_squared, Gradient, Loss};
pub use obstruction::{
    run_obstruction_experiment, ObstructionConfig, ObstructionReport, CONTROL_W2, LIPSCHITZ_CEILING, LIPSCHITZ_FACTOR,
    TREATMENT_W2,
};

use std::collections::BTreeSet;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{fmt_f64, ManifoldTarget, SamplingLaw};
use crate::linalg::{seeded_rng, SeededRng};
use crate::metrics::{directed_supinf, slice_directions, wasserstein2_sliced, EmpiricalMeasure};
use crate::network::InjectiveNetwork;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adaptive moment estimation over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, cfg: AdamConfig) -> Self {
        Self { cfg, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    /// One update of the entries where `mask` holds.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, mask: &[bool]) {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for i in 0..params.len() {
            if !mask[i] {
                continue;
            }
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Manifold,
    Density,
}

fn default_lr() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    /// Stage indices updated in this phase; all other stages are frozen.
    pub stages: Vec<usize>,
    pub loss: LossKind,
    pub steps: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub manifold: f64,
    pub density: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { manifold: 1.0, density: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub phases: Vec<PhaseConfig>,
    pub loss_weights: LossWeights,
    /// Diagnostics are recorded every this many steps and at phase ends.
    pub lipschitz_log_interval: usize,
    /// Grid size of the fixed evaluation set used for diagnostics.
    pub eval_samples: usize,
    /// Directions per step for the density loss.
    pub density_slices: usize,
    /// Directions for the sliced W2 diagnostic.
    pub eval_slices: usize,
    pub adam: AdamConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            batch_size: 256,
            phases: Vec::new(),
            loss_weights: LossWeights::default(),
            lipschitz_log_interval: 50,
            eval_samples: 256,
            density_slices: 48,
            eval_slices: 192,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self, net: &InjectiveNetwork) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.batch_size == 0 || self.lipschitz_log_interval == 0 || self.eval_samples < 2 {
            return bad("batch_size and lipschitz_log_interval must be positive, eval_samples >= 2".into());
        }
        if self.density_slices == 0 || self.eval_slices == 0 {
            return bad("slice counts must be positive".into());
        }
        if self.phases.is_empty() {
            return bad("at least one phase is required".into());
        }
        let mut seen = BTreeSet::new();
        for (p, phase) in self.phases.iter().enumerate() {
            if phase.steps == 0 {
                return bad(format!("phase {p}: steps must be positive"));
            }
            if !(phase.learning_rate > 0.0) || !phase.learning_rate.is_finite() {
                return bad(format!("phase {p}: learning_rate must be positive"));
            }
            if phase.stages.is_empty() {
                return bad(format!("phase {p}: no trainable stages"));
            }
            for &s in &phase.stages {
                if s >= net.stage_count() {
                    return bad(format!("phase {p}: stage {s} does not exist"));
                }
                if !seen.insert(s) {
                    return bad(format!("phase {p}: stage {s} was frozen by an earlier phase"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub phase: usize,
    pub step: usize,
    pub loss: f64,
    pub directed_supinf: f64,
    pub sliced_w2: f64,
    pub lipschitz_estimate: f64,
}

/// Hashes of the stages frozen during one phase, taken before and after it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseReport {
    pub phase: usize,
    pub frozen_stages: Vec<usize>,
    pub hash_before: String,
    pub hash_after: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainingTrace {
    pub records: Vec<TraceRecord>,
    pub phases: Vec<PhaseReport>,
}

impl TrainingTrace {
    pub const CSV_HEADER: &'static str = "phase,step,loss,directed_supinf,sliced_w2,lipschitz_estimate";

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.phase,
                r.step,
                fmt_f64(r.loss),
                fmt_f64(r.directed_supinf),
                fmt_f64(r.sliced_w2),
                fmt_f64(r.lipschitz_estimate)
            )?;
        }
        Ok(())
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Records of one phase.
    pub fn phase_records(&self, phase: usize) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.phase == phase)
    }
}

/// SHA-256 over the little-endian bytes of the listed stages' parameters.
pub fn param_hash(net: &InjectiveNetwork, stages: &[usize]) -> String {
    let mut h = Sha256::new();
    for &s in stages {
        h.update((s as u64).to_le_bytes());
        for v in net.stage_params(s) {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Fixed evaluation data: a latent grid and its image under the target map.
pub struct EvalSet {
    pub latent: DMatrix<f64>,
    pub target: DMatrix<f64>,
    target_points: Vec<nalgebra::DVector<f64>>,
    latent_samples: crate::geometry::CompactSampleSet,
    slices: usize,
    seed: u64,
}

impl EvalSet {
    pub fn new(target: &ManifoldTarget, samples: usize, slices: usize, seed: u64) -> Result<Self> {
        let latent_samples = target.domain().sample(samples, SamplingLaw::Grid)?;
        let latent = latent_samples.to_matrix();
        let t = target.eval_batch(&latent);
        let target_points = t.column_iter().map(|c| c.into_owned()).collect();
        Ok(Self { latent, target: t, target_points, latent_samples, slices, seed })
    }

    /// `(directed_supinf(target, model), sliced_w2(model, target), lipschitz_estimate)`.
    pub fn diagnostics(&self, net: &InjectiveNetwork) -> Result<(f64, f64, f64)> {
        let out = net.forward_batch(&self.latent)?;
        let model: Vec<_> = out.column_iter().map(|c| c.into_owned()).collect();
        let supinf = directed_supinf(&self.target_points, &model)?;
        let mu = EmpiricalMeasure::uniform(model)?;
        let nu = EmpiricalMeasure::uniform(self.target_points.clone())?;
        let w2 = wasserstein2_sliced(&mu, &nu, self.slices, self.seed)?;
        let lip = net.lipschitz_estimate(&self.latent_samples)?;
        Ok((supinf, w2, lip))
    }
}

/// A latent batch drawn from the target's domain and its image under the
/// target map. Both losses compare the two batches as unordered sets, so
/// sharing the draw only reduces sampling noise.
fn draw_batches(target: &ManifoldTarget, size: usize, rng: &mut SeededRng) -> (DMatrix<f64>, DMatrix<f64>) {
    let latent = target.domain().sample_batch(size, rng);
    let batch = target.eval_batch(&latent);
    (latent, batch)
}

/// Runs the phases of `config` in order. Each phase updates only its own
/// stages; stages trained by an earlier phase stay frozen afterwards, and the
/// frozen parameters are hashed before and after every phase.
pub fn run_layerwise(
    net: &mut InjectiveNetwork,
    target: &ManifoldTarget,
    config: &TrainingConfig,
) -> Result<TrainingTrace> {
    config.validate(net)?;
    if net.in_dim() != target.intrinsic_dim() || net.out_dim() != target.ambient_dim() {
        return Err(Error::InvalidConfig(format!(
            "network maps R^{} -> R^{}, target needs R^{} -> R^{}",
            net.in_dim(),
            net.out_dim(),
            target.intrinsic_dim(),
            target.ambient_dim()
        )));
    }
    let mut rng = seeded_rng(config.seed);
    let eval = EvalSet::new(target, config.eval_samples, config.eval_slices, config.seed ^ 0x5eed)?;
    let mut trace = TrainingTrace::default();
    let ranges = net.param_ranges();
    let mut global_step = 0;
    for (p, phase) in config.phases.iter().enumerate() {
        let trainable: Vec<bool> = (0..net.stage_count()).map(|s| phase.stages.contains(&s)).collect();
        let frozen: Vec<usize> = (0..net.stage_count()).filter(|s| !trainable[*s]).collect();
        let mut mask = vec![false; net.param_count()];
        for &s in &phase.stages {
            mask[ranges[s].clone()].iter_mut().for_each(|m| *m = true);
        }
        let hash_before = param_hash(net, &frozen);
        let mut adam = Adam::new(net.param_count(), config.adam);
        let mut params = net.params();
        for step in 0..phase.steps {
            let (latent, batch) = draw_batches(target, config.batch_size, &mut rng);
            let (loss, weight) = match phase.loss {
                LossKind::Manifold => (Loss::Manifold, config.loss_weights.manifold),
                LossKind::Density => (
                    Loss::Density(slice_directions(net.out_dim(), config.density_slices, rng_seed(&mut rng))),
                    config.loss_weights.density,
                ),
            };
            let g = compute_gradients(net, &loss, &latent, &batch, &trainable)?;
            let scaled: Vec<f64> = g.grad.iter().map(|v| v * weight).collect();
            adam.step(&mut params, &scaled, phase.learning_rate, &mask);
            for &s in &phase.stages {
                net.set_stage_params(s, &params)?;
            }
            if step % config.lipschitz_log_interval == 0 || step + 1 == phase.steps {
                let (supinf, w2, lip) = eval.diagnostics(net)?;
                trace.records.push(TraceRecord {
                    phase: p,
                    step: global_step,
                    loss: g.loss,
                    directed_supinf: supinf,
                    sliced_w2: w2,
                    lipschitz_estimate: lip,
                });
            }
            global_step += 1;
        }
        let hash_after = param_hash(net, &frozen);
        if hash_after != hash_before {
            return Err(Error::Internal(format!("phase {p} modified frozen stages")));
        }
        trace.phases.push(PhaseReport { phase: p, frozen_stages: frozen, hash_before, hash_after });
    }
    Ok(trace)
}

fn rng_seed(rng: &mut SeededRng) -> u64 {
    use rand::Rng;
    rng.random()
}
