//! Paired training runs toward a knotted curve and an unknotted control.
//!
//! Both runs start from the same network `T_1 ∘ R_1` (a full-rank linear map
//! `R² → R³` followed by a coupling flow), which can only produce curves
//! ambient-isotopic to a circle. Reaching a trefoil in distribution forces a
//! short stretch of the latent circle to cover a long detour, so the observed
//! Lipschitz constant has to grow. The thresholds below are experiment-design
//! constants, not derived quantities.

use serde::{Deserialize, Serialize};

use super::{run_layerwise, LossKind, PhaseConfig, TrainingConfig, TrainingTrace};
use crate::error::Result;
use crate::expansive::ExpansiveLayer;
use crate::flows::FlowBlock;
use crate::geometry::ManifoldTarget;
use crate::linalg::seeded_rng;
use crate::network::InjectiveNetwork;

/// Largest Lipschitz estimate the control run may end with.
pub const LIPSCHITZ_CEILING: f64 = 20.0;
/// Required ratio between treatment and control Lipschitz estimates.
pub const LIPSCHITZ_FACTOR: f64 = 10.0;
/// Sliced W2 the control must reach.
pub const CONTROL_W2: f64 = 0.05;
/// Treatment records below this sliced W2 are checked for blowup.
pub const TREATMENT_W2: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObstructionConfig {
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossKind,
    pub trefoil_scale: f64,
    pub control_radius: f64,
    pub flow_layers: usize,
    pub hidden_width: usize,
    pub init_scale: f64,
    pub lipschitz_log_interval: usize,
    pub eval_samples: usize,
    pub eval_slices: usize,
    pub density_slices: usize,
}

impl Default for ObstructionConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 3000,
            batch_size: 256,
            learning_rate: 3e-3,
            loss: LossKind::Density,
            trefoil_scale: 1.0,
            control_radius: 1.0,
            flow_layers: 6,
            hidden_width: 32,
            init_scale: 1e-2,
            lipschitz_log_interval: 50,
            eval_samples: 256,
            eval_slices: 192,
            density_slices: 48,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObstructionReport {
    pub control: TrainingTrace,
    pub treatment: TrainingTrace,
    pub control_final_w2: f64,
    pub control_final_lipschitz: f64,
    pub treatment_min_w2: f64,
    pub treatment_max_lipschitz: f64,
    /// Treatment records with sliced W2 below the closeness threshold.
    pub treatment_close_records: usize,
    /// Smallest Lipschitz estimate among those records.
    pub treatment_min_lipschitz_when_close: Option<f64>,
    pub control_ok: bool,
    pub treatment_ok: bool,
    /// The treatment never came close, so its condition holds trivially.
    pub treatment_vacuous: bool,
}

impl ObstructionConfig {
    pub fn network(&self) -> Result<InjectiveNetwork> {
        let mut rng = seeded_rng(self.seed);
        let r = ExpansiveLayer::random_linear(&mut rng, 2, 3)?;
        let t = FlowBlock::random(&mut rng, 3, self.flow_layers, self.hidden_width, self.init_scale);
        InjectiveNetwork::new(FlowBlock::identity(2), vec![(r, t)])
    }

    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            seed: self.seed,
            batch_size: self.batch_size,
            phases: vec![PhaseConfig {
                stages: vec![1, 2],
                loss: self.loss,
                steps: self.steps,
                learning_rate: self.learning_rate,
            }],
            lipschitz_log_interval: self.lipschitz_log_interval,
            eval_samples: self.eval_samples,
            eval_slices: self.eval_slices,
            density_slices: self.density_slices,
            ..TrainingConfig::default()
        }
    }
}

/// Trains the same initial network toward the planar circle and the trefoil
/// with identical budgets and seeds.
pub fn run_obstruction_experiment(config: &ObstructionConfig) -> Result<ObstructionReport> {
    let training = config.training_config();
    let mut control_net = config.network()?;
    let control = run_layerwise(&mut control_net, &ManifoldTarget::planar_circle(config.control_radius), &training)?;
    let mut treatment_net = config.network()?;
    let treatment = run_layerwise(&mut treatment_net, &ManifoldTarget::trefoil(config.trefoil_scale), &training)?;

    let last = control.last().expect("at least one record per phase");
    let (control_final_w2, control_final_lipschitz) = (last.sliced_w2, last.lipschitz_estimate);
    let close: Vec<f64> = treatment
        .records
        .iter()
        .filter(|r| r.sliced_w2 < TREATMENT_W2)
        .map(|r| r.lipschitz_estimate)
        .collect();
    let treatment_min_lipschitz_when_close = close.iter().copied().reduce(f64::min);
    let treatment_ok = close.iter().all(|&l| l >= LIPSCHITZ_FACTOR * control_final_lipschitz);
    Ok(ObstructionReport {
        control_ok: control_final_w2 <= CONTROL_W2 && control_final_lipschitz <= LIPSCHITZ_CEILING,
        treatment_ok,
        treatment_vacuous: close.is_empty(),
        treatment_close_records: close.len(),
        treatment_min_lipschitz_when_close,
        treatment_min_w2: treatment.records.iter().map(|r| r.sliced_w2).fold(f64::INFINITY, f64::min),
        treatment_max_lipschitz: treatment.records.iter().map(|r| r.lipschitz_estimate).fold(0.0, f64::max),
        control_final_w2,
        control_final_lipschitz,
        control,
        treatment,
    })
}
