//! Reusable experiment presets shared by the command-line runner and the
//! acceptance suite.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{invalid_arg, Result};
use crate::expansive::ExpansiveLayer;
use crate::flows::{CouplingLayer, Dense, FlowBlock, FlowLayer, Subnet};
use crate::geometry::{sample_interval, ManifoldTarget, SamplingLaw};
use crate::linalg::{gaussian_vector, random_well_conditioned, seeded_rng};
use crate::metrics::{
    estimate_embedding_gap, wasserstein_bound_check, BoundCheck, Candidate, CandidateFamily, EmbeddingMap,
};
use crate::network::InjectiveNetwork;
use crate::projection::oracle::relu_projection_oracle;
use crate::projection::relu_pseudo_inverse;
use crate::training::{run_layerwise, LossKind, PhaseConfig, TrainingConfig, TrainingTrace};

/// Network for the one-dimensional layerwise toy:
/// `T_0 (R¹) → R_1 (R¹→R²) → T_1 (R²) → R_2 (R²→R³) → T_2 (R³)`.
pub fn toy_network(seed: u64) -> Result<InjectiveNetwork> {
    let mut rng = seeded_rng(seed);
    let t0 = FlowBlock::random(&mut rng, 1, 1, 8, 1e-2);
    let r1 = ExpansiveLayer::random_linear(&mut rng, 1, 2)?;
    let t1 = FlowBlock::random(&mut rng, 2, 4, 32, 1e-2);
    let r2 = ExpansiveLayer::random_linear(&mut rng, 2, 3)?;
    let t2 = FlowBlock::random(&mut rng, 3, 6, 32, 1e-2);
    InjectiveNetwork::new(t0, vec![(r1, t1), (r2, t2)])?.with_latent_domain(vec![-1.0], vec![1.0])
}

/// Phase 1 fits the curve with the outer stages `{R_2, T_2}`; phase 2 fits
/// the density with the inner stages `{T_0, R_1, T_1}`.
pub fn toy_config(seed: u64) -> TrainingConfig {
    TrainingConfig {
        seed,
        phases: vec![
            PhaseConfig { stages: vec![3, 4], loss: LossKind::Manifold, steps: 3000, learning_rate: 3e-3 },
            PhaseConfig { stages: vec![0, 1, 2], loss: LossKind::Density, steps: 1500, learning_rate: 3e-3 },
        ],
        ..TrainingConfig::default()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LayerwiseReport {
    pub trace: TrainingTrace,
    pub phase1_directed_supinf: f64,
    pub phase2_sliced_w2: f64,
    pub phase2_directed_supinf: f64,
    pub frozen_bit_identical: bool,
}

pub fn layerwise_toy(config: &TrainingConfig) -> Result<(InjectiveNetwork, LayerwiseReport)> {
    let mut net = toy_network(config.seed)?;
    let target = ManifoldTarget::space_curve();
    let trace = run_layerwise(&mut net, &target, config)?;
    let last_of = |p: usize| trace.phase_records(p).last().cloned();
    let p1 = last_of(0).expect("phase 1 ran");
    let p2 = last_of(config.phases.len() - 1).expect("last phase ran");
    let frozen_bit_identical = trace.phases.iter().all(|r| r.hash_before == r.hash_after);
    let report = LayerwiseReport {
        phase1_directed_supinf: p1.directed_supinf,
        phase2_sliced_w2: p2.sliced_w2,
        phase2_directed_supinf: p2.directed_supinf,
        frozen_bit_identical,
        trace,
    };
    Ok((net, report))
}

/// Blend weights of the three model maps in the gap sequence.
pub const GAP_ALPHAS: [f64; 3] = [0.0, 0.5, 1.0];
/// Constant shift of the first model map.
pub const GAP_BASE_SHIFT: f64 = 0.4;

/// Curve network `w ↦ (α t(w) + (1 - α) c, w)`: zero padding followed by a
/// reversed coupling whose shift blends the hand-set MLP `t` with the constant
/// `c`. At `α = 1` it is the target map itself.
pub fn gap_curve_network(alpha: f64) -> Result<InjectiveNetwork> {
    let hidden = Dense { weight: DMatrix::from_column_slice(2, 1, &[2.5, -1.5]), bias: DVector::from_vec(vec![0.0, 0.5]) };
    let out = Dense {
        weight: DMatrix::from_row_slice(1, 2, &[0.45, 0.35]) * alpha,
        bias: DVector::from_element(1, -0.1 * alpha + (1.0 - alpha) * GAP_BASE_SHIFT),
    };
    let shift = Subnet::Mlp { layers: vec![hidden, out] };
    let coupling = CouplingLayer::new(2, 1, CouplingLayer::reversal_permutation(2), Subnet::zeros(1, 1), shift)?;
    let t = FlowBlock::new(2, vec![FlowLayer::AffineCoupling(coupling)])?;
    InjectiveNetwork::new(FlowBlock::identity(1), vec![(ExpansiveLayer::zero_pad(1, 2)?, t)])?
        .with_latent_domain(vec![-1.0], vec![1.0])
}

#[derive(Clone, Debug, Serialize)]
pub struct GapStep {
    pub alpha: f64,
    pub lower: f64,
    pub upper: f64,
    pub candidate: String,
    pub bound_check: BoundCheck,
    #[serde(skip)]
    pub f_samples: Vec<DVector<f64>>,
    #[serde(skip)]
    pub g_samples: Vec<DVector<f64>>,
}

/// Embedding-gap intervals for a sequence of model curves approaching the
/// target curve, with `K = W = [-1, 1]` sampled on `samples` grid points.
pub fn gap_visualization(samples: usize, family: CandidateFamily) -> Result<Vec<GapStep>> {
    let f = gap_curve_network(1.0)?;
    let grid = sample_interval(-1.0, 1.0, samples, SamplingLaw::Grid)?;
    let pairs: Vec<(DVector<f64>, DVector<f64>)> = grid
        .points()
        .iter()
        .map(|x| Ok((x.clone(), DVector::from_vec(f.forward(x.as_slice())?))))
        .collect::<Result<_>>()?;
    let f_samples: Vec<DVector<f64>> = pairs.iter().map(|p| p.1.clone()).collect();
    GAP_ALPHAS
        .iter()
        .map(|&alpha| {
            let g = gap_curve_network(alpha)?;
            let gap = estimate_embedding_gap(&pairs, &g, grid.points(), family)?;
            let bound_check = wasserstein_bound_check(&pairs, &g, &gap, 0.01)?;
            let g_samples = grid.points().iter().map(|w| g.eval(w.as_slice())).collect::<Result<_>>()?;
            Ok(GapStep {
                alpha,
                lower: gap.lower,
                upper: gap.upper,
                candidate: describe(&gap.candidate),
                bound_check,
                f_samples: f_samples.clone(),
                g_samples,
            })
        })
        .collect()
}

fn describe(c: &Candidate) -> String {
    c.describe()
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchTrial {
    pub trial: usize,
    pub n: usize,
    pub ties: usize,
    pub residual: f64,
    pub oracle_min: f64,
    pub oracle_gap: f64,
    pub preimage_error: f64,
    pub oracle_minimizers: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectionBench {
    pub n: usize,
    pub trials: Vec<BenchTrial>,
    pub oracle_gap_max: f64,
    pub preimage_error_max: f64,
    pub tie_trials: usize,
    /// Every tie trial produced `2^ties` oracle minimizers with the
    /// closed-form preimage among them.
    pub tie_multiplicity_ok: bool,
}

/// Random `[B; -DB]` layers with well-conditioned `B` and `D` in `[0.5, 2]`.
/// Every fifth trial plants one or two ties `y_i = y_{i+n} > 0`.
pub fn projection_bench(n: usize, trials: usize, seed: u64) -> Result<ProjectionBench> {
    if n == 0 || trials == 0 {
        return Err(invalid_arg("projection bench needs n >= 1 and trials >= 1"));
    }
    let mut rng = seeded_rng(seed);
    let mut rows = Vec::with_capacity(trials);
    for trial in 0..trials {
        let b = random_well_conditioned(&mut rng, n, 10.0);
        let d = DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0));
        let mut y = gaussian_vector(&mut rng, 2 * n, 1.0);
        let ties = if trial % 5 == 4 { 1 + usize::from(n > 1 && trial % 10 == 9) } else { 0 };
        for i in 0..ties {
            let v = y[i].abs() + 0.1;
            y[i] = v;
            y[i + n] = v;
        }
        let r = relu_pseudo_inverse(&b, &d, &y)?;
        let oracle = relu_projection_oracle(&b, &d, &y)?;
        let preimage_error = oracle.minimizers.iter().map(|m| (m - &r.x).norm()).fold(f64::INFINITY, f64::min);
        rows.push(BenchTrial {
            trial,
            n,
            ties,
            residual: r.residual,
            oracle_min: oracle.min_residual,
            oracle_gap: r.residual - oracle.min_residual,
            preimage_error,
            oracle_minimizers: oracle.minimizers.len(),
        });
    }
    let no_tie = rows.iter().filter(|t| t.ties == 0);
    let oracle_gap_max = rows.iter().map(|t| t.oracle_gap).fold(f64::NEG_INFINITY, f64::max);
    let preimage_error_max = no_tie.map(|t| t.preimage_error).fold(0.0, f64::max);
    let tie_rows: Vec<&BenchTrial> = rows.iter().filter(|t| t.ties > 0).collect();
    let tie_multiplicity_ok =
        tie_rows.iter().all(|t| t.oracle_minimizers == 1 << t.ties && t.preimage_error <= 1e-6);
    Ok(ProjectionBench {
        n,
        oracle_gap_max,
        preimage_error_max,
        tie_trials: tie_rows.len(),
        tie_multiplicity_ok,
        trials: rows,
    })
}
