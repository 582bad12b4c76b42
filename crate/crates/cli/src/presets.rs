use std::path::Path;

use injflow::experiments::{gap_visualization, layerwise_toy, projection_bench, toy_config, GAP_ALPHAS};
use injflow::metrics::CandidateFamily;
use injflow::training::{
    run_obstruction_experiment, ObstructionConfig, TrainingConfig, TrainingTrace, CONTROL_W2, LIPSCHITZ_CEILING,
    LIPSCHITZ_FACTOR, TREATMENT_W2,
};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::table::{Cell, Table};
use crate::CliError;

/// Final step of the gap sequence must have `lower <= GAP_ZERO_TOLERANCE`.
pub const GAP_ZERO_TOLERANCE: f64 = 0.02;
const GAP_BOUND_TOLERANCE: f64 = 0.01;

pub struct PresetOutput {
    pub tables: Vec<Table>,
    pub metrics: Metrics,
}

/// Summary metrics; rejects non-finite numbers.
#[derive(Default)]
pub struct Metrics(Map<String, Value>);

impl Metrics {
    pub fn num(&mut self, key: &str, v: f64) -> Result<(), CliError> {
        if !v.is_finite() {
            return Err(CliError::Core(injflow::Error::Numeric { stage: None, detail: format!("metric {key} is {v}") }));
        }
        self.0.insert(key.into(), json!(v));
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: impl Into<Value>) {
        self.0.insert(key.into(), v.into());
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.0)
    }
}

pub fn trace_table(name: &str, trace: &TrainingTrace) -> Table {
    let mut t = Table::new(name, TrainingTrace::CSV_HEADER.split(','));
    for r in &trace.records {
        t.push(vec![
            Cell::Int(r.phase as i64),
            Cell::Int(r.step as i64),
            Cell::Num(r.loss),
            Cell::Num(r.directed_supinf),
            Cell::Num(r.sliced_w2),
            Cell::Num(r.lipschitz_estimate),
        ]);
    }
    t
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GapConfig {
    pub seed: u64,
    pub samples: usize,
    pub family: CandidateFamily,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self { seed: 0, samples: 201, family: CandidateFamily::Affine }
    }
}

pub fn run_gap(config: &GapConfig) -> Result<PresetOutput, CliError> {
    let steps = gap_visualization(config.samples, config.family)?;
    let mut tables = Vec::new();
    let mut intervals = Table::new("gap_intervals", ["step", "alpha", "lower", "upper", "w2", "w2_exact", "bound_ok"]);
    let mut metrics = Metrics::default();
    for (i, s) in steps.iter().enumerate() {
        tables.push(Table::points(format!("f_samples_{i}"), &s.f_samples));
        tables.push(Table::points(format!("g_samples_{i}"), &s.g_samples));
        intervals.push(vec![
            Cell::Int(i as i64),
            Cell::Num(s.alpha),
            Cell::Num(s.lower),
            Cell::Num(s.upper),
            Cell::Num(s.bound_check.w2),
            Cell::Int(i64::from(s.bound_check.method == "exact")),
            Cell::Int(i64::from(s.bound_check.passed)),
        ]);
        metrics.num(&format!("lower_{i}"), s.lower)?;
        metrics.num(&format!("upper_{i}"), s.upper)?;
        metrics.num(&format!("w2_{i}"), s.bound_check.w2)?;
        metrics.set(&format!("candidate_{i}"), s.candidate.clone());
    }
    tables.push(intervals);
    let monotone = steps.windows(2).all(|w| w[1].lower <= w[0].lower && w[1].upper <= w[0].upper);
    let last = steps.last().expect("gap sequence is non-empty");
    metrics.set("steps", GAP_ALPHAS.len());
    metrics.set("samples", config.samples);
    metrics.set("intervals_monotone", monotone);
    metrics.set("final_contains_zero", last.lower <= GAP_ZERO_TOLERANCE);
    metrics.set("bound_checks_passed", steps.iter().all(|s| s.bound_check.passed));
    metrics.num("bound_tolerance", GAP_BOUND_TOLERANCE)?;
    Ok(PresetOutput { tables, metrics })
}

pub fn run_toy(config: &TrainingConfig, checkpoint: &Path) -> Result<PresetOutput, CliError> {
    let (net, report) = layerwise_toy(config)?;
    net.save(checkpoint)?;
    let mut curve = Table::new("curve", ["t", "target_x0", "target_x1", "target_x2", "model_x0", "model_x1", "model_x2"]);
    let target = injflow::ManifoldTarget::space_curve();
    let count = config.eval_samples.max(2);
    for k in 0..count {
        let t = -1.0 + 2.0 * k as f64 / (count - 1) as f64;
        let mut row = vec![Cell::Num(t)];
        row.extend(target.eval(&[t]).iter().map(|&v| Cell::Num(v)));
        row.extend(net.forward(&[t])?.into_iter().map(Cell::Num));
        curve.push(row);
    }
    let mut metrics = Metrics::default();
    metrics.num("phase1_directed_supinf", report.phase1_directed_supinf)?;
    metrics.num("phase2_sliced_w2", report.phase2_sliced_w2)?;
    metrics.num("phase2_directed_supinf", report.phase2_directed_supinf)?;
    metrics.set("frozen_bit_identical", report.frozen_bit_identical);
    metrics.set(
        "phases",
        report
            .trace
            .phases
            .iter()
            .map(|p| json!({"phase": p.phase, "frozen_stages": p.frozen_stages, "hash_before": p.hash_before, "hash_after": p.hash_after}))
            .collect::<Vec<_>>(),
    );
    Ok(PresetOutput { tables: vec![trace_table("trace", &report.trace), curve], metrics })
}

pub fn toy_defaults(mut config: TrainingConfig) -> TrainingConfig {
    if config.phases.is_empty() {
        config.phases = toy_config(config.seed).phases;
    }
    config
}

pub fn run_obstruction(config: &ObstructionConfig) -> Result<PresetOutput, CliError> {
    let r = run_obstruction_experiment(config)?;
    let mut metrics = Metrics::default();
    metrics.num("control_final_w2", r.control_final_w2)?;
    metrics.num("control_final_lipschitz", r.control_final_lipschitz)?;
    metrics.num("treatment_min_w2", r.treatment_min_w2)?;
    metrics.num("treatment_max_lipschitz", r.treatment_max_lipschitz)?;
    metrics.set("treatment_close_records", r.treatment_close_records);
    if let Some(l) = r.treatment_min_lipschitz_when_close {
        metrics.num("treatment_min_lipschitz_when_close", l)?;
    }
    metrics.set("control_ok", r.control_ok);
    metrics.set("treatment_ok", r.treatment_ok);
    metrics.set("treatment_vacuous", r.treatment_vacuous);
    metrics.set(
        "thresholds",
        json!({
            "kind": "experiment-design constants",
            "lipschitz_ceiling": LIPSCHITZ_CEILING,
            "lipschitz_factor": LIPSCHITZ_FACTOR,
            "control_w2": CONTROL_W2,
            "treatment_w2": TREATMENT_W2,
        }),
    );
    Ok(PresetOutput {
        tables: vec![trace_table("control_trace", &r.control), trace_table("treatment_trace", &r.treatment)],
        metrics,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub seed: u64,
    pub n: usize,
    pub trials: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { seed: 0, n: 3, trials: 500 }
    }
}

pub fn run_bench(config: &BenchConfig) -> Result<PresetOutput, CliError> {
    let b = projection_bench(config.n, config.trials, config.seed)?;
    let mut t = Table::new(
        "trials",
        ["trial", "n", "ties", "residual", "oracle_min", "oracle_gap", "preimage_error", "oracle_minimizers"],
    );
    for r in &b.trials {
        t.push(vec![
            Cell::Int(r.trial as i64),
            Cell::Int(r.n as i64),
            Cell::Int(r.ties as i64),
            Cell::Num(r.residual),
            Cell::Num(r.oracle_min),
            Cell::Num(r.oracle_gap),
            Cell::Num(r.preimage_error),
            Cell::Int(r.oracle_minimizers as i64),
        ]);
    }
    let mut metrics = Metrics::default();
    metrics.set("n", b.n);
    metrics.set("trials", b.trials.len());
    metrics.num("oracle_gap_max", b.oracle_gap_max)?;
    metrics.num("preimage_error_max", b.preimage_error_max)?;
    metrics.set("tie_trials", b.tie_trials);
    metrics.set("tie_multiplicity_ok", b.tie_multiplicity_ok);
    Ok(PresetOutput { tables: vec![t], metrics })
}
