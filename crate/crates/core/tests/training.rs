use injflow::expansive::ExpansiveLayer;
use injflow::flows::FlowBlock;
use injflow::geometry::{Domain, ManifoldTarget};
use injflow::linalg::{gaussian_matrix, seeded_rng};
use injflow::metrics::slice_directions;
use injflow::network::InjectiveNetwork;
use injflow::training::{compute_gradients, loss_value, run_layerwise, Loss, LossKind, PhaseConfig, TrainingConfig};
use injflow::Error;
use nalgebra::{DMatrix, DVector};

/// Largest relative deviation between analytic and central-difference
/// gradients, with absolute floor `1e-5` on the denominator.
fn fd_error(net: &InjectiveNetwork, loss: &Loss, latent: &DMatrix<f64>, target: &DMatrix<f64>) -> (f64, String) {
    let trainable = vec![true; net.stage_count()];
    let g = compute_gradients(net, loss, latent, target, &trainable).unwrap();
    let names = net.param_names();
    let base = net.params();
    let h = 1e-5;
    let mut worst = (0.0, String::new());
    let mut probe = net.clone();
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_params(&p).unwrap();
        let up = loss_value(&probe, loss, latent, target).unwrap();
        p[i] = base[i] - h;
        probe.set_params(&p).unwrap();
        let down = loss_value(&probe, loss, latent, target).unwrap();
        let numeric = (up - down) / (2.0 * h);
        let err = (numeric - g.grad[i]).abs() / numeric.abs().max(g.grad[i].abs()).max(1e-5);
        if err > worst.0 {
            worst = (err, names[i].clone());
        }
    }
    worst
}

/// Networks covering every layer kind: autoregressive (1-D), coupling,
/// linear, injective ReLU, fixed ReLU network, zero padding.
fn gradient_nets(seed: u64) -> Vec<InjectiveNetwork> {
    let mut rng = seeded_rng(seed);
    let mut nets = Vec::new();
    let t0 = FlowBlock::random(&mut rng, 1, 2, 6, 0.5);
    let r1 = ExpansiveLayer::random_linear(&mut rng, 1, 2).unwrap();
    let t1 = FlowBlock::random(&mut rng, 2, 2, 6, 0.5);
    let r2 = ExpansiveLayer::random_injective_relu(&mut rng, 2, 5).unwrap();
    let t2 = FlowBlock::random(&mut rng, 5, 2, 6, 0.5);
    nets.push(InjectiveNetwork::new(t0, vec![(r1, t1), (r2, t2)]).unwrap());
    let t0 = FlowBlock::random(&mut rng, 2, 2, 6, 0.5);
    let r1 = ExpansiveLayer::random_relu_network(&mut rng, 2, 1, 4).unwrap();
    let t1 = FlowBlock::random(&mut rng, 4, 1, 6, 0.5);
    let r2 = ExpansiveLayer::zero_pad(4, 5).unwrap();
    let t2 = FlowBlock::random(&mut rng, 5, 1, 6, 0.5);
    nets.push(InjectiveNetwork::new(t0, vec![(r1, t1), (r2, t2)]).unwrap());
    nets
}

#[test]
fn analytic_gradients_match_central_differences() {
    for seed in 0..10 {
        for net in gradient_nets(seed) {
            let mut rng = seeded_rng(100 + seed);
            let latent = gaussian_matrix(&mut rng, net.in_dim(), 7, 0.8);
            let target = gaussian_matrix(&mut rng, net.out_dim(), 7, 1.0);
            let losses = [
                Loss::Manifold,
                Loss::Density(slice_directions(net.out_dim(), 6, seed)),
                Loss::Paired,
            ];
            for loss in &losses {
                let (err, name) = fd_error(&net, loss, &latent, &target);
                assert!(err <= 1e-4, "seed {seed} {loss:?}: {err} at {name}");
            }
        }
    }
}

#[test]
fn linear_layer_gradient_is_normal_equation_residual() {
    let w = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 2.0, 0.7, 0.1]);
    let net =
        InjectiveNetwork::new(FlowBlock::identity(2), vec![(ExpansiveLayer::linear(w.clone()).unwrap(), FlowBlock::identity(3))])
            .unwrap();
    let mut rng = seeded_rng(4);
    let x = gaussian_matrix(&mut rng, 2, 9, 1.0);
    let y = gaussian_matrix(&mut rng, 3, 9, 1.0);
    let g = compute_gradients(&net, &Loss::Paired, &x, &y, &[true; 3]).unwrap();
    let expected = (&w * &x - &y) * x.transpose() * 2.0;
    let expected_row_major: Vec<f64> = expected.transpose().iter().copied().collect();
    for (a, b) in g.grad.iter().zip(&expected_row_major) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn perfect_fit_has_zero_gradient() {
    for net in gradient_nets(3) {
        let mut rng = seeded_rng(5);
        let latent = gaussian_matrix(&mut rng, net.in_dim(), 6, 0.5);
        let target = net.forward_batch(&latent).unwrap();
        for loss in [Loss::Manifold, Loss::Paired, Loss::Density(slice_directions(net.out_dim(), 8, 1))] {
            let g = compute_gradients(&net, &loss, &latent, &target, &vec![true; net.stage_count()]).unwrap();
            assert!(g.loss.abs() <= 1e-20);
            assert!(g.grad.iter().all(|v| v.abs() <= 1e-10), "{loss:?}");
        }
    }
}

#[test]
fn empty_batch_is_rejected() {
    let net = &gradient_nets(0)[0];
    let err = compute_gradients(net, &Loss::Manifold, &DMatrix::zeros(1, 0), &DMatrix::zeros(5, 0), &[true; 5]);
    assert!(matches!(err, Err(Error::InvalidArgument(_))));
}

fn padded_line() -> ManifoldTarget {
    ManifoldTarget::new("padded-line", 2, Domain::Interval { lo: -1.0, hi: 1.0 }, |p| DVector::from_vec(vec![p[0], 0.0]))
}

fn pad_net() -> InjectiveNetwork {
    let mut rng = seeded_rng(0);
    InjectiveNetwork::new(
        FlowBlock::random(&mut rng, 1, 1, 4, 0.0),
        vec![(ExpansiveLayer::zero_pad(1, 2).unwrap(), FlowBlock::random(&mut rng, 2, 1, 4, 0.0))],
    )
    .unwrap()
}

#[test]
fn identity_target_fits_at_step_zero() {
    let mut net = pad_net();
    let config = TrainingConfig {
        phases: vec![PhaseConfig { stages: vec![2], loss: LossKind::Manifold, steps: 3, learning_rate: 1e-3 }],
        eval_samples: 32,
        ..TrainingConfig::default()
    };
    let trace = run_layerwise(&mut net, &padded_line(), &config).unwrap();
    let first = &trace.records[0];
    assert_eq!(first.step, 0);
    assert!(first.loss <= 1e-6 && first.directed_supinf <= 1e-12, "{first:?}");
}

#[test]
fn overlapping_phases_are_rejected() {
    let mut net = pad_net();
    let phase = |stages: Vec<usize>| PhaseConfig { stages, loss: LossKind::Manifold, steps: 2, learning_rate: 1e-3 };
    let config = TrainingConfig { phases: vec![phase(vec![2]), phase(vec![0, 2])], ..TrainingConfig::default() };
    assert!(matches!(run_layerwise(&mut net, &padded_line(), &config), Err(Error::InvalidConfig(_))));
    let config = TrainingConfig { phases: vec![phase(vec![7])], ..TrainingConfig::default() };
    assert!(matches!(run_layerwise(&mut net, &padded_line(), &config), Err(Error::InvalidConfig(_))));
}

#[test]
fn density_loss_fits_linear_toy() {
    let target = ManifoldTarget::new("line", 2, Domain::Interval { lo: -1.0, hi: 1.0 }, |p| {
        DVector::from_vec(vec![2.0 * p[0], -p[0]])
    });
    let mut rng = seeded_rng(2);
    let r = ExpansiveLayer::random_linear(&mut rng, 1, 2).unwrap();
    let mut net = InjectiveNetwork::new(FlowBlock::identity(1), vec![(r, FlowBlock::identity(2))]).unwrap();
    let config = TrainingConfig {
        seed: 2,
        phases: vec![PhaseConfig { stages: vec![1], loss: LossKind::Density, steps: 2000, learning_rate: 1e-2 }],
        eval_samples: 64,
        lipschitz_log_interval: 100,
        ..TrainingConfig::default()
    };
    let trace = run_layerwise(&mut net, &target, &config).unwrap();
    let last = trace.last().unwrap();
    assert!(last.loss < 1e-3, "{last:?}");
    assert!(trace.records.windows(2).all(|w| w[0].step < w[1].step));
}

#[test]
fn frozen_stages_stay_bit_identical_and_runs_repeat() {
    let target = ManifoldTarget::new("line", 2, Domain::Interval { lo: -1.0, hi: 1.0 }, |p| {
        DVector::from_vec(vec![p[0], 0.5 * p[0] * p[0]])
    });
    let mut rng = seeded_rng(9);
    let base = InjectiveNetwork::new(
        FlowBlock::random(&mut rng, 1, 1, 4, 1e-2),
        vec![(ExpansiveLayer::random_injective_relu(&mut rng, 1, 2).unwrap(), FlowBlock::random(&mut rng, 2, 2, 8, 1e-2))],
    )
    .unwrap();
    let config = TrainingConfig {
        seed: 9,
        batch_size: 32,
        eval_samples: 32,
        lipschitz_log_interval: 10,
        phases: vec![
            PhaseConfig { stages: vec![1, 2], loss: LossKind::Manifold, steps: 40, learning_rate: 1e-2 },
            PhaseConfig { stages: vec![0], loss: LossKind::Density, steps: 40, learning_rate: 1e-2 },
        ],
        ..TrainingConfig::default()
    };
    let mut a = base.clone();
    let trace_a = run_layerwise(&mut a, &target, &config).unwrap();
    let after_phase1: Vec<f64> = [1, 2].iter().flat_map(|&s| a.stage_params(s)).collect();
    let mut b = base.clone();
    let trace_b = run_layerwise(&mut b, &target, &config).unwrap();
    assert_eq!(trace_a, trace_b);
    assert_eq!(a.params(), b.params());
    let p2 = &trace_a.phases[1];
    assert_eq!(p2.hash_before, p2.hash_after);
    assert_eq!(p2.frozen_stages, vec![1, 2]);
    let mut redo = base.clone();
    let p1_only = TrainingConfig { phases: config.phases[..1].to_vec(), ..config.clone() };
    run_layerwise(&mut redo, &target, &p1_only).unwrap();
    let redo_params: Vec<f64> = [1, 2].iter().flat_map(|&s| redo.stage_params(s)).collect();
    assert_eq!(after_phase1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), redo_params.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}
