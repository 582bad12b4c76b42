use injflow::expansive::ExpansiveLayer;
use injflow::flows::{CouplingLayer, Dense, FlowBlock, FlowLayer, Subnet};
use injflow::geometry::{sample_box, CompactSampleSet, SamplingLaw};
use injflow::linalg::{dist, seeded_rng};
use injflow::network::{InjectiveNetwork, Stage};
use injflow::Error;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn random_net(seed: u64) -> InjectiveNetwork {
    let mut rng = seeded_rng(seed);
    let t0 = FlowBlock::random(&mut rng, 2, 2, 8, 0.3);
    let r1 = if seed.is_multiple_of(2) {
        ExpansiveLayer::random_linear(&mut rng, 2, 3).unwrap()
    } else {
        ExpansiveLayer::random_injective_relu(&mut rng, 2, 4).unwrap()
    };
    let m = r1.out_dim();
    let t1 = FlowBlock::random(&mut rng, m, 2, 8, 0.3);
    InjectiveNetwork::new(t0, vec![(r1, t1)]).unwrap().with_latent_domain(vec![-1.0; 2], vec![1.0; 2]).unwrap()
}

#[test]
fn zero_pad_between_identities() {
    let net = InjectiveNetwork::new(FlowBlock::identity(1), vec![(ExpansiveLayer::zero_pad(1, 2).unwrap(), FlowBlock::identity(2))])
        .unwrap();
    assert_eq!(net.forward(&[3.0]).unwrap(), vec![3.0, 0.0]);
    assert_eq!(net.dims(), vec![1, 2]);
}

#[test]
fn single_linear_stage() {
    let r = ExpansiveLayer::linear(DMatrix::from_column_slice(2, 1, &[1.0, 1.0])).unwrap();
    let net = InjectiveNetwork::new(FlowBlock::identity(1), vec![(r, FlowBlock::identity(2))]).unwrap();
    assert_eq!(net.forward(&[2.0]).unwrap(), vec![2.0, 2.0]);
}

#[test]
fn random_pairs_map_to_distinct_outputs() {
    let net = random_net(3);
    let mut rng = seeded_rng(11);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x2: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        if dist(&x, &x2) == 0.0 {
            continue;
        }
        assert!(dist(&net.forward(&x).unwrap(), &net.forward(&x2).unwrap()) > 0.0);
    }
}

#[test]
fn stagewise_matches_batch() {
    let net = random_net(4);
    let x = sample_box(&[-1.0, -1.0], &[1.0, 1.0], 40, SamplingLaw::Random { seed: 2 }).unwrap().to_matrix();
    let batch = net.forward_batch(&x).unwrap();
    let mut h = x.clone();
    for s in net.stages() {
        h = s.forward_batch(&h).unwrap();
    }
    assert!((batch - h).amax() <= 1e-12);
}

#[test]
fn rejects_dimension_mismatch_and_shrinking() {
    let r = ExpansiveLayer::zero_pad(2, 3).unwrap();
    let err = InjectiveNetwork::new(FlowBlock::identity(1), vec![(r, FlowBlock::identity(3))]).unwrap_err();
    assert!(matches!(err, Error::InvalidLayer(_)), "{err}");
    assert!(ExpansiveLayer::zero_pad(3, 2).is_err());
    let err = InjectiveNetwork::from_stages(vec![Stage::Flow(FlowBlock::identity(2)), Stage::Flow(FlowBlock::identity(2))])
        .unwrap_err();
    assert!(matches!(err, Error::InvalidLayer(_)));
}

#[test]
fn identity_and_zero_pad_bounds_are_one() {
    let id = InjectiveNetwork::new(FlowBlock::identity(2), vec![]).unwrap();
    assert_eq!(id.lipschitz_bound(1.0), 1.0);
    let pad = InjectiveNetwork::new(FlowBlock::identity(1), vec![(ExpansiveLayer::zero_pad(1, 3).unwrap(), FlowBlock::identity(3))])
        .unwrap();
    assert_eq!(pad.lipschitz_bound(5.0), 1.0);
    let s = sample_box(&[-1.0, -1.0], &[1.0, 1.0], 30, SamplingLaw::Random { seed: 1 }).unwrap();
    assert!((id.lipschitz_estimate(&s).unwrap() - 1.0).abs() <= 1e-12);
}

#[test]
fn doubling_map_estimate() {
    let r = ExpansiveLayer::linear(DMatrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 2.0, 0.0, 0.0])).unwrap();
    let net = InjectiveNetwork::new(FlowBlock::identity(2), vec![(r, FlowBlock::identity(3))]).unwrap();
    let s = sample_box(&[-1.0, -1.0], &[1.0, 1.0], 20, SamplingLaw::Random { seed: 5 }).unwrap();
    assert!((net.lipschitz_estimate(&s).unwrap() - 2.0).abs() <= 1e-12);
    let single = CompactSampleSet::new(vec![DVector::from_vec(vec![0.5, 0.5])], "point").unwrap();
    assert!(matches!(net.lipschitz_estimate(&single), Err(Error::InvalidArgument(_))));
}

#[test]
fn coupling_bound_grows_with_clamp() {
    let mk = |c: f64| {
        let s = Subnet::Mlp {
            layers: vec![
                Dense { weight: DMatrix::from_element(4, 1, 3.0), bias: DVector::zeros(4) },
                Dense { weight: DMatrix::from_element(1, 4, 2.0), bias: DVector::zeros(1) },
            ],
        };
        let t = Subnet::affine(DMatrix::from_element(1, 1, 0.5), DVector::zeros(1));
        let layer = CouplingLayer::new(2, 1, vec![0, 1], s, t).unwrap().with_scale_clamp(c);
        let block = FlowBlock::new(2, vec![FlowLayer::AffineCoupling(layer)]).unwrap();
        InjectiveNetwork::new(block, vec![]).unwrap()
    };
    let (b1, b2) = (mk(1.0).lipschitz_bound(1.0), mk(2.0).lipschitz_bound(1.0));
    assert!(b1 >= 1f64.exp() && b1 < b2, "{b1} {b2}");
}

#[test]
fn estimate_below_bound_on_random_networks() {
    for seed in 0..50 {
        let net = random_net(seed);
        let s = sample_box(&[-1.0, -1.0], &[1.0, 1.0], 60, SamplingLaw::Random { seed }).unwrap();
        let est = net.lipschitz_estimate(&s).unwrap();
        let bound = net.lipschitz_bound_on_domain();
        assert!(est <= bound, "seed {seed}: {est} > {bound}");
    }
}

#[test]
fn checkpoint_round_trip() {
    for seed in 0..4 {
        let net = random_net(seed);
        let back = InjectiveNetwork::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.params(), net.params());
    }
}

#[test]
fn malformed_checkpoint_reports_position() {
    let err = InjectiveNetwork::from_json("{\n  \"format\": \"injflow-network\",\n  oops\n}").unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, Error::Parse(_)) && msg.contains("line 3"), "{msg}");
}

#[test]
fn numeric_errors_carry_stage_index() {
    let t = Subnet::affine(DMatrix::from_element(1, 1, 1e300), DVector::zeros(1));
    let layer = CouplingLayer::new(2, 1, vec![0, 1], Subnet::zeros(1, 1), t).unwrap();
    let block = FlowBlock::new(2, vec![FlowLayer::AffineCoupling(layer)]).unwrap();
    let r = ExpansiveLayer::linear(DMatrix::from_column_slice(2, 1, &[1.0, 1e10])).unwrap();
    let net = InjectiveNetwork::new(FlowBlock::identity(1), vec![(r, block)]).unwrap();
    assert!(net.forward(&[1e-12]).is_ok());
    match net.forward(&[1e10]) {
        Err(Error::Numeric { stage, .. }) => assert_eq!(stage, Some(2)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn parameter_round_trip_per_stage() {
    let mut net = random_net(8);
    let mut p = net.params();
    for v in p.iter_mut() {
        *v += 0.25;
    }
    let before = net.stage_params(0);
    net.set_stage_params(2, &p).unwrap();
    assert_eq!(net.stage_params(0), before);
    let r = net.param_ranges()[2].clone();
    assert_eq!(net.stage_params(2), p[r].to_vec());
    assert_eq!(net.param_names().len(), net.param_count());
}
