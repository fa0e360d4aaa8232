use nalgebra::{DMatrix, DVector, Vector3};
use nnquad::dynamics::{finite_difference_jacobian, DynamicsModel, PhysicalParams, RotorInput, State};
use nnquad::sysid::{
    featurize, parse_model, serialize_model, split_mse, train, Dataset, LearnedModel, NetKind, ReluNet, Split,
    SplitFractions, TrainConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kind() -> impl Strategy<Value = NetKind> {
    prop_oneof![Just(NetKind::Translational), Just(NetKind::Rotational)]
}

/// Random net with non-trivial normalisation, plus a random input.
fn net_and_point(kind: NetKind, hidden: usize, seed: u64) -> (ReluNet, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = ReluNet::random(kind, hidden, 0.5, &mut rng);
    let d = kind.input_dim();
    for i in 0..d {
        net.in_mean[i] = rng.random_range(-0.5..0.5);
        net.in_std[i] = rng.random_range(0.2..3.0);
    }
    for o in 0..3 {
        net.out_mean[o] = rng.random_range(-1.0..1.0);
        net.out_std[o] = rng.random_range(0.1..5.0);
    }
    let x = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    (net, x)
}

fn pattern(net: &ReluNet, x: &[f64]) -> Vec<bool> {
    net.pre_activations(x).unwrap().iter().map(|z| *z > 0.0).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Inside one activation region the net is exactly affine, so the
    // Jacobian predicts any displacement that keeps the pattern.
    #[test]
    fn forward_is_affine_within_a_region(kind in kind(), seed in any::<u64>(), scale in 1e-6..1e-3f64) {
        let (net, x) = net_and_point(kind, 30, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5555);
        let dx: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-scale..scale)).collect();
        let y: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
        prop_assume!(pattern(&net, &x) == pattern(&net, &y));
        let jd = net.jacobian(&x).unwrap() * DVector::from_vec(dx);
        let predicted = net.forward(&x).unwrap().physical + Vector3::new(jd[0], jd[1], jd[2]);
        let actual = net.forward(&y).unwrap().physical;
        prop_assert!((predicted - actual).norm() <= 1e-10 * (1.0 + actual.norm()));
    }

    #[test]
    fn jacobian_matches_central_differences(kind in kind(), seed in any::<u64>()) {
        let (net, x) = net_and_point(kind, 40, seed);
        let h = 1e-6;
        let j = net.jacobian(&x).unwrap();
        let mut fd = DMatrix::zeros(3, x.len());
        for i in 0..x.len() {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[i] += h;
            minus[i] -= h;
            prop_assume!(pattern(&net, &plus) == pattern(&net, &x) && pattern(&net, &minus) == pattern(&net, &x));
            let d = (net.forward(&plus).unwrap().physical - net.forward(&minus).unwrap().physical) / (2.0 * h);
            fd.column_mut(i).copy_from(&d);
        }
        let rel = (&j - &fd).abs().max() / j.abs().max().max(1e-12);
        prop_assert!(rel <= 1e-5, "relative error {rel}");
    }

    #[test]
    fn model_files_round_trip_exactly(kind in kind(), seed in any::<u64>(), hidden in 1usize..20) {
        let (net, x) = net_and_point(kind, hidden, seed);
        let back = parse_model(&serialize_model(&net)).unwrap();
        prop_assert_eq!(&back, &net);
        prop_assert_eq!(back.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn split_is_a_seeded_partition(n in 1usize..2000, seed in any::<u64>(), train in 0.1..0.8f64, val in 0.0..0.2f64) {
        let f = SplitFractions { train, val };
        let a = f.assign(n, seed).unwrap();
        prop_assert_eq!(&a, &f.assign(n, seed).unwrap());
        prop_assert_eq!(a.len(), n);
        let count = |s| a.iter().filter(|&&x| x == s).count();
        prop_assert_eq!(count(Split::Train), (train * n as f64).round() as usize);
        prop_assert_eq!(count(Split::Train) + count(Split::Val) + count(Split::Test), n);
    }

    #[test]
    fn features_are_periodic_in_the_angles(
        v in prop::array::uniform3(-2.0..2.0f64),
        zeta in prop::array::uniform3(-3.0..3.0f64),
        turns in prop::array::uniform3(-3i32..3),
    ) {
        let s = State { v: v.into(), zeta: zeta.into(), ..Default::default() };
        let mut shifted = s;
        for i in 0..3 {
            shifted.zeta[i] += std::f64::consts::TAU * turns[i] as f64;
        }
        let u = RotorInput::new(0.3, Vector3::new(1e-3, 0.0, -1e-3));
        for kind in [NetKind::Translational, NetKind::Rotational] {
            let a = featurize(&s, &u, kind);
            let b = featurize(&shifted, &u, kind);
            prop_assert_eq!(a.len(), kind.input_dim());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            for i in 0..3 {
                prop_assert!((a[6 + i].powi(2) + a[9 + i].powi(2) - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn learned_model_jacobian_matches_differences_on_random_nets() {
    let p = PhysicalParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let fv = ReluNet::random(NetKind::Translational, 25, 0.4, &mut rng);
        let fw = ReluNet::random(NetKind::Rotational, 25, 0.4, &mut rng);
        let m = LearnedModel::new(p, fv, fw).unwrap();
        let s = State {
            v: Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            zeta: Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-3.0..3.0)),
            omega: Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            ..Default::default()
        };
        let u = RotorInput::new(0.3, Vector3::new(1e-3, -1e-3, 5e-4));
        let a = m.accel_jacobian(&s, &u).unwrap();
        let f = finite_difference_jacobian(&m, &s, &u, 1e-7).unwrap();
        assert!((a.wrt_state - f.wrt_state).abs().max() < 1e-5 * (1.0 + a.wrt_state.abs().max()));
    }
}

/// Targets from a known ReLU net are recoverable: training on them from a
/// random start drives the validation error well below the initial one.
#[test]
fn training_recovers_a_teacher_net() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let teacher = ReluNet::random(NetKind::Translational, 6, 0.8, &mut rng);
    let n = 600;
    let x = DMatrix::from_fn(n, 13, |_, _| rng.random_range(-1.0..1.0));
    let mut y = DMatrix::zeros(n, 3);
    for i in 0..n {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        let out = teacher.forward(&row).unwrap().physical;
        for o in 0..3 {
            y[(i, o)] = out[o];
        }
    }
    let split = SplitFractions::default().assign(n, 2).unwrap();
    let data = Dataset::new(NetKind::Translational, x, y, split).unwrap();
    let cfg = TrainConfig {
        passes: 300,
        hidden: 20,
        l2_reg: 0.0,
        ..Default::default()
    };
    let (net, report) = train(&data, &cfg).unwrap();
    let initial = report.history[0].val_mse;
    assert!(report.val_mse < 0.05 * initial, "{} vs {initial}", report.val_mse);
    assert_eq!(split_mse(&net, &data, Split::Val).unwrap(), report.val_mse);
    assert!(report.non_increasing_ratio() > 0.9);
}
