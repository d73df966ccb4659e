//! Cross-module invariants as property tests.

use htn::model::{
    cross_entropy_term, depolarize, encode_rotational, forward, mse_term, normalize, process, randomized_completion,
    Architecture, HtnModel, LabelState, LossConfig, LossKind, NormVariant,
};
use htn::qcompile::{compile_matrix, parse, serialize, simulate, AncillaMode, StateVector};
use htn::tn::{ComplexTensor, DensityMatrix, C64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_model(rng: &mut ChaCha8Rng) -> HtnModel {
    loop {
        let n = rng.gen_range(1..=4);
        let outs: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=2)).collect();
        let classes = rng.gen_range(1..=outs.iter().product::<usize>());
        if let Ok(a) = Architecture::new(rng.gen_range(1..=4), rng.gen_range(1..=4), outs, classes) {
            return HtnModel::random_with_reduction(a, rng).unwrap();
        }
    }
}

fn features(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect()
}

fn min_eigenvalue(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    let d = a.dim();
    let diff: Vec<C64> = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    let m = DensityMatrix::from_unchecked(d, diff).unwrap();
    m.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identity_reduction_is_trace_preserving(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = small_model(&mut rng).with_identity_reduction();
        let sigma = encode_rotational(&features(model.n_sites(), &mut rng), 0).unwrap();
        let rho = forward(&model, &sigma).unwrap();
        prop_assert!((rho.trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn forward_is_a_subnormalized_state(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = small_model(&mut rng);
        let sigma = encode_rotational(&features(model.n_sites(), &mut rng), 0).unwrap();
        let rho = forward(&model, &sigma).unwrap();
        prop_assert!(rho.validate().is_ok());
        prop_assert!(rho.trace() <= 1.0 + 1e-12);
        prop_assert!(rho.eigenvalues()[0] >= -1e-12);
    }

    #[test]
    fn depolarization_preserves_order(seed in any::<u64>(), lambda in 0.0f64..0.99, d in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // A = B + P with P >= 0
        let b = DensityMatrix::random(d, &mut rng).scaled(0.5);
        let p = DensityMatrix::random(d, &mut rng).scaled(0.5);
        let sum: Vec<C64> = b.data().iter().zip(p.data()).map(|(x, y)| x + y).collect();
        let a = DensityMatrix::from_unchecked(d, sum).unwrap();
        let gap = min_eigenvalue(&depolarize(&a, lambda).unwrap(), &depolarize(&b, lambda).unwrap());
        prop_assert!(gap >= -1e-12, "{gap}");
    }

    #[test]
    fn identity_reduction_is_no_worse(seed in any::<u64>(), lambda in 1e-6f64..=0.1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = small_model(&mut rng);
        let sigma = encode_rotational(&features(model.n_sites(), &mut rng), 0).unwrap();
        let label = LabelState::new(rng.gen_range(0..model.n_classes()), model.output_dim()).unwrap();
        let cfg = LossConfig { norm: NormVariant::None, lambda, kind: LossKind::CrossEntropy };
        let with_d = cross_entropy_term(&process(&forward(&model, &sigma).unwrap(), &cfg).unwrap(), &label).unwrap();
        let id = model.with_identity_reduction();
        let with_i = cross_entropy_term(&process(&forward(&id, &sigma).unwrap(), &cfg).unwrap(), &label).unwrap();
        prop_assert!(with_i <= with_d + 1e-12, "{with_i} > {with_d}");
    }

    #[test]
    fn loss_is_monotone_in_threshold_and_weight(seed in any::<u64>(), p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = small_model(&mut rng);
        let sigma = encode_rotational(&features(model.n_sites(), &mut rng), 0).unwrap();
        let label = LabelState::new(rng.gen_range(0..model.n_classes()), model.output_dim()).unwrap();
        let rho = forward(&model, &sigma).unwrap();
        let (lo, hi) = (p.min(q), p.max(q));
        let ce = |norm| {
            let cfg = LossConfig { norm, lambda: 1e-3, kind: LossKind::CrossEntropy };
            cross_entropy_term(&process(&rho, &cfg).unwrap(), &label).unwrap()
        };
        let (t_lo, t_hi) = (ce(NormVariant::Threshold { t: lo }), ce(NormVariant::Threshold { t: hi }));
        let (w_lo, w_hi) = (ce(NormVariant::Weight { w: lo }), ce(NormVariant::Weight { w: hi }));
        prop_assert!(t_lo <= t_hi + 1e-12, "t: {} > {}", t_lo, t_hi);
        prop_assert!(w_lo <= w_hi + 1e-12, "w: {} > {}", w_lo, w_hi);
    }

    #[test]
    fn completion_never_hurts_mse(seed in any::<u64>(), scale in 0.0f64..=1.0, d in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = DensityMatrix::random(d, &mut rng).scaled(scale);
        let label = LabelState::new(rng.gen_range(0..d), d).unwrap();
        let completed = randomized_completion(&rho);
        prop_assert!((completed.trace() - 1.0).abs() < 1e-12);
        let c = 1.0 - rho.trace();
        let gap = mse_term(&completed, &label) - mse_term(&rho, &label);
        prop_assert!(gap <= 1e-12);
        // halved squared distance: the gap is -c^2 / (2 d)
        prop_assert!((gap + c * c / (2.0 * d as f64)).abs() < 1e-12, "{gap} vs {c}");
    }

    #[test]
    fn normalization_traces(seed in any::<u64>(), t in 1e-3f64..=1.0, w in 0.0f64..=1.0, scale in 1e-3f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = DensityMatrix::random(3, &mut rng).scaled(scale);
        let tr = rho.trace();
        let full = normalize(&rho, NormVariant::Full).unwrap().trace();
        let thr = normalize(&rho, NormVariant::Threshold { t }).unwrap().trace();
        let wt = normalize(&rho, NormVariant::Weight { w }).unwrap().trace();
        prop_assert!((full - 1.0).abs() < 1e-12);
        prop_assert!((thr - (tr / t).min(1.0)).abs() < 1e-12);
        prop_assert!((wt - tr.powf(w)).abs() < 1e-12);
    }

    #[test]
    fn compiled_circuits_round_trip_and_bound_retention(seed in any::<u64>(), k in 1u32..=3, deferred in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 1usize << k;
        let m = ComplexTensor::random(&[d, d], &mut rng).into_data();
        let mode = if deferred { AncillaMode::Deferred } else { AncillaMode::Single };
        let c = compile_matrix(d, &m, mode).unwrap();
        prop_assert_eq!(parse(&serialize(&c)).unwrap(), c.clone());
        let psi = StateVector::normalized(ComplexTensor::random(&[d], &mut rng).into_data()).unwrap();
        let sim = simulate(&c, &psi).unwrap();
        prop_assert!(sim.retention <= 1.0 + 1e-12);
        let angles_ok = c.gates.iter().all(|g| match g {
            htn::qcompile::Gate::Cry { angle, .. } => (0.0..=std::f64::consts::PI).contains(angle),
            _ => true,
        });
        prop_assert!(angles_ok);
    }
}

#[test]
fn unitary_matrices_keep_every_shot() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for d in [2, 4, 8] {
        let g = ComplexTensor::random(&[d, d], &mut rng);
        let u = htn::tn::isometrize(&g, &[0]).unwrap().into_data();
        let c = compile_matrix(d, &u, AncillaMode::Single).unwrap();
        for _ in 0..5 {
            let psi = StateVector::normalized(ComplexTensor::random(&[d], &mut rng).into_data()).unwrap();
            assert!((simulate(&c, &psi).unwrap().retention - 1.0).abs() < 1e-12);
        }
    }
}
