//! Independent reference computations for values the library derives, and
//! the published numbers it must reproduce.

use htn::model::{
    batch_loss, classify_density, encode_rotational, forward, Architecture, HtnModel, LabelState, LossConfig,
    LossKind, NormVariant,
};
use htn::qcompile::{simulate, toffoli_circuit, StateVector};
use htn::tn::{DensityMatrix, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One-site model by hand: `K[r][o] = sum_s phi_s W[0, s, r, o, 0]`,
/// `rho[o][o'] = sum_r D_r K[r][o] conj(K[r][o'])`.
fn one_site_density(model: &HtnModel, x: f64) -> Vec<Vec<C64>> {
    let w = &model.sites()[0];
    let [_, _, xi, o, _] = <[usize; 5]>::try_from(w.dims()).unwrap();
    let phi = [(std::f64::consts::FRAC_PI_2 * x).cos(), (std::f64::consts::FRAC_PI_2 * x).sin()];
    let d = model.reduction()[0].diag();
    let mut rho = vec![vec![C64::new(0.0, 0.0); o]; o];
    for r in 0..xi {
        let k: Vec<C64> = (0..o).map(|a| (0..2).map(|s| w.get(&[0, s, r, a, 0]) * phi[s]).sum()).collect();
        for a in 0..o {
            for b in 0..o {
                rho[a][b] += k[a] * k[b].conj() * d[r];
            }
        }
    }
    rho
}

/// Eigen-free 2x2 Hermitian log via the closed-form spectral projectors.
fn log2x2(m: &[Vec<C64>]) -> [[C64; 2]; 2] {
    let (a, d, b) = (m[0][0].re, m[1][1].re, m[0][1]);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    let (l1, l2) = (mean + rad, mean - rad);
    let mut out = [[C64::new(0.0, 0.0); 2]; 2];
    if rad < 1e-300 {
        out[0][0] = C64::new(l1.ln(), 0.0);
        out[1][1] = C64::new(l1.ln(), 0.0);
        return out;
    }
    // P1 = (M - l2 I) / (l1 - l2), P2 = I - P1
    let (f1, f2) = (l1.ln(), l2.ln());
    for i in 0..2 {
        for j in 0..2 {
            let eye = if i == j { 1.0 } else { 0.0 };
            let p1 = (m[i][j] - C64::new(l2 * eye, 0.0)) / (l1 - l2);
            out[i][j] = p1 * f1 + (C64::new(eye, 0.0) - p1) * f2;
        }
    }
    out
}

#[test]
fn one_site_cross_entropy_matches_hand_pipeline() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let xi = rng.gen_range(1..=3);
        let arch = Architecture::new(1, xi, vec![2], 2).unwrap();
        let model = HtnModel::random_with_reduction(arch, &mut rng).unwrap();
        let x = rng.gen_range(0.0..1.0);
        let l = rng.gen_range(0..2);
        let lambda = rng.gen_range(1e-3..0.2);
        let t = rng.gen_range(0.05..1.0);

        let mut rho = one_site_density(&model, x);
        let tr = rho[0][0].re + rho[1][1].re;
        let mps = forward(&model, &encode_rotational(&[x], 0).unwrap()).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert!((mps.get(a, b) - rho[a][b]).norm() < 1e-12);
            }
        }
        // threshold normalization, then depolarization
        for row in rho.iter_mut() {
            for z in row.iter_mut() {
                *z /= tr.max(t);
            }
        }
        for (i, row) in rho.iter_mut().enumerate() {
            for (j, z) in row.iter_mut().enumerate() {
                *z *= 1.0 - lambda;
                if i == j {
                    *z += lambda / 2.0;
                }
            }
        }
        let want = -log2x2(&rho)[l][l].re;
        let cfg = LossConfig { norm: NormVariant::Threshold { t }, lambda, kind: LossKind::CrossEntropy };
        let batch = vec![(encode_rotational(&[x], 0).unwrap(), LabelState::new(l, 2).unwrap())];
        let got = batch_loss(&batch, &model, &cfg).unwrap().loss;
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn mse_of_maximally_mixed_qubit() {
    // 1/2 tr(diag(1/2, -1/2)^2)
    let rho = DensityMatrix::maximally_mixed(2).unwrap();
    let term = htn::model::mse_term(&rho, &LabelState::new(0, 2).unwrap());
    assert!((term - 0.25).abs() < 1e-15);
}

#[test]
fn toffoli_outputs_classify_as_the_published_basis_states() {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let plus = [C64::new(h, 0.0), C64::new(h, 0.0)];
    let one = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
    let c = toffoli_circuit();
    for (input, want) in [([plus, one], 0), ([one, plus], 3)] {
        let sim = simulate(&c, &StateVector::product(&input).unwrap()).unwrap();
        let rho = DensityMatrix::pure(sim.output.amplitudes()).unwrap();
        assert_eq!(classify_density(&rho, 4), want);
        assert!((sim.retention - 0.5).abs() < 1e-12);
    }
}

#[test]
fn iris_has_the_canonical_shape() {
    let data = htn::experiment::load_iris(concat!(env!("CARGO_MANIFEST_DIR"), "/data/iris.csv")).unwrap();
    assert_eq!(data.features.len(), 150);
    let mut counts = [0; 3];
    for &l in &data.labels {
        counts[l] += 1;
    }
    assert_eq!(counts, [50, 50, 50]);
}
