//! Analytic gradients of the batch loss.
//!
//! Complex parameters get `2 dL/d conj(z)`, whose real and imaginary parts are
//! the partial derivatives with respect to `Re z` and `Im z`.

use rayon::prelude::*;

use super::channel::{accumulate_site_grad, ket_maps, left_envs, site_gradient, transfer_adjoint, KetMaps};
use super::htn::HtnModel;
use super::loss::{check_batch, finish_batch, sample_loss, BatchLoss, LossConfig, Sample, SampleLoss, CHUNK};
use crate::error::Result;
use crate::tn::{ComplexTensor, C64, ZERO};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGradient {
    /// Same shapes as the site tensors.
    pub sites: Vec<ComplexTensor>,
    /// `dL/dD` per reduction operator entry.
    pub reduction: Vec<Vec<f64>>,
}

impl ModelGradient {
    fn zeros(model: &HtnModel) -> Self {
        ModelGradient {
            sites: model.sites().iter().map(|s| ComplexTensor::zeros(s.dims())).collect(),
            reduction: model.reduction().iter().map(|d| vec![0.0; d.len()]).collect(),
        }
    }

    fn add(&mut self, other: &ModelGradient) {
        for (a, b) in self.sites.iter_mut().zip(&other.sites) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        for (a, b) in self.reduction.iter_mut().zip(&other.reduction) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, alpha: f64) {
        for s in &mut self.sites {
            for x in s.data_mut() {
                *x *= alpha;
            }
        }
        for d in &mut self.reduction {
            for x in d.iter_mut() {
                *x *= alpha;
            }
        }
    }
}

// Adds the unnormalized per-sample gradient of tr(gamma rho) into `grad`.
fn backprop_sample(model: &HtnModel, sigma: &super::encoding::EncodedState, gamma: Vec<C64>, grad: &mut ModelGradient) {
    let envs = left_envs(model, sigma);
    let maps: Vec<KetMaps> = (0..model.n_sites())
        .map(|k| ket_maps(&model.sites()[k], &sigma.site_vectors[k]))
        .collect();
    let mut h = gamma;
    for k in (0..model.n_sites()).rev() {
        let d = model.reduction()[k].diag();
        let m = &maps[k];
        let mut dv = vec![ZERO; m.data.len()];
        site_gradient(&envs[k], &h, m, d, &mut dv, &mut grad.reduction[k]);
        // 2 d/d conj(W)
        for x in dv.iter_mut() {
            *x *= 2.0;
        }
        accumulate_site_grad(&dv, m, &sigma.site_vectors[k], grad.sites[k].data_mut());
        if k > 0 {
            h = transfer_adjoint(&h, envs[k].q, m, d);
        }
    }
}

/// Batch loss and its gradient with respect to the raw site entries and the
/// reduction operator entries. Isometry and bound constraints are ignored.
pub fn loss_and_gradient(batch: &[Sample], model: &HtnModel, cfg: &LossConfig) -> Result<(BatchLoss, ModelGradient)> {
    cfg.validate()?;
    check_batch(batch, model)?;
    let d = model.output_dim();
    let parts: Vec<Result<(f64, usize, usize, ModelGradient)>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = ModelGradient::zeros(model);
            let (mut sum, mut used, mut gone) = (0.0, 0, 0);
            for (sigma, label) in chunk {
                let rho = super::channel::forward_raw(model, sigma);
                match sample_loss(&rho, d, label.class_index, cfg, true)? {
                    SampleLoss::Vanished => gone += 1,
                    SampleLoss::Value { loss, gamma } => {
                        sum += loss;
                        used += 1;
                        backprop_sample(model, sigma, gamma.expect("requested"), &mut grad);
                    }
                }
            }
            Ok((sum, used, gone, grad))
        })
        .collect();
    let mut total = ModelGradient::zeros(model);
    let (mut sum, mut used, mut gone) = (0.0, 0, 0);
    for p in parts {
        let (s, u, g, gr) = p?;
        sum += s;
        used += u;
        gone += g;
        total.add(&gr);
    }
    let loss = finish_batch(sum, used, gone)?;
    total.scale(1.0 / used as f64);
    Ok((loss, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::encoding::encode_rotational;
    use crate::model::htn::Architecture;
    use crate::model::loss::{batch_loss, LabelState, LossKind, NormVariant};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (HtnModel, Vec<Sample>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = Architecture::new(3, 2, vec![1, 2, 2], 3).unwrap();
        let mut model = HtnModel::random(arch, &mut rng).unwrap();
        for d in model.reduction_mut() {
            for x in d.diag_mut() {
                *x = rng.gen_range(0.2..0.8);
            }
        }
        let batch = (0..4)
            .map(|i| {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
                (encode_rotational(&x, 0).unwrap(), LabelState::new(i % 3, 4).unwrap())
            })
            .collect();
        (model, batch)
    }

    fn check(cfg: LossConfig) {
        let (model, batch) = setup(11);
        let (_, grad) = loss_and_gradient(&batch, &model, &cfg).unwrap();
        let h = 1e-5;
        let f = |m: &HtnModel| batch_loss(&batch, m, &cfg).unwrap().loss;
        for k in 0..model.n_sites() {
            for idx in [0, 3, 7] {
                for imag in [false, true] {
                    let mut p = model.clone();
                    let mut q = model.clone();
                    let dz = if imag { C64::new(0.0, h) } else { C64::new(h, 0.0) };
                    p.sites_mut()[k].data_mut()[idx] += dz;
                    q.sites_mut()[k].data_mut()[idx] -= dz;
                    let fd = (f(&p) - f(&q)) / (2.0 * h);
                    let g = grad.sites[k].data()[idx];
                    let an = if imag { g.im } else { g.re };
                    assert!((fd - an).abs() < 1e-6 * (1.0 + fd.abs()), "site {k}[{idx}] {imag}: {fd} vs {an}");
                }
            }
            for r in 0..2 {
                let mut p = model.clone();
                let mut q = model.clone();
                p.reduction_mut()[k].diag_mut()[r] += h;
                q.reduction_mut()[k].diag_mut()[r] -= h;
                let fd = (f(&p) - f(&q)) / (2.0 * h);
                let an = grad.reduction[k][r];
                assert!((fd - an).abs() < 1e-6 * (1.0 + fd.abs()), "D {k}[{r}]: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        check(LossConfig { norm: NormVariant::Full, lambda: 0.05, kind: LossKind::CrossEntropy });
        check(LossConfig { norm: NormVariant::Weight { w: 0.3 }, lambda: 0.05, kind: LossKind::CrossEntropy });
        check(LossConfig { norm: NormVariant::None, lambda: 0.05, kind: LossKind::CrossEntropy });
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        check(LossConfig { norm: NormVariant::Full, lambda: 0.0, kind: LossKind::Mse });
        check(LossConfig { norm: NormVariant::Threshold { t: 0.05 }, lambda: 0.1, kind: LossKind::Mse });
    }
}
