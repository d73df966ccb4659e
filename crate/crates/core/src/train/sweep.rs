//! Two-site sweeps: optimize a window of adjacent sites against cached
//! environments, re-split the merged pair, move on.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::cache::EnvironmentCache;
use crate::error::{HtnError, Result};
use crate::model::channel::{
    accumulate_site_grad, close, close_adjoint, ket_maps, site_gradient, transfer_adjoint, transfer_site, Env,
    KetMaps, RightEnv,
};
use crate::model::loss::{finish_batch, sample_loss, SampleLoss, CHUNK};
use crate::model::{batch_loss, BatchLoss, HtnModel, LossConfig, ReductionOperator, Sample, SITE_IN_AXES};
use crate::tn::linalg::{adjoint, qr_thin, svd};
use crate::tn::{isometrize, ComplexTensor, C64, ZERO};

/// Relative tolerance of the cached-versus-recontracted loss check.
pub const CACHE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub n_sweeps: usize,
    pub adam_steps_per_site: usize,
    pub adam_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Recontract the full network after every bond update and compare.
    pub check_cache: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        SweepConfig {
            n_sweeps: 20,
            adam_steps_per_site: 50,
            adam_lr: a.lr,
            adam_beta1: a.beta1,
            adam_beta2: a.beta2,
            adam_eps: a.eps,
            seed: 0,
            check_cache: true,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sweeps < 1 {
            return Err(HtnError::Config("n_sweeps must be at least 1".into()));
        }
        if !(self.adam_lr > 0.0) {
            return Err(HtnError::Config(format!("learning rate {} must be positive", self.adam_lr)));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return Err(HtnError::Config("Adam betas must lie in [0, 1) and eps must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.adam_lr, beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps }
    }
}

/// Training loss after every bond update of one sweep.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepMetrics {
    /// First site of each updated window, in update order.
    pub windows: Vec<usize>,
    pub bond_losses: Vec<f64>,
}

#[derive(Clone, Debug)]
struct WindowParams {
    w: Vec<ComplexTensor>,
    d: Vec<Vec<f64>>,
}

struct WindowGrad {
    w: Vec<Vec<C64>>,
    d: Vec<Vec<f64>>,
}

struct Window<'a> {
    k: usize,
    outs: Vec<usize>,
    output_dim: usize,
    batch: &'a [Sample],
    left: &'a [Env],
    right: &'a [RightEnv],
}

impl Window<'_> {
    fn eval(&self, p: &WindowParams, cfg: &LossConfig, want_grad: bool) -> Result<(BatchLoss, Option<WindowGrad>)> {
        let len = p.w.len();
        let parts: Vec<Result<(f64, usize, usize, Option<WindowGrad>)>> = self
            .batch
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(ci, chunk)| {
                let mut grad = want_grad.then(|| WindowGrad {
                    w: p.w.iter().map(|w| vec![ZERO; w.len()]).collect(),
                    d: p.d.iter().map(|d| vec![0.0; d.len()]).collect(),
                });
                let (mut sum, mut used, mut gone) = (0.0, 0, 0);
                for (off, (sigma, label)) in chunk.iter().enumerate() {
                    let i = ci * CHUNK + off;
                    let phis: Vec<&[C64; 2]> = (0..len).map(|j| &sigma.site_vectors[self.k + j]).collect();
                    let maps: Vec<KetMaps> = (0..len).map(|j| ket_maps(&p.w[j], phis[j])).collect();
                    let mut envs: Vec<Env> = Vec::with_capacity(len + 1);
                    envs.push(self.left[i].clone());
                    for j in 0..len {
                        let next = transfer_site(&envs[j], &maps[j], &p.d[j], self.outs[j]);
                        envs.push(next);
                    }
                    let rho = close(&envs[len], &self.right[i]);
                    match sample_loss(&rho, self.output_dim, label.class_index, cfg, want_grad)? {
                        SampleLoss::Vanished => gone += 1,
                        SampleLoss::Value { loss, gamma } => {
                            sum += loss;
                            used += 1;
                            if let (Some(g), Some(gamma)) = (grad.as_mut(), gamma) {
                                let mut h = close_adjoint(&gamma, envs[len].q, &self.right[i]);
                                for j in (0..len).rev() {
                                    let mut dv = vec![ZERO; maps[j].data.len()];
                                    site_gradient(&envs[j], &h, &maps[j], &p.d[j], &mut dv, &mut g.d[j]);
                                    for x in dv.iter_mut() {
                                        *x *= 2.0;
                                    }
                                    accumulate_site_grad(&dv, &maps[j], phis[j], &mut g.w[j]);
                                    if j > 0 {
                                        h = transfer_adjoint(&h, envs[j].q, &maps[j], &p.d[j]);
                                    }
                                }
                            }
                        }
                    }
                }
                Ok((sum, used, gone, grad))
            })
            .collect();
        let (mut sum, mut used, mut gone) = (0.0, 0, 0);
        let mut total: Option<WindowGrad> = None;
        for part in parts {
            let (s, u, g, gr) = part?;
            sum += s;
            used += u;
            gone += g;
            if let Some(gr) = gr {
                match total.as_mut() {
                    None => total = Some(gr),
                    Some(t) => {
                        for (a, b) in t.w.iter_mut().zip(&gr.w) {
                            for (x, y) in a.iter_mut().zip(b) {
                                *x += y;
                            }
                        }
                        for (a, b) in t.d.iter_mut().zip(&gr.d) {
                            for (x, y) in a.iter_mut().zip(b) {
                                *x += y;
                            }
                        }
                    }
                }
            }
        }
        let loss = finish_batch(sum, used, gone)?;
        if let Some(t) = total.as_mut() {
            let s = 1.0 / used as f64;
            t.w.iter_mut().flatten().for_each(|x| *x *= s);
            t.d.iter_mut().flatten().for_each(|x| *x *= s);
        }
        Ok((loss, total))
    }
}

fn pack(p: &WindowParams) -> Vec<f64> {
    let mut out = Vec::new();
    for w in &p.w {
        for z in w.data() {
            out.push(z.re);
            out.push(z.im);
        }
    }
    for d in &p.d {
        out.extend_from_slice(d);
    }
    out
}

fn pack_grad(g: &WindowGrad) -> Vec<f64> {
    let mut out = Vec::new();
    for w in &g.w {
        for z in w {
            out.push(z.re);
            out.push(z.im);
        }
    }
    for d in &g.d {
        out.extend_from_slice(d);
    }
    out
}

// Writes the flat vector back, then projects onto the constraint set.
fn unpack_project(flat: &[f64], p: &mut WindowParams) -> Result<()> {
    let mut pos = 0;
    for w in p.w.iter_mut() {
        for z in w.data_mut() {
            *z = C64::new(flat[pos], flat[pos + 1]);
            pos += 2;
        }
        *w = isometrize(w, &SITE_IN_AXES)?;
    }
    for d in p.d.iter_mut() {
        let n = d.len();
        *d = ReductionOperator::from_params(&flat[pos..pos + n])?.diag().to_vec();
        pos += n;
    }
    Ok(())
}

/// Merges two neighbouring isometries and splits them again by SVD, keeping
/// `bond` singular values. The left factor takes `U S / sqrt(2)` and the right
/// `sqrt(2) V^dagger`, which reproduces the pair exactly when no singular
/// value is discarded.
pub(crate) fn resplit(a: &ComplexTensor, b: &ComplexTensor, bond: usize) -> Result<(ComplexTensor, ComplexTensor)> {
    // a * b has rank <= chi, so its SVD follows from QR of both factors and
    // an SVD of the chi x chi core.
    let chi = a.dims()[4];
    if b.dims()[0] != chi || bond > chi {
        return Err(HtnError::Consistency(format!("cannot resplit a bond of {chi} into {bond}")));
    }
    let rows = a.len() / chi;
    let cols = b.len() / chi;
    let (qa, ra) = qr_thin(rows, chi, a.data());
    let (qb, rb) = qr_thin(cols, chi, &adjoint(chi, cols, b.data()));
    let ka = rows.min(chi);
    let kb = cols.min(chi);
    // core = ra * rb^dagger  (ka x kb)
    let mut core = vec![ZERO; ka * kb];
    for i in 0..ka {
        for j in 0..kb {
            core[i * kb + j] = (0..chi).map(|p| ra[i * chi + p] * rb[j * chi + p].conj()).sum();
        }
    }
    let f = svd(ka, kb, &core);
    if f.k < bond {
        return Err(HtnError::Consistency(format!("split kept {} of {bond} singular values", f.k)));
    }
    let half = std::f64::consts::FRAC_1_SQRT_2;
    // left = qa * u * s / sqrt2, right = sqrt2 * vh * qb^dagger
    let mut left = vec![ZERO; rows * bond];
    for i in 0..rows {
        for p in 0..ka {
            let x = qa[i * ka + p];
            for j in 0..bond {
                left[i * bond + j] += x * f.u[p * f.k + j];
            }
        }
        for j in 0..bond {
            left[i * bond + j] *= f.s[j] * half;
        }
    }
    let mut right = vec![ZERO; bond * cols];
    for j in 0..bond {
        for p in 0..kb {
            let y = f.vh[j * kb + p] * std::f64::consts::SQRT_2;
            for c in 0..cols {
                right[j * cols + c] += y * qb[c * kb + p].conj();
            }
        }
    }
    let mut ldims = a.dims().to_vec();
    ldims[4] = bond;
    let mut rdims = b.dims().to_vec();
    rdims[0] = bond;
    let left = ComplexTensor::new(ldims, left)?;
    let right = ComplexTensor::new(rdims, right)?;
    Ok((isometrize(&left, &SITE_IN_AXES)?, isometrize(&right, &SITE_IN_AXES)?))
}

fn ensure_left(cache: &mut EnvironmentCache, model: &HtnModel, batch: &[Sample], k: usize) {
    let mut j = k;
    while !cache.has_left(j) {
        j -= 1;
    }
    while j < k {
        cache.push_left(model, batch, j);
        j += 1;
    }
}

fn ensure_right(cache: &mut EnvironmentCache, model: &HtnModel, batch: &[Sample], k: usize) {
    let mut j = k;
    while !cache.has_right(j) {
        j += 1;
    }
    while j > k {
        j -= 1;
        cache.push_right(model, batch, j);
    }
}

fn recoverable(e: &HtnError) -> bool {
    matches!(e, HtnError::VanishedState { .. } | HtnError::NumericalDomain(_))
}

/// Optimizes the window starting at site `k` (two sites, or one if the chain
/// has a single site) and writes the result into `model`. Returns the
/// training loss after the update.
fn update_window(
    model: &mut HtnModel,
    batch: &[Sample],
    loss_cfg: &LossConfig,
    sweep_cfg: &SweepConfig,
    cache: &mut EnvironmentCache,
    k: usize,
) -> Result<f64> {
    let n = model.n_sites();
    let len = if n == 1 { 1 } else { 2 };
    ensure_left(cache, model, batch, k);
    ensure_right(cache, model, batch, k + len);
    let arch = model.architecture().clone();
    let window = Window {
        k,
        outs: arch.output_dims[k..k + len].to_vec(),
        output_dim: arch.output_dim(),
        batch,
        left: cache.left[k].as_ref().expect("ensured"),
        right: cache.right[k + len].as_ref().expect("ensured"),
    };
    let mut cur = WindowParams {
        w: model.sites()[k..k + len].to_vec(),
        d: model.reduction()[k..k + len].iter().map(|d| d.diag().to_vec()).collect(),
    };
    let adam = sweep_cfg.adam();
    let mut state = AdamState::new(pack(&cur).len());
    let steps = sweep_cfg.adam_steps_per_site;
    let mut best: Option<(f64, WindowParams)> = None;
    for step in 0..=steps {
        let want_grad = step < steps;
        let (loss, grad) = match window.eval(&cur, loss_cfg, want_grad) {
            Ok(x) => x,
            Err(e) if step > 0 && recoverable(&e) => break,
            Err(e) => return Err(e),
        };
        if best.as_ref().is_none_or(|(b, _)| loss.loss < *b) {
            best = Some((loss.loss, cur.clone()));
        }
        let Some(grad) = grad else { break };
        let mut flat = pack(&cur);
        adam_step(&mut flat, &pack_grad(&grad), &mut state, &adam);
        unpack_project(&flat, &mut cur)?;
    }
    let (mut loss, mut chosen) = best.expect("step 0 evaluated");
    if len == 2 {
        let (a, b) = resplit(&chosen.w[0], &chosen.w[1], arch.bonds[k + 1])?;
        let candidate = WindowParams { w: vec![a, b], d: chosen.d.clone() };
        let split_loss = window.eval(&candidate, loss_cfg, false)?.0.loss;
        if split_loss <= loss + 1e-12 {
            loss = split_loss;
            chosen = candidate;
        }
    }
    for j in 0..len {
        model.sites_mut()[k + j] = chosen.w[j].clone();
        model.reduction_mut()[k + j] = ReductionOperator::from_params(&chosen.d[j])?;
    }
    cache.invalidate_sites(k, k + len - 1);
    Ok(loss)
}

/// One left-to-right and one right-to-left pass over all bonds.
pub fn sweep(
    model: &mut HtnModel,
    batch: &[Sample],
    loss_cfg: &LossConfig,
    sweep_cfg: &SweepConfig,
    cache: &mut EnvironmentCache,
) -> Result<SweepMetrics> {
    loss_cfg.validate()?;
    sweep_cfg.validate()?;
    if cache.n_bonds() != model.n_sites() + 1 {
        return Err(HtnError::Consistency("cache does not match the model".into()));
    }
    let n = model.n_sites();
    let last = n.saturating_sub(2);
    let order: Vec<usize> = (0..=last).chain((0..=last).rev()).collect();
    let mut metrics = SweepMetrics::default();
    for (pos, &k) in order.iter().enumerate() {
        let loss = update_window(model, batch, loss_cfg, sweep_cfg, cache, k)?;
        if n > 1 {
            if pos <= last {
                cache.push_left(model, batch, k);
            } else {
                cache.push_right(model, batch, k + 1);
            }
        }
        if sweep_cfg.check_cache {
            let fresh = batch_loss(batch, model, loss_cfg)?.loss;
            if (fresh - loss).abs() > CACHE_TOL * loss.abs().max(1.0) {
                return Err(HtnError::Consistency(format!(
                    "cached loss {loss} differs from recontracted loss {fresh} at window {k}"
                )));
            }
        }
        metrics.windows.push(k);
        metrics.bond_losses.push(loss);
    }
    Ok(metrics)
}
