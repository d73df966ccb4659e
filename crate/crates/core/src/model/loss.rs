//! Normalization, depolarization and the two losses on output densities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::channel::{check_sites, forward_raw, hermitize};
use super::encoding::EncodedState;
use super::htn::HtnModel;
use crate::error::{HtnError, Result};
use crate::tn::linalg::eigh;
use crate::tn::{DensityMatrix, C64, ZERO};

/// Traces at or below this count as fully post-selected away.
pub const TRACE_FLOOR: f64 = 1e-15;
/// Eigenvalue floor inside the matrix logarithm.
pub const EIGEN_FLOOR: f64 = 1e-300;
pub const DEFAULT_LAMBDA: f64 = 1e-6;

/// Samples are processed in fixed-size chunks and partial sums are added in
/// chunk order, so results do not depend on the thread count.
pub(crate) const CHUNK: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormVariant {
    /// Divide by the trace.
    #[default]
    Full,
    /// Divide by `max(tr, t)`.
    Threshold { t: f64 },
    /// Divide by `tr^(1 - w)`.
    Weight { w: f64 },
    /// Leave the state unnormalized.
    None,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    CrossEntropy,
    Mse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub norm: NormVariant,
    pub lambda: f64,
    pub kind: LossKind,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { norm: NormVariant::Full, lambda: DEFAULT_LAMBDA, kind: LossKind::CrossEntropy }
    }
}

impl LossConfig {
    pub fn new(norm: NormVariant, lambda: f64, kind: LossKind) -> Result<Self> {
        let cfg = LossConfig { norm, lambda, kind };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self.norm {
            NormVariant::Threshold { t } if !(0.0..=1.0).contains(&t) => {
                return Err(HtnError::Config(format!("threshold t = {t} outside [0, 1]")))
            }
            NormVariant::Weight { w } if !(0.0..=1.0).contains(&w) => {
                return Err(HtnError::Config(format!("weight w = {w} outside [0, 1]")))
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(HtnError::Config(format!("lambda = {} outside [0, 1)", self.lambda)));
        }
        Ok(())
    }
}

/// The pure label state `|l><l|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelState {
    pub class_index: usize,
    pub dim: usize,
}

impl LabelState {
    pub fn new(class_index: usize, dim: usize) -> Result<Self> {
        if class_index >= dim {
            return Err(HtnError::invalid(format!("label {class_index} >= output dimension {dim}")));
        }
        Ok(LabelState { class_index, dim })
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::basis_state(self.dim, self.class_index).expect("validated label")
    }
}

/// Divisor `n(tr)` and its derivative, or `None` if the state vanished.
pub(crate) fn norm_factor(tr: f64, norm: NormVariant) -> Option<(f64, f64)> {
    match norm {
        NormVariant::Full | NormVariant::Threshold { t: 0.0 } => (tr > TRACE_FLOOR).then_some((tr, 1.0)),
        NormVariant::Threshold { t } => Some(if tr > t { (tr, 1.0) } else { (t, 0.0) }),
        NormVariant::Weight { w } => {
            if w == 1.0 {
                Some((1.0, 0.0))
            } else if tr > TRACE_FLOOR {
                Some((tr.powf(1.0 - w), (1.0 - w) * tr.powf(-w)))
            } else {
                None
            }
        }
        NormVariant::None => Some((1.0, 0.0)),
    }
}

pub fn normalize(rho: &DensityMatrix, norm: NormVariant) -> Result<DensityMatrix> {
    let tr = rho.trace();
    match norm_factor(tr, norm) {
        Some((n, _)) => Ok(rho.scaled(1.0 / n)),
        None => Err(HtnError::VanishedState { trace: tr }),
    }
}

/// `(1 - lambda) rho + lambda I / d`.
pub fn depolarize(rho: &DensityMatrix, lambda: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(HtnError::invalid(format!("lambda = {lambda} outside [0, 1]")));
    }
    let d = rho.dim();
    let mut data = rho.scaled(1.0 - lambda).into_data();
    for i in 0..d {
        data[i * d + i] += lambda / d as f64;
    }
    DensityMatrix::from_unchecked(d, data)
}

/// Fills the missing trace with the maximally mixed state.
pub fn randomized_completion(rho: &DensityMatrix) -> DensityMatrix {
    let d = rho.dim();
    let missing = 1.0 - rho.trace();
    let mut data = rho.data().to_vec();
    for i in 0..d {
        data[i * d + i] += missing / d as f64;
    }
    DensityMatrix::from_unchecked(d, data).expect("same shape")
}

/// Hermitian matrix logarithm; fails on non-positive eigenvalues.
pub fn matrix_log(rho: &DensityMatrix) -> Result<Vec<C64>> {
    let d = rho.dim();
    let (vals, vecs) = eigh(d, rho.data());
    if vals[0] <= 0.0 {
        return Err(HtnError::NumericalDomain(format!(
            "matrix logarithm of a state with eigenvalue {:e}",
            vals[0]
        )));
    }
    let logs: Vec<f64> = vals.iter().map(|&x| x.max(EIGEN_FLOOR).ln()).collect();
    let mut out = vec![ZERO; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = ZERO;
            for k in 0..d {
                acc += vecs[i * d + k] * logs[k] * vecs[j * d + k].conj();
            }
            out[i * d + j] = acc;
        }
    }
    Ok(out)
}

/// `tr(rho log rho - rho log sigma)`; infinite if the support of `rho` is not
/// contained in that of `sigma`.
pub fn relative_entropy(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    let d = rho.dim();
    if sigma.dim() != d {
        return Err(HtnError::shape(format!("dimensions {d} and {}", sigma.dim())));
    }
    let support_tol = 1e-14;
    let entropy_part = |m: &DensityMatrix, weights_from: &DensityMatrix| -> Result<f64> {
        // sum_k <v_k| weights_from |v_k> log mu_k over the eigenpairs of m
        let (vals, vecs) = eigh(d, m.data());
        let w = weights_from.data();
        let mut acc = 0.0;
        for k in 0..d {
            let mut weight = ZERO;
            for i in 0..d {
                for j in 0..d {
                    weight += vecs[i * d + k].conj() * w[i * d + j] * vecs[j * d + k];
                }
            }
            if vals[k] <= support_tol {
                if weight.re > 1e-12 {
                    return Err(HtnError::InfiniteDivergence);
                }
                continue;
            }
            acc += weight.re * vals[k].ln();
        }
        Ok(acc)
    };
    let self_part = entropy_part(rho, rho)?;
    let cross_part = entropy_part(sigma, rho)?;
    Ok(self_part - cross_part)
}

/// `-<l| log rho |l>` for an already processed state.
pub fn cross_entropy_term(processed: &DensityMatrix, label: &LabelState) -> Result<f64> {
    let (val, _) = ce_and_gamma(processed.data(), processed.dim(), label.class_index, false)?;
    Ok(val)
}

/// `1/2 tr((tau - rho)^2)` for an already processed state.
pub fn mse_term(processed: &DensityMatrix, label: &LabelState) -> f64 {
    let d = processed.dim();
    let mut diff = processed.data().to_vec();
    diff[label.class_index * d + label.class_index] -= 1.0;
    0.5 * diff.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

// Cross-entropy term and `Gamma` with `d loss = tr(Gamma d rho)`.
fn ce_and_gamma(rho: &[C64], d: usize, label: usize, want_grad: bool) -> Result<(f64, Option<Vec<C64>>)> {
    let (vals, vecs) = eigh(d, rho);
    if vals[0] <= 0.0 {
        return Err(HtnError::NumericalDomain(format!(
            "logarithm of a state with eigenvalue {:e}; use lambda > 0",
            vals[0]
        )));
    }
    let lam: Vec<f64> = vals.iter().map(|&x| x.max(EIGEN_FLOOR)).collect();
    let logs: Vec<f64> = lam.iter().map(|x| x.ln()).collect();
    let w: Vec<C64> = (0..d).map(|j| vecs[label * d + j]).collect();
    let loss = -(0..d).map(|j| w[j].norm_sqr() * logs[j]).sum::<f64>();
    if !want_grad {
        return Ok((loss, None));
    }
    // divided differences of log in the eigenbasis
    let mut inner = vec![ZERO; d * d];
    for k in 0..d {
        for j in 0..d {
            let diff = lam[k] - lam[j];
            let f1 = if diff.abs() > 1e-12 * lam[k].max(lam[j]) {
                (logs[k] - logs[j]) / diff
            } else {
                2.0 / (lam[k] + lam[j])
            };
            inner[k * d + j] = -(w[k].conj() * w[j]) * f1;
        }
    }
    // Gamma = U inner U^dagger
    let mut tmp = vec![ZERO; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = ZERO;
            for k in 0..d {
                acc += vecs[i * d + k] * inner[k * d + j];
            }
            tmp[i * d + j] = acc;
        }
    }
    let mut gamma = vec![ZERO; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = ZERO;
            for k in 0..d {
                acc += tmp[i * d + k] * vecs[j * d + k].conj();
            }
            gamma[i * d + j] = acc;
        }
    }
    Ok((loss, Some(gamma)))
}

/// Result of pushing one raw output density through the loss.
pub(crate) enum SampleLoss {
    Vanished,
    Value { loss: f64, gamma: Option<Vec<C64>> },
}

/// Loss of one unnormalized output density and, if requested, `Gamma` with
/// `d loss = tr(Gamma d rho_raw)`.
pub(crate) fn sample_loss(rho: &[C64], d: usize, label: usize, cfg: &LossConfig, want_grad: bool) -> Result<SampleLoss> {
    let tr: f64 = (0..d).map(|i| rho[i * d + i].re).sum();
    let Some((n, dn)) = norm_factor(tr, cfg.norm) else {
        return Ok(SampleLoss::Vanished);
    };
    let lambda = cfg.lambda;
    let mut processed: Vec<C64> = rho.iter().map(|z| z * ((1.0 - lambda) / n)).collect();
    for i in 0..d {
        processed[i * d + i] += lambda / d as f64;
    }
    hermitize(&mut processed, d);
    let (loss, g) = match cfg.kind {
        LossKind::CrossEntropy => ce_and_gamma(&processed, d, label, want_grad)?,
        LossKind::Mse => {
            let mut diff = processed.clone();
            diff[label * d + label] -= 1.0;
            let loss = 0.5 * diff.iter().map(|z| z.norm_sqr()).sum::<f64>();
            (loss, want_grad.then_some(diff))
        }
    };
    let gamma = g.map(|g| {
        // chain rule through depolarization and normalization
        let mut tr_g_rho = ZERO;
        for i in 0..d {
            for j in 0..d {
                tr_g_rho += g[i * d + j] * rho[j * d + i];
            }
        }
        let shift = tr_g_rho.re * dn / (n * n);
        let mut out: Vec<C64> = g.iter().map(|z| z * ((1.0 - lambda) / n)).collect();
        for i in 0..d {
            out[i * d + i] -= (1.0 - lambda) * shift;
        }
        out
    });
    Ok(SampleLoss::Value { loss, gamma })
}

/// The state after normalization and depolarization.
pub fn process(rho: &DensityMatrix, cfg: &LossConfig) -> Result<DensityMatrix> {
    depolarize(&normalize(rho, cfg.norm)?, cfg.lambda)
}

/// Mean loss over the samples that were not fully post-selected away.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchLoss {
    pub loss: f64,
    pub used: usize,
    pub abstained: usize,
}

pub type Sample = (EncodedState, LabelState);

pub(crate) fn check_batch(batch: &[Sample], model: &HtnModel) -> Result<()> {
    if batch.is_empty() {
        return Err(HtnError::EmptyDataset("empty batch".into()));
    }
    for (sigma, label) in batch {
        check_sites(model, sigma)?;
        if label.dim != model.output_dim() || label.class_index >= model.n_classes() {
            return Err(HtnError::invalid(format!(
                "label {} (dim {}) does not fit a model with {} classes in dimension {}",
                label.class_index,
                label.dim,
                model.n_classes(),
                model.output_dim()
            )));
        }
    }
    Ok(())
}

pub(crate) fn finish_batch(sum: f64, used: usize, abstained: usize) -> Result<BatchLoss> {
    if used == 0 {
        return Err(HtnError::VanishedState { trace: 0.0 });
    }
    Ok(BatchLoss { loss: sum / used as f64, used, abstained })
}

/// Loss of the kind selected in `cfg`.
pub fn batch_loss(batch: &[Sample], model: &HtnModel, cfg: &LossConfig) -> Result<BatchLoss> {
    cfg.validate()?;
    check_batch(batch, model)?;
    let d = model.output_dim();
    let parts: Vec<Result<(f64, usize, usize)>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let (mut sum, mut used, mut gone) = (0.0, 0, 0);
            for (sigma, label) in chunk {
                let rho = forward_raw(model, sigma);
                match sample_loss(&rho, d, label.class_index, cfg, false)? {
                    SampleLoss::Vanished => gone += 1,
                    SampleLoss::Value { loss, .. } => {
                        sum += loss;
                        used += 1;
                    }
                }
            }
            Ok((sum, used, gone))
        })
        .collect();
    let (mut sum, mut used, mut gone) = (0.0, 0, 0);
    for p in parts {
        let (s, u, g) = p?;
        sum += s;
        used += u;
        gone += g;
    }
    finish_batch(sum, used, gone)
}

pub fn cross_entropy_loss(batch: &[Sample], model: &HtnModel, cfg: &LossConfig) -> Result<f64> {
    let cfg = LossConfig { kind: LossKind::CrossEntropy, ..*cfg };
    Ok(batch_loss(batch, model, &cfg)?.loss)
}

pub fn mse_loss(batch: &[Sample], model: &HtnModel, cfg: &LossConfig) -> Result<f64> {
    let cfg = LossConfig { kind: LossKind::Mse, ..*cfg };
    Ok(batch_loss(batch, model, &cfg)?.loss)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prediction {
    Class(usize),
    /// The sample was fully post-selected away.
    Abstain,
}

/// Argmax over the first `n_classes` diagonal entries, lowest index on ties.
pub fn classify_density(rho: &DensityMatrix, n_classes: usize) -> usize {
    let diag = rho.diagonal_entries();
    let mut best = 0;
    for k in 1..n_classes.min(diag.len()) {
        if diag[k] > diag[best] {
            best = k;
        }
    }
    best
}

pub fn predict(model: &HtnModel, sigma: &EncodedState, cfg: &LossConfig) -> Result<Prediction> {
    check_sites(model, sigma)?;
    let d = model.output_dim();
    let mut raw = forward_raw(model, sigma);
    hermitize(&mut raw, d);
    let rho = DensityMatrix::from_unchecked(d, raw)?;
    match normalize(&rho, cfg.norm) {
        Ok(n) => Ok(Prediction::Class(classify_density(&n, model.n_classes()))),
        Err(HtnError::VanishedState { .. }) => Ok(Prediction::Abstain),
        Err(e) => Err(e),
    }
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Loss, accuracy and post-selection statistics over a labelled set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// NaN, written as `null`, when every sample abstained.
    #[serde(with = "nan_as_null")]
    pub loss: f64,
    /// Correct predictions over non-abstained samples.
    pub accuracy: f64,
    pub abstention_rate: f64,
    /// Mean of `tr rho` before normalization.
    pub retained_trace: f64,
    pub n: usize,
}

pub fn evaluate(model: &HtnModel, batch: &[Sample], cfg: &LossConfig) -> Result<Evaluation> {
    cfg.validate()?;
    check_batch(batch, model)?;
    let d = model.output_dim();
    let n_classes = model.n_classes();
    // (loss sum, used, abstained, correct, trace sum)
    let parts: Vec<Result<(f64, usize, usize, usize, f64)>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = (0.0, 0, 0, 0, 0.0);
            for (sigma, label) in chunk {
                let mut rho = forward_raw(model, sigma);
                hermitize(&mut rho, d);
                let tr: f64 = (0..d).map(|i| rho[i * d + i].re).sum();
                acc.4 += tr;
                match sample_loss(&rho, d, label.class_index, cfg, false)? {
                    SampleLoss::Vanished => acc.2 += 1,
                    SampleLoss::Value { loss, .. } => {
                        acc.0 += loss;
                        acc.1 += 1;
                        let dm = DensityMatrix::from_unchecked(d, rho)?;
                        if classify_density(&dm, n_classes) == label.class_index {
                            acc.3 += 1;
                        }
                    }
                }
            }
            Ok(acc)
        })
        .collect();
    let mut t = (0.0, 0, 0, 0, 0.0);
    for p in parts {
        let p = p?;
        t.0 += p.0;
        t.1 += p.1;
        t.2 += p.2;
        t.3 += p.3;
        t.4 += p.4;
    }
    let n = batch.len();
    Ok(Evaluation {
        loss: if t.1 > 0 { t.0 / t.1 as f64 } else { f64::NAN },
        accuracy: if t.1 > 0 { t.3 as f64 / t.1 as f64 } else { 0.0 },
        abstention_rate: t.2 as f64 / n as f64,
        retained_trace: t.4 / n as f64,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DensityMatrix {
        DensityMatrix::diagonal(v).unwrap()
    }

    #[test]
    fn normalization_rules() {
        let full = diag(&[0.5, 0.5]);
        for norm in [
            NormVariant::Full,
            NormVariant::Threshold { t: 0.3 },
            NormVariant::Weight { w: 0.4 },
            NormVariant::None,
        ] {
            assert!(normalize(&full, norm).unwrap().max_abs_diff(&full) < 1e-15);
        }
        let quarter = diag(&[0.25, 0.0]);
        let t = normalize(&quarter, NormVariant::Threshold { t: 0.5 }).unwrap();
        assert!((t.trace() - 0.5).abs() < 1e-15);
        let w = normalize(&quarter, NormVariant::Weight { w: 0.5 }).unwrap();
        assert!((w.trace() - 0.5).abs() < 1e-15);
        assert!((normalize(&quarter, NormVariant::Full).unwrap().trace() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn vanished_state_errors_under_full_and_weight() {
        let zero = DensityMatrix::from_unchecked(2, vec![ZERO; 4]).unwrap();
        assert!(matches!(normalize(&zero, NormVariant::Full), Err(HtnError::VanishedState { .. })));
        assert!(matches!(
            normalize(&zero, NormVariant::Weight { w: 0.5 }),
            Err(HtnError::VanishedState { .. })
        ));
        assert!(normalize(&zero, NormVariant::Threshold { t: 0.1 }).is_ok());
        assert!(normalize(&zero, NormVariant::None).is_ok());
    }

    #[test]
    fn depolarization_examples() {
        let ket0 = diag(&[1.0, 0.0]);
        assert_eq!(depolarize(&ket0, 0.0).unwrap(), ket0);
        let mixed = depolarize(&ket0, 1.0).unwrap();
        assert!(mixed.max_abs_diff(&diag(&[0.5, 0.5])) < 1e-15);
        let d = depolarize(&ket0, 0.1).unwrap();
        assert!(d.max_abs_diff(&diag(&[0.95, 0.05])) < 1e-15);
    }

    #[test]
    fn completion_examples() {
        let half = diag(&[0.5, 0.0]);
        assert!(randomized_completion(&half).max_abs_diff(&diag(&[0.75, 0.25])) < 1e-15);
        let full = diag(&[0.3, 0.7]);
        assert!(randomized_completion(&full).max_abs_diff(&full) < 1e-15);
    }

    #[test]
    fn loss_terms_on_reference_states() {
        let label = LabelState::new(0, 2).unwrap();
        let mixed = diag(&[0.5, 0.5]);
        assert!((cross_entropy_term(&mixed, &label).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((mse_term(&mixed, &label) - 0.25).abs() < 1e-15);
        assert_eq!(mse_term(&label.density(), &label), 0.0);
        let nearly = diag(&[1.0 - 1e-12, 1e-12]);
        assert!(cross_entropy_term(&nearly, &label).unwrap() < 1e-11);
    }

    #[test]
    fn pure_state_without_depolarization_is_a_domain_error() {
        let label = LabelState::new(0, 2).unwrap();
        let pure = diag(&[1.0, 0.0]);
        assert!(matches!(cross_entropy_term(&pure, &label), Err(HtnError::NumericalDomain(_))));
    }

    #[test]
    fn relative_entropy_examples() {
        let ket0 = diag(&[1.0, 0.0]);
        let mixed = diag(&[0.5, 0.5]);
        assert!((relative_entropy(&ket0, &mixed).unwrap() - 2f64.ln()).abs() < 1e-14);
        assert!(relative_entropy(&mixed, &mixed).unwrap().abs() < 1e-14);
        assert!(matches!(relative_entropy(&mixed, &ket0), Err(HtnError::InfiniteDivergence)));
    }

    #[test]
    fn matrix_log_of_diagonal() {
        let rho = diag(&[0.25, 0.75]);
        let l = matrix_log(&rho).unwrap();
        assert!((l[0].re - 0.25f64.ln()).abs() < 1e-14);
        assert!((l[3].re - 0.75f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::new(NormVariant::Threshold { t: 1.5 }, 0.0, LossKind::Mse).is_err());
        assert!(LossConfig::new(NormVariant::Full, 1.0, LossKind::Mse).is_err());
        let cfg: LossConfig = serde_json::from_str(r#"{"norm":{"kind":"weight","w":0.5}}"#).unwrap();
        assert_eq!(cfg.norm, NormVariant::Weight { w: 0.5 });
        assert_eq!(cfg.lambda, DEFAULT_LAMBDA);
        assert_eq!(cfg.kind, LossKind::CrossEntropy);
    }

    #[test]
    fn tie_breaks_to_lowest_class() {
        assert_eq!(classify_density(&diag(&[0.25; 4]), 3), 0);
        assert_eq!(classify_density(&diag(&[0.1, 0.9]), 2), 1);
        // the unused fourth basis state never wins
        assert_eq!(classify_density(&diag(&[0.1, 0.2, 0.1, 0.6]), 3), 1);
    }
}
