//! The MPS-shaped hybrid tensor network and its reduction operators.
//!
//! Site `k` is a tensor with axes `[left bond, physical, reduction, output,
//! right bond]`. It is an isometry from `(left bond, physical)` into
//! `(reduction, output, right bond)`; the extra room in the output space is
//! what a dilation would take from fresh `|0>` ancillas. The reduction leg is
//! contracted with its conjugate through a diagonal operator `D_k`, the
//! output legs form the model's output space, and the end bonds have
//! dimension one.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoding::{encode_rotational, EncodedState};
use crate::error::{HtnError, Result};
use crate::tn::{isometrize, isometry_defect, ComplexTensor};

/// Smallest allowed value of the largest entry of a reduction operator.
pub const REDUCTION_FLOOR: f64 = 1e-6;
/// Isometry tolerance checked by `HtnModel::validate`.
pub const ISOMETRY_TOL: f64 = 1e-10;

/// Input axes of a site tensor.
pub const SITE_IN_AXES: [usize; 2] = [0, 1];

/// Real diagonal operator with entries in `[0, 1]`, not identically zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionOperator {
    diag: Vec<f64>,
}

impl ReductionOperator {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(HtnError::invalid("reduction operator needs at least one entry"));
        }
        if let Some(x) = diag.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(HtnError::invalid(format!("reduction entry {x} outside [0, 1]")));
        }
        if diag.iter().all(|&x| x == 0.0) {
            return Err(HtnError::invalid("reduction operator is identically zero"));
        }
        Ok(ReductionOperator { diag })
    }

    /// Clamps raw parameters into `[0, 1]` and lifts the largest entry to
    /// `REDUCTION_FLOOR` if everything collapsed to zero.
    pub fn from_params(params: &[f64]) -> Result<Self> {
        if params.is_empty() {
            return Err(HtnError::invalid("reduction operator needs at least one entry"));
        }
        let mut diag: Vec<f64> = params
            .iter()
            .map(|&x| if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) })
            .collect();
        let (arg, max) = diag
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, x)| if x > best.1 { (i, x) } else { best });
        if max < REDUCTION_FLOOR {
            diag[arg] = REDUCTION_FLOOR;
        }
        Ok(ReductionOperator { diag })
    }

    /// The partial-trace edge.
    pub fn identity(xi: usize) -> Self {
        ReductionOperator { diag: vec![1.0; xi] }
    }

    /// The post-selection edge: keep only outcome `k`.
    pub fn one_hot(xi: usize, k: usize) -> Result<Self> {
        if k >= xi {
            return Err(HtnError::invalid(format!("one-hot index {k} >= {xi}")));
        }
        let mut diag = vec![0.0; xi];
        diag[k] = 1.0;
        Ok(ReductionOperator { diag })
    }

    pub fn random<R: Rng + ?Sized>(xi: usize, rng: &mut R) -> Self {
        let diag: Vec<f64> = (0..xi).map(|_| rng.gen_range(0.0..1.0)).collect();
        Self::from_params(&diag).expect("xi >= 1")
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.diag.iter().all(|&x| x == 1.0)
    }

    /// Raw entry access for finite-difference checks. Callers must keep the
    /// entries in `[0, 1]`.
    pub fn diag_mut(&mut self) -> &mut [f64] {
        &mut self.diag
    }
}

/// Bond and leg dimensions of the chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub chi: usize,
    pub xi: usize,
    /// `n_sites + 1` bond dimensions, both ends equal to one.
    pub bonds: Vec<usize>,
    /// Output leg dimension (1 or 2) per site.
    pub output_dims: Vec<usize>,
    pub n_classes: usize,
}

impl Architecture {
    /// Output legs of dimension two on the last `ceil(log2(n_classes))` sites.
    pub fn default_output_dims(n_sites: usize, n_classes: usize) -> Result<Vec<usize>> {
        let mut legs = 0;
        while (1usize << legs) < n_classes.max(2) {
            legs += 1;
        }
        if legs > n_sites {
            return Err(HtnError::invalid(format!(
                "{n_classes} classes need {legs} output legs but there are {n_sites} sites"
            )));
        }
        Ok((0..n_sites).map(|k| if k + legs >= n_sites { 2 } else { 1 }).collect())
    }

    /// Bond dimensions grow by the physical dimension from the left, are
    /// capped by `chi`, and by what the remaining sites can absorb
    /// isometrically.
    pub fn new(chi: usize, xi: usize, output_dims: Vec<usize>, n_classes: usize) -> Result<Self> {
        if chi < 1 || xi < 1 {
            return Err(HtnError::invalid("chi and xi must be at least 1"));
        }
        let n = output_dims.len();
        if n == 0 {
            return Err(HtnError::invalid("model needs at least one site"));
        }
        if output_dims.iter().any(|&o| o != 1 && o != 2) {
            return Err(HtnError::invalid(format!("output dims {output_dims:?} must be 1 or 2")));
        }
        let out: usize = output_dims.iter().product();
        if n_classes < 1 || out < n_classes {
            return Err(HtnError::invalid(format!(
                "output dimension {out} cannot hold {n_classes} classes"
            )));
        }
        // cap[k]: largest left bond at site k that sites k.. can map isometrically
        let mut cap = vec![1usize; n + 1];
        for k in (0..n).rev() {
            cap[k] = cap[k + 1].saturating_mul(xi * output_dims[k]) / 2;
        }
        let mut bonds = vec![1usize; n + 1];
        for k in 1..n {
            bonds[k] = chi.min(cap[k]).min(2 * bonds[k - 1]);
        }
        for k in 0..n {
            let input = bonds[k] * 2;
            let output = xi * output_dims[k] * bonds[k + 1];
            if bonds[k] == 0 || input > output {
                return Err(HtnError::invalid(format!(
                    "site {k} cannot be isometric: input {input} > output {output} (increase xi)"
                )));
            }
        }
        Ok(Architecture { chi, xi, bonds, output_dims, n_classes })
    }

    pub fn n_sites(&self) -> usize {
        self.output_dims.len()
    }

    pub fn site_dims(&self, k: usize) -> [usize; 5] {
        [self.bonds[k], 2, self.xi, self.output_dims[k], self.bonds[k + 1]]
    }

    pub fn output_dim(&self) -> usize {
        self.output_dims.iter().product()
    }

    /// Product of output dims of sites before `k`.
    pub fn prefix_output(&self, k: usize) -> usize {
        self.output_dims[..k].iter().product()
    }

    /// Product of output dims of sites from `k` on.
    pub fn suffix_output(&self, k: usize) -> usize {
        self.output_dims[k..].iter().product()
    }

    /// Qubits needed to dilate every site isometry into a unitary.
    pub fn ancilla_qubits(&self) -> usize {
        (0..self.n_sites())
            .map(|k| {
                let [l, s, r, o, c] = self.site_dims(k);
                let ratio = (r * o * c).div_ceil(l * s);
                (usize::BITS - (ratio - 1).leading_zeros()) as usize
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HtnModel {
    arch: Architecture,
    sites: Vec<ComplexTensor>,
    reduction: Vec<ReductionOperator>,
}

impl HtnModel {
    pub fn new(arch: Architecture, sites: Vec<ComplexTensor>, reduction: Vec<ReductionOperator>) -> Result<Self> {
        let model = HtnModel { arch, sites, reduction };
        model.validate()?;
        Ok(model)
    }

    /// Gaussian site tensors projected onto isometries, `D = I`.
    pub fn random<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let mut sites = Vec::with_capacity(arch.n_sites());
        for k in 0..arch.n_sites() {
            let raw = ComplexTensor::random(&arch.site_dims(k), rng);
            sites.push(isometrize(&raw, &SITE_IN_AXES)?);
        }
        let reduction = vec![ReductionOperator::identity(arch.xi); arch.n_sites()];
        Ok(HtnModel { arch, sites, reduction })
    }

    /// Like `random`, with reduction entries uniform in `[0, 1)`.
    pub fn random_with_reduction<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let mut model = Self::random(arch, rng)?;
        let xi = model.arch.xi;
        for d in &mut model.reduction {
            *d = ReductionOperator::random(xi, rng);
        }
        Ok(model)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn n_sites(&self) -> usize {
        self.arch.n_sites()
    }

    pub fn n_classes(&self) -> usize {
        self.arch.n_classes
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output_dim()
    }

    pub fn sites(&self) -> &[ComplexTensor] {
        &self.sites
    }

    pub fn reduction(&self) -> &[ReductionOperator] {
        &self.reduction
    }

    /// Unchecked access for optimizers and finite-difference probes; call
    /// `validate` to re-establish the invariants.
    pub fn sites_mut(&mut self) -> &mut [ComplexTensor] {
        &mut self.sites
    }

    pub fn reduction_mut(&mut self) -> &mut [ReductionOperator] {
        &mut self.reduction
    }

    /// Same isometries with every reduction operator set to the identity.
    pub fn with_identity_reduction(&self) -> Self {
        let mut m = self.clone();
        for d in &mut m.reduction {
            *d = ReductionOperator::identity(self.arch.xi);
        }
        m
    }

    pub fn max_isometry_defect(&self) -> f64 {
        self.sites
            .iter()
            .map(|s| isometry_defect(s, &SITE_IN_AXES).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.arch.n_sites();
        if self.sites.len() != n || self.reduction.len() != n {
            return Err(HtnError::shape(format!(
                "{} sites and {} reduction operators for a {n}-site architecture",
                self.sites.len(),
                self.reduction.len()
            )));
        }
        for k in 0..n {
            let want = self.arch.site_dims(k);
            if self.sites[k].dims() != want {
                return Err(HtnError::shape(format!(
                    "site {k} has dims {:?}, expected {want:?}",
                    self.sites[k].dims()
                )));
            }
            let defect = isometry_defect(&self.sites[k], &SITE_IN_AXES)?;
            if defect > ISOMETRY_TOL {
                return Err(HtnError::invalid(format!("site {k} is not isometric (defect {defect:e})")));
            }
            let d = self.reduction[k].diag();
            if d.len() != self.arch.xi {
                return Err(HtnError::shape(format!("reduction {k} has length {}", d.len())));
            }
            ReductionOperator::new(d.to_vec())?;
        }
        Ok(())
    }

    /// Encodes features for this model, checking the site count.
    pub fn encode(&self, features: &[f64]) -> Result<EncodedState> {
        if features.len() != self.n_sites() {
            return Err(HtnError::shape(format!(
                "{} features for a {}-site model",
                features.len(),
                self.n_sites()
            )));
        }
        encode_rotational(features, self.arch.ancilla_qubits())
    }
}
