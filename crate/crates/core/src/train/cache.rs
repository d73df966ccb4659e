//! Per-sample left and right environments of the doubled network.

use rayon::prelude::*;

use crate::model::channel::{close, forward_raw, ket_maps, transfer_right, transfer_site, Env, RightEnv};
use crate::model::{HtnModel, Sample};

/// `left[k]` holds the environments of sites `< k`, `right[k]` those of sites
/// `>= k`; an entry is `None` once an update to the sites it covers has made
/// it stale.
pub struct EnvironmentCache {
    pub(crate) left: Vec<Option<Vec<Env>>>,
    pub(crate) right: Vec<Option<Vec<RightEnv>>>,
}

impl EnvironmentCache {
    /// Left boundary plus every right environment.
    pub fn new(model: &HtnModel, batch: &[Sample]) -> Self {
        let n = model.n_sites();
        let mut left = vec![None; n + 1];
        left[0] = Some(vec![Env::start(); batch.len()]);
        let mut right = vec![None; n + 1];
        right[n] = Some(vec![RightEnv::end(); batch.len()]);
        let mut cache = EnvironmentCache { left, right };
        for k in (1..n).rev() {
            cache.push_right(model, batch, k);
        }
        cache
    }

    pub fn n_bonds(&self) -> usize {
        self.left.len()
    }

    pub fn has_left(&self, k: usize) -> bool {
        self.left[k].is_some()
    }

    pub fn has_right(&self, k: usize) -> bool {
        self.right[k].is_some()
    }

    /// Marks every environment covering a site in `lo..=hi` stale.
    pub(crate) fn invalidate_sites(&mut self, lo: usize, hi: usize) {
        for j in (lo + 1)..self.left.len() {
            self.left[j] = None;
        }
        for j in 0..=hi.min(self.right.len() - 1) {
            self.right[j] = None;
        }
    }

    /// Recomputes `left[k + 1]` from `left[k]` and site `k`.
    pub(crate) fn push_left(&mut self, model: &HtnModel, batch: &[Sample], k: usize) {
        let prev = self.left[k].as_ref().expect("left environment available");
        let site = &model.sites()[k];
        let d = model.reduction()[k].diag();
        let o = model.architecture().output_dims[k];
        let next: Vec<Env> = prev
            .par_iter()
            .zip(batch.par_iter())
            .map(|(env, (sigma, _))| transfer_site(env, &ket_maps(site, &sigma.site_vectors[k]), d, o))
            .collect();
        self.left[k + 1] = Some(next);
    }

    /// Recomputes `right[k]` from `right[k + 1]` and site `k`.
    pub(crate) fn push_right(&mut self, model: &HtnModel, batch: &[Sample], k: usize) {
        let prev = self.right[k + 1].as_ref().expect("right environment available");
        let site = &model.sites()[k];
        let d = model.reduction()[k].diag();
        let o = model.architecture().output_dims[k];
        let next: Vec<RightEnv> = prev
            .par_iter()
            .zip(batch.par_iter())
            .map(|(renv, (sigma, _))| transfer_right(renv, &ket_maps(site, &sigma.site_vectors[k]), d, o))
            .collect();
        self.right[k] = Some(next);
    }

    /// Largest entrywise deviation, over bonds where both sides are cached,
    /// between `close(left, right)` and a from-scratch forward pass.
    pub fn max_inconsistency(&self, model: &HtnModel, batch: &[Sample]) -> f64 {
        let reference: Vec<_> = batch.iter().map(|(s, _)| forward_raw(model, s)).collect();
        let mut worst: f64 = 0.0;
        for k in 0..self.left.len() {
            if let (Some(l), Some(r)) = (&self.left[k], &self.right[k]) {
                for i in 0..batch.len() {
                    let rho = close(&l[i], &r[i]);
                    for (x, y) in rho.iter().zip(&reference[i]) {
                        worst = worst.max((x - y).norm());
                    }
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{encode_rotational, Architecture, LabelState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fresh_cache_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let arch = Architecture::new(4, 3, vec![1, 1, 2, 2], 3).unwrap();
        let model = HtnModel::random_with_reduction(arch, &mut rng).unwrap();
        let batch: Vec<Sample> = (0..5)
            .map(|i| {
                let x: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
                (encode_rotational(&x, 0).unwrap(), LabelState::new(i % 3, 4).unwrap())
            })
            .collect();
        let mut cache = EnvironmentCache::new(&model, &batch);
        assert!(cache.max_inconsistency(&model, &batch) < 1e-12);
        for k in 0..4 {
            cache.push_left(&model, &batch, k);
        }
        assert!(cache.has_left(4) && cache.has_right(1));
        assert!(cache.max_inconsistency(&model, &batch) < 1e-12);
        cache.invalidate_sites(1, 2);
        assert!(cache.has_left(1) && !cache.has_left(2));
        assert!(cache.has_right(3) && !cache.has_right(2));
    }
}
