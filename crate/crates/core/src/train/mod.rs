//! Sweep training with cached environments.

pub mod adam;
pub mod cache;
pub mod init;
pub mod sweep;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use cache::EnvironmentCache;
pub use init::{init_from_data, INIT_MAX_SAMPLES};
pub use sweep::{sweep, SweepConfig, SweepMetrics, CACHE_TOL};

use crate::error::Result;
use crate::model::{evaluate, Evaluation, HtnModel, LossConfig, Sample};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    /// 0 for the state before training.
    pub sweep: usize,
    pub train: Evaluation,
    pub test: Option<Evaluation>,
    pub bond_losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedReport {
    pub initial: SweepRecord,
    pub sweeps: Vec<SweepRecord>,
    pub final_reduction: Vec<Vec<f64>>,
}

impl TrainedReport {
    pub fn last(&self) -> &SweepRecord {
        self.sweeps.last().unwrap_or(&self.initial)
    }
}

fn record(
    sweep: usize,
    model: &HtnModel,
    train_set: &[Sample],
    test_set: Option<&[Sample]>,
    cfg: &LossConfig,
    bond_losses: Vec<f64>,
) -> Result<SweepRecord> {
    let train = evaluate(model, train_set, cfg)?;
    let test = test_set.map(|t| evaluate(model, t, cfg)).transpose()?;
    Ok(SweepRecord { sweep, train, test, bond_losses })
}

/// Runs `n_sweeps` sweeps and evaluates after each one.
pub fn train(
    model: &mut HtnModel,
    train_set: &[Sample],
    test_set: Option<&[Sample]>,
    loss_cfg: &LossConfig,
    sweep_cfg: &SweepConfig,
) -> Result<TrainedReport> {
    loss_cfg.validate()?;
    sweep_cfg.validate()?;
    let initial = record(0, model, train_set, test_set, loss_cfg, Vec::new())?;
    let mut cache = EnvironmentCache::new(model, train_set);
    let mut sweeps = Vec::with_capacity(sweep_cfg.n_sweeps);
    for s in 1..=sweep_cfg.n_sweeps {
        let metrics = sweep(model, train_set, loss_cfg, sweep_cfg, &mut cache)?;
        sweeps.push(record(s, model, train_set, test_set, loss_cfg, metrics.bond_losses)?);
    }
    let final_reduction = model.reduction().iter().map(|d| d.diag().to_vec()).collect();
    Ok(TrainedReport { initial, sweeps, final_reduction })
}
