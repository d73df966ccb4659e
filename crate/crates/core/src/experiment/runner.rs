//! Config-driven runs: load and scale data, train every grid cell, write one
//! JSON record per cell and an aggregate CSV.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Cell, DatasetConfig, ExperimentConfig, InitKind};
use super::data::{load_iris, load_mnist, stratified_split, synthetic, Dataset, MinMaxScaler};
use crate::error::{HtnError, Result};
use crate::model::{encode_rotational, Architecture, HtnModel, LabelState, LossConfig, Sample};
use crate::train::{init_from_data, train, TrainedReport};

/// Scaled train and test sets.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Option<Dataset>,
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let (train, test) = match &cfg.dataset {
        DatasetConfig::Mnist {
            images,
            labels,
            test_images: Some(ti),
            test_labels: Some(tl),
            class_pair,
            max_train,
            max_test,
        } => (
            load_mnist(images, labels, *class_pair, *max_train)?,
            Some(load_mnist(ti, tl, *class_pair, *max_test)?),
        ),
        other => {
            let all = match other {
                DatasetConfig::Iris { path } => load_iris(path)?,
                DatasetConfig::Mnist { images, labels, class_pair, max_train, .. } => {
                    load_mnist(images, labels, *class_pair, *max_train)?
                }
                DatasetConfig::Synthetic { n_samples, n_features, n_classes, noise, seed } => {
                    synthetic(*n_samples, *n_features, *n_classes, *noise, *seed)?
                }
            };
            let (tr, te) = stratified_split(&all, cfg.split.train_fraction, cfg.split.seed)?;
            let test = if te.is_empty() { None } else { Some(all.subset(&te)?) };
            (all.subset(&tr)?, test)
        }
    };
    let scaler = MinMaxScaler::fit(&train);
    Ok(PreparedData { train: scaler.transform(&train), test: test.map(|t| scaler.transform(&t)) })
}

pub fn to_samples(data: &Dataset, label_dim: usize) -> Result<Vec<Sample>> {
    data.features
        .iter()
        .zip(&data.labels)
        .map(|(x, &l)| Ok((encode_rotational(x, 0)?, LabelState::new(l, label_dim)?)))
        .collect()
}

/// Everything written for one grid cell. Wall-clock time lives in a separate
/// file so that records are reproducible byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub cell: Cell,
    /// The configuration this cell ran with.
    pub config: ExperimentConfig,
    pub architecture: Option<Architecture>,
    pub n_train: usize,
    pub n_test: usize,
    pub report: Option<TrainedReport>,
    pub error: Option<String>,
}

impl MetricsRecord {
    pub fn final_train(&self) -> Option<&crate::model::Evaluation> {
        self.report.as_ref().map(|r| &r.last().train)
    }

    pub fn final_test(&self) -> Option<&crate::model::Evaluation> {
        self.report.as_ref().and_then(|r| r.last().test.as_ref())
    }
}

fn cell_config(cfg: &ExperimentConfig, cell: &Cell) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.model.chi = cell.chi;
    c.model.xi = cell.xi;
    c.loss.norm = cell.norm;
    c.grid = None;
    c
}

fn train_cell(cfg: &ExperimentConfig, data: &PreparedData) -> Result<(Architecture, TrainedReport)> {
    let n_features = data.train.n_features();
    let n_classes = data.train.n_classes;
    let output_dims = match &cfg.model.output_dims {
        Some(o) => o.clone(),
        None => Architecture::default_output_dims(n_features, n_classes)?,
    };
    let arch = Architecture::new(cfg.model.chi, cfg.model.xi, output_dims, n_classes)?;
    let dim = arch.output_dim();
    let train_set = to_samples(&data.train, dim)?;
    let test_set = data.test.as_ref().map(|t| to_samples(t, dim)).transpose()?;
    let mut model = match cfg.model.init {
        InitKind::Data => init_from_data(arch.clone(), &train_set, cfg.sweep.seed)?,
        InitKind::Random => HtnModel::random(arch.clone(), &mut ChaCha8Rng::seed_from_u64(cfg.sweep.seed))?,
    };
    let loss: LossConfig = cfg.loss;
    let report = train(&mut model, &train_set, test_set.as_deref(), &loss, &cfg.sweep)?;
    Ok((arch, report))
}

/// Trains one cell. Failures end up in the record's `error` field.
pub fn run_cell(cfg: &ExperimentConfig, cell: &Cell, data: &PreparedData) -> MetricsRecord {
    let config = cell_config(cfg, cell);
    let result = train_cell(&config, data);
    let (architecture, report, error) = match result {
        Ok((a, r)) => (Some(a), Some(r), None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    MetricsRecord {
        cell: *cell,
        config,
        architecture,
        n_train: data.train.len(),
        n_test: data.test.as_ref().map_or(0, Dataset::len),
        report,
        error,
    }
}

/// Writes through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| HtnError::io_at(&tmp, e))?;
    f.write_all(bytes).map_err(|e| HtnError::io_at(&tmp, e))?;
    f.sync_all().map_err(|e| HtnError::io_at(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| HtnError::io_at(path, e))
}

#[derive(Serialize)]
struct AggregateRow {
    chi: usize,
    xi: usize,
    t_or_w: Option<f64>,
    split: &'static str,
    final_loss: Option<f64>,
    final_accuracy: Option<f64>,
    abstention: Option<f64>,
    retained_trace: Option<f64>,
    test_loss: Option<f64>,
    test_accuracy: Option<f64>,
    test_abstention: Option<f64>,
    test_retained_trace: Option<f64>,
    error: Option<String>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// One row per cell, training metrics first, then held-out metrics.
pub fn aggregate_csv(records: &[MetricsRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        let tr = r.final_train();
        let te = r.final_test();
        w.serialize(AggregateRow {
            chi: r.cell.chi,
            xi: r.cell.xi,
            t_or_w: r.cell.t_or_w(),
            split: "train",
            final_loss: tr.and_then(|e| finite(e.loss)),
            final_accuracy: tr.map(|e| e.accuracy),
            abstention: tr.map(|e| e.abstention_rate),
            retained_trace: tr.map(|e| e.retained_trace),
            test_loss: te.and_then(|e| finite(e.loss)),
            test_accuracy: te.map(|e| e.accuracy),
            test_abstention: te.map(|e| e.abstention_rate),
            test_retained_trace: te.map(|e| e.retained_trace),
            error: r.error.clone(),
        })
        .map_err(|e| HtnError::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| HtnError::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HtnError::Format(e.to_string()))
}

/// Output of [`run_experiment`].
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub files: Vec<PathBuf>,
    pub seconds: BTreeMap<String, f64>,
}

/// Runs every cell (in parallel on the current rayon pool) and writes
/// `<stem>.json` per cell, `aggregate.csv` and `timing.json` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let cells = cfg.cells();
    let results: Vec<(MetricsRecord, f64)> = cells
        .par_iter()
        .map(|cell| {
            let start = Instant::now();
            let rec = run_cell(cfg, cell, &data);
            (rec, start.elapsed().as_secs_f64())
        })
        .collect();
    std::fs::create_dir_all(out_dir).map_err(|e| HtnError::io_at(out_dir, e))?;
    let mut files = Vec::new();
    let mut seconds = BTreeMap::new();
    let mut records = Vec::with_capacity(results.len());
    for (rec, secs) in results {
        let stem = rec.cell.stem();
        let path = out_dir.join(format!("{stem}.json"));
        let mut text = serde_json::to_string_pretty(&rec)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        files.push(path);
        seconds.insert(stem, secs);
        records.push(rec);
    }
    let agg = out_dir.join("aggregate.csv");
    write_atomic(&agg, aggregate_csv(&records)?.as_bytes())?;
    files.push(agg);
    let timing = out_dir.join("timing.json");
    write_atomic(&timing, serde_json::to_string_pretty(&seconds)?.as_bytes())?;
    Ok(RunOutput { records, files, seconds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "dataset": {"kind": "synthetic", "n_samples": 24, "n_features": 3, "n_classes": 2, "noise": 0.05},
                "model": {"chi": 2, "xi": 2},
                "sweep": {"n_sweeps": 1, "adam_steps_per_site": 3},
                "grid": {"t": [1.0, 0.1]}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn grid_writes_one_row_per_cell_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&small(), dir.path()).unwrap();
        assert_eq!(out.records.len(), 2);
        assert!(out.records.iter().all(|r| r.error.is_none()));
        let csv1 = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
        assert_eq!(csv1.lines().count(), 3);
        let json1 = std::fs::read(dir.path().join("chi2_xi2_t0.1.json")).unwrap();
        let back: MetricsRecord = serde_json::from_slice(&json1).unwrap();
        assert_eq!(back.cell, out.records[1].cell);
        let dir2 = tempfile::tempdir().unwrap();
        run_experiment(&small(), dir2.path()).unwrap();
        assert_eq!(csv1, std::fs::read_to_string(dir2.path().join("aggregate.csv")).unwrap());
        assert_eq!(json1, std::fs::read(dir2.path().join("chi2_xi2_t0.1.json")).unwrap());
    }

    #[test]
    fn failed_cell_is_recorded_not_fatal() {
        let mut cfg = small();
        // three sites cannot carry eight classes
        cfg.dataset = DatasetConfig::Synthetic { n_samples: 24, n_features: 2, n_classes: 8, noise: 0.05, seed: 0 };
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg, dir.path()).unwrap();
        assert!(out.records.iter().all(|r| r.error.is_some()));
        let csv = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn test_features_use_training_statistics() {
        let cfg = small();
        let data = prepare_data(&cfg).unwrap();
        for x in data.train.features.iter().chain(&data.test.unwrap().features) {
            assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
