//! Repeated train/test runs per dataset variant, averaged into the
//! accuracy matrix.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::report::metrics_csv;
use super::{evaluate, train, Evaluation, ExperimentConfig, MetricsHistory};
use crate::dataset::{balance_dataset, read_dataset, split_dataset, Dataset};
use crate::error::{Error, Result};
use crate::network::NetworkParams;
use crate::par;

pub const ARCHITECTURE: &str = "Adopted LeNet";

/// Published averaged accuracies used as the report's documentation columns:
/// (adopted LeNet, adopted GoogLeNet). The GoogLeNet column is cited only;
/// no inception network is trained here.
pub fn reference_accuracy(variant: u8, balanced: bool) -> (Option<f64>, Option<f64>) {
    match (balanced, variant) {
        (false, 0) => (Some(0.97446), Some(0.845043)),
        (false, 2) => (Some(0.98566), Some(0.98452)),
        (false, 3) => (Some(0.9879), Some(0.988431)),
        (false, 4) => (Some(0.98672), Some(0.987758)),
        (true, 0) => (Some(0.9572), None),
        (true, 2) => (Some(0.975), None),
        (true, 3) => (Some(0.9781), None),
        (true, 4) => (Some(0.9746), None),
        _ => (None, None),
    }
}

/// "Structural MRI 3", or "B. Structural MRI 3" for balanced data.
pub fn row_label(variant: u8, balanced: bool) -> String {
    format!("{}Structural MRI {variant}", if balanced { "B. " } else { "" })
}

fn slug(variant: u8, balanced: bool) -> String {
    format!("{}mri{variant}", if balanced { "b_" } else { "" })
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub history: MetricsHistory,
    pub test: Evaluation,
    pub params: NetworkParams<f32>,
}

#[derive(Clone, Debug)]
pub struct ExperimentRow {
    pub variant: u8,
    pub balanced: bool,
    pub runs: Vec<RunResult>,
}

impl ExperimentRow {
    pub fn label(&self) -> String {
        row_label(self.variant, self.balanced)
    }

    /// Unweighted arithmetic mean of the per-run test accuracies.
    pub fn mean_accuracy(&self) -> f64 {
        self.runs.iter().map(|r| r.test.accuracy).sum::<f64>() / self.runs.len() as f64
    }

    pub fn mean_subject_accuracy(&self) -> f64 {
        self.runs.iter().map(|r| r.test.subject_accuracy).sum::<f64>() / self.runs.len() as f64
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ExperimentRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

impl ExperimentReport {
    /// Tab-separated accuracy matrix preceded by `#` provenance lines.
    pub fn to_table(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "# smri experiment report");
        let _ = writeln!(
            s,
            "# config_hash={:016x} seed={} epochs={} repeats={} batch_size={} stepsize={} test_fraction={} split_mode={:?} balance_target={}",
            c.hash(),
            c.seed,
            c.epochs,
            c.repeats,
            c.batch_size,
            c.sgd.stepsize,
            c.test_fraction,
            c.split_mode,
            c.balance_target
        );
        let _ = writeln!(
            s,
            "Dataset\tArchitecture\tAveraged Accuracy\tRun Accuracies\tSubject-vote Accuracy\tReference LeNet\tReference GoogleNet"
        );
        for row in &self.rows {
            let runs: Vec<String> = row.runs.iter().map(|r| format!("{:.6}", r.test.accuracy)).collect();
            let (lenet, google) = reference_accuracy(row.variant, row.balanced);
            let _ = writeln!(
                s,
                "{}\t{ARCHITECTURE}\t{:.6}\t{}\t{:.6}\t{}\t{}",
                row.label(),
                row.mean_accuracy(),
                runs.join(","),
                row.mean_subject_accuracy(),
                opt(lenet),
                opt(google)
            );
        }
        s
    }

    /// Writes `report.tsv`, `metrics/<row>_run<k>.csv` and
    /// `checkpoints/<row>_run<k>.lnt5` under `out_dir`.
    pub fn write(&self, out_dir: impl AsRef<Path>) -> Result<()> {
        let out = out_dir.as_ref();
        for sub in ["metrics", "checkpoints"] {
            let d = out.join(sub);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        let write = |p: std::path::PathBuf, bytes: &[u8]| fs::write(&p, bytes).map_err(|e| Error::io(&p, e));
        write(out.join("report.tsv"), self.to_table().as_bytes())?;
        for row in &self.rows {
            let name = slug(row.variant, row.balanced);
            for r in &row.runs {
                write(
                    out.join("metrics").join(format!("{name}_run{}.csv", r.run)),
                    metrics_csv(&r.history).as_bytes(),
                )?;
                write(
                    out.join("checkpoints").join(format!("{name}_run{}.lnt5", r.run)),
                    &r.params.to_checkpoint_bytes(),
                )?;
            }
        }
        Ok(())
    }
}

/// Loads `variant_<n>.smrd` for every configured variant from
/// `config.data_dir` and runs the matrix.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let missing: Vec<u8> = config
        .variants
        .iter()
        .copied()
        .filter(|v| !config.data_dir.join(format!("variant_{v}.smrd")).is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingVariant(missing));
    }
    let datasets = config
        .variants
        .iter()
        .map(|&v| Ok((v, read_dataset(config.data_dir.join(format!("variant_{v}.smrd")))?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    run_experiment_on(config, &datasets)
}

/// One row per variant on the original data, then (when `balanced`) one per
/// variant on balanced data; each row holds `repeats` runs with seeds
/// `seed + run`. Balanced runs down-sample first, then split.
pub fn run_experiment_on(config: &ExperimentConfig, datasets: &BTreeMap<u8, Dataset>) -> Result<ExperimentReport> {
    config.validate()?;
    let missing: Vec<u8> = config
        .variants
        .iter()
        .copied()
        .filter(|v| !datasets.contains_key(v))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingVariant(missing));
    }
    let mut cells: Vec<(u8, bool)> = config.variants.iter().map(|&v| (v, false)).collect();
    if config.balanced {
        cells.extend(config.variants.iter().map(|&v| (v, true)));
    }
    let jobs: Vec<(u8, bool, usize)> = cells
        .iter()
        .flat_map(|&(v, b)| (0..config.repeats).map(move |r| (v, b, r)))
        .collect();

    let results = par::try_map_indexed(config.execution, jobs.len(), |j| {
        let (variant, balanced, run) = jobs[j];
        run_single(config, &datasets[&variant], balanced, run)
    })?;

    let mut it = results.into_iter();
    let rows = cells
        .into_iter()
        .map(|(variant, balanced)| ExperimentRow {
            variant,
            balanced,
            runs: it.by_ref().take(config.repeats).collect(),
        })
        .collect();
    Ok(ExperimentReport {
        config: config.clone(),
        rows,
    })
}

/// One train/test run of the matrix: seed `config.seed + run`; for balanced
/// runs the majority class is down-sampled before the split.
pub fn run_single(config: &ExperimentConfig, data: &Dataset, balanced: bool, run: usize) -> Result<RunResult> {
    let seed = config.seed.wrapping_add(run as u64);
    let source;
    let data = if balanced {
        let [nc, ad] = data.class_counts();
        let target = if config.balance_target == 0 {
            nc.min(ad)
        } else {
            config.balance_target
        };
        source = balance_dataset(data, target, seed)?;
        &source
    } else {
        data
    };
    let (train_set, test_set) = split_dataset(data, config.test_fraction, seed, config.split_mode)?;
    let (params, history) = train(&config.train_config(seed), &train_set, &test_set)?;
    let test = evaluate(&params, &test_set, config.execution)?;
    Ok(RunResult {
        run,
        seed,
        train_size: train_set.len(),
        test_size: test_set.len(),
        history,
        test,
        params,
    })
}
