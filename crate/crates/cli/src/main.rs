//! `smri` — phantom generation, NIfTI ingestion, dataset building, training,
//! evaluation and the repeated-run experiment matrix.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure (non-finite loss or parameters).

mod volumes;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use smri::dataset::{read_dataset, write_dataset, SplitMode, DATASET_MAGIC};
use smri::harness::{
    build_variant_dataset, evaluate, generate_phantoms, report_metrics, run_experiment, run_single, ExperimentConfig,
};
use smri::network::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
use smri::volume::parse_nifti;
use smri::{Error, Execution};

#[derive(Parser, Debug)]
#[command(
    name = "smri",
    version,
    about = "Slice-based CNN classification of structural MRI volumes"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration file (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base seed; overrides the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Also run (experiment) or only run (train) on class-balanced data.
    #[arg(long, global = true)]
    balanced: bool,
    /// Dataset variant: Gaussian sigma in mm, 0 = unsmoothed. Repeatable.
    #[arg(long, global = true, value_name = "0|2|3|4", value_parser = parse_variant)]
    variant: Vec<u8>,
    /// Keep every subject's slices on one side of the train/test split.
    #[arg(long, global = true)]
    subject_level_split: bool,
    /// Single-threaded execution.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate labelled synthetic volumes into a volume directory.
    PhantomGen,
    /// Read a directory of NIfTI files into a volume directory.
    Ingest {
        /// Directory holding .nii / .nii.gz files.
        input: PathBuf,
    },
    /// Turn a volume directory into one dataset file per variant.
    BuildDataset {
        /// Volume directory (with volumes.tsv).
        #[arg(long, default_value = "volumes")]
        volumes: PathBuf,
    },
    /// Train one model on one variant.
    Train {
        /// Directory holding variant_<n>.smrd files; defaults to the config's data_dir.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Repeated train/test runs for every variant; writes the accuracy report.
    Experiment {
        /// Directory holding variant_<n>.smrd files; defaults to the config's data_dir.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Print a dataset manifest and records, a checkpoint summary or a NIfTI header.
    Inspect {
        path: PathBuf,
        /// Dataset records to list.
        #[arg(long, default_value_t = 10)]
        records: usize,
    },
}

fn parse_variant(s: &str) -> Result<u8, String> {
    match s.parse::<u8>() {
        Ok(v) if smri::dataset::VARIANTS.contains(&v) => Ok(v),
        _ => Err(format!("variant must be one of 0, 2, 3, 4 (got {s:?})")),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NonFinite(_) => 3,
        Error::Config(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn config(common: &Common) -> smri::Result<ExperimentConfig> {
    let mut c = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        c.seed = s;
    }
    c.phantom.seed = c.seed;
    if !common.variant.is_empty() {
        c.variants = common.variant.clone();
    }
    if common.balanced {
        c.balanced = true;
    }
    if common.subject_level_split {
        c.split_mode = SplitMode::Subject;
    }
    if common.sequential {
        c.execution = Execution::Sequential;
    }
    c.validate()?;
    Ok(c)
}

fn create_dir(dir: &Path) -> smri::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn run(cli: Cli) -> smri::Result<()> {
    let c = config(&cli.common)?;
    let out = |default: &str| cli.common.out.clone().unwrap_or_else(|| PathBuf::from(default));
    match cli.command {
        Command::PhantomGen => {
            let dir = out("volumes");
            let vols = generate_phantoms(&c.phantom, c.execution)?;
            let entries = volumes::write_volumes(&dir, &vols)?;
            println!("wrote {} volumes to {}", entries.len(), dir.display());
        }
        Command::Ingest { input } => {
            let dir = out("volumes");
            let vols = volumes::ingest_dir(&input)?;
            let entries = volumes::write_volumes(&dir, &vols)?;
            println!("ingested {} volumes into {}", entries.len(), dir.display());
        }
        Command::BuildDataset { volumes: vol_dir } => {
            let dir = cli.common.out.clone().unwrap_or_else(|| c.data_dir.clone());
            create_dir(&dir)?;
            let vols = volumes::read_volumes(&vol_dir)?;
            for &v in &c.variants {
                let ds = build_variant_dataset(&vols, v, &c.pipeline, c.hash(), c.seed, c.execution)?;
                let path = dir.join(format!("variant_{v}.smrd"));
                write_dataset(&ds, &path)?;
                let [nc, ad] = ds.class_counts();
                println!("{}: {} slices (NC {nc}, AD {ad})", path.display(), ds.len());
            }
        }
        Command::Train { data } => {
            let [variant] = c.variants[..] else {
                return Err(Error::Config("train needs exactly one --variant".into()));
            };
            let data_dir = data.unwrap_or_else(|| c.data_dir.clone());
            let ds = read_dataset(data_dir.join(format!("variant_{variant}.smrd")))?;
            let r = run_single(&c, &ds, c.balanced, 0)?;
            let dir = out("train");
            create_dir(&dir)?;
            report_metrics(&r.history, dir.join("metrics.csv"))?;
            save_checkpoint(&r.params, dir.join("model.lnt5"))?;
            for e in &r.history.epochs {
                println!(
                    "epoch {:>3}  lr {:.6}  train_loss {:.6}  test_loss {:.6}  test_accuracy {:.6}",
                    e.epoch, e.lr, e.train_loss, e.test_loss, e.test_accuracy
                );
            }
            println!(
                "train {} / test {} slices; final test accuracy {:.6} (subject vote {:.6}); outputs in {}",
                r.train_size,
                r.test_size,
                r.test.accuracy,
                r.test.subject_accuracy,
                dir.display()
            );
        }
        Command::Eval { checkpoint, dataset } => {
            let params = load_checkpoint(&checkpoint, &c.layer_spec())?;
            let ds = read_dataset(&dataset)?;
            let e = evaluate(&params, &ds, c.execution)?;
            println!(
                "accuracy {:.6} ({}/{})\nmean_loss {:.6}\nsubject_accuracy {:.6}",
                e.accuracy, e.correct, e.total, e.mean_loss, e.subject_accuracy
            );
        }
        Command::Experiment { data } => {
            let mut c = c;
            if let Some(d) = data {
                c.data_dir = d;
            }
            let dir = out("results");
            let report = run_experiment(&c)?;
            report.write(&dir)?;
            print!("{}", report.to_table());
        }
        Command::Inspect { path, records } => inspect(&path, records, &c)?,
    }
    Ok(())
}

fn inspect(path: &Path, records: usize, c: &ExperimentConfig) -> smri::Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(DATASET_MAGIC) {
        let ds = read_dataset(path)?;
        let m = ds.manifest();
        println!("dataset {} ({} records)", path.display(), ds.len());
        print!("{}", m.to_text());
        println!("imbalance_ratio = {:.4}", m.imbalance_ratio());
        println!("index\tlabel\tsubject_id\taxial_index\tvariant\tmean_pixel");
        for (i, r) in ds.records().iter().take(records).enumerate() {
            let mean = r.pixels.iter().map(|&p| f64::from(p)).sum::<f64>() / r.pixels.len() as f64;
            println!(
                "{i}\t{}\t{}\t{}\t{}\t{mean:.3}",
                r.class(),
                r.subject_id,
                r.axial_index,
                r.variant
            );
        }
    } else if bytes.starts_with(CHECKPOINT_MAGIC) {
        let spec = c.layer_spec();
        let params = load_checkpoint(path, &spec)?;
        println!("checkpoint {}", path.display());
        println!("architecture {}", spec.serialize());
        println!("fingerprint {:016x}", spec.fingerprint());
        println!("parameters {}", params.parameter_count());
        for t in params.tensors() {
            println!("  tensor {:?}", t.shape());
        }
    } else {
        let v = parse_nifti(&bytes)?;
        let label = v.label.map_or_else(|| "-".to_string(), |l| l.to_string());
        println!("nifti {}", path.display());
        println!("dims (x, y, z) {:?}", v.dims());
        println!("voxel_mm {:?}", v.voxel_dims_mm());
        println!("subject_id {}\nlabel {label}\nmean {:.6}", v.subject_id, v.mean());
    }
    Ok(())
}
