use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{PhantomConfig, PipelineOptions, TrainConfig};
use crate::dataset::{SplitMode, VARIANTS};
use crate::error::{Error, Result};
use crate::fnv1a64;
use crate::network::LayerSpec;
use crate::par::Execution;
use crate::sgd::SgdConfig;
use crate::volume::{DropEnd, Quantization};

/// Everything a run needs. Parsed from `key = value` lines with `#`
/// comments; every key is optional and unknown keys are rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub epochs: usize,
    pub repeats: usize,
    pub batch_size: usize,
    pub variants: Vec<u8>,
    pub balanced: bool,
    /// 0 equalizes the classes; otherwise the majority-class target count.
    pub balance_target: u64,
    pub seed: u64,
    pub sgd: SgdConfig,
    pub hidden_width: usize,
    pub test_fraction: f64,
    pub split_mode: SplitMode,
    pub pipeline: PipelineOptions,
    pub phantom: PhantomConfig,
    pub data_dir: PathBuf,
    pub execution: Execution,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            repeats: 5,
            batch_size: 64,
            variants: VARIANTS.to_vec(),
            balanced: false,
            balance_target: 0,
            seed: 1,
            sgd: SgdConfig::default(),
            hidden_width: 500,
            test_fraction: 0.25,
            split_mode: SplitMode::Slice,
            pipeline: PipelineOptions::default(),
            phantom: PhantomConfig::default(),
            data_dir: PathBuf::from("data"),
            execution: Execution::default(),
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Some(true),
        "false" | "no" | "0" | "off" => Some(false),
        _ => None,
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            c.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value {v:?} for {key}"))
        }
        match key {
            "epochs" => self.epochs = num(key, value)?,
            "repeats" => self.repeats = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "variants" => {
                self.variants = value
                    .split(',')
                    .map(|v| num(key, v.trim()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "balanced" => self.balanced = parse_bool(value).ok_or(format!("bad boolean {value:?}"))?,
            "balance_target" => self.balance_target = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "base_lr" => self.sgd.base_lr = num(key, value)?,
            "momentum" => self.sgd.momentum = num(key, value)?,
            "weight_decay" => self.sgd.weight_decay = num(key, value)?,
            "gamma" => self.sgd.gamma = num(key, value)?,
            "stepsize" => self.sgd.stepsize = num(key, value)?,
            "hidden_width" => self.hidden_width = num(key, value)?,
            "test_fraction" => self.test_fraction = num(key, value)?,
            "split_mode" => {
                self.split_mode = match value {
                    "slice" => SplitMode::Slice,
                    "subject" => SplitMode::Subject,
                    _ => return Err(format!("split_mode must be slice or subject, got {value:?}")),
                }
            }
            "drop_last" => self.pipeline.slice.drop_last = num(key, value)?,
            "drop_end" => {
                self.pipeline.slice.drop_end = match value {
                    "top" => DropEnd::Top,
                    "bottom" => DropEnd::Bottom,
                    _ => return Err(format!("drop_end must be top or bottom, got {value:?}")),
                }
            }
            "zero_mean_eps" => self.pipeline.slice.zero_mean_eps = num(key, value)?,
            "quantization" => {
                self.pipeline.quantization = match value.split(':').collect::<Vec<_>>().as_slice() {
                    ["per-slice"] => Quantization::PerSlice,
                    ["global", lo, hi] => Quantization::Global {
                        min: num(key, lo)?,
                        max: num(key, hi)?,
                    },
                    _ => {
                        return Err(format!(
                            "quantization must be per-slice or global:<min>:<max>, got {value:?}"
                        ))
                    }
                }
            }
            "parallel" => {
                self.execution = if parse_bool(value).ok_or(format!("bad boolean {value:?}"))? {
                    Execution::Parallel
                } else {
                    Execution::Sequential
                }
            }
            "data_dir" => self.data_dir = PathBuf::from(value),
            "phantom.subjects_ad" => self.phantom.subjects_ad = num(key, value)?,
            "phantom.subjects_nc" => self.phantom.subjects_nc = num(key, value)?,
            "phantom.dims" => {
                let d: Vec<usize> = value
                    .split('x')
                    .map(|v| num(key, v))
                    .collect::<std::result::Result<_, _>>()?;
                self.phantom.dims = d
                    .try_into()
                    .map_err(|_| format!("phantom.dims must be XxYxZ, got {value:?}"))?;
            }
            "phantom.voxel_mm" => self.phantom.voxel_mm = num(key, value)?,
            "phantom.effect_size" => self.phantom.effect_size = num(key, value)?,
            "phantom.noise_sigma" => self.phantom.noise_sigma = num(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs < 1 || self.repeats < 1 || self.batch_size < 1 {
            return fail("epochs, repeats and batch_size must be at least 1".into());
        }
        if self.variants.is_empty() {
            return fail("variants must not be empty".into());
        }
        if let Some(v) = self.variants.iter().find(|v| !VARIANTS.contains(v)) {
            return fail(format!("variant {v} is not one of {VARIANTS:?}"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return fail(format!("test_fraction {} outside (0, 1)", self.test_fraction));
        }
        self.sgd.validate()?;
        self.layer_spec().shapes()?;
        self.phantom.validate()?;
        Ok(())
    }

    pub fn layer_spec(&self) -> LayerSpec {
        LayerSpec::lenet5(self.hidden_width)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            sgd: self.sgd,
            spec: self.layer_spec(),
            seed,
            execution: self.execution,
        }
    }

    /// Canonical text form covering every setting that affects results.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let variants: Vec<String> = self.variants.iter().map(u8::to_string).collect();
        let p = &self.phantom;
        let lines: Vec<(&str, String)> = vec![
            ("epochs", self.epochs.to_string()),
            ("repeats", self.repeats.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("variants", variants.join(",")),
            ("balanced", self.balanced.to_string()),
            ("balance_target", self.balance_target.to_string()),
            ("seed", self.seed.to_string()),
            ("base_lr", self.sgd.base_lr.to_string()),
            ("momentum", self.sgd.momentum.to_string()),
            ("weight_decay", self.sgd.weight_decay.to_string()),
            ("gamma", self.sgd.gamma.to_string()),
            ("stepsize", self.sgd.stepsize.to_string()),
            ("hidden_width", self.hidden_width.to_string()),
            ("test_fraction", self.test_fraction.to_string()),
            (
                "split_mode",
                match self.split_mode {
                    SplitMode::Slice => "slice".into(),
                    SplitMode::Subject => "subject".into(),
                },
            ),
            ("drop_last", self.pipeline.slice.drop_last.to_string()),
            (
                "drop_end",
                match self.pipeline.slice.drop_end {
                    DropEnd::Top => "top".into(),
                    DropEnd::Bottom => "bottom".into(),
                },
            ),
            ("zero_mean_eps", self.pipeline.slice.zero_mean_eps.to_string()),
            ("quantization", self.pipeline.quantization_text()),
            ("phantom.subjects_ad", p.subjects_ad.to_string()),
            ("phantom.subjects_nc", p.subjects_nc.to_string()),
            ("phantom.dims", format!("{}x{}x{}", p.dims[0], p.dims[1], p.dims[2])),
            ("phantom.voxel_mm", p.voxel_mm.to_string()),
            ("phantom.effect_size", p.effect_size.to_string()),
            ("phantom.noise_sigma", p.noise_sigma.to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Hash of [`Self::to_text`]; `data_dir` and execution mode are excluded.
    pub fn hash(&self) -> u64 {
        fnv1a64(self.to_text().as_bytes())
    }
}
