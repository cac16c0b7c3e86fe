use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{Activation, Stage, StagePrecisions};
use crate::tensor::Numeric;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    LeNet5,
    CifarNet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetName {
    Mnist,
    FashionMnist,
    Cifar10,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::LeNet5 => "lenet5",
            Model::CifarNet => "cifarnet",
        })
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "lenet5" | "lenet" => Ok(Model::LeNet5),
            "cifarnet" => Ok(Model::CifarNet),
            _ => Err(Error::Usage(format!("unknown model {s:?} (lenet5, cifarnet)"))),
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetName::Mnist => "mnist",
            DatasetName::FashionMnist => "fashion-mnist",
            DatasetName::Cifar10 => "cifar10",
        })
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "mnist" => Ok(DatasetName::Mnist),
            "fashionmnist" | "fmnist" => Ok(DatasetName::FashionMnist),
            "cifar10" | "cifar" => Ok(DatasetName::Cifar10),
            _ => Err(Error::Usage(format!("unknown dataset {s:?} (mnist, fashion-mnist, cifar10)"))),
        }
    }
}

/// Everything that determines a training run, apart from the dataset bytes.
///
/// The text form is one `key = value` per line; `#` starts a comment. Stage
/// kinds are written `8:2` (posit nbits:es), `float32` or `float64`. A
/// missing `gradient` key follows `backward`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: Model,
    pub dataset: DatasetName,
    pub data_dir: PathBuf,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Multiply the learning rate by `lr_decay` once this (1-based) epoch starts.
    pub lr_decay_epoch: Option<usize>,
    pub lr_decay: f64,
    pub momentum: f64,
    pub seed: u64,
    pub precisions: StagePrecisions,
    /// Loss gradients are multiplied by `2^grad_scale_log2` before backward.
    pub grad_scale_log2: i32,
    pub workers: usize,
    pub subset: Option<usize>,
    pub test_subset: Option<usize>,
    /// Evaluate every this many epochs; the last epoch is always evaluated.
    pub eval_every: usize,
    /// Write measured seconds to the metrics CSV (off gives byte-reproducible files).
    pub wallclock: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: Model::LeNet5,
            dataset: DatasetName::FashionMnist,
            data_dir: PathBuf::from("data/fashion-mnist"),
            activation: Activation::Tanh,
            epochs: 10,
            batch_size: 64,
            lr: 0.01,
            lr_decay_epoch: None,
            lr_decay: 0.1,
            momentum: 0.9,
            seed: 1,
            precisions: StagePrecisions::uniform(Numeric::F32, false),
            grad_scale_log2: 0,
            workers: 1,
            subset: None,
            test_subset: None,
            eval_every: 1,
            wallclock: true,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Some(true),
        "false" | "off" | "no" | "0" => Some(false),
        _ => None,
    }
}

fn optional(v: &str) -> Option<&str> {
    (!matches!(v, "" | "none" | "all")).then_some(v)
}

fn fmt_optional(v: Option<usize>) -> String {
    v.map_or_else(|| "none".to_string(), |n| n.to_string())
}

impl ExperimentConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let bad = |what: &str| Error::Usage(format!("{key} = {v:?}: expected {what}"));
        let num = |what: &str| v.parse::<usize>().map_err(|_| bad(what));
        let real = || v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| bad("a number"));
        match key.trim() {
            "model" => self.model = v.parse()?,
            "dataset" => self.dataset = v.parse()?,
            "data_dir" => self.data_dir = PathBuf::from(v),
            "activation" => self.activation = v.parse()?,
            "epochs" => self.epochs = num("an epoch count")?,
            "batch_size" => self.batch_size = num("a batch size")?.max(1),
            "lr" => self.lr = real()?,
            "lr_decay_epoch" => {
                self.lr_decay_epoch = optional(v).map(|_| num("an epoch number")).transpose()?;
            }
            "lr_decay" => self.lr_decay = real()?,
            "momentum" => self.momentum = real()?,
            "seed" => self.seed = v.parse().map_err(|_| bad("an unsigned integer"))?,
            "quire" => {
                let on = parse_bool(v).ok_or_else(|| bad("on/off"))?;
                for s in Stage::ALL {
                    self.precisions.set_quire(s, on);
                }
            }
            "precision" => {
                let kind: Numeric = v.parse()?;
                for s in Stage::ALL {
                    self.precisions.set_kind(s, kind);
                }
            }
            "grad_scale" => {
                let s: f64 = real()?;
                let log2 = s.log2();
                if s.is_nan() || s <= 0.0 || log2.fract() != 0.0 {
                    return Err(bad("a power of two"));
                }
                self.grad_scale_log2 = log2 as i32;
            }
            "workers" => self.workers = num("a worker count")?.max(1),
            "subset" => self.subset = optional(v).map(|_| num("a sample count")).transpose()?,
            "test_subset" => self.test_subset = optional(v).map(|_| num("a sample count")).transpose()?,
            "eval_every" => self.eval_every = num("an epoch interval")?,
            "wallclock" => self.wallclock = parse_bool(v).ok_or_else(|| bad("on/off"))?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            k => {
                if let Some(stage) = Stage::ALL.into_iter().find(|s| s.key() == k) {
                    self.precisions.set_kind(stage, v.parse()?);
                } else if let Some(stage) =
                    k.strip_prefix("quire_").and_then(|s| Stage::ALL.into_iter().find(|st| st.key() == s))
                {
                    self.precisions.set_quire(stage, parse_bool(v).ok_or_else(|| bad("on/off"))?);
                } else {
                    return Err(Error::Usage(format!("unknown config key {k:?}")));
                }
            }
        }
        Ok(())
    }

    /// Parses the text form on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut saw_gradient = false;
        let mut saw_backward = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config { line: i + 1, reason: format!("expected key = value, got {line:?}") })?;
            let k = k.trim();
            saw_gradient |= k == "gradient";
            saw_backward |= k == "backward";
            self.set(k, v).map_err(|e| Error::Config { line: i + 1, reason: e.to_string() })?;
        }
        if saw_backward && !saw_gradient {
            self.precisions.gradient = self.precisions.backward;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Rejects values that would only fail once training has started.
    pub fn validate(&self) -> Result<()> {
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::Usage(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Usage(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.epochs == 0 {
            return Err(Error::Usage("epochs must be at least 1".into()));
        }
        if self.model == Model::CifarNet && self.dataset != DatasetName::Cifar10 {
            return Err(Error::Usage("cifarnet expects 3×32×32 inputs (dataset = cifar10)".into()));
        }
        if self.model == Model::LeNet5 && self.dataset == DatasetName::Cifar10 {
            return Err(Error::Usage("lenet5 expects 1×28×28 inputs (mnist or fashion-mnist)".into()));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_decay_epoch {
            Some(e) if epoch + 1 >= e => self.lr * self.lr_decay,
            _ => self.lr,
        }
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model = {}", self.model)?;
        writeln!(f, "dataset = {}", self.dataset)?;
        writeln!(f, "data_dir = {}", self.data_dir.display())?;
        writeln!(f, "activation = {}", self.activation)?;
        writeln!(f, "epochs = {}", self.epochs)?;
        writeln!(f, "batch_size = {}", self.batch_size)?;
        writeln!(f, "lr = {}", self.lr)?;
        writeln!(f, "lr_decay_epoch = {}", fmt_optional(self.lr_decay_epoch))?;
        writeln!(f, "lr_decay = {}", self.lr_decay)?;
        writeln!(f, "momentum = {}", self.momentum)?;
        writeln!(f, "seed = {}", self.seed)?;
        for s in Stage::ALL {
            writeln!(f, "{} = {}", s.key(), self.precisions.kind(s))?;
        }
        for s in Stage::ALL {
            writeln!(f, "quire_{} = {}", s.key(), if self.precisions.quire(s) { "on" } else { "off" })?;
        }
        writeln!(f, "grad_scale = {}", 2f64.powi(self.grad_scale_log2))?;
        writeln!(f, "workers = {}", self.workers)?;
        writeln!(f, "subset = {}", fmt_optional(self.subset))?;
        writeln!(f, "test_subset = {}", fmt_optional(self.test_subset))?;
        writeln!(f, "eval_every = {}", self.eval_every)?;
        writeln!(f, "wallclock = {}", if self.wallclock { "on" } else { "off" })?;
        writeln!(f, "out_dir = {}", self.out_dir.display())
    }
}
