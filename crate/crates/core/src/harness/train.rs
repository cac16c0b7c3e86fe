use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{DatasetName, ExperimentConfig, Model};
use crate::data::{self, Dataset, Split};
use crate::error::{Error, Result};
use crate::nn::{build_cifarnet, build_lenet5, cross_entropy, scale_gradients, Ctx, Sequential, Sgd};
use crate::tensor::Tensor;

pub const METRICS_HEADER: &str = "epoch,step,train_loss,test_acc,seconds";

/// One line of the metrics CSV. `test_acc` is absent for epochs that were
/// not evaluated.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub step: usize,
    pub train_loss: f64,
    pub test_acc: Option<f64>,
    pub seconds: f64,
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        let acc = self.test_acc.map_or_else(String::new, |a| format!("{a:.2}"));
        format!("{},{},{:.6},{},{:.3}", self.epoch, self.step, self.train_loss, acc, self.seconds)
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_line());
    }
    s
}

/// Train and test splits, normalised and truncated as configured.
pub fn load_splits(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let dir = &cfg.data_dir;
    let (train, test) = match cfg.dataset {
        DatasetName::Mnist | DatasetName::FashionMnist => {
            (data::load_mnist_like(dir, Split::Train)?, data::load_mnist_like(dir, Split::Test)?)
        }
        DatasetName::Cifar10 => {
            let train = data::load_cifar10(dir, Split::Train)?;
            let (mean, std) = train.channel_stats();
            let test = data::load_cifar10(dir, Split::Test)?.normalize(&mean, &std)?;
            (train.normalize(&mean, &std)?, test)
        }
    };
    let train = match cfg.subset {
        Some(n) => train.truncate(n),
        None => train,
    };
    let test = match cfg.test_subset {
        Some(n) => test.truncate(n),
        None => test,
    };
    if train.is_empty() || test.is_empty() {
        return Err(Error::Dataset { path: dir.clone(), reason: "empty split after subsetting".into() });
    }
    Ok((train, test))
}

pub fn build_model(cfg: &ExperimentConfig) -> Sequential {
    match cfg.model {
        Model::LeNet5 => build_lenet5(&cfg.precisions, cfg.activation, cfg.seed),
        Model::CifarNet => build_cifarnet(&cfg.precisions, cfg.seed),
    }
}

/// Top-1 accuracy in percent. Ties and NaR logits resolve to the lowest class.
pub fn evaluate(net: &mut Sequential, images: &Tensor, labels: &[u8], ctx: &Ctx, batch_size: usize) -> Result<f64> {
    let ctx = ctx.eval();
    let order: Vec<usize> = (0..labels.len()).collect();
    let mut correct = 0usize;
    for batch in data::batches(images, labels, &order, batch_size) {
        let (x, y) = batch?;
        let logits = net.forward(&x, &ctx)?;
        let c = logits.shape()[1];
        for (row, &t) in logits.to_f64_vec().chunks(c).zip(&y) {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] || row[best].is_nan() && !v.is_nan() {
                    best = j;
                }
            }
            correct += (best == t) as usize;
        }
    }
    Ok(100.0 * correct as f64 / labels.len() as f64)
}

pub struct RunOutcome {
    pub rows: Vec<MetricsRow>,
    pub model: Sequential,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

impl RunOutcome {
    /// Accuracy of the last evaluated epoch.
    pub fn final_accuracy(&self) -> f64 {
        self.rows.iter().rev().find_map(|r| r.test_acc).unwrap_or(f64::NAN)
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Runs the configured training loop and writes `metrics.csv`,
/// `model.pnn` and `config.txt` into `cfg.out_dir`. `on_epoch` sees every
/// metrics row as it is produced.
pub fn train(cfg: &ExperimentConfig, mut on_epoch: impl FnMut(&MetricsRow)) -> Result<RunOutcome> {
    cfg.validate()?;
    let (train_set, test_set) = load_splits(cfg)?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    write(&cfg.out_dir.join("config.txt"), cfg.to_string())?;

    let prec = cfg.precisions;
    let train_x = train_set.to_tensor(prec.forward)?;
    let test_x = test_set.to_tensor(prec.forward)?;
    let mut net = build_model(cfg);
    let ctx = Ctx::new(prec).with_workers(cfg.workers);
    let metrics_path = cfg.out_dir.join("metrics.csv");
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let sgd = Sgd { grad_scale_log2: cfg.grad_scale_log2, ..Sgd::new(cfg.lr_at(epoch), cfg.momentum) };
        let order = data::epoch_order(train_set.len(), cfg.seed, epoch as u64);
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        for batch in data::batches(&train_x, train_set.labels(), &order, cfg.batch_size) {
            let (x, y) = batch?;
            net.reseed(cfg.seed ^ ((step as u64) << 20));
            let logits = net.forward(&x, &ctx)?;
            let loss = cross_entropy(&logits, &y, prec.loss, prec.quire.loss)?;
            net.backward(&scale_gradients(&loss.grad, cfg.grad_scale_log2), &ctx)?;
            sgd.step(net.params_mut(), &prec)?;
            loss_sum += loss.value;
            batches += 1;
            step += 1;
        }
        let last = epoch + 1 == cfg.epochs;
        let due = cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0;
        let test_acc = if last || due {
            Some(evaluate(&mut net, &test_x, test_set.labels(), &ctx, cfg.batch_size)?)
        } else {
            None
        };
        let row = MetricsRow {
            epoch: epoch + 1,
            step,
            train_loss: loss_sum / batches as f64,
            test_acc,
            seconds: if cfg.wallclock { start.elapsed().as_secs_f64() } else { 0.0 },
        };
        on_epoch(&row);
        rows.push(row);
        write(&metrics_path, metrics_csv(&rows))?;
    }
    let checkpoint_path = cfg.out_dir.join("model.pnn");
    net.save(&checkpoint_path)?;
    Ok(RunOutcome { rows, model: net, metrics_path, checkpoint_path })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows() {
        let r = MetricsRow { epoch: 2, step: 40, train_loss: 0.5, test_acc: Some(81.234), seconds: 1.5 };
        assert_eq!(r.csv_line(), "2,40,0.500000,81.23,1.500");
        let r = MetricsRow { test_acc: None, ..r };
        assert_eq!(metrics_csv(&[r]), format!("{METRICS_HEADER}\n2,40,0.500000,,1.500\n"));
    }
}
