//! Named configurations for every published experiment cell.
//!
//! All presets train LeNet-5 with tanh (or CifarNet) for 10 epochs, SGD with
//! momentum 0.9 and batch 64. Float presets use float32 in every stage.

use std::path::PathBuf;

use super::config::{DatasetName, ExperimentConfig, Model};
use crate::error::{Error, Result};
use crate::nn::StagePrecisions;
use crate::tensor::Numeric;
use crate::PositConfig;

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    /// Published test accuracy in percent.
    pub target_accuracy: f64,
}

const fn p(name: &'static str, description: &'static str, target_accuracy: f64) -> Preset {
    Preset { name, description, target_accuracy }
}

pub const PRESETS: &[Preset] = &[
    p("table2-float", "float32 reference, LeNet-5 / Fashion-MNIST", 90.42),
    p("table2-posit16", "posit(16,1) everywhere, no quire", 90.87),
    p("table2-posit12", "posit(12,1) everywhere, no quire", 90.15),
    p("table2-posit10", "posit(10,1) everywhere, no quire", 88.15),
    p("table2-posit8", "posit(8,0) everywhere, no quire", 10.00),
    p("table3-float", "float32 reference, LeNet-5 / Fashion-MNIST", 90.42),
    p("table3-posit10-quire", "posit(10,1) everywhere with quire", 88.40),
    p("table3-posit80-quire", "posit(8,0) everywhere with quire", 13.84),
    p("table3-posit81-quire", "posit(8,1) everywhere with quire", 12.86),
    p("table3-posit82-quire", "posit(8,2) everywhere with quire", 19.39),
    p("table4-float", "float32 reference, LeNet-5 / Fashion-MNIST", 90.42),
    p("O12L8", "posit(8,2) with quire, optimizer posit(12,2), loss posit(8,2)", 88.40),
    p("O12L12", "posit(8,2) with quire, optimizer posit(12,2), loss posit(12,2)", 90.07),
    p("O12L10", "posit(8,2) with quire, optimizer posit(12,2), loss posit(10,2)", 90.25),
    p("O10L10", "posit(8,2) with quire, optimizer posit(10,2), loss posit(10,2)", 88.08),
    p("table5-mnist-float", "float32, LeNet-5 / MNIST", 99.19),
    p("table5-mnist-posit82star", "O12L10 mixed precision, LeNet-5 / MNIST", 99.17),
    p("table5-fashion-float", "float32, LeNet-5 / Fashion-MNIST", 90.42),
    p("table5-fashion-posit82star", "O12L10 mixed precision, LeNet-5 / Fashion-MNIST", 90.25),
    p("table5-cifar10-float", "float32, CifarNet / CIFAR-10", 70.29),
    p("table5-cifar10-posit82star", "O12L10 mixed precision, CifarNet / CIFAR-10", 68.65),
];

fn posit(nbits: u32, es: u32) -> Numeric {
    Numeric::Posit(PositConfig::of(nbits, es))
}

/// posit(8,2) with quire everywhere except the optimizer and loss formats.
/// The optimizer stage only does element-wise updates, so its quire is off.
pub fn mixed_82(optimizer_bits: u32, loss_bits: u32) -> StagePrecisions {
    let mut prec = StagePrecisions::uniform(posit(8, 2), true);
    prec.optimizer = posit(optimizer_bits, 2);
    prec.loss = posit(loss_bits, 2);
    prec.quire.optimizer = false;
    prec
}

fn precisions(name: &str) -> Option<StagePrecisions> {
    let float = StagePrecisions::uniform(Numeric::F32, false);
    Some(match name {
        n if n.ends_with("-float") => float,
        "table2-posit16" => StagePrecisions::uniform(posit(16, 1), false),
        "table2-posit12" => StagePrecisions::uniform(posit(12, 1), false),
        "table2-posit10" => StagePrecisions::uniform(posit(10, 1), false),
        "table2-posit8" => StagePrecisions::uniform(posit(8, 0), false),
        "table3-posit10-quire" => StagePrecisions::uniform(posit(10, 1), true),
        "table3-posit80-quire" => StagePrecisions::uniform(posit(8, 0), true),
        "table3-posit81-quire" => StagePrecisions::uniform(posit(8, 1), true),
        "table3-posit82-quire" => StagePrecisions::uniform(posit(8, 2), true),
        "O12L8" => mixed_82(12, 8),
        "O12L12" => mixed_82(12, 12),
        "O12L10" => mixed_82(12, 10),
        "O10L10" => mixed_82(10, 10),
        n if n.ends_with("-posit82star") => mixed_82(12, 10),
        _ => return None,
    })
}

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name.eq_ignore_ascii_case(name))
}

/// The full configuration of a preset. `data_root` holds one directory per
/// dataset (`mnist`, `fashion-mnist`, `cifar10`).
pub fn preset(name: &str, data_root: &std::path::Path) -> Result<ExperimentConfig> {
    let known = find(name).ok_or_else(|| {
        let names: Vec<_> = PRESETS.iter().map(|p| p.name).collect();
        Error::Usage(format!("unknown preset {name:?}; known presets: {}", names.join(", ")))
    })?;
    let mut cfg = ExperimentConfig { precisions: precisions(known.name).expect("every preset has precisions"), ..Default::default() };
    if known.name.starts_with("table5-mnist") {
        cfg.dataset = DatasetName::Mnist;
    } else if known.name.starts_with("table5-cifar10") {
        cfg.dataset = DatasetName::Cifar10;
        cfg.model = Model::CifarNet;
        cfg.lr = 0.02;
        cfg.lr_decay_epoch = Some(8);
    }
    cfg.data_dir = data_root.join(cfg.dataset.to_string());
    cfg.out_dir = PathBuf::from("runs").join(known.name);
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    #[test]
    fn every_preset_resolves_and_validates() {
        for p in PRESETS {
            let cfg = preset(p.name, Path::new("data")).unwrap();
            cfg.validate().unwrap();
            assert_eq!(ExperimentConfig::parse(&cfg.to_string()).unwrap(), cfg, "{}", p.name);
        }
        assert!(preset("table9", Path::new("data")).is_err());
    }

    #[test]
    fn o12l10_is_the_starred_configuration() {
        let a = preset("O12L10", Path::new("d")).unwrap();
        let b = preset("table5-fashion-posit82star", Path::new("d")).unwrap();
        assert_eq!(a.precisions, b.precisions);
        assert_eq!(a.precisions.forward, posit(8, 2));
        assert_eq!(a.precisions.optimizer, posit(12, 2));
        assert_eq!(a.precisions.loss, posit(10, 2));
        assert!(a.precisions.quire.forward && !a.precisions.quire.optimizer);
    }
}
