//! Layers with hand-written backward passes, losses, SGD and the per-stage
//! mixed-precision parameter machinery.
//!
//! Data flows through five numeric stages: the forward pass, the backward
//! pass (input gradients), the gradient stage (parameter gradients), the
//! optimizer (master weights) and the loss. Each stage has its own
//! [`Numeric`] kind and quire switch; values are converted at the stage
//! boundaries and nowhere else.

mod checkpoint;
mod layers;
mod loss;
mod models;
mod optim;

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Numeric, Tensor};

pub use checkpoint::{decode_tensors, encode_tensors, load_tensors, save_tensors, CHECKPOINT_MAGIC};
pub use layers::{AvgPool2d, BATCHNORM_EPS, BatchNorm, Conv2d, Dropout, Flatten, Linear, MaxPool2d, Relu, Sigmoid, Tanh};
pub use loss::{cross_entropy, mse, LossOutput};
pub use models::{build_cifarnet, build_lenet5, Activation};
pub use optim::{scale_gradients, Sgd};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    Forward,
    Backward,
    Gradient,
    Optimizer,
    Loss,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Forward, Stage::Backward, Stage::Gradient, Stage::Optimizer, Stage::Loss];

    pub fn key(self) -> &'static str {
        match self {
            Stage::Forward => "forward",
            Stage::Backward => "backward",
            Stage::Gradient => "gradient",
            Stage::Optimizer => "optimizer",
            Stage::Loss => "loss",
        }
    }
}

/// The numeric kind and quire switch of each training stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StagePrecisions {
    pub forward: Numeric,
    pub backward: Numeric,
    pub gradient: Numeric,
    pub optimizer: Numeric,
    pub loss: Numeric,
    pub quire: QuireFlags,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QuireFlags {
    pub forward: bool,
    pub backward: bool,
    pub gradient: bool,
    pub optimizer: bool,
    pub loss: bool,
}

impl QuireFlags {
    pub fn all(on: bool) -> Self {
        QuireFlags { forward: on, backward: on, gradient: on, optimizer: on, loss: on }
    }
}

impl StagePrecisions {
    pub fn uniform(kind: Numeric, quire: bool) -> Self {
        StagePrecisions {
            forward: kind,
            backward: kind,
            gradient: kind,
            optimizer: kind,
            loss: kind,
            quire: QuireFlags::all(quire),
        }
    }

    pub fn kind(&self, stage: Stage) -> Numeric {
        match stage {
            Stage::Forward => self.forward,
            Stage::Backward => self.backward,
            Stage::Gradient => self.gradient,
            Stage::Optimizer => self.optimizer,
            Stage::Loss => self.loss,
        }
    }

    pub fn set_kind(&mut self, stage: Stage, kind: Numeric) {
        match stage {
            Stage::Forward => self.forward = kind,
            Stage::Backward => self.backward = kind,
            Stage::Gradient => self.gradient = kind,
            Stage::Optimizer => self.optimizer = kind,
            Stage::Loss => self.loss = kind,
        }
    }

    pub fn quire(&self, stage: Stage) -> bool {
        match stage {
            Stage::Forward => self.quire.forward,
            Stage::Backward => self.quire.backward,
            Stage::Gradient => self.quire.gradient,
            Stage::Optimizer => self.quire.optimizer,
            Stage::Loss => self.quire.loss,
        }
    }

    pub fn set_quire(&mut self, stage: Stage, on: bool) {
        match stage {
            Stage::Forward => self.quire.forward = on,
            Stage::Backward => self.quire.backward = on,
            Stage::Gradient => self.quire.gradient = on,
            Stage::Optimizer => self.quire.optimizer = on,
            Stage::Loss => self.quire.loss = on,
        }
    }
}

impl fmt::Display for StagePrecisions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in Stage::ALL.into_iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}={}{}", s.key(), self.kind(s), if self.quire(s) { "+q" } else { "" })?;
        }
        Ok(())
    }
}

/// Per-call settings shared by every layer.
#[derive(Clone, Copy, Debug)]
pub struct Ctx {
    pub prec: StagePrecisions,
    pub workers: usize,
    pub training: bool,
}

impl Ctx {
    pub fn new(prec: StagePrecisions) -> Self {
        Ctx { prec, workers: 1, training: true }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn eval(mut self) -> Self {
        self.training = false;
        self
    }

    pub(crate) fn quire(&self, stage: Stage) -> bool {
        self.prec.quire(stage)
    }
}

/// A trainable tensor: a master copy in the optimizer kind, working copies
/// for the forward and backward stages, and the latest gradient.
#[derive(Clone, Debug)]
pub struct MixedParam {
    name: String,
    master: Tensor,
    forward: Tensor,
    backward: Tensor,
    grad: Option<Tensor>,
    pub(crate) momentum: Option<Tensor>,
}

impl MixedParam {
    pub fn new(name: impl Into<String>, master: Tensor, prec: &StagePrecisions) -> Self {
        let master = master.convert(prec.optimizer);
        MixedParam {
            name: name.into(),
            forward: master.convert(prec.forward),
            backward: master.convert(prec.backward),
            master,
            grad: None,
            momentum: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn master(&self) -> &Tensor {
        &self.master
    }

    pub fn forward(&self) -> &Tensor {
        &self.forward
    }

    pub fn backward(&self) -> &Tensor {
        &self.backward
    }

    pub fn grad(&self) -> Option<&Tensor> {
        self.grad.as_ref()
    }

    pub fn set_grad(&mut self, g: Tensor) -> Result<()> {
        if g.shape() != self.master.shape() {
            return Err(Error::shape("set_grad", format!("{} expects {:?}, got {:?}", self.name, self.master.shape(), g.shape())));
        }
        self.grad = Some(g);
        Ok(())
    }

    pub fn take_grad(&mut self) -> Option<Tensor> {
        self.grad.take()
    }

    /// Replaces the master weights and refreshes every copy.
    pub fn set_master(&mut self, master: Tensor, prec: &StagePrecisions) -> Result<()> {
        if master.shape() != self.master.shape() {
            return Err(Error::shape("set_master", format!("{} expects {:?}, got {:?}", self.name, self.master.shape(), master.shape())));
        }
        if master.kind() != prec.optimizer {
            return Err(Error::KindMismatch { left: prec.optimizer, right: master.kind() });
        }
        self.master = master;
        self.sync(prec);
        Ok(())
    }

    pub fn sync(&mut self, prec: &StagePrecisions) {
        self.forward = self.master.convert(prec.forward);
        self.backward = self.master.convert(prec.backward);
    }

    /// True when every working copy equals the converted master.
    pub fn in_sync(&self, prec: &StagePrecisions) -> bool {
        self.master.kind() == prec.optimizer
            && self.forward == self.master.convert(prec.forward)
            && self.backward == self.master.convert(prec.backward)
    }
}

/// A layer with an explicit backward pass. `forward` caches whatever
/// `backward` needs; `backward` must follow a training-mode `forward`.
pub trait Layer: Send {
    fn kind(&self) -> &'static str;

    fn forward(&mut self, x: &Tensor, ctx: &Ctx) -> Result<Tensor>;

    /// Consumes the gradient with respect to the output (backward kind),
    /// stores parameter gradients (gradient kind) and returns the gradient
    /// with respect to the input unless `need_dx` is false.
    fn backward(&mut self, dy: &Tensor, ctx: &Ctx, need_dx: bool) -> Result<Option<Tensor>>;

    fn params(&self) -> Vec<&MixedParam> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut MixedParam> {
        Vec::new()
    }

    /// Non-trainable persistent state, e.g. running statistics.
    fn buffers(&self) -> Vec<(&'static str, &Tensor)> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        Vec::new()
    }

    /// Reseeds any internal randomness (dropout masks).
    fn reseed(&mut self, _seed: u64) {}
}

pub(crate) fn missing_cache(layer: &'static str) -> Error {
    Error::Usage(format!("{layer}: backward called without a preceding training forward"))
}

/// An ordered stack of labelled layers.
#[derive(Default)]
pub struct Sequential {
    layers: Vec<(String, Box<dyn Layer>)>,
}

impl Sequential {
    pub fn new() -> Self {
        Sequential::default()
    }

    pub fn push(&mut self, label: impl Into<String>, layer: impl Layer + 'static) -> &mut Self {
        self.layers.push((label.into(), Box::new(layer)));
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layers(&self) -> impl Iterator<Item = (&str, &dyn Layer)> {
        self.layers.iter().map(|(l, b)| (l.as_str(), b.as_ref()))
    }

    pub fn forward(&mut self, x: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        let mut h = x.convert(ctx.prec.forward);
        for (_, layer) in &mut self.layers {
            h = layer.forward(&h, ctx)?;
        }
        Ok(h)
    }

    /// Backpropagates `dy`; the gradient of the network input is not formed.
    pub fn backward(&mut self, dy: &Tensor, ctx: &Ctx) -> Result<()> {
        let mut g = dy.convert(ctx.prec.backward);
        for (i, (_, layer)) in self.layers.iter_mut().enumerate().rev() {
            match layer.backward(&g, ctx, i > 0)? {
                Some(dx) => g = dx,
                None => break,
            }
        }
        Ok(())
    }

    /// Like [`Sequential::backward`] but also returns the input gradient.
    pub fn backward_to_input(&mut self, dy: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        let mut g = dy.convert(ctx.prec.backward);
        for (_, layer) in self.layers.iter_mut().rev() {
            g = layer.backward(&g, ctx, true)?.expect("dx requested");
        }
        Ok(g)
    }

    /// `(qualified name, parameter)` pairs in layer order.
    pub fn named_params(&self) -> Vec<(String, &MixedParam)> {
        let mut out = Vec::new();
        for (label, layer) in &self.layers {
            for p in layer.params() {
                out.push((format!("{label}.{}", p.name()), p));
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut MixedParam> {
        self.layers.iter_mut().flat_map(|(_, l)| l.params_mut()).collect()
    }

    pub fn named_buffers(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (label, layer) in &self.layers {
            for (name, t) in layer.buffers() {
                out.push((format!("{label}.{name}"), t));
            }
        }
        out
    }

    pub fn named_buffers_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (label, layer) in &mut self.layers {
            for (name, t) in layer.buffers_mut() {
                out.push((format!("{label}.{name}"), t));
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.master().numel()).sum()
    }

    pub fn reseed(&mut self, seed: u64) {
        for (i, (_, layer)) in self.layers.iter_mut().enumerate() {
            layer.reseed(seed.wrapping_add(i as u64));
        }
    }

    /// Every tensor that a checkpoint persists, in order.
    pub fn state(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = self.named_params().into_iter().map(|(n, p)| (n, p.master())).collect();
        out.extend(self.named_buffers());
        out
    }

    /// Checkpoint bytes of [`Sequential::state`].
    pub fn to_bytes(&self) -> Vec<u8> {
        let state = self.state();
        encode_tensors(state.iter().map(|(n, t)| (n.as_str(), *t)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(&mut self, path: &Path, prec: &StagePrecisions) -> Result<()> {
        let records = load_tensors(path)?;
        self.load_state(records, prec)
            .map_err(|e| Error::Checkpoint { path: path.to_path_buf(), reason: e.to_string() })
    }

    /// Overwrites parameters and buffers from `(name, tensor)` records; every
    /// name, kind and shape must match.
    pub fn load_state(&mut self, records: Vec<(String, Tensor)>, prec: &StagePrecisions) -> Result<()> {
        let expected: Vec<(String, Numeric, Vec<usize>)> =
            self.state().into_iter().map(|(n, t)| (n, t.kind(), t.shape().to_vec())).collect();
        if expected.len() != records.len() {
            return Err(Error::Usage(format!("model has {} tensors, checkpoint has {}", expected.len(), records.len())));
        }
        for ((name, kind, shape), (rname, t)) in expected.iter().zip(&records) {
            if name != rname {
                return Err(Error::Usage(format!("expected tensor {name}, checkpoint has {rname}")));
            }
            if *kind != t.kind() {
                return Err(Error::Usage(format!("{name}: model stores {kind}, checkpoint stores {}", t.kind())));
            }
            if shape.as_slice() != t.shape() {
                return Err(Error::Usage(format!("{name}: model shape {shape:?}, checkpoint shape {:?}", t.shape())));
            }
        }
        let mut records = records.into_iter();
        for p in self.params_mut() {
            let (_, t) = records.next().expect("counted");
            p.set_master(t, prec)?;
        }
        for (_, b) in self.named_buffers_mut() {
            let (_, t) = records.next().expect("counted");
            *b = t;
        }
        Ok(())
    }
}

impl fmt::Debug for Sequential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut l = f.debug_list();
        for (label, layer) in &self.layers {
            l.entry(&format_args!("{label}: {}", layer.kind()));
        }
        l.finish()
    }
}
