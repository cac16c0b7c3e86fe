//! IDX (MNIST, Fashion-MNIST) and CIFAR-10 binary loaders, normalisation and
//! seeded mini-batching.
//!
//! Pixels stay as bytes until [`Dataset::to_tensor`], which normalises in
//! float64 and rounds each value once into the target kind. Training code
//! quantises the whole split up front, so no float → posit conversion
//! happens inside the training loop.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Numeric, Tensor};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD_BYTES: usize = 1 + 3 * 32 * 32;
pub const NUM_CLASSES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pixels: Vec<u8>,
    labels: Vec<u8>,
    channels: usize,
    height: usize,
    width: usize,
    mean: Vec<f64>,
    std: Vec<f64>,
}

fn dataset_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Dataset { path: path.to_path_buf(), reason: reason.into() }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| dataset_err(path, "truncated header"))
}

impl Dataset {
    /// Builds a dataset from raw `N × C × H × W` bytes; normalisation starts as
    /// the identity on `[0, 1]` pixel values.
    pub fn from_raw(pixels: Vec<u8>, labels: Vec<u8>, channels: usize, height: usize, width: usize) -> Result<Self> {
        let per = channels * height * width;
        if per == 0 || pixels.len() != labels.len() * per {
            return Err(Error::Usage(format!("{} pixel bytes for {} labels of {per} bytes", pixels.len(), labels.len())));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::Usage(format!("label {l} outside 0..{NUM_CLASSES}")));
        }
        Ok(Dataset { pixels, labels, channels, height, width, mean: vec![0.0; channels], std: vec![1.0; channels] })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Normalisation applied by [`Dataset::to_tensor`]: `(p/255 − mean) / std`
    /// per channel.
    pub fn normalize(mut self, mean: &[f64], std: &[f64]) -> Result<Self> {
        if mean.len() != self.channels || std.len() != self.channels || std.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(Error::Usage(format!("need {} means and positive stds", self.channels)));
        }
        self.mean = mean.to_vec();
        self.std = std.to_vec();
        Ok(self)
    }

    pub fn normalization(&self) -> (&[f64], &[f64]) {
        (&self.mean, &self.std)
    }

    /// Per-channel mean and (population) standard deviation of `p/255`.
    pub fn channel_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let plane = self.height * self.width;
        let mut sum = vec![0f64; self.channels];
        let mut sq = vec![0f64; self.channels];
        for img in self.pixels.chunks(self.channels * plane) {
            for (c, px) in img.chunks(plane).enumerate() {
                for &p in px {
                    let v = p as f64 / 255.0;
                    sum[c] += v;
                    sq[c] += v * v;
                }
            }
        }
        let n = (self.len() * plane) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq.iter().zip(&mean).map(|(q, m)| (q / n - m * m).max(0.0).sqrt()).collect();
        (mean, std)
    }

    /// Keeps the first `n` samples.
    pub fn truncate(mut self, n: usize) -> Self {
        let n = n.min(self.len());
        self.labels.truncate(n);
        self.pixels.truncate(n * self.channels * self.height * self.width);
        self
    }

    /// Normalised images `[N, C, H, W]`, one rounding per pixel into `kind`.
    pub fn to_tensor(&self, kind: Numeric) -> Result<Tensor> {
        let plane = self.height * self.width;
        let values: Vec<f64> = self
            .pixels
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let c = (i / plane) % self.channels;
                (p as f64 / 255.0 - self.mean[c]) / self.std[c]
            })
            .collect();
        Tensor::from_f64(&[self.len(), self.channels, self.height, self.width], &values, kind)
    }
}

/// Parses an IDX image file (magic 0x803, 28×28) and its label file (0x801).
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img = read(images_path)?;
    let lab = read(labels_path)?;
    let magic = be_u32(&img, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(dataset_err(images_path, format!("bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let magic = be_u32(&lab, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(dataset_err(labels_path, format!("bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let n = be_u32(&img, 4, images_path)? as usize;
    let (h, w) = (be_u32(&img, 8, images_path)? as usize, be_u32(&img, 12, images_path)? as usize);
    if (h, w) != (28, 28) {
        return Err(dataset_err(images_path, format!("images are {h}×{w}, expected 28×28")));
    }
    let nl = be_u32(&lab, 4, labels_path)? as usize;
    if nl != n {
        return Err(dataset_err(labels_path, format!("{nl} labels for {n} images")));
    }
    if img.len() != 16 + n * h * w {
        return Err(dataset_err(images_path, format!("expected {} bytes, found {}", 16 + n * h * w, img.len())));
    }
    if lab.len() != 8 + n {
        return Err(dataset_err(labels_path, format!("expected {} bytes, found {}", 8 + n, lab.len())));
    }
    Dataset::from_raw(img[16..].to_vec(), lab[8..].to_vec(), 1, h, w).map_err(|e| dataset_err(labels_path, e.to_string()))
}

/// Standard file names of an (Fashion-)MNIST split inside `dir`.
pub fn idx_paths(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    let stem = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    (dir.join(format!("{stem}-images-idx3-ubyte")), dir.join(format!("{stem}-labels-idx1-ubyte")))
}

pub fn load_mnist_like(dir: &Path, split: Split) -> Result<Dataset> {
    let (images, labels) = idx_paths(dir, split);
    load_idx(&images, &labels)?.normalize(&[0.5], &[0.5])
}

/// Reads CIFAR-10 binary batches (`data_batch_1..5.bin` or `test_batch.bin`).
/// Records are a label byte followed by the R, G and B planes.
pub fn load_cifar10(dir: &Path, split: Split) -> Result<Dataset> {
    let files: Vec<PathBuf> = match split {
        Split::Train => (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect(),
        Split::Test => vec![dir.join("test_batch.bin")],
    };
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for f in &files {
        let bytes = read(f)?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD_BYTES != 0 {
            return Err(dataset_err(f, format!("{} bytes is not a multiple of {CIFAR_RECORD_BYTES}", bytes.len())));
        }
        for rec in bytes.chunks(CIFAR_RECORD_BYTES) {
            if rec[0] as usize >= NUM_CLASSES {
                return Err(dataset_err(f, format!("label {} outside 0..{NUM_CLASSES}", rec[0])));
            }
            labels.push(rec[0]);
            pixels.extend_from_slice(&rec[1..]);
        }
    }
    Dataset::from_raw(pixels, labels, 3, 32, 32)
}

/// Sample order for `epoch`: a Fisher–Yates shuffle driven by ChaCha8 seeded
/// with `seed`, one stream per epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Mini-batches of already quantised `images` in `order`; the final batch may
/// be smaller.
pub fn batches<'a>(
    images: &'a Tensor,
    labels: &'a [u8],
    order: &'a [usize],
    batch_size: usize,
) -> impl Iterator<Item = Result<(Tensor, Vec<usize>)>> + 'a {
    order.chunks(batch_size.max(1)).map(move |idx| {
        let x = images.gather0(idx)?;
        Ok((x, idx.iter().map(|&i| labels[i] as usize).collect()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn idx_files(dir: &Path, n: u32, magic: u32) -> (PathBuf, PathBuf) {
        let ip = dir.join("img");
        let lp = dir.join("lab");
        let mut f = fs::File::create(&ip).unwrap();
        for v in [magic, n, 28, 28] {
            f.write_all(&v.to_be_bytes()).unwrap();
        }
        f.write_all(&(0..n as usize * 784).map(|i| (i % 256) as u8).collect::<Vec<_>>()).unwrap();
        let mut f = fs::File::create(&lp).unwrap();
        for v in [IDX_LABELS_MAGIC, n] {
            f.write_all(&v.to_be_bytes()).unwrap();
        }
        f.write_all(&(0..n).map(|i| (i % 10) as u8).collect::<Vec<_>>()).unwrap();
        (ip, lp)
    }

    #[test]
    fn idx_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = idx_files(dir.path(), 5, IDX_IMAGES_MAGIC);
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 5);
        assert_eq!(ds.labels(), &[0, 1, 2, 3, 4]);
        assert_eq!(load_idx(&ip, &lp).unwrap(), ds);
        assert!(load_idx(&lp, &ip).is_err());
        let (ip, lp) = idx_files(dir.path(), 5, 0x0000_0802);
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Dataset { .. })));
        let (ip, lp) = idx_files(dir.path(), 5, IDX_IMAGES_MAGIC);
        let bytes = fs::read(&ip).unwrap();
        fs::write(&ip, &bytes[..bytes.len() - 1]).unwrap();
        assert!(load_idx(&ip, &lp).is_err());
        assert!(load_idx(&dir.path().join("missing"), &lp).is_err());
    }

    #[test]
    fn cifar_records() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = vec![7u8];
        rec.extend((0..3072).map(|i| (i / 1024) as u8 * 100));
        fs::write(dir.path().join("test_batch.bin"), [rec.clone(), rec.clone()].concat()).unwrap();
        let ds = load_cifar10(dir.path(), Split::Test).unwrap();
        assert_eq!((ds.len(), ds.image_shape()), (2, [3, 32, 32]));
        let t = ds.to_tensor(Numeric::F64).unwrap();
        // planes are R, G, B in that order
        assert_eq!(t.get_f64(&[1, 0, 5, 5]), 0.0);
        assert_eq!(t.get_f64(&[1, 2, 0, 0]), 200.0 / 255.0);
        let (mean, _) = ds.channel_stats();
        assert!((mean[1] - 100.0 / 255.0).abs() < 1e-12);
        fs::write(dir.path().join("test_batch.bin"), &rec[..3000]).unwrap();
        assert!(load_cifar10(dir.path(), Split::Test).is_err());
        rec[0] = 10;
        fs::write(dir.path().join("test_batch.bin"), &rec).unwrap();
        assert!(load_cifar10(dir.path(), Split::Test).is_err());
    }

    #[test]
    fn normalisation_and_batching() {
        let ds = Dataset::from_raw(vec![0, 255, 51, 102], vec![1, 2, 3, 4], 1, 1, 1).unwrap();
        assert_eq!(ds.to_tensor(Numeric::F64).unwrap().to_f64_vec(), vec![0.0, 1.0, 0.2, 0.4]);
        let ds = ds.normalize(&[0.5], &[0.5]).unwrap();
        assert_eq!(ds.to_tensor(Numeric::F64).unwrap().to_f64_vec()[..2], [-1.0, 1.0]);
        let x = ds.to_tensor(Numeric::F64).unwrap();
        let order = epoch_order(4, 3, 0);
        assert_eq!(order, epoch_order(4, 3, 0));
        let sizes: Vec<usize> = batches(&x, ds.labels(), &order, 3).map(|b| b.unwrap().1.len()).collect();
        assert_eq!(sizes, vec![3, 1]);
        let (xb, yb) = batches(&x, ds.labels(), &order, 3).next().unwrap().unwrap();
        assert_eq!(xb.shape(), &[3, 1, 1, 1]);
        assert_eq!(yb[0], ds.labels()[order[0]] as usize);
    }

    #[test]
    fn shuffles_differ_by_epoch_and_seed() {
        let a = epoch_order(100, 1, 0);
        assert_ne!(a, epoch_order(100, 1, 1));
        assert_ne!(a, epoch_order(100, 2, 0));
        let mut s = a.clone();
        s.sort();
        assert_eq!(s, (0..100).collect::<Vec<_>>());
    }
}
