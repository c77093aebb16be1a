//! Raw image tensors on disk, and a synthetic desk dataset.
//!
//! Binary layout, little endian: the 8-byte magic `ZCPDATA1`; `u32` sample
//! count, channels, height, width and class count; `n·c·h·w` `f64` pixels in
//! NCHW order on the `[0, 1]` scale; `n` `u32` labels.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use zcp_core::Tensor;

use crate::error::{invalid, Result};

pub const MAGIC: &[u8; 8] = b"ZCPDATA1";

#[derive(Clone, Debug, PartialEq)]
pub struct ImageSet {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl ImageSet {
    pub fn new(inputs: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let (n, ..) = inputs.dims4().map_err(|e| invalid(e.to_string()))?;
        if labels.len() != n {
            return Err(invalid(format!("{n} images but {} labels", labels.len())));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(invalid(format!("label {l} out of range for {num_classes} classes")));
        }
        if inputs.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("pixels must lie in [0, 1]"));
        }
        Ok(ImageSet {
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> [usize; 3] {
        let s = self.inputs.shape();
        [s[1], s[2], s[3]]
    }

    /// Samples `start..end` as a new set.
    pub fn slice(&self, start: usize, end: usize) -> ImageSet {
        let per: usize = self.shape().iter().product();
        let [c, h, w] = self.shape();
        let data = self.inputs.data()[start * per..end * per].to_vec();
        ImageSet {
            inputs: Tensor::from_vec(&[end - start, c, h, w], data).expect("in range"),
            labels: self.labels[start..end].to_vec(),
            num_classes: self.num_classes,
        }
    }

    /// Samples at `idx` in that order.
    pub fn select(&self, idx: &[usize]) -> ImageSet {
        let per: usize = self.shape().iter().product();
        let [c, h, w] = self.shape();
        let mut data = Vec::with_capacity(idx.len() * per);
        for &i in idx {
            data.extend_from_slice(&self.inputs.data()[i * per..(i + 1) * per]);
        }
        ImageSet {
            inputs: Tensor::from_vec(&[idx.len(), c, h, w], data).expect("in range"),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let s = self.inputs.shape();
        let mut out = Vec::with_capacity(28 + 8 * self.inputs.numel() + 4 * self.len());
        out.extend_from_slice(MAGIC);
        for d in [s[0], s[1], s[2], s[3], self.num_classes] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in self.inputs.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &l in &self.labels {
            out.extend_from_slice(&(l as u32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 28 || &bytes[..8] != MAGIC {
            return Err(invalid("not a ZCPDATA1 file"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
        let dims: Vec<usize> = (0..5).map(|i| u32_at(8 + 4 * i)).collect();
        let (n, c, h, w, k) = (dims[0], dims[1], dims[2], dims[3], dims[4]);
        if n == 0 || c == 0 || h == 0 || w == 0 || k == 0 {
            return Err(invalid("zero dimension in header"));
        }
        let pixels = n * c * h * w;
        let want = 28 + 8 * pixels + 4 * n;
        if bytes.len() != want {
            return Err(invalid(format!("expected {want} bytes, found {}", bytes.len())));
        }
        let data: Vec<f64> = bytes[28..28 + 8 * pixels]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let labels = (0..n).map(|i| u32_at(28 + 8 * pixels + 4 * i)).collect();
        let inputs = Tensor::from_vec(&[n, c, h, w], data).map_err(|e| invalid(e.to_string()))?;
        ImageSet::new(inputs, labels, k)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        ImageSet::from_bytes(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

/// Oriented sinusoid textures, one orientation and tint per class, plus noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub classes: usize,
    pub channels: usize,
    pub resolution: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            samples: 96,
            classes: 4,
            channels: 3,
            resolution: 16,
            noise: 0.15,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn generate(&self) -> Result<ImageSet> {
        if self.samples == 0 || self.classes == 0 || self.channels == 0 || self.resolution == 0 {
            return Err(invalid("synthetic dataset dimensions must be positive"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(invalid("noise must be a non-negative number"));
        }
        let (n, c, r) = (self.samples, self.channels, self.resolution);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise).map_err(|e| invalid(e.to_string()))?;
        let mut data = Vec::with_capacity(n * c * r * r);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let k = i % self.classes;
            labels.push(k);
            let angle = PI * k as f64 / self.classes as f64;
            let (fx, fy) = (angle.cos() * 2.0, angle.sin() * 2.0);
            for ch in 0..c {
                let tint = 0.15 * ((k + ch) % 3) as f64 - 0.15;
                for y in 0..r {
                    for x in 0..r {
                        let phase = 2.0 * PI * (fx * x as f64 + fy * y as f64) / r as f64;
                        let v = 0.5 + 0.3 * phase.sin() + tint + noise.sample(&mut rng);
                        data.push(v.clamp(0.0, 1.0));
                    }
                }
            }
        }
        let inputs = Tensor::from_vec(&[n, c, r, r], data).map_err(|e| invalid(e.to_string()))?;
        ImageSet::new(inputs, labels, self.classes)
    }
}
