use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::scalar::{Dual, Scalar};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamKind {
    ConvWeight,
    LinearWeight,
    Bias,
    BnScale,
    BnShift,
}

impl ParamKind {
    /// Conv and linear weight tensors, the ones pruning saliencies score.
    pub fn is_weight(self) -> bool {
        matches!(self, ParamKind::ConvWeight | ParamKind::LinearWeight)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub tensor: Tensor,
}

/// Ordered, named parameter tensors of one network.
///
/// The order is the layer order of the forward pass and fixes the layout of
/// every flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    seed: u64,
    params: Vec<Param>,
}

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one named tensor, independent of which other tensors exist.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    mix64(seed ^ mix64(h))
}

/// Kaiming-normal sample: `N(0, 2 / fan_in)`.
pub fn kaiming_normal(shape: &[usize], fan_in: usize, seed: u64) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    normal_tensor(shape, std, seed)
}

pub fn normal_tensor(shape: &[usize], std: f64, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, std).expect("finite std");
    let n = shape.iter().product();
    let data = (0..n).map(|_| dist.sample(&mut rng)).collect();
    Tensor::from_vec(shape, data).expect("shape matches")
}

impl ParamSet {
    pub fn new(seed: u64) -> Self {
        ParamSet {
            seed,
            params: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn push(&mut self, name: impl Into<String>, kind: ParamKind, tensor: Tensor) -> usize {
        self.params.push(Param {
            name: name.into(),
            kind,
            tensor,
        });
        self.params.len() - 1
    }

    /// Conv/linear weight with Kaiming init seeded from `(seed, name)`.
    pub fn push_weight(&mut self, name: &str, kind: ParamKind, shape: &[usize]) -> usize {
        let fan_in = shape[1..].iter().product();
        let t = kaiming_normal(shape, fan_in, derive_seed(self.seed, name));
        self.push(name, kind, t)
    }

    pub fn push_bias(&mut self, name: &str, len: usize) -> usize {
        self.push(name, ParamKind::Bias, Tensor::zeros(&[len]))
    }

    /// Batchnorm scale (ones) and shift (zeros); returns both indices.
    pub fn push_bn(&mut self, prefix: &str, channels: usize) -> (usize, usize) {
        let s = self.push(
            format!("{prefix}.scale"),
            ParamKind::BnScale,
            Tensor::full(&[channels], 1.0),
        );
        let b = self.push(
            format!("{prefix}.shift"),
            ParamKind::BnShift,
            Tensor::zeros(&[channels]),
        );
        (s, b)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Param> {
        self.params.iter_mut()
    }

    pub fn get(&self, i: usize) -> &Param {
        &self.params[i]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.tensor.data().iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.numel() {
            return dim_err(format!(
                "flat vector has {} entries, parameter set has {}",
                flat.len(),
                self.numel()
            ));
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.tensor.numel();
            p.tensor.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Splits a flat vector into per-tensor slices following this layout.
    pub fn split<'a, T>(&self, flat: &'a [T]) -> Vec<&'a [T]> {
        let mut off = 0;
        self.params
            .iter()
            .map(|p| {
                let n = p.tensor.numel();
                let s = &flat[off..off + n];
                off += n;
                s
            })
            .collect()
    }

    /// Mask over the flat layout selecting conv/linear weights.
    pub fn weight_mask(&self) -> Vec<bool> {
        self.params
            .iter()
            .flat_map(|p| std::iter::repeat_n(p.kind.is_weight(), p.tensor.numel()))
            .collect()
    }

    /// Little-endian bytes of every value, in order.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.params
            .iter()
            .flat_map(|p| p.tensor.data().iter().flat_map(|v| v.to_le_bytes()))
            .collect()
    }

    pub fn map(&self, f: impl Fn(&Param) -> Tensor) -> ParamSet {
        ParamSet {
            seed: self.seed,
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    kind: p.kind,
                    tensor: f(p),
                })
                .collect(),
        }
    }

    /// Loads every tensor onto `tape` as a gradient-tracking leaf.
    pub fn load<S: Scalar>(&self, tape: &mut Tape<S>) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| tape.param(p.tensor.map(S::from_f64)))
            .collect()
    }

    /// Loads parameters as dual numbers whose tangent is `direction`.
    pub fn load_dual(&self, tape: &mut Tape<Dual>, direction: &[f64]) -> Result<Vec<Var>> {
        if direction.len() != self.numel() {
            return dim_err(format!(
                "direction has {} entries, parameter set has {}",
                direction.len(),
                self.numel()
            ));
        }
        let parts = self.split(direction);
        Ok(self
            .params
            .iter()
            .zip(parts)
            .map(|(p, v)| {
                let data = p
                    .tensor
                    .data()
                    .iter()
                    .zip(v)
                    .map(|(&x, &d)| Dual::new(x, d))
                    .collect();
                tape.param(Tensor::new(p.tensor.shape().to_vec(), data).expect("same shape"))
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_name_keyed() {
        let mut a = ParamSet::new(7);
        a.push_weight("x.weight", ParamKind::ConvWeight, &[4, 2, 3, 3]);
        let mut b = ParamSet::new(7);
        b.push_weight("other.weight", ParamKind::ConvWeight, &[4, 2, 3, 3]);
        b.push_weight("x.weight", ParamKind::ConvWeight, &[4, 2, 3, 3]);
        assert_eq!(a.get(0).tensor, b.get(1).tensor);
        assert_ne!(b.get(0).tensor, b.get(1).tensor);
    }

    #[test]
    fn kaiming_scale() {
        let t = kaiming_normal(&[64, 32, 3, 3], 32 * 9, 1);
        let var = t.data().iter().map(|v| v * v).sum::<f64>() / t.numel() as f64;
        let want = 2.0 / (32.0 * 9.0);
        assert!((var / want - 1.0).abs() < 0.05, "{var} vs {want}");
    }

    #[test]
    fn flat_round_trip() {
        let mut p = ParamSet::new(0);
        p.push_weight("w", ParamKind::LinearWeight, &[3, 2]);
        p.push_bias("b", 3);
        let mut f = p.flat();
        f[0] = 42.0;
        p.set_flat(&f).unwrap();
        assert_eq!(p.get(0).tensor.data()[0], 42.0);
        assert!(p.set_flat(&f[1..]).is_err());
        assert_eq!(p.weight_mask().iter().filter(|&&m| m).count(), 6);
    }
}
