//! The interface every differentiable network implements.

use crate::error::Result;
use crate::params::ParamSet;
use crate::scalar::Scalar;
use crate::tape::{ChannelStats, Tape, Var, BN_EPS};
use crate::tensor::Tensor;

/// How batchnorm layers behave during a forward pass.
#[derive(Clone, Copy, Debug)]
pub enum BnMode<'a> {
    /// Normalise with the statistics of the current batch.
    TrainStats,
    /// Pass inputs through unchanged. Input statistics are still recorded.
    Identity,
    /// Normalise with fixed statistics, one entry per batchnorm layer in
    /// forward order.
    Frozen(&'a [ChannelStats]),
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardOpts<'a> {
    pub bn: BnMode<'a>,
}

impl ForwardOpts<'static> {
    pub const TRAIN: ForwardOpts<'static> = ForwardOpts {
        bn: BnMode::TrainStats,
    };
    pub const IDENTITY: ForwardOpts<'static> = ForwardOpts {
        bn: BnMode::Identity,
    };
}

/// Nodes of interest produced by one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub logits: Var,
    /// Feature map feeding the classifier head.
    pub features: Var,
    /// Output of every ReLU, in forward order.
    pub activations: Vec<Var>,
    /// Statistics of each batchnorm layer's input, in forward order.
    pub bn_stats: Vec<ChannelStats>,
}

pub trait Model: Sync {
    fn params(&self) -> &ParamSet;

    /// `[channels, height, width]` of one input sample.
    fn input_shape(&self) -> [usize; 3];

    fn num_classes(&self) -> usize;

    /// Runs the network on `input` (NCHW) with parameter leaves `params`,
    /// which must follow the layout of [`Model::params`].
    fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        params: &[Var],
        input: Var,
        opts: &ForwardOpts,
    ) -> Result<ForwardTrace>;
}

/// Applies one batchnorm layer according to `opts`, recording its statistics.
pub fn batchnorm_layer<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    scale: Option<Var>,
    shift: Option<Var>,
    opts: &ForwardOpts,
    stats: &mut Vec<ChannelStats>,
) -> Result<Var> {
    match opts.bn {
        BnMode::TrainStats => {
            let (y, s) = tape.batch_norm(x, scale, shift, BN_EPS)?;
            stats.push(s);
            Ok(y)
        }
        BnMode::Identity => {
            stats.push(channel_stats(tape.value(x)));
            Ok(x)
        }
        BnMode::Frozen(all) => {
            let idx = stats.len();
            let s = all.get(idx).ok_or_else(|| {
                crate::TensorError::Config(format!(
                    "frozen statistics cover {} batchnorm layers, needed layer {idx}",
                    all.len()
                ))
            })?;
            let y = tape.batch_norm_frozen(x, scale, shift, s, BN_EPS)?;
            stats.push(s.clone());
            Ok(y)
        }
    }
}

/// Per-channel mean and biased variance of an NCHW or NC tensor.
pub fn channel_stats<S: Scalar>(t: &Tensor<S>) -> ChannelStats {
    let (n, c, hw) = match t.shape() {
        [n, c, h, w] => (*n, *c, h * w),
        [n, c] => (*n, *c, 1),
        s => (1, s.iter().product(), 1),
    };
    let d = t.data();
    let m = (n * hw) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ni in 0..n {
        for ci in 0..c {
            let b = (ni * c + ci) * hw;
            mean[ci] += d[b..b + hw].iter().map(|v| v.re()).sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    for ni in 0..n {
        for ci in 0..c {
            let b = (ni * c + ci) * hw;
            var[ci] += d[b..b + hw]
                .iter()
                .map(|v| (v.re() - mean[ci]).powi(2))
                .sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= m);
    ChannelStats { mean, var }
}

/// Something that maps an input batch to logits with fixed parameters.
pub trait Classifier: Sync {
    fn num_classes(&self) -> usize;
    fn input_shape(&self) -> [usize; 3];
    fn logits(&self, tape: &mut Tape, input: Var) -> Result<Var>;
}

/// A [`Model`] whose batchnorm layers use statistics captured once from a
/// reference batch, so every sample is classified independently.
pub struct Frozen<'m, M> {
    model: &'m M,
    stats: Vec<ChannelStats>,
}

impl<'m, M: Model> Frozen<'m, M> {
    pub fn new(model: &'m M, reference: &Tensor) -> Result<Self> {
        let mut tape = Tape::<f64>::new();
        let params = model.params().load(&mut tape);
        let x = tape.constant(reference.clone());
        let trace = model.forward(&mut tape, &params, x, &ForwardOpts::TRAIN)?;
        Ok(Frozen {
            model,
            stats: trace.bn_stats,
        })
    }

    pub fn with_stats(model: &'m M, stats: Vec<ChannelStats>) -> Self {
        Frozen { model, stats }
    }

    pub fn stats(&self) -> &[ChannelStats] {
        &self.stats
    }

    pub fn model(&self) -> &M {
        self.model
    }
}

impl<M: Model> Classifier for Frozen<'_, M> {
    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    fn input_shape(&self) -> [usize; 3] {
        self.model.input_shape()
    }

    fn logits(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        let params = self.model.params().load(tape);
        let opts = ForwardOpts {
            bn: BnMode::Frozen(&self.stats),
        };
        Ok(self.model.forward(tape, &params, input, &opts)?.logits)
    }
}

/// Mean cross-entropy of a model on a fixed labelled batch, as a function of
/// the parameters.
pub struct CrossEntropyObjective<'a, M> {
    pub model: &'a M,
    pub inputs: &'a Tensor,
    pub labels: &'a [usize],
    pub opts: ForwardOpts<'a>,
}

impl<M: Model> crate::objective::Objective for CrossEntropyObjective<'_, M> {
    fn eval<S: Scalar>(&self, tape: &mut Tape<S>, params: &[Var]) -> Result<Var> {
        let x = tape.constant(self.inputs.map(S::from_f64));
        let trace = self.model.forward(tape, params, x, &self.opts)?;
        tape.softmax_cross_entropy(trace.logits, self.labels)
    }
}
