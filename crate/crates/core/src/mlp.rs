use crate::error::{dim_err, Result};
use crate::model::{ForwardOpts, ForwardTrace, Model};
use crate::params::{ParamKind, ParamSet};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Fully connected network on flattened inputs, without batchnorm.
///
/// Small enough to reason about by hand, which makes it the workhorse of the
/// analytic tests.
#[derive(Clone, Debug)]
pub struct Mlp {
    input_shape: [usize; 3],
    widths: Vec<usize>,
    bias: bool,
    relu: bool,
    params: ParamSet,
}

impl Mlp {
    /// `widths[0]` must equal the flattened input size.
    pub fn new(input_shape: [usize; 3], widths: &[usize], bias: bool, relu: bool, seed: u64) -> Result<Self> {
        let d: usize = input_shape.iter().product();
        if widths.len() < 2 || widths[0] != d {
            return dim_err(format!("mlp widths {widths:?} must start at input size {d}"));
        }
        let mut params = ParamSet::new(seed);
        for (i, w) in widths.windows(2).enumerate() {
            params.push_weight(&format!("fc{i}.weight"), ParamKind::LinearWeight, &[w[1], w[0]]);
            if bias {
                params.push_bias(&format!("fc{i}.bias"), w[1]);
            }
        }
        Ok(Mlp {
            input_shape,
            widths: widths.to_vec(),
            bias,
            relu,
            params,
        })
    }

    /// Builds from explicit `(weight, bias)` layers; weights are `(out, in)`.
    pub fn from_layers(input_shape: [usize; 3], layers: Vec<(Tensor, Option<Tensor>)>, relu: bool) -> Result<Self> {
        let d: usize = input_shape.iter().product();
        let bias = layers.first().is_some_and(|l| l.1.is_some());
        let mut widths = vec![d];
        let mut params = ParamSet::new(0);
        for (i, (w, b)) in layers.into_iter().enumerate() {
            let (o, inp) = w.dims2()?;
            if inp != *widths.last().unwrap() || b.is_some() != bias {
                return dim_err(format!("layer {i} does not chain"));
            }
            widths.push(o);
            params.push(format!("fc{i}.weight"), ParamKind::LinearWeight, w);
            if let Some(b) = b {
                params.push(format!("fc{i}.bias"), ParamKind::Bias, b);
            }
        }
        Ok(Mlp {
            input_shape,
            widths,
            bias,
            relu,
            params,
        })
    }

    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

impl Model for Mlp {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    fn num_classes(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        params: &[Var],
        input: Var,
        _opts: &ForwardOpts,
    ) -> Result<ForwardTrace> {
        let mut h = tape.flatten(input)?;
        let mut activations = Vec::new();
        let per_layer = if self.bias { 2 } else { 1 };
        let depth = self.depth();
        for l in 0..depth {
            let w = params[l * per_layer];
            let b = self.bias.then(|| params[l * per_layer + 1]);
            h = tape.linear(h, w, b)?;
            if self.relu && l + 1 < depth {
                h = tape.relu(h)?;
                activations.push(h);
            }
        }
        Ok(ForwardTrace {
            logits: h,
            features: h,
            activations,
            bn_stats: Vec::new(),
        })
    }
}

impl crate::model::Classifier for Mlp {
    fn num_classes(&self) -> usize {
        Model::num_classes(self)
    }

    fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    fn logits(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        let params = self.params.load(tape);
        Ok(self.forward(tape, &params, input, &ForwardOpts::IDENTITY)?.logits)
    }
}
