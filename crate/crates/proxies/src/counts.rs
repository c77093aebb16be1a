use zcp_core::{ForwardOpts, Model, Tape, Tensor};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StaticCounts {
    /// Multiply-accumulates of one single-sample forward pass.
    pub flops: f64,
    pub params: f64,
    pub l2_norm: f64,
}

pub fn count_static<M: Model>(model: &M) -> Result<StaticCounts> {
    let ps = model.params();
    let mut tape = Tape::<f64>::new();
    let vars = ps.load(&mut tape);
    let [c, h, w] = model.input_shape();
    let x = tape.constant(Tensor::zeros(&[1, c, h, w]));
    model.forward(&mut tape, &vars, x, &ForwardOpts::IDENTITY)?;
    let l2_norm = ps
        .iter()
        .filter(|p| p.kind.is_weight())
        .map(|p| p.tensor.l2_norm())
        .sum();
    Ok(StaticCounts {
        flops: tape.macs() as f64,
        params: ps.numel() as f64,
        l2_norm,
    })
}
