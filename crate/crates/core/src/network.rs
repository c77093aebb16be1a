//! Desk-scale NAS-Bench-201 networks.
//!
//! Layout: 3×3 stem conv + BN, then three stages of cells separated by two
//! residual reduction blocks (stride 2, channels doubled), then a
//! BN-ReLU-global-pool-linear head. Every node of a cell is the plain sum of
//! its incoming edge outputs. Edges that cannot carry information from the
//! cell input to the cell output are not instantiated.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::model::{batchnorm_layer, ForwardOpts, ForwardTrace, Model};
use crate::params::{ParamKind, ParamSet};
use crate::scalar::Scalar;
use crate::space::{ArchEncoding, OpId, EDGES};
use crate::tape::{ChannelStats, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MacroConfig {
    pub stem_channels: usize,
    pub cells_per_stage: usize,
    pub num_stages: usize,
    pub input_channels: usize,
    pub input_resolution: usize,
    pub num_classes: usize,
}

impl Default for MacroConfig {
    fn default() -> Self {
        MacroConfig {
            stem_channels: 8,
            cells_per_stage: 1,
            num_stages: 3,
            input_channels: 3,
            input_resolution: 16,
            num_classes: 10,
        }
    }
}

impl MacroConfig {
    pub fn with_classes(num_classes: usize) -> Self {
        MacroConfig {
            num_classes,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("stem_channels", self.stem_channels),
            ("cells_per_stage", self.cells_per_stage),
            ("input_channels", self.input_channels),
            ("input_resolution", self.input_resolution),
            ("num_classes", self.num_classes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(TensorError::Config(format!("{name} must be positive")));
        }
        if self.num_stages != 3 {
            return Err(TensorError::Config(format!(
                "num_stages is fixed at 3, got {}",
                self.num_stages
            )));
        }
        if self.input_resolution < 4 || !self.input_resolution.is_multiple_of(4) {
            return Err(TensorError::Config(format!(
                "input resolution {} cannot go through two stride-2 reductions \
                 (needs a positive multiple of 4)",
                self.input_resolution
            )));
        }
        Ok(())
    }

    pub fn stage_channels(&self, stage: usize) -> usize {
        self.stem_channels << stage
    }
}

#[derive(Clone, Debug)]
enum EdgeOp {
    Skip,
    Pool,
    Conv {
        weight: usize,
        bn: (usize, usize),
        pad: usize,
    },
}

#[derive(Clone, Debug)]
struct CellLayout {
    /// Live edges as `(from, to, op)`, in encoding order.
    edges: Vec<(usize, usize, EdgeOp)>,
}

#[derive(Clone, Debug)]
struct ReductionLayout {
    a_conv: usize,
    a_bn: (usize, usize),
    b_conv: usize,
    b_bn: (usize, usize),
    shortcut: usize,
}

#[derive(Clone, Debug)]
struct Layout {
    stem_conv: usize,
    stem_bn: (usize, usize),
    stages: Vec<Vec<CellLayout>>,
    reductions: Vec<ReductionLayout>,
    head_bn: (usize, usize),
    fc_weight: usize,
    fc_bias: usize,
}

/// An instantiated architecture: parameters plus the forward function.
#[derive(Clone, Debug)]
pub struct Network {
    arch: ArchEncoding,
    config: MacroConfig,
    params: ParamSet,
    layout: Layout,
}

fn push_conv(params: &mut ParamSet, name: &str, cout: usize, cin: usize, k: usize) -> usize {
    params.push_weight(&format!("{name}.weight"), ParamKind::ConvWeight, &[cout, cin, k, k])
}

impl Network {
    pub fn new(arch: ArchEncoding, config: MacroConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new(seed);
        let c0 = config.stem_channels;
        let stem_conv = push_conv(&mut params, "stem.conv", c0, config.input_channels, 3);
        let stem_bn = params.push_bn("stem.bn", c0);
        let live = arch.live_edges();
        let mut stages = Vec::new();
        let mut reductions = Vec::new();
        for s in 0..config.num_stages {
            let c = config.stage_channels(s);
            if s > 0 {
                let cin = config.stage_channels(s - 1);
                let p = format!("r{}", s - 1);
                let a_conv = push_conv(&mut params, &format!("{p}.a.conv"), c, cin, 3);
                let a_bn = params.push_bn(&format!("{p}.a.bn"), c);
                let b_conv = push_conv(&mut params, &format!("{p}.b.conv"), c, c, 3);
                let b_bn = params.push_bn(&format!("{p}.b.bn"), c);
                let shortcut = push_conv(&mut params, &format!("{p}.shortcut"), c, cin, 1);
                reductions.push(ReductionLayout {
                    a_conv,
                    a_bn,
                    b_conv,
                    b_bn,
                    shortcut,
                });
            }
            let mut cells = Vec::new();
            for ci in 0..config.cells_per_stage {
                let mut edges = Vec::new();
                for (e, &(i, j)) in EDGES.iter().enumerate() {
                    if !live[e] {
                        continue;
                    }
                    let op = match arch.op(e) {
                        OpId::SkipConnect => EdgeOp::Skip,
                        OpId::AvgPool3x3 => EdgeOp::Pool,
                        conv @ (OpId::Conv1x1 | OpId::Conv3x3) => {
                            let k = conv.kernel().unwrap();
                            let name = format!("s{s}.c{ci}.e{e}");
                            let weight = push_conv(&mut params, &format!("{name}.conv"), c, c, k);
                            let bn = params.push_bn(&format!("{name}.bn"), c);
                            EdgeOp::Conv {
                                weight,
                                bn,
                                pad: k / 2,
                            }
                        }
                        OpId::Zero => unreachable!("zero edges are never live"),
                    };
                    edges.push((i, j, op));
                }
                cells.push(CellLayout { edges });
            }
            stages.push(cells);
        }
        let cl = config.stage_channels(config.num_stages - 1);
        let head_bn = params.push_bn("head.bn", cl);
        let fc_weight =
            params.push_weight("head.fc.weight", ParamKind::LinearWeight, &[config.num_classes, cl]);
        let fc_bias = params.push_bias("head.fc.bias", config.num_classes);
        Ok(Network {
            arch,
            config,
            params,
            layout: Layout {
                stem_conv,
                stem_bn,
                stages,
                reductions,
                head_bn,
                fc_weight,
                fc_bias,
            },
        })
    }

    pub fn from_index(index: usize, config: MacroConfig, seed: u64) -> Result<Self> {
        Network::new(ArchEncoding::decode(index)?, config, seed)
    }

    pub fn arch(&self) -> &ArchEncoding {
        &self.arch
    }

    pub fn config(&self) -> &MacroConfig {
        &self.config
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn with_params(&self, params: ParamSet) -> Result<Self> {
        if params.numel() != self.params.numel() || params.len() != self.params.len() {
            return Err(TensorError::Dimension(
                "replacement parameters do not match the network layout".into(),
            ));
        }
        Ok(Network {
            params,
            ..self.clone()
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn cell<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        params: &[Var],
        cell: &CellLayout,
        x: Var,
        opts: &ForwardOpts,
        trace_acts: &mut Vec<Var>,
        stats: &mut Vec<ChannelStats>,
    ) -> Result<Var> {
        let mut nodes: [Option<Var>; 4] = [Some(x), None, None, None];
        for (i, j, op) in &cell.edges {
            let src = nodes[*i].expect("live edge sources are reachable");
            let out = match op {
                EdgeOp::Skip => src,
                EdgeOp::Pool => tape.avg_pool(src, 3, 1, 1)?,
                EdgeOp::Conv { weight, bn, pad } => {
                    let r = tape.relu(src)?;
                    trace_acts.push(r);
                    let c = tape.conv2d(r, params[*weight], None, 1, *pad)?;
                    batchnorm_layer(tape, c, Some(params[bn.0]), Some(params[bn.1]), opts, stats)?
                }
            };
            nodes[*j] = Some(match nodes[*j] {
                Some(acc) => tape.add(acc, out)?,
                None => out,
            });
        }
        match nodes[3] {
            Some(v) => Ok(v),
            None => {
                let zeros = Tensor::zeros(tape.shape(x));
                Ok(tape.constant(zeros))
            }
        }
    }

    /// Output of the first cell of stage 0 on `input`, which must have
    /// `stem_channels` channels. Batchnorm runs in train-stats mode.
    pub fn cell_output(&self, input: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::<f64>::new();
        let params = self.params.load(&mut tape);
        let x = tape.constant(input.clone());
        let mut acts = Vec::new();
        let mut stats = Vec::new();
        let y = self.cell(
            &mut tape,
            &params,
            &self.layout.stages[0][0],
            x,
            &ForwardOpts::TRAIN,
            &mut acts,
            &mut stats,
        )?;
        Ok(tape.value(y).clone())
    }
}

impl Model for Network {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn input_shape(&self) -> [usize; 3] {
        let r = self.config.input_resolution;
        [self.config.input_channels, r, r]
    }

    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        params: &[Var],
        input: Var,
        opts: &ForwardOpts,
    ) -> Result<ForwardTrace> {
        if params.len() != self.params.len() {
            return Err(TensorError::Dimension(format!(
                "network expects {} parameter tensors, got {}",
                self.params.len(),
                params.len()
            )));
        }
        let (_, c, h, w) = tape.value(input).dims4()?;
        let [ec, eh, ew] = self.input_shape();
        if (c, h, w) != (ec, eh, ew) {
            return Err(TensorError::Dimension(format!(
                "network expects inputs of shape [{ec}, {eh}, {ew}], got [{c}, {h}, {w}]"
            )));
        }
        let l = &self.layout;
        let mut acts = Vec::new();
        let mut stats = Vec::new();
        let x = tape.conv2d(input, params[l.stem_conv], None, 1, 1)?;
        let mut x = batchnorm_layer(
            tape,
            x,
            Some(params[l.stem_bn.0]),
            Some(params[l.stem_bn.1]),
            opts,
            &mut stats,
        )?;
        for (s, cells) in l.stages.iter().enumerate() {
            if s > 0 {
                let r = &l.reductions[s - 1];
                let a = tape.relu(x)?;
                acts.push(a);
                let a = tape.conv2d(a, params[r.a_conv], None, 2, 1)?;
                let a = batchnorm_layer(tape, a, Some(params[r.a_bn.0]), Some(params[r.a_bn.1]), opts, &mut stats)?;
                let b = tape.relu(a)?;
                acts.push(b);
                let b = tape.conv2d(b, params[r.b_conv], None, 1, 1)?;
                let b = batchnorm_layer(tape, b, Some(params[r.b_bn.0]), Some(params[r.b_bn.1]), opts, &mut stats)?;
                let sc = tape.avg_pool(x, 2, 2, 0)?;
                let sc = tape.conv2d(sc, params[r.shortcut], None, 1, 0)?;
                x = tape.add(b, sc)?;
            }
            for cell in cells {
                x = self.cell(tape, params, cell, x, opts, &mut acts, &mut stats)?;
            }
        }
        let features = x;
        let y = batchnorm_layer(
            tape,
            x,
            Some(params[l.head_bn.0]),
            Some(params[l.head_bn.1]),
            opts,
            &mut stats,
        )?;
        let y = tape.relu(y)?;
        acts.push(y);
        let y = tape.global_avg_pool(y)?;
        let logits = tape.linear(y, params[l.fc_weight], Some(params[l.fc_bias]))?;
        Ok(ForwardTrace {
            logits,
            features,
            activations: acts,
            bn_stats: stats,
        })
    }
}
