use std::io::Write;

use serde::{Deserialize, Serialize};
use zcp_core::{MacroConfig, Model, Network};

use crate::batch::ScoreBatch;
use crate::error::{ProxyError, Result};
use crate::hessian::{hessian_eig, PowerConfig};
use crate::ids::ProxyId;
use crate::jacob_fro::{jacob_fro, OutputSpace};
use crate::jacobian::{epe_nas_from_jacobian, jacov_from_jacobian, per_sample_jacobian};
use crate::nwot::{activation_codes, nwot_from_codes};
use crate::saliency::{cross_entropy, gradient_scores, grasp_of, loss_pass, synflow};
use crate::zen::{zen, ZenConfig};
use crate::counts::count_static;

/// When the Hessian eigenvalue is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianPolicy {
    /// Only for the `cifar10` dataset.
    #[default]
    Cifar10Only,
    Always,
    Never,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyConfig {
    /// Seed of the untrained network's initialisation.
    pub init_seed: u64,
    pub jacov_k: f64,
    pub epe_k: f64,
    pub nwot_jitter: f64,
    pub zen: ZenConfig,
    pub zen_seed: u64,
    pub jacob_fro_repeats: usize,
    pub jacob_fro_output: OutputSpace,
    pub power: PowerConfig,
    pub hessian: HessianPolicy,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            init_seed: 0,
            jacov_k: 1e-5,
            epe_k: 1e-5,
            nwot_jitter: 1e-6,
            zen: ZenConfig::default(),
            zen_seed: 0,
            jacob_fro_repeats: 8,
            jacob_fro_output: OutputSpace::Softmax,
            power: PowerConfig::default(),
            hessian: HessianPolicy::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Score {
    Value(f64),
    Missing(String),
}

impl Score {
    pub fn value(&self) -> Option<f64> {
        match self {
            Score::Value(v) => Some(*v),
            Score::Missing(_) => None,
        }
    }

    fn from_result(r: Result<f64>) -> Score {
        match r {
            Ok(v) if v.is_finite() => Score::Value(v),
            Ok(_) => Score::Missing("non-finite score".into()),
            Err(e) => Score::Missing(e.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyVector {
    pub arch_index: usize,
    pub dataset_id: String,
    /// One entry per [`ProxyId`], in canonical order.
    pub scores: Vec<Score>,
    /// False when the power iteration hit its budget.
    pub hessian_converged: bool,
}

impl ProxyVector {
    pub fn get(&self, id: ProxyId) -> Option<f64> {
        self.scores[id.index()].value()
    }

    pub fn score(&self, id: ProxyId) -> &Score {
        &self.scores[id.index()]
    }

    /// Values in canonical order, `None` for missing entries.
    pub fn values(&self) -> Vec<Option<f64>> {
        self.scores.iter().map(Score::value).collect()
    }
}

/// Instantiates architecture `arch_index` under `macro_cfg` and scores it.
pub fn proxy_vector(
    arch_index: usize,
    dataset_id: &str,
    macro_cfg: &MacroConfig,
    batch: &ScoreBatch,
    config: &ProxyConfig,
) -> Result<ProxyVector> {
    let net = Network::from_index(arch_index, macro_cfg.clone(), config.init_seed)?;
    Ok(proxy_vector_for(&net, arch_index, dataset_id, batch, config))
}

/// Computes all fifteen proxies for an already built model.
///
/// Any failure of an individual proxy is recorded as missing with its reason.
pub fn proxy_vector_for<M: Model>(
    model: &M,
    arch_index: usize,
    dataset_id: &str,
    batch: &ScoreBatch,
    config: &ProxyConfig,
) -> ProxyVector {
    let mut scores: Vec<Score> = vec![Score::Missing("not computed".into()); ProxyId::ALL.len()];
    let mut set = |id: ProxyId, r: Result<f64>| scores[id.index()] = Score::from_result(r);

    let labels_ok = batch.check_labels(model.num_classes());
    let data = |f: &dyn Fn() -> Result<f64>| -> Result<f64> {
        labels_ok.clone()?;
        f()
    };

    match per_sample_jacobian(model, &batch.inputs) {
        Ok(j) => {
            set(ProxyId::Jacov, jacov_from_jacobian(&j, config.jacov_k));
            set(
                ProxyId::EpeNas,
                data(&|| epe_nas_from_jacobian(&j, &batch.labels, config.epe_k)),
            );
        }
        Err(e) => {
            set(ProxyId::Jacov, Err(e.clone()));
            set(ProxyId::EpeNas, Err(e));
        }
    }
    set(
        ProxyId::Nwot,
        activation_codes(model, &batch.inputs).and_then(|c| nwot_from_codes(&c, config.nwot_jitter)),
    );

    match labels_ok.clone().and_then(|_| loss_pass(model, batch)) {
        Ok(pass) => {
            match gradient_scores(model.params(), &pass.grads) {
                Ok(g) => {
                    set(ProxyId::GradNorm, Ok(g.grad_norm));
                    set(ProxyId::Snip, Ok(g.snip));
                    set(ProxyId::Plain, Ok(g.plain));
                }
                Err(e) => {
                    for id in [ProxyId::GradNorm, ProxyId::Snip, ProxyId::Plain] {
                        set(id, Err(e.clone()));
                    }
                }
            }
            set(ProxyId::Fisher, Ok(pass.fisher));
            let obj = cross_entropy(model, batch);
            set(ProxyId::Grasp, grasp_of(&obj, model.params(), &pass.grads));
        }
        Err(e) => {
            for id in [
                ProxyId::GradNorm,
                ProxyId::Snip,
                ProxyId::Plain,
                ProxyId::Fisher,
                ProxyId::Grasp,
            ] {
                set(id, Err(e.clone()));
            }
        }
    }

    set(ProxyId::Synflow, synflow(model));
    set(ProxyId::Zen, zen(model, &config.zen, config.zen_seed));

    match count_static(model) {
        Ok(c) => {
            set(ProxyId::Flops, Ok(c.flops));
            set(ProxyId::Params, Ok(c.params));
            set(ProxyId::L2Norm, Ok(c.l2_norm));
        }
        Err(e) => {
            for id in [ProxyId::Flops, ProxyId::Params, ProxyId::L2Norm] {
                set(id, Err(e.clone()));
            }
        }
    }

    set(
        ProxyId::JacobFro,
        jacob_fro(model, batch, config.jacob_fro_repeats, config.jacob_fro_output),
    );

    let want_hessian = match config.hessian {
        HessianPolicy::Always => true,
        HessianPolicy::Never => false,
        HessianPolicy::Cifar10Only => dataset_id == "cifar10",
    };
    let mut hessian_converged = false;
    if want_hessian {
        let r = labels_ok.clone().and_then(|_| hessian_eig(model, batch, &config.power));
        hessian_converged = r.as_ref().is_ok_and(|e| e.converged);
        set(ProxyId::HessianEig, r.map(|e| e.value));
    } else {
        set(
            ProxyId::HessianEig,
            Err(ProxyError::Batch(format!("hessian not evaluated for dataset {dataset_id}"))),
        );
    }

    ProxyVector {
        arch_index,
        dataset_id: dataset_id.to_string(),
        scores,
        hessian_converged,
    }
}

/// `arch_index,dataset,<proxy names...>`.
pub fn csv_header() -> String {
    let mut h = String::from("arch_index,dataset");
    for p in ProxyId::ALL {
        h.push(',');
        h.push_str(p.name());
    }
    h
}

/// Writes vectors as CSV; missing scores are empty fields.
pub fn write_csv<W: Write>(mut out: W, vectors: &[ProxyVector]) -> std::io::Result<()> {
    writeln!(out, "{}", csv_header())?;
    for v in vectors {
        write!(out, "{},{}", v.arch_index, v.dataset_id)?;
        for s in &v.scores {
            match s {
                Score::Value(x) => write!(out, ",{x:e}")?,
                Score::Missing(_) => write!(out, ",")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}
