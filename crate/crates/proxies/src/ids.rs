use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The fifteen proxies, in the column order used by every feature matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyId {
    Jacov,
    Nwot,
    EpeNas,
    GradNorm,
    Snip,
    Grasp,
    Synflow,
    Fisher,
    Zen,
    Plain,
    L2Norm,
    Flops,
    Params,
    JacobFro,
    HessianEig,
}

impl ProxyId {
    pub const ALL: [ProxyId; 15] = [
        ProxyId::Jacov,
        ProxyId::Nwot,
        ProxyId::EpeNas,
        ProxyId::GradNorm,
        ProxyId::Snip,
        ProxyId::Grasp,
        ProxyId::Synflow,
        ProxyId::Fisher,
        ProxyId::Zen,
        ProxyId::Plain,
        ProxyId::L2Norm,
        ProxyId::Flops,
        ProxyId::Params,
        ProxyId::JacobFro,
        ProxyId::HessianEig,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ProxyId::Jacov => "jacov",
            ProxyId::Nwot => "nwot",
            ProxyId::EpeNas => "epe_nas",
            ProxyId::GradNorm => "grad_norm",
            ProxyId::Snip => "snip",
            ProxyId::Grasp => "grasp",
            ProxyId::Synflow => "synflow",
            ProxyId::Fisher => "fisher",
            ProxyId::Zen => "zen",
            ProxyId::Plain => "plain",
            ProxyId::L2Norm => "l2_norm",
            ProxyId::Flops => "flops",
            ProxyId::Params => "params",
            ProxyId::JacobFro => "jacob_fro",
            ProxyId::HessianEig => "hessian_eig",
        }
    }

    /// True for proxies that never look at the data batch.
    pub fn data_independent(self) -> bool {
        matches!(
            self,
            ProxyId::Synflow | ProxyId::Zen | ProxyId::Flops | ProxyId::Params | ProxyId::L2Norm
        )
    }
}

impl fmt::Display for ProxyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProxyId {
    type Err = String;

    /// Accepts the canonical snake_case name and the hyphenated spelling
    /// (`epe-nas`, `grad-norm`, ...).
    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        ProxyId::ALL
            .into_iter()
            .find(|p| p.name() == norm)
            .ok_or_else(|| format!("unknown proxy {s:?}"))
    }
}
