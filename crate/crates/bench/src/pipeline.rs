//! Desk pipeline: instantiate, score, optionally train, attack.
//!
//! Work is split per architecture over a bounded pool; results are gathered
//! in input order, so the worker count never changes the output bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use zcp_attacks::{clean_accuracy, robust_accuracy, AttackConfig, AttackKind};
use zcp_core::params::mix64;
use zcp_core::space::NUM_ARCHS;
use zcp_core::{Frozen, MacroConfig, Network};
use zcp_proxies::{
    csv_header, proxy_vector_for, HessianPolicy, ProxyConfig, ProxyId, ProxyVector, ScoreBatch,
};

use crate::columns::{attack_column_name, AccColumn, Eps255};
use crate::dataset::{ImageSet, SyntheticSpec};
use crate::error::{invalid, BenchError, Result};
use crate::report::{config_hash, header, sha256_hex};
use crate::train::{train_sgd, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    /// A file in the `ZCPDATA1` layout.
    File { path: PathBuf },
}

/// Attack iteration budgets, reduced from the full-scale defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackBudget {
    pub pgd_iters: usize,
    pub apgd_iters: usize,
    pub square_queries: usize,
}

impl Default for AttackBudget {
    fn default() -> Self {
        AttackBudget {
            pgd_iters: 10,
            apgd_iters: 20,
            square_queries: 100,
        }
    }
}

impl AttackBudget {
    fn iters(&self, kind: AttackKind) -> usize {
        match kind {
            AttackKind::Fgsm => 1,
            AttackKind::Pgd => self.pgd_iters,
            AttackKind::Apgd => self.apgd_iters,
            AttackKind::Square => self.square_queries,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub archs: Vec<usize>,
    pub dataset_id: String,
    #[serde(rename = "macro")]
    pub macro_cfg: MacroConfig,
    pub data: DataSource,
    /// Leading samples used for training and BN reference statistics.
    pub train_samples: usize,
    /// Leading training samples forming the proxy batch.
    pub score_samples: usize,
    /// Samples after the training block, used for accuracies.
    pub test_samples: usize,
    /// Perturbation scale of the jacob_fro proxy.
    pub score_epsilon: f64,
    pub proxies: ProxyConfig,
    /// `None` attacks untrained networks.
    pub train: Option<TrainConfig>,
    /// Empty for a proxies-only run.
    pub attacks: Vec<AttackKind>,
    /// Overrides every attack's own grid when set.
    pub epsilons: Option<Vec<Eps255>>,
    pub budget: AttackBudget,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            archs: Vec::new(),
            dataset_id: "synthetic16".into(),
            macro_cfg: MacroConfig::with_classes(4),
            data: DataSource::Synthetic(SyntheticSpec::default()),
            train_samples: 64,
            score_samples: 16,
            test_samples: 32,
            score_epsilon: 2.0 / 255.0,
            proxies: ProxyConfig {
                hessian: HessianPolicy::Always,
                ..ProxyConfig::default()
            },
            train: Some(TrainConfig::default()),
            attacks: AttackKind::ALL.to_vec(),
            epsilons: None,
            budget: AttackBudget::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.archs.is_empty() {
            return Err(invalid("no architectures listed"));
        }
        if let Some(a) = self.archs.iter().find(|&&a| a >= NUM_ARCHS) {
            return Err(invalid(format!("arch index {a} not in [0, {}]", NUM_ARCHS - 1)));
        }
        self.macro_cfg.validate().map_err(|e| invalid(e.to_string()))?;
        if self.score_samples < 2 || self.score_samples > self.train_samples {
            return Err(invalid("score_samples must be in [2, train_samples]"));
        }
        if self.test_samples == 0 && !self.attacks.is_empty() {
            return Err(invalid("attacks need test_samples > 0"));
        }
        if !(0.0..=1.0).contains(&self.score_epsilon) {
            return Err(invalid("score_epsilon must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Budgets per attack, in sweep order.
    pub fn sweep(&self) -> Vec<(AttackKind, Eps255)> {
        let mut out = Vec::new();
        for &a in &self.attacks {
            match &self.epsilons {
                Some(g) => out.extend(g.iter().map(|e| (a, e.clone()))),
                None => out.extend(a.epsilon_grid_255().iter().map(|&k| (a, Eps255::from_numerator(k)))),
            }
        }
        out
    }

    pub fn load_data(&self) -> Result<ImageSet> {
        let d = match &self.data {
            DataSource::Synthetic(s) => s.generate()?,
            DataSource::File { path } => ImageSet::read(path)?,
        };
        let need = self.train_samples + self.test_samples;
        if d.len() < need {
            return Err(invalid(format!("dataset has {} samples, need {need}", d.len())));
        }
        let cfg = &self.macro_cfg;
        if d.shape() != [cfg.input_channels, cfg.input_resolution, cfg.input_resolution] {
            return Err(invalid(format!("dataset shape {:?} does not match the macro config", d.shape())));
        }
        if d.num_classes != cfg.num_classes {
            return Err(invalid(format!(
                "dataset has {} classes, macro config {}",
                d.num_classes, cfg.num_classes
            )));
        }
        Ok(d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArchOutcome {
    pub arch_index: usize,
    pub proxies: Option<ProxyVector>,
    pub clean: Option<f64>,
    /// One per sweep entry.
    pub robust: Vec<Option<f64>>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineOutputs {
    pub outcomes: Vec<ArchOutcome>,
    pub sweep: Vec<(AttackKind, Eps255)>,
    pub proxies_csv: String,
    pub robust_csv: String,
    /// Wide table in the ingestion schema.
    pub table_csv: String,
    pub manifest_json: String,
}

impl PipelineOutputs {
    /// Writes the four files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in self.files() {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }

    pub fn files(&self) -> [(&'static str, &str); 4] {
        [
            ("proxies.csv", &self.proxies_csv),
            ("robust.csv", &self.robust_csv),
            ("table.csv", &self.table_csv),
            ("manifest.json", &self.manifest_json),
        ]
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    config_sha256: String,
    seeds: Vec<u64>,
    config: PipelineConfig,
    outputs: BTreeMap<String, String>,
    failures: Vec<String>,
}

/// Reads either a bare config or a manifest written by a previous run.
pub fn config_from_json(text: &str) -> Result<PipelineConfig> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
    let inner = match v.get("config") {
        Some(c) if v.get("format").is_some() => c.clone(),
        _ => v,
    };
    serde_json::from_value(inner).map_err(|e| invalid(format!("config: {e}")))
}

fn seeds_of(cfg: &PipelineConfig) -> Vec<u64> {
    let mut s = vec![cfg.seed, cfg.proxies.zen_seed];
    if let Some(t) = &cfg.train {
        s.push(t.seed);
    }
    if let DataSource::Synthetic(d) = &cfg.data {
        s.push(d.seed);
    }
    s
}

fn run_one(
    cfg: &PipelineConfig,
    data: &ImageSet,
    score: &ScoreBatch,
    sweep: &[(AttackKind, Eps255)],
    arch_index: usize,
) -> Result<(ProxyVector, Option<f64>, Vec<Option<f64>>)> {
    let seed = mix64(cfg.seed ^ mix64(arch_index as u64));
    let mut net = Network::from_index(arch_index, cfg.macro_cfg.clone(), seed)?;
    let proxy_cfg = ProxyConfig {
        init_seed: seed,
        ..cfg.proxies.clone()
    };
    let t0 = std::time::Instant::now();
    let pv = proxy_vector_for(&net, arch_index, &cfg.dataset_id, score, &proxy_cfg);
    if sweep.is_empty() {
        return Ok((pv, None, Vec::new()));
    }
    let train = data.slice(0, cfg.train_samples);
    let test = data.slice(cfg.train_samples, cfg.train_samples + cfg.test_samples);
    if let Some(t) = &cfg.train {
        train_sgd(&mut net, &train, t)?;
    }

    let frozen = Frozen::new(&net, &train.inputs)?;
    let clean = clean_accuracy(&frozen, &test.inputs, &test.labels)?;
    let mut robust = Vec::with_capacity(sweep.len());
    for (kind, eps) in sweep {
        let ac = AttackConfig::new(*kind, eps.value())
            .with_iters(cfg.budget.iters(*kind))
            .with_seed(seed);
        robust.push(Some(robust_accuracy(&frozen, &test.inputs, &test.labels, &ac)?));
    }
    log::debug!("architecture {arch_index} took {:?}", t0.elapsed());
    Ok((pv, Some(clean), robust))
}

/// Runs every architecture and assembles the reports.
pub fn run_desk_pipeline(cfg: &PipelineConfig, workers: usize) -> Result<PipelineOutputs> {
    cfg.validate()?;
    let data = cfg.load_data()?;
    let score_set = data.slice(0, cfg.score_samples);
    let score = ScoreBatch::new(score_set.inputs, score_set.labels, cfg.score_epsilon, cfg.seed)?;
    let sweep = cfg.sweep();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| BenchError::Runtime(e.to_string()))?;
    let outcomes: Vec<ArchOutcome> = pool.install(|| {
        cfg.archs
            .par_iter()
            .map(|&a| match run_one(cfg, &data, &score, &sweep, a) {
                Ok((pv, clean, robust)) => ArchOutcome {
                    arch_index: a,
                    proxies: Some(pv),
                    clean,
                    robust,
                    error: None,
                },
                Err(e) => {
                    log::warn!("architecture {a} failed: {e}");
                    ArchOutcome {
                        arch_index: a,
                        proxies: None,
                        clean: None,
                        robust: vec![None; sweep.len()],
                        error: Some(e.to_string()),
                    }
                }
            })
            .collect()
    });
    assemble(cfg, outcomes, sweep)
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v}"))
}

fn assemble(cfg: &PipelineConfig, outcomes: Vec<ArchOutcome>, sweep: Vec<(AttackKind, Eps255)>) -> Result<PipelineOutputs> {
    let hash = config_hash(cfg);
    let seeds = seeds_of(cfg);
    let note = |s: &str| vec![format!("dataset={}", cfg.dataset_id), s.to_string()];

    let mut proxies_csv = header("pipeline", &hash, &seeds, &note("proxy scores of untrained networks"));
    proxies_csv.push_str(&csv_header());
    proxies_csv.push('\n');
    for o in &outcomes {
        let _ = write!(proxies_csv, "{},{}", o.arch_index, cfg.dataset_id);
        for id in ProxyId::ALL {
            let _ = write!(proxies_csv, ",{}", opt(o.proxies.as_ref().and_then(|p| p.get(id))));
        }
        proxies_csv.push('\n');
    }

    let trained = if cfg.train.is_some() { "trained" } else { "untrained" };
    let mut robust_csv = header("pipeline", &hash, &seeds, &note(&format!("accuracies of {trained} networks")));
    robust_csv.push_str("arch_index,dataset,attack,epsilon,accuracy\n");
    for o in &outcomes {
        if !sweep.is_empty() {
            let _ = writeln!(robust_csv, "{},{},clean,0/255,{}", o.arch_index, cfg.dataset_id, opt(o.clean));
        }
        for ((kind, eps), acc) in sweep.iter().zip(&o.robust) {
            let _ = writeln!(
                robust_csv,
                "{},{},{},{},{}",
                o.arch_index,
                cfg.dataset_id,
                attack_column_name(*kind),
                eps,
                opt(*acc)
            );
        }
    }

    let mut table_csv = header("pipeline", &hash, &seeds, &note("wide table in the ingestion schema"));
    table_csv.push_str(&csv_header());
    table_csv.push_str(",clean");
    for (k, e) in &sweep {
        let _ = write!(table_csv, ",{}", AccColumn::robust(*k, e.clone()));
    }
    table_csv.push('\n');
    for o in &outcomes {
        let _ = write!(table_csv, "{},{}", o.arch_index, cfg.dataset_id);
        for id in ProxyId::ALL {
            let _ = write!(table_csv, ",{}", opt(o.proxies.as_ref().and_then(|p| p.get(id))));
        }
        let _ = write!(table_csv, ",{}", opt(o.clean));
        for acc in &o.robust {
            let _ = write!(table_csv, ",{}", opt(*acc));
        }
        table_csv.push('\n');
    }

    let failures = outcomes
        .iter()
        .filter_map(|o| o.error.as_ref().map(|e| format!("{}: {e}", o.arch_index)))
        .collect();
    let outputs = [
        ("proxies.csv", &proxies_csv),
        ("robust.csv", &robust_csv),
        ("table.csv", &table_csv),
    ]
    .iter()
    .map(|(n, b)| (n.to_string(), sha256_hex(b.as_bytes())))
    .collect();
    let manifest = Manifest {
        format: "zcp-manifest/1".into(),
        config_sha256: hash,
        seeds,
        config: cfg.clone(),
        outputs,
        failures,
    };
    let mut manifest_json = serde_json::to_string_pretty(&manifest).map_err(|e| BenchError::Runtime(e.to_string()))?;
    manifest_json.push('\n');
    Ok(PipelineOutputs {
        outcomes,
        sweep,
        proxies_csv,
        robust_csv,
        table_csv,
        manifest_json,
    })
}

/// `n` canonical representatives spread evenly over the space, skipping
/// cells whose output is cut off from their input.
pub fn spread_archs(n: usize) -> Vec<usize> {
    let reps: Vec<usize> = zcp_core::space::unique_representatives()
        .into_iter()
        .filter(|&i| {
            zcp_core::ArchEncoding::decode(i)
                .map(|a| a.live_edges().iter().any(|&e| e))
                .unwrap_or(false)
        })
        .collect();
    let n = n.min(reps.len());
    (0..n).map(|i| reps[i * reps.len() / n]).collect()
}
