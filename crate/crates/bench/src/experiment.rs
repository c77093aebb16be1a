//! Correlation, regression and importance experiments over an ingested table.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use zcp_attacks::AttackKind;
use zcp_forest::{
    fit_forest, kendall_tau, permutation_importance, r2_per_column, ForestConfig, Matrix,
};
use zcp_proxies::ProxyId;

use crate::columns::{AccColumn, Eps255};
use crate::error::{invalid, Result};
use crate::ingest::IngestTable;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Correlate,
    FitSingle,
    #[default]
    FitMulti,
    Importance,
    Top1Only,
    ExcludeTop1,
    DeskPipeline,
}

/// Regression targets in use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Clean accuracy, or the robust column when an attack is set.
    Single,
    /// Clean and robust accuracy jointly.
    #[default]
    Multi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Option<String>,
    pub mode: Mode,
    pub objective: Objective,
    pub attack: Option<AttackKind>,
    pub epsilon: Eps255,
    /// Training fraction of each split.
    pub split: f64,
    pub seeds: Vec<u64>,
    pub n_trees: usize,
    pub permutation_repeats: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            mode: Mode::default(),
            objective: Objective::default(),
            attack: None,
            epsilon: Eps255::default(),
            split: 0.8,
            seeds: vec![0, 1, 2, 3, 4],
            n_trees: 100,
            permutation_repeats: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(invalid(format!("split {} must lie in (0, 1)", self.split)));
        }
        if self.seeds.is_empty() {
            return Err(invalid("at least one seed is required"));
        }
        if self.n_trees == 0 {
            return Err(invalid("n_trees must be positive"));
        }
        let needs_fit = !matches!(self.mode, Mode::Correlate | Mode::DeskPipeline);
        if needs_fit && self.objective == Objective::Multi && self.attack.is_none() {
            return Err(invalid("multi-objective runs need an attack"));
        }
        if self.mode == Mode::Importance && self.permutation_repeats == 0 {
            return Err(invalid("permutation_repeats must be positive"));
        }
        Ok(())
    }

    /// Target columns implied by objective, attack and epsilon.
    pub fn targets(&self) -> Result<Vec<AccColumn>> {
        let robust = self
            .attack
            .map(|a| AccColumn::robust(a, self.epsilon.clone()));
        match (self.objective, robust) {
            (Objective::Single, None) => Ok(vec![AccColumn::Clean]),
            (Objective::Single, Some(r)) => Ok(vec![r]),
            (Objective::Multi, Some(r)) => Ok(vec![AccColumn::Clean, r]),
            (Objective::Multi, None) => Err(invalid("multi-objective runs need an attack")),
        }
    }

    pub fn with_targets(&self, objective: Objective, attack: Option<AttackKind>) -> Self {
        ExperimentConfig {
            objective,
            attack,
            ..self.clone()
        }
    }

    fn forest(&self, seed: u64) -> ForestConfig {
        ForestConfig {
            n_trees: self.n_trees,
            bootstrap: true,
            seed,
        }
    }
}

fn target_label(targets: &[AccColumn]) -> String {
    targets
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("+")
}

/// Complete rows of the chosen features and targets.
#[derive(Clone, Debug)]
pub struct Design {
    pub x: Matrix,
    pub y: Matrix,
    pub features: Vec<ProxyId>,
    pub arch: Vec<usize>,
    /// Rows dropped for a missing feature or target.
    pub dropped: usize,
}

/// Builds the regression design. Proxy columns missing on every row are left
/// out; so is anything in `exclude`.
pub fn design(table: &IngestTable, targets: &[AccColumn], exclude: &[ProxyId]) -> Result<Design> {
    let t_idx: Vec<usize> = targets
        .iter()
        .map(|t| {
            table.column_index(t).ok_or_else(|| {
                invalid(format!(
                    "column {t} not in table; available: {}",
                    table.columns.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
                ))
            })
        })
        .collect::<Result<_>>()?;
    let f_idx: Vec<usize> = (0..table.proxies.len())
        .filter(|&j| !exclude.contains(&table.proxies[j]))
        .filter(|&j| table.records.iter().any(|r| r.proxies[j].is_some()))
        .collect();
    if f_idx.is_empty() {
        return Err(invalid("no proxy feature columns left"));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut arch = Vec::new();
    for r in &table.records {
        let row: Option<Vec<f64>> = f_idx.iter().map(|&j| r.proxies[j]).collect();
        let tgt: Option<Vec<f64>> = t_idx.iter().map(|&j| r.accuracies[j]).collect();
        if let (Some(row), Some(tgt)) = (row, tgt) {
            xs.push(row);
            ys.push(tgt);
            arch.push(r.arch_index);
        }
    }
    let features: Vec<ProxyId> = f_idx.iter().map(|&j| table.proxies[j]).collect();
    let x = Matrix::from_rows(features.iter().map(|p| p.name().to_string()).collect(), &xs)?;
    let y = Matrix::from_rows(targets.iter().map(ToString::to_string).collect(), &ys)?;
    Ok(Design {
        dropped: table.records.len() - arch.len(),
        x,
        y,
        features,
        arch,
    })
}

/// Train and test row indices of one shuffled split.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let n_train = n_train.clamp(1, n.saturating_sub(1).max(1));
    let test = idx.split_off(n_train);
    (idx, test)
}

// ---------------------------------------------------------------- correlate

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub proxies: Vec<ProxyId>,
    pub columns: Vec<AccColumn>,
    /// `|τ_b|`, `None` where undefined (constant column, fewer than two rows).
    pub cells: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, proxy: ProxyId, col: &AccColumn) -> Option<f64> {
        let i = self.proxies.iter().position(|&p| p == proxy)?;
        let j = self.columns.iter().position(|c| c == col)?;
        self.cells[i][j]
    }

    /// Mean over the defined cells of one proxy row.
    pub fn mean_abs(&self, proxy: ProxyId) -> Option<f64> {
        let i = self.proxies.iter().position(|&p| p == proxy)?;
        let vals: Vec<f64> = self.cells[i].iter().flatten().copied().collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn to_csv(&self, header: &str) -> String {
        let mut s = header.to_string();
        s.push_str("proxy");
        for c in &self.columns {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
        for (p, row) in self.proxies.iter().zip(&self.cells) {
            s.push_str(p.name());
            for v in row {
                match v {
                    Some(v) => {
                        let _ = write!(s, ",{v:.6}");
                    }
                    None => s.push_str(",NA"),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Kendall `|τ_b|` between every present proxy and every accuracy column,
/// pairwise complete.
pub fn run_correlate(table: &IngestTable) -> CorrelationMatrix {
    let proxies: Vec<ProxyId> = table
        .proxies
        .iter()
        .copied()
        .filter(|&p| table.proxy_values(p).is_some_and(|v| v.iter().any(Option::is_some)))
        .collect();
    let columns = table.columns.clone();
    let cells = proxies
        .iter()
        .map(|&p| {
            let pv = table.proxy_values(p).expect("present");
            columns
                .iter()
                .map(|c| {
                    let av = table.accuracy_values(c).expect("present");
                    let (a, b): (Vec<f64>, Vec<f64>) = pv
                        .iter()
                        .zip(&av)
                        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                        .unzip();
                    kendall_tau(&a, &b).ok().filter(|t| t.is_finite()).map(f64::abs)
                })
                .collect()
        })
        .collect();
    CorrelationMatrix {
        proxies,
        columns,
        cells,
    }
}

// ---------------------------------------------------------------------- fit

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedFit {
    pub seed: u64,
    /// Per target column.
    pub r2: Vec<f64>,
    /// Uniform mean over targets.
    pub r2_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitReport {
    pub targets: Vec<String>,
    pub features: Vec<String>,
    pub rows: usize,
    pub dropped_rows: usize,
    pub per_seed: Vec<SeedFit>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
    /// Mean over seeds of the uniform-average R².
    pub mean: f64,
    /// Sample standard deviation over seeds.
    pub std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

impl FitReport {
    pub fn to_csv(&self, header: &str) -> String {
        let mut s = header.to_string();
        let _ = writeln!(s, "# features={}", self.features.join(";"));
        let _ = writeln!(s, "# rows={} dropped_rows={}", self.rows, self.dropped_rows);
        s.push_str("seed");
        for t in &self.targets {
            let _ = write!(s, ",r2[{t}]");
        }
        s.push_str(",r2\n");
        for f in &self.per_seed {
            let _ = write!(s, "{}", f.seed);
            for v in &f.r2 {
                let _ = write!(s, ",{v:.6}");
            }
            let _ = writeln!(s, ",{:.6}", f.r2_mean);
        }
        s.push_str("mean");
        for v in &self.target_mean {
            let _ = write!(s, ",{v:.6}");
        }
        let _ = writeln!(s, ",{:.6}", self.mean);
        s.push_str("std");
        for v in &self.target_std {
            let _ = write!(s, ",{v:.6}");
        }
        let _ = writeln!(s, ",{:.6}", self.std);
        s
    }
}

fn fit_design(d: &Design, targets: &[AccColumn], cfg: &ExperimentConfig) -> Result<(FitReport, Vec<SplitFit>)> {
    let mut per_seed = Vec::new();
    let mut fits = Vec::new();
    for &seed in &cfg.seeds {
        let f = fit_split(d, cfg, seed)?;
        let r2 = r2_per_column(&f.y_test, &f.forest.predict(&f.x_test)?)?;
        let r2_mean = r2.iter().sum::<f64>() / r2.len() as f64;
        per_seed.push(SeedFit { seed, r2, r2_mean });
        fits.push(f);
    }
    let k = targets.len();
    let (target_mean, target_std): (Vec<f64>, Vec<f64>) = (0..k)
        .map(|j| mean_std(&per_seed.iter().map(|s| s.r2[j]).collect::<Vec<_>>()))
        .unzip();
    let (mean, std) = mean_std(&per_seed.iter().map(|s| s.r2_mean).collect::<Vec<_>>());
    Ok((
        FitReport {
            targets: targets.iter().map(ToString::to_string).collect(),
            features: d.features.iter().map(|p| p.name().to_string()).collect(),
            rows: d.x.rows(),
            dropped_rows: d.dropped,
            per_seed,
            target_mean,
            target_std,
            mean,
            std,
        },
        fits,
    ))
}

struct SplitFit {
    forest: zcp_forest::RegressionForest,
    x_test: Matrix,
    y_test: Matrix,
}

fn fit_split(d: &Design, cfg: &ExperimentConfig, seed: u64) -> Result<SplitFit> {
    let (train, test) = split_indices(d.x.rows(), cfg.split, seed);
    let forest = fit_forest(&d.x.select_rows(&train), &d.y.select_rows(&train), &cfg.forest(seed))?;
    Ok(SplitFit {
        forest,
        x_test: d.x.select_rows(&test),
        y_test: d.y.select_rows(&test),
    })
}

/// Test R² of a forest on all proxies, one 80/20 split per seed.
pub fn run_fit(table: &IngestTable, cfg: &ExperimentConfig) -> Result<FitReport> {
    cfg.validate()?;
    let targets = cfg.targets()?;
    let d = design(table, &targets, &[])?;
    Ok(fit_design(&d, &targets, cfg)?.0)
}

// --------------------------------------------------------------- importance

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImportancePanel {
    pub target: String,
    /// Gini importance, mean and sample std over seeds.
    pub gini: Vec<f64>,
    pub gini_std: Vec<f64>,
    /// Drop in test R² under shuffling, mean over seeds.
    pub permutation: Vec<f64>,
    pub permutation_std: Vec<f64>,
    pub r2: f64,
}

impl ImportancePanel {
    /// Feature indices by Gini importance, largest first; ties keep column order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.gini.len()).collect();
        idx.sort_by(|&a, &b| self.gini[b].total_cmp(&self.gini[a]).then(a.cmp(&b)));
        idx
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImportanceReport {
    pub features: Vec<ProxyId>,
    /// Clean, robust and multi-objective panels when an attack is set,
    /// otherwise the configured target only.
    pub panels: Vec<ImportancePanel>,
    /// Index of the panel that orders the bars.
    pub alignment: usize,
}

impl ImportanceReport {
    /// Feature order of the alignment panel.
    pub fn order(&self) -> Vec<usize> {
        self.panels[self.alignment].ranking()
    }

    pub fn top(&self) -> ProxyId {
        self.features[self.order()[0]]
    }

    pub fn panel_top(&self, panel: usize) -> ProxyId {
        self.features[self.panels[panel].ranking()[0]]
    }

    pub fn to_csv(&self, header: &str) -> String {
        let mut s = header.to_string();
        s.push_str("rank,feature");
        for p in &self.panels {
            let t = &p.target;
            let _ = write!(s, ",gini[{t}],gini_std[{t}],perm[{t}],perm_std[{t}]");
        }
        s.push('\n');
        for (rank, &j) in self.order().iter().enumerate() {
            let _ = write!(s, "{},{}", rank + 1, self.features[j].name());
            for p in &self.panels {
                let _ = write!(
                    s,
                    ",{:.6},{:.6},{:.6},{:.6}",
                    p.gini[j], p.gini_std[j], p.permutation[j], p.permutation_std[j]
                );
            }
            s.push('\n');
        }
        s
    }
}

fn importance_panel(d: &Design, targets: &[AccColumn], cfg: &ExperimentConfig) -> Result<(ImportancePanel, FitReport)> {
    let (fit, fits) = fit_design(d, targets, cfg)?;
    let f = d.features.len();
    let mut gini = vec![Vec::new(); f];
    let mut perm = vec![Vec::new(); f];
    for (s, sf) in cfg.seeds.iter().zip(&fits) {
        let g = sf.forest.gini_importance();
        let p = permutation_importance(&sf.forest, &sf.x_test, &sf.y_test, cfg.permutation_repeats.max(1), *s)?;
        for j in 0..f {
            gini[j].push(g.values[j]);
            perm[j].push(p.mean[j]);
        }
    }
    let (gini, gini_std) = gini.iter().map(|v| mean_std(v)).unzip();
    let (permutation, permutation_std) = perm.iter().map(|v| mean_std(v)).unzip();
    let panel = ImportancePanel {
        target: target_label(targets),
        gini,
        gini_std,
        permutation,
        permutation_std,
        r2: fit.mean,
    };
    Ok((panel, fit))
}

/// Gini and permutation importances. With an attack set, computes the clean,
/// robust and multi-objective panels and orders bars by the multi-objective one.
pub fn run_importance(table: &IngestTable, cfg: &ExperimentConfig) -> Result<ImportanceReport> {
    cfg.validate()?;
    importance_excluding(table, cfg, &[])
}

fn importance_excluding(table: &IngestTable, cfg: &ExperimentConfig, exclude: &[ProxyId]) -> Result<ImportanceReport> {
    let target_sets: Vec<Vec<AccColumn>> = match cfg.attack {
        Some(a) => {
            let r = AccColumn::robust(a, cfg.epsilon.clone());
            vec![vec![AccColumn::Clean], vec![r.clone()], vec![AccColumn::Clean, r]]
        }
        None => vec![vec![AccColumn::Clean]],
    };
    let alignment = target_sets.len() - 1;
    // Rows must be complete for every panel so all panels share one design.
    let all: Vec<AccColumn> = target_sets.last().expect("non-empty").clone();
    let full = design(table, &all, exclude)?;
    let panels = target_sets
        .iter()
        .map(|t| {
            let cols: Vec<usize> = t.iter().map(|c| all.iter().position(|a| a == c).expect("subset")).collect();
            let d = Design {
                y: full.y.select_columns(&cols),
                ..full.clone()
            };
            importance_panel(&d, t, cfg).map(|p| p.0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImportanceReport {
        features: full.features,
        panels,
        alignment,
    })
}

/// Importance of the configured target alone, with the fit behind it.
fn target_importance(
    table: &IngestTable,
    cfg: &ExperimentConfig,
    exclude: &[ProxyId],
) -> Result<(ImportancePanel, FitReport, Vec<ProxyId>)> {
    let targets = cfg.targets()?;
    let d = design(table, &targets, exclude)?;
    let (panel, fit) = importance_panel(&d, &targets, cfg)?;
    Ok((panel, fit, d.features))
}

// -------------------------------------------------------------------- top-1

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Top1Report {
    pub feature: ProxyId,
    pub gini_share: f64,
    pub fit: FitReport,
}

/// Refits on the configured target's most important feature alone.
pub fn run_top1_only(table: &IngestTable, cfg: &ExperimentConfig) -> Result<Top1Report> {
    cfg.validate()?;
    let (panel, _, features) = target_importance(table, cfg, &[])?;
    let top = panel.ranking()[0];
    let feature = features[top];
    let rest: Vec<ProxyId> = features.iter().copied().filter(|&p| p != feature).collect();
    let targets = cfg.targets()?;
    let d = design(table, &targets, &rest)?;
    let fit = fit_design(&d, &targets, cfg)?.0;
    Ok(Top1Report {
        feature,
        gini_share: panel.gini[top],
        fit,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationReport {
    pub dropped: ProxyId,
    pub full: FitReport,
    pub without: FitReport,
    /// Features of the refit, by Gini importance.
    pub ranking: Vec<(ProxyId, f64)>,
}

impl AblationReport {
    /// `full − without`, on the mean R².
    pub fn drop(&self) -> f64 {
        self.full.mean - self.without.mean
    }
}

/// Drops the configured target's most important feature and refits.
pub fn run_exclude_top1(table: &IngestTable, cfg: &ExperimentConfig) -> Result<AblationReport> {
    cfg.validate()?;
    let (panel, full, features) = target_importance(table, cfg, &[])?;
    let dropped = features[panel.ranking()[0]];
    let (after, without, rest) = target_importance(table, cfg, &[dropped])?;
    let ranking = after.ranking().into_iter().map(|j| (rest[j], after.gini[j])).collect();
    Ok(AblationReport {
        dropped,
        full,
        without,
        ranking,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_a_partition() {
        let (a, b) = split_indices(10, 0.8, 3);
        assert_eq!((a.len(), b.len()), (8, 2));
        let mut all: Vec<usize> = a.into_iter().chain(b).collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(10, 0.8, 3), split_indices(10, 0.8, 3));
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::default();
        assert!(c.validate().is_err()); // multi without attack
        c.attack = Some(AttackKind::Pgd);
        assert!(c.validate().is_ok());
        c.split = 1.0;
        assert!(c.validate().is_err());
        let single = ExperimentConfig {
            objective: Objective::Single,
            ..Default::default()
        };
        assert_eq!(single.targets().unwrap(), vec![AccColumn::Clean]);
    }
}
