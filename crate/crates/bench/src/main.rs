use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use zcp_attacks::AttackKind;
use zcp_bench::error::invalid;
use zcp_bench::report::{config_hash, header, PROTOCOL_NOTE};
use zcp_bench::*;

#[derive(Parser)]
#[command(name = "zcproxy", version, about = "Zero-cost proxy tables, experiments and desk pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a table and print per-dataset counts.
    Ingest {
        path: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        dataset: Option<String>,
        /// Write the normalised table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Kendall |tau| between every proxy and accuracy column.
    Correlate(ExpArgs),
    /// Test R² of a forest over all proxies.
    Fit(ExpArgs),
    /// Gini and permutation importances.
    Importance(ExpArgs),
    /// Test R² using the most important proxy alone.
    Top1(ExpArgs),
    /// Test R² without the most important proxy.
    Ablate(ExpArgs),
    /// Score, train and attack desk-scale networks.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct InputArgs {
    /// csv or json; guessed from the extension when omitted.
    #[arg(long)]
    format: Option<Format>,
    /// auto, percent or fraction.
    #[arg(long, default_value = "auto")]
    percent: PercentMode,
    /// Unit of the flops column: raw, mega or giga.
    #[arg(long, default_value = "mega")]
    flops_units: FlopsUnit,
}

#[derive(Args)]
struct ExpArgs {
    table: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    attack: Option<AttackKind>,
    /// Budget as k/255.
    #[arg(long)]
    eps: Option<Eps255>,
    /// First seed; five consecutive seeds are used unless the config lists them.
    #[arg(long)]
    seed: Option<u64>,
    /// Clean accuracy or the attack column alone instead of both.
    #[arg(long)]
    single: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// ExperimentConfig JSON; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// PipelineConfig JSON or a manifest from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated architecture indices.
    #[arg(long)]
    archs: Option<String>,
    /// Number of spread-out architectures when none are listed.
    #[arg(long, default_value_t = 10)]
    n_archs: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    proxies_only: bool,
    #[arg(long)]
    no_train: bool,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Print the effective config as JSON and exit.
    #[arg(long)]
    dump_config: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn load_table(a: &ExpArgs) -> Result<IngestTable> {
    let fmt = a.input.format.unwrap_or_else(|| Format::from_path(&a.table));
    let opts = IngestOptions {
        percent: a.input.percent,
        flops_units: a.input.flops_units,
    };
    let t = ingest_path(&a.table, fmt, &opts)?;
    t.warnings.iter().for_each(|w| log::warn!("{w}"));
    let ds = t.datasets();
    match &a.dataset {
        Some(d) => t.for_dataset(d),
        None if ds.len() == 1 => Ok(t),
        None => Err(invalid(format!("table holds several datasets, pick one with --dataset: {}", ds.join(", ")))),
    }
}

fn exp_config(a: &ExpArgs, mode: Mode) -> Result<ExperimentConfig> {
    let mut c = match &a.config {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| invalid(format!("config: {e}")))?,
        None => ExperimentConfig::default(),
    };
    c.mode = mode;
    if a.dataset.is_some() {
        c.dataset = a.dataset.clone();
    }
    if a.attack.is_some() {
        c.attack = a.attack;
    }
    if let Some(e) = &a.eps {
        c.epsilon = e.clone();
    }
    if let Some(s) = a.seed {
        let n = c.seeds.len().max(1) as u64;
        c.seeds = (s..s + n).collect();
    }
    if a.single || c.attack.is_none() {
        c.objective = Objective::Single;
    }
    c.validate()?;
    Ok(c)
}

fn read(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).map_err(|e| invalid(format!("cannot read {}: {e}", p.display())))
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), body)?;
    println!("wrote {}", dir.join(name).display());
    Ok(())
}

fn report_header(cmd: &str, c: &ExperimentConfig) -> String {
    let notes = if cmd == "correlate" { Vec::new() } else { vec![PROTOCOL_NOTE.to_string()] };
    header(cmd, &config_hash(c), &c.seeds, &notes)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            path,
            input,
            dataset,
            out,
        } => {
            let fmt = input.format.unwrap_or_else(|| Format::from_path(&path));
            let opts = IngestOptions {
                percent: input.percent,
                flops_units: input.flops_units,
            };
            let mut t = ingest_path(&path, fmt, &opts)?;
            if let Some(d) = dataset {
                t = t.for_dataset(&d)?;
            }
            t.warnings.iter().for_each(|w| eprintln!("warning: {w}"));
            print!("{}", t.summary_text());
            if let Some(o) = out {
                let mut buf = Vec::new();
                t.write_csv(&mut buf)?;
                std::fs::write(&o, buf)?;
                println!("wrote {}", o.display());
            }
        }
        Command::Correlate(a) => {
            let t = load_table(&a)?;
            let c = exp_config(&a, Mode::Correlate)?;
            let m = run_correlate(&t);
            write(&a.out, "correlation.csv", &m.to_csv(&report_header("correlate", &c)))?;
            let rows: Vec<String> = m.proxies.iter().map(|p| p.name().to_string()).collect();
            let cols: Vec<String> = m.columns.iter().map(ToString::to_string).collect();
            let title = format!("Kendall |tau|, {}", c.dataset.as_deref().unwrap_or("table"));
            write(&a.out, "correlation.svg", &svg::heatmap(&title, &rows, &cols, &m.cells))?;
        }
        Command::Fit(a) => {
            let t = load_table(&a)?;
            let c = exp_config(&a, if a.single { Mode::FitSingle } else { Mode::FitMulti })?;
            let r = run_fit(&t, &c)?;
            println!("R² {} = {:.4} ± {:.4}", r.targets.join("+"), r.mean, r.std);
            write(&a.out, "fit.csv", &r.to_csv(&report_header("fit", &c)))?;
        }
        Command::Importance(a) => {
            let t = load_table(&a)?;
            let c = exp_config(&a, Mode::Importance)?;
            let r = run_importance(&t, &c)?;
            println!("top feature: {}", r.top());
            write(&a.out, "importance.csv", &r.to_csv(&report_header("importance", &c)))?;
            let order = r.order();
            let labels: Vec<String> = order.iter().map(|&j| r.features[j].name().to_string()).collect();
            for (i, p) in r.panels.iter().enumerate() {
                let g: Vec<f64> = order.iter().map(|&j| p.gini[j]).collect();
                let e: Vec<f64> = order.iter().map(|&j| p.gini_std[j]).collect();
                let pm: Vec<f64> = order.iter().map(|&j| p.permutation[j]).collect();
                let pe: Vec<f64> = order.iter().map(|&j| p.permutation_std[j]).collect();
                write(&a.out, &format!("importance_gini_{i}.svg"), &svg::bars(&format!("Gini, {}", p.target), &labels, &g, Some(&e)))?;
                write(&a.out, &format!("importance_perm_{i}.svg"), &svg::bars(&format!("Permutation, {}", p.target), &labels, &pm, Some(&pe)))?;
            }
        }
        Command::Top1(a) => {
            let t = load_table(&a)?;
            let c = exp_config(&a, Mode::Top1Only)?;
            let r = run_top1_only(&t, &c)?;
            println!("{}: R² = {:.4} ± {:.4}", r.feature, r.fit.mean, r.fit.std);
            let h = report_header("top1", &c) + &format!("# feature={} gini_share={:.6}\n", r.feature, r.gini_share);
            write(&a.out, "top1.csv", &r.fit.to_csv(&h))?;
        }
        Command::Ablate(a) => {
            let t = load_table(&a)?;
            let c = exp_config(&a, Mode::ExcludeTop1)?;
            let r = run_exclude_top1(&t, &c)?;
            println!(
                "without {}: R² = {:.4} ± {:.4} (all features {:.4}, drop {:.4})",
                r.dropped, r.without.mean, r.without.std, r.full.mean, r.drop()
            );
            let ranking: Vec<String> = r.ranking.iter().map(|(p, g)| format!("{p}:{g:.4}")).collect();
            let h = report_header("ablate", &c)
                + &format!("# dropped={} full_r2={:.6}\n# ranking={}\n", r.dropped, r.full.mean, ranking.join(";"));
            write(&a.out, "ablate.csv", &r.without.to_csv(&h))?;
        }
        Command::Pipeline(a) => {
            let mut c = match &a.config {
                Some(p) => config_from_json(&read(p)?)?,
                None => PipelineConfig::default(),
            };
            if let Some(list) = &a.archs {
                c.archs = zcp_core::space::parse_arch_list(list).map_err(|e| invalid(e.to_string()))?;
            } else if c.archs.is_empty() {
                c.archs = spread_archs(a.n_archs);
            }
            if let Some(s) = a.seed {
                c.seed = s;
            }
            if a.proxies_only {
                c.attacks.clear();
            }
            if a.no_train {
                c.train = None;
            }
            if a.dump_config {
                println!("{}", serde_json::to_string_pretty(&c).map_err(|e| BenchError::Runtime(e.to_string()))?);
                return Ok(());
            }
            let out = run_desk_pipeline(&c, a.workers)?;
            let failed = out.outcomes.iter().filter(|o| o.error.is_some()).count();
            println!("{} architectures, {failed} failed", out.outcomes.len());
            out.write(&a.out)?;
            println!("wrote {}", a.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
