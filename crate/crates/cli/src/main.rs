//! `rareclass`: batch front end over the rareclass-core pipeline.
//!
//! Every subcommand accepts `--config FILE`; flags given on the command line
//! override the file. Failures print the failing stage and exit nonzero.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rareclass_core::dataset::load_secom;
use rareclass_core::pipeline::{
    eda, emit_report, prepare, prune, report_text, reproduce_with, resample, run_scenario, select, split_plan,
    train_models, DataConfig, EdaSummary, PipelineConfig, PruneSummary, ReportFormat, ScenarioId,
};
use rareclass_core::preprocess::drop_logs_csv;
use rareclass_core::Error;

#[derive(Parser)]
#[command(name = "rareclass", version, about = "Rare-class classification pipeline for SECOM-style sensor data")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML configuration file; unknown keys are rejected.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory holding `secom.data` and `secom_labels.data`.
    #[arg(long, global = true, value_name = "DIR")]
    data_dir: Option<PathBuf>,
    /// Master seed; overrides the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize a data/labels file pair.
    Eda { data: PathBuf, labels: PathBuf },
    /// Drop high-missing, constant and correlated columns.
    Preprocess {
        /// Writes `drops.csv` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the selector roster on the training split and tally votes.
    Select {
        /// Writes `votes.csv` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the model roster and write one JSON file per model.
    Train {
        #[arg(long)]
        out: PathBuf,
        /// Use a fixed scenario's resampling instead of the configured one.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=3))]
        scenario: Option<u32>,
    },
    /// Run every stage and write the report files.
    Evaluate {
        /// Defaults to `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a fixed scenario (1 imbalanced, 2 SMOTE 0.7, 3 combined 0.4/0.8).
    Reproduce {
        #[arg(long)]
        scenario: u32,
        #[arg(long)]
        out: PathBuf,
    },
}

fn config(g: &Global) -> rareclass_core::Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(dir) = &g.data_dir {
        cfg.data = DataConfig::in_dir(dir);
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_eda(e: &EdaSummary) {
    println!("rows {}  columns {}", e.n_rows, e.n_cols);
    println!("negatives {}  positives {}", e.negatives, e.positives);
    println!(
        "missing cells {} ({:.2}% of all cells, {:.2}% within {} affected columns)",
        e.missing.missing_cells,
        100.0 * e.missing.overall_fraction,
        100.0 * e.missing.affected_fraction,
        e.missing.affected_columns
    );
    println!("constant columns {}", e.constant_columns);
    println!("columns over the missing threshold {}", e.high_missing_columns);
}

fn print_prune(p: &PruneSummary) {
    println!(
        "columns {} -> {}: high_missing {}, constant {}, correlated {}",
        p.columns_before, p.columns_after, p.high_missing, p.constant, p.correlated
    );
    println!("residual missing {:.2}% of cells", 100.0 * p.residual_missing.overall_fraction);
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::create_dir_all(dir)
        .and_then(|()| fs::write(&path, contents))
        .with_context(|| format!("stage report failed: cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config(&cli.global).map_err(|e| e.in_stage("config"))?;
    match cli.command {
        Command::Eda { data, labels } => {
            let d = load_secom(&data, &labels).map_err(|e| e.in_stage("load"))?;
            print_eda(&eda(&d, cfg.prune.missing_threshold));
        }
        Command::Preprocess { out } => {
            let d = rareclass_core::pipeline::load(&cfg)?;
            let pruned = prune(&cfg.prune, &d).map_err(|e| e.in_stage("prune"))?;
            print_prune(&pruned.summary);
            if let Some(dir) = out {
                write_file(&dir, "drops.csv", &drop_logs_csv(&pruned.logs))?;
            }
        }
        Command::Select { out } => {
            let d = rareclass_core::pipeline::load(&cfg)?;
            let pruned = prune(&cfg.prune, &d).map_err(|e| e.in_stage("prune"))?;
            let plan = split_plan(&cfg, &pruned.data).map_err(|e| e.in_stage("split"))?;
            let fold = prepare(&cfg, &pruned.data, &plan).map_err(|e| e.in_stage("prepare"))?;
            let (ledger, _) = select(&cfg, &fold.train).map_err(|e| e.in_stage("select"))?;
            println!(
                "{} selectors, threshold {}: {} columns voted, {} selected",
                ledger.n_selectors,
                ledger.threshold,
                ledger.voted(),
                ledger.selected.len()
            );
            println!("selected {:?}", ledger.selected);
            if let Some(dir) = out {
                write_file(&dir, "votes.csv", &ledger.to_csv())?;
            }
        }
        Command::Train { out, scenario } => {
            let mut cfg = cfg;
            if let Some(n) = scenario {
                cfg.resample = ScenarioId::from_number(n).map_err(|e| e.in_stage("config"))?.resample();
            }
            let d = rareclass_core::pipeline::load(&cfg)?;
            let pruned = prune(&cfg.prune, &d).map_err(|e| e.in_stage("prune"))?;
            let plan = split_plan(&cfg, &pruned.data).map_err(|e| e.in_stage("split"))?;
            let fold = prepare(&cfg, &pruned.data, &plan).map_err(|e| e.in_stage("prepare"))?;
            let (ledger, _) = select(&cfg, &fold.train).map_err(|e| e.in_stage("select"))?;
            let train_sel = fold.train.select_column_ids(&ledger.selected).map_err(|e| e.in_stage("select"))?;
            let (train_rs, _) = resample(&cfg.resample, &train_sel, cfg.seed).map_err(|e| e.in_stage("resample"))?;
            let models = train_models(&cfg, &train_rs).map_err(|e| e.in_stage("train"))?;
            let columns = serde_json::to_string(&ledger.selected).context("stage report failed")?;
            write_file(&out, "columns.json", &columns)?;
            for (name, model) in &models {
                let json = model.to_json().map_err(|e| e.in_stage("report"))?;
                write_file(&out, &format!("model_{name}.json"), &json)?;
            }
        }
        Command::Evaluate { out } => {
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .context("stage config failed: no output directory, pass --out or set output_dir")?;
            let report = run_scenario(&cfg).map_err(|e| e.in_stage("run"))?;
            print!("{}", report_text(&report));
            let files = emit_report(&report, &dir, &ReportFormat::all()).map_err(|e| e.in_stage("report"))?;
            println!("wrote {} files to {}", files.len(), dir.display());
        }
        Command::Reproduce { scenario, out } => {
            let id = ScenarioId::from_number(scenario).map_err(|e| e.in_stage("config"))?;
            let (report, files) = reproduce_with(&cfg, id, cfg.seed, &out).map_err(|e| e.in_stage("run"))?;
            print!("{}", report_text(&report));
            println!("wrote {} files to {}", files.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Every error names its stage. Core errors already print their
            // source, so only contexted errors need the chain.
            if e.downcast_ref::<Error>().is_some() {
                eprintln!("error: {e}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::FAILURE
        }
    }
}
