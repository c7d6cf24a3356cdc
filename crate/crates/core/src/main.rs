use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use rpgcn::experiment::{self, BuilderSpec, DatasetSpec, ExperimentConfig, RunOptions};
use rpgcn::plot;
use rpgcn::SplitRule;

#[derive(Parser)]
#[command(name = "rpgcn", version, about = "Random projection forest graphs for GCN node classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Connectivity of forest graphs as the number of trees grows.
    Sweep(RunArgs),
    /// GCN test accuracy and total edge weight for each graph builder.
    Compare(RunArgs),
    /// Forest graph with a growing share of random complement edges.
    ExtraEdges(RunArgs),
    /// Render result or sweep CSVs as SVG charts.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset name or CSV path; repeatable, replaces the config's datasets.
    #[arg(long = "dataset")]
    datasets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    max_leaf_size: Option<usize>,
    #[arg(long)]
    split_rule: Option<SplitRule>,
    #[arg(long)]
    label_col: Option<String>,
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    extra_edge_weight: Option<f64>,
    /// Complement-edge percentages for extra-edges; repeatable.
    #[arg(long = "percent")]
    percents: Vec<f64>,
    /// Sweep tree counts 1..=N.
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite an output directory written by a different config.
    #[arg(long)]
    force: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Fill build_ms and train_ms (makes results vary between runs).
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// Result or sweep CSV files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "plots")]
    out: PathBuf,
}

fn dataset_from_arg(arg: &str, label_col: Option<&str>) -> anyhow::Result<DatasetSpec> {
    if arg.ends_with(".csv") || arg.contains('/') {
        let label = label_col.context("--label-col is required for CSV datasets")?;
        Ok(DatasetSpec::csv(arg, label))
    } else {
        Ok(DatasetSpec::preset(arg))
    }
}

fn resolve_config(args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if !args.datasets.is_empty() {
        cfg.datasets = args
            .datasets
            .iter()
            .map(|d| dataset_from_arg(d, args.label_col.as_deref()))
            .collect::<anyhow::Result<_>>()?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.seeds {
        cfg.seeds = n;
    }
    for d in &mut cfg.datasets {
        if d.csv.is_some() {
            if let Some(label) = &args.label_col {
                d.label_col = Some(label.clone());
            }
        }
        d.standardize |= args.standardize;
    }
    let forest_flags = args.trees.is_some() || args.max_leaf_size.is_some() || args.split_rule.is_some();
    if forest_flags && !cfg.builders.iter().any(|b| matches!(b, BuilderSpec::Rpforest { .. })) {
        cfg.builders.push(BuilderSpec::rpforest(experiment::DEFAULT_TREES));
    }
    if args.k.is_some() && !cfg.builders.iter().any(|b| matches!(b, BuilderSpec::Knn { .. })) {
        cfg.builders.push(BuilderSpec::knn(experiment::DEFAULT_K));
    }
    for b in &mut cfg.builders {
        match b {
            BuilderSpec::Rpforest {
                trees,
                max_leaf_size,
                split_rule,
            } => {
                *trees = args.trees.unwrap_or(*trees);
                *max_leaf_size = args.max_leaf_size.unwrap_or(*max_leaf_size);
                *split_rule = args.split_rule.unwrap_or(*split_rule);
            }
            BuilderSpec::Knn { k } => *k = args.k.unwrap_or(*k),
            _ => {}
        }
    }
    if let Some(w) = args.extra_edge_weight {
        cfg.extra_edges.weight = Some(w);
    }
    if !args.percents.is_empty() {
        cfg.extra_edges.percents = args.percents.clone();
    }
    if let Some(t) = args.t_max {
        cfg.sweep.trees = (1..=t).collect();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(command: Command) -> anyhow::Result<()> {
    let (args, name) = match &command {
        Command::Sweep(a) => (a, "sweep"),
        Command::Compare(a) => (a, "compare"),
        Command::ExtraEdges(a) => (a, "extra-edges"),
        Command::Plot(p) => {
            for input in &p.inputs {
                for path in plot::plot_file(input, &p.out)? {
                    println!("{}", path.display());
                }
            }
            return Ok(());
        }
    };
    let cfg = resolve_config(args)?;
    let opts = RunOptions {
        workers: args.workers,
        timings: args.timings,
    };
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("results").join(name));
    experiment::prepare_out_dir(&out, &cfg, args.force)?;
    let written = match command {
        Command::Sweep(_) => {
            let runs = experiment::run_sweep(&cfg, &opts)?;
            for r in &runs {
                let flag = if r.elbow.no_connect { " (never connected)" } else { "" };
                eprintln!("{} seed {}: elbow at T={}{flag}", r.dataset, r.seed, r.elbow.trees);
            }
            experiment::write_sweeps(&out, &runs, &cfg.hash())?
        }
        Command::Compare(_) | Command::ExtraEdges(_) => {
            let result = if name == "compare" {
                experiment::run_compare(&cfg, &opts)?
            } else {
                experiment::run_extra_edges(&cfg, &opts)?
            };
            for a in &result.aggregates {
                eprintln!(
                    "{} {}: accuracy {:.4} ± {:.4}, total weight {:.2}",
                    a.dataset, a.builder, a.mean_accuracy, a.sd_accuracy, a.mean_total_weight
                );
            }
            experiment::write_result(&out, &result, &opts)?
        }
        Command::Plot(_) => unreachable!(),
    };
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
