use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use vne_core::fitness::{dataset_to_csv, train_rater};
use vne_core::sim::{run_scenario, CSV_SCHEMA_VERSION};
use vne_core::topogen::{gen_schedule, gen_substrate};
use vne_core::{BackpropMode, FitnessNet, SolverParams};

mod config;
mod report;

use config::{parse_seeds, Config, Manifest, RaterSource, SolverKind};

#[derive(Parser)]
#[command(name = "vne", version, about = "Virtual network embedding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the substrate and arrival schedule of each seed as JSON.
    Gen(GenArgs),
    /// Train a rating network on synthetic ratings and save it.
    Train(TrainArgs),
    /// Simulate every seed and write per-seed metrics.
    Run(RunArgs),
    /// Merge the per-seed metrics of a run directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// JSON config file, or `defaults`.
    #[arg(long, default_value = "defaults")]
    config: String,
    /// Multiplies horizon and nodes per domain.
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<Config> {
        let mut cfg = Config::load(&self.config)?;
        if let Some(f) = self.scale {
            if !(f > 0.0 && f.is_finite()) {
                bail!("--scale must be positive");
            }
            cfg.scenario = cfg.scenario.scaled(f);
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "1")]
    seeds: String,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    bp_mode: Option<BackpropMode>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "defaults")]
    config: String,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "1")]
    seeds: String,
    #[arg(long, value_enum, default_value = "bp-hfpa")]
    solver: SolverKind,
    /// Take the global branch when the draw is below the transfer probability.
    #[arg(long)]
    invert_transfer: bool,
    #[arg(long)]
    bp_mode: Option<BackpropMode>,
    /// `train-fresh`, `none`, or the path of a saved network.
    #[arg(long, default_value = "train-fresh")]
    rater: RaterSource,
    /// Re-run exactly what a previous run recorded; other options are ignored.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory written by `run`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output table; defaults to `<in>/report.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn gen(args: GenArgs) -> Result<()> {
    let cfg = args.common.load()?;
    fs::create_dir_all(&args.common.out)?;
    for seed in parse_seeds(&args.seeds)? {
        let scenario = vne_core::ScenarioConfig { rng_seed: seed, ..cfg.scenario.clone() };
        let substrate = gen_substrate(&scenario)?;
        let schedule = gen_schedule(&scenario)?;
        write(&args.common.out.join(format!("substrate_{seed}.json")), to_json(&substrate)?)?;
        write(&args.common.out.join(format!("schedule_{seed}.json")), to_json(&schedule)?)?;
        println!("seed {seed}: {} nodes, {} links, {} arrivals", substrate.nodes().len(), substrate.links().len(), schedule.len());
    }
    Ok(())
}

fn fresh_rater(cfg: &Config) -> Result<FitnessNet> {
    let scenario = vne_core::ScenarioConfig { rng_seed: cfg.rater.seed, ..cfg.scenario.clone() };
    Ok(train_rater(&scenario, &cfg.rater)?.0)
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = args.common.load()?;
    if let Some(mode) = args.bp_mode {
        cfg.rater.mode = mode;
    }
    fs::create_dir_all(&args.common.out)?;
    let scenario = vne_core::ScenarioConfig { rng_seed: cfg.rater.seed, ..cfg.scenario.clone() };
    let (net, dataset) = train_rater(&scenario, &cfg.rater)?;
    write(&args.common.out.join("rater.json"), to_json(&net)?)?;
    write(&args.common.out.join("ratings.csv"), dataset_to_csv(&dataset))?;
    println!("trained on {} samples, accuracy {:.3}, mean error {:.3}", dataset.len(), net.accuracy(&dataset), net.mean_error(&dataset));
    Ok(())
}

fn manifest_from(args: &RunArgs) -> Result<Manifest> {
    if let Some(path) = &args.manifest {
        return Manifest::read(path);
    }
    let mut cfg = Config::load(&args.config)?;
    if let Some(f) = args.scale {
        if !(f > 0.0 && f.is_finite()) {
            bail!("--scale must be positive");
        }
        cfg.scenario = cfg.scenario.scaled(f);
    }
    if args.invert_transfer {
        cfg.solver.invert_transfer = true;
    }
    if let Some(mode) = args.bp_mode {
        cfg.rater.mode = mode;
    }
    cfg.solver.baseline_mode = args.solver == SolverKind::BaselineGa;
    Ok(Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        csv_schema_version: CSV_SCHEMA_VERSION,
        solver_kind: args.solver,
        seeds: parse_seeds(&args.seeds)?,
        rater: if args.solver == SolverKind::BaselineGa { RaterSource::None } else { args.rater.clone() },
        config: cfg,
    })
}

fn run(args: RunArgs) -> Result<()> {
    let manifest = manifest_from(&args)?;
    let cfg = &manifest.config;
    cfg.solver.validate()?;
    cfg.scenario.validate()?;
    let rater = match &manifest.rater {
        RaterSource::None => None,
        RaterSource::TrainFresh => Some(fresh_rater(cfg)?),
        RaterSource::File(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading rater {path}"))?;
            Some(serde_json::from_str::<FitnessNet>(&text).with_context(|| format!("parsing rater {path}"))?)
        }
    };
    fs::create_dir_all(&args.out)?;
    write(&args.out.join("manifest.json"), to_json(&manifest)?)?;
    for &seed in &manifest.seeds {
        let scenario = vne_core::ScenarioConfig { rng_seed: seed, ..cfg.scenario.clone() };
        let solver = SolverParams { rng_seed: seed, ..cfg.solver.clone() };
        let out = run_scenario(&scenario, &solver, rater.as_ref())?;
        let dir = args.out.join(format!("seed_{seed}"));
        fs::create_dir_all(&dir)?;
        write(&dir.join("metrics.csv"), out.report.to_csv())?;
        write(&dir.join("summary.json"), to_json(&out.report.summary)?)?;
        write(&dir.join("timing.json"), to_json(&serde_json::json!({ "avg_runtime_ms": out.report.avg_runtime_ms }))?)?;
        let t = &out.report.summary.totals;
        let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!(
            "seed {seed}: arrivals {} accepted {} acceptance {} avg quotation {} mean link variance {:.1}",
            t.arrivals,
            t.accepted,
            show(t.acceptance_ratio),
            show(t.avg_quotation),
            out.report.summary.mean_link_variance
        );
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let mut tables = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("seed_")))
        .collect();
    entries.sort();
    for dir in entries {
        let path = dir.join("metrics.csv");
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        tables.push((path.display().to_string(), text));
    }
    if tables.is_empty() {
        bail!("no seed_*/metrics.csv under {}", args.input.display());
    }
    let rows = report::merge(&tables)?;
    let out = args.out.unwrap_or_else(|| args.input.join("report.csv"));
    write(&out, report::to_csv(&rows))?;
    let last = rows.iter().map(|((b, _, _), _)| *b).max().unwrap_or(0);
    println!("{} seeds merged into {}", tables.len(), out.display());
    for ((bucket, time_end, metric), agg) in &rows {
        if *bucket == last {
            if let (Some(m), Some(sd)) = (agg.mean(), agg.stddev()) {
                println!("  t={time_end} {metric}: {m:.4} ± {sd:.4}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
