use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use uqd_core::io::format_float;
use uqd_core::metrics::{estimator_study, Estimator, METRICS_HEADER};
use uqd_core::RngStream;
use uqd_cli::experiment::{evaluator, load_run_archive, recompute_metrics};
use uqd_cli::{compare, plot_experiment, run_experiment, ExperimentConfig, RunManifest, TimeAxis};

#[derive(Parser)]
#[command(name = "uqd", version, about = "Quality-Diversity under uncertainty: runs, metrics and comparisons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every algorithm, sampling size and replication of a config.
    Run(RunArgs),
    /// Recompute corrected metrics of a saved run.
    Metrics(MetricsArgs),
    /// Error of mean and median estimators against the number of reevaluations.
    EstimatorStudy(StudyArgs),
    /// Redraw the heatmaps of an output directory.
    Plot(OutArgs),
    /// Pareto front and rank-sum table from an output directory's summary.csv.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Evaluation threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    m_reevals: Option<usize>,
    /// Parse and check the config, then exit.
    #[arg(long)]
    validate: bool,
}

#[derive(Args)]
struct MetricsArgs {
    /// A `runs/<key>` directory.
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = 512)]
    m_reevals: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    run: PathBuf,
    /// Draws used for the ground truth.
    #[arg(long, default_value_t = 1024)]
    m_max: usize,
    #[arg(long, value_delimiter = ',', default_value = "16,64,256,1024")]
    ms: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct OutArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Evaluations,
    Seconds,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Time axis of the Pareto plot.
    #[arg(long, value_enum, default_value_t = Axis::Evaluations)]
    time: Axis,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::Metrics(a) => metrics(a),
        Command::EstimatorStudy(a) => study(a),
        Command::Plot(a) => plot_experiment(&a.out),
        Command::Compare(a) => {
            let axis = match a.time {
                Axis::Evaluations => TimeAxis::Evaluations,
                Axis::Seconds => TimeAxis::Seconds,
            };
            let sig = compare(&a.out, axis)?;
            println!("{} comparisons written to {}", sig.len(), a.out.join("significance.csv").display());
            Ok(())
        }
    }
}

fn run(a: RunArgs) -> Result<()> {
    let mut config = ExperimentConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(t) = a.threads {
        config.threads = t;
    }
    if let Some(m) = a.m_reevals {
        config.m_reevals = m;
    }
    config.validate()?;
    if a.validate {
        println!("{}: ok", a.config.display());
        return Ok(());
    }
    let outcome = run_experiment(&config, &a.out)?;
    let failed = outcome.records.iter().filter(|r| r.failed.is_some()).count();
    println!(
        "{} runs ({} failed, {} skipped), results in {}",
        outcome.records.len(),
        failed,
        outcome.skipped.len(),
        a.out.display()
    );
    if failed > 0 {
        bail!("{failed} runs failed, see summary.csv");
    }
    Ok(())
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let (report, corrected) = recompute_metrics(&a.run, a.m_reevals, a.seed, a.threads)?;
    let path = a.run.join("metrics_recomputed.csv");
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
    w.write_record(METRICS_HEADER)?;
    w.write_record(report.csv_fields(false))?;
    w.flush()?;
    let mut reeval = BufWriter::new(File::create(a.run.join("reeval_recomputed.csv"))?);
    uqd_core::metrics::write_reeval_csv(&corrected.results, &mut reeval)?;
    let c = report.corrected.as_ref().expect("recomputed row has corrected metrics");
    println!("training QD-Score   {}", report.qd_score);
    println!("corrected QD-Score  {}", c.qd_score);
    match c.qd_score_loss {
        Some(l) => println!("QD-Score loss       {l}"),
        None => println!("QD-Score loss       undefined"),
    }
    println!("written to {}", path.display());
    Ok(())
}

fn study(a: StudyArgs) -> Result<()> {
    let manifest = RunManifest::load(&a.run)?;
    let archive = load_run_archive(&a.run, &manifest).context("loading archive")?;
    let ev = evaluator(manifest.task.build()?, a.threads)?;
    let rows = estimator_study(&archive, &ev, a.m_max, &a.ms, &RngStream::new(a.seed, 0))?;
    let path = a.run.join("estimator_study.csv");
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
    w.write_record([
        "m",
        "estimator",
        "fitness_q1",
        "fitness_median",
        "fitness_q3",
        "descriptor_q1",
        "descriptor_median",
        "descriptor_q3",
    ])?;
    for r in &rows {
        let name = match r.estimator {
            Estimator::Mean => "mean",
            Estimator::Median => "median",
        };
        let (f, d) = (&r.fitness_error, &r.descriptor_error);
        w.write_record([
            r.m.to_string(),
            name.to_string(),
            format_float(f.q1),
            format_float(f.median),
            format_float(f.q3),
            format_float(d.q1),
            format_float(d.median),
            format_float(d.q3),
        ])?;
        println!("M={:<5} {:<6} fitness error {:.3e}  descriptor error {:.3e}", r.m, name, f.median, d.median);
    }
    w.flush()?;
    fs::metadata(&path)?;
    println!("written to {}", path.display());
    Ok(())
}
