//! Runs every (algorithm, sampling size, replication) of a configuration and
//! writes its artifacts.
//!
//! Output layout under the output directory:
//!
//! ```text
//! config.toml              resolved configuration
//! runs/<key>/metrics.csv   one row per logged generation
//! runs/<key>/timing.csv    wall clock per generation
//! runs/<key>/archive.csv   final training archive
//! runs/<key>/corrected.csv final corrected archive
//! runs/<key>/reeval.csv    per-cell reevaluation statistics
//! runs/<key>/centroids.csv tessellation
//! runs/<key>/run.json      manifest
//! runs/<key>/*.svg         heatmaps
//! summary.csv, timing.csv, pareto.svg, significance.csv
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use uqd_core::metrics::{time_to_convergence, write_reeval_csv, METRICS_HEADER};
use uqd_core::rng::label;
use uqd_core::{
    corrected_archive, generate_cvt, AlgorithmConfig, Archive, Centroids, CorrectedArchive, CorrectedMetrics, CorrectedMode,
    Evaluator, MetricsReport, Optimizer, ReevalResult, RngStream, Task, Variant, VariationParams,
};

use crate::config::{AlgorithmEntry, ExperimentConfig, TaskConfig};
use crate::summary::{self, SummaryRow};

/// Stream label for per-run algorithm seeds.
const RUN: u64 = 0x5255_4e00;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunKey {
    pub task: String,
    pub algorithm: String,
    pub sampling_size: usize,
    pub replication: usize,
}

impl RunKey {
    pub fn dir_name(&self) -> String {
        format!("{}__{}__s{}__r{}", self.task, self.algorithm, self.sampling_size, self.replication)
    }
}

/// Everything needed to reload a run's archive and task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub key: RunKey,
    pub variant: Variant,
    pub samples_per_offspring: u32,
    pub depth: usize,
    pub variation: VariationParams,
    pub task: TaskConfig,
    pub niches: usize,
    pub seed: u64,
    pub generations: u64,
    pub m_reevals: usize,
    pub corrected_mode: CorrectedMode,
    pub completed_generations: u64,
    pub evaluations: u64,
    pub failed: Option<String>,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join("run.json");
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn algorithm_config(&self) -> AlgorithmConfig {
        let mut c = AlgorithmConfig::new(self.variant, self.key.sampling_size);
        c.samples_per_offspring = self.samples_per_offspring;
        c.depth = self.depth;
        c.variation = self.variation;
        c
    }

    fn save(&self, run_dir: &Path) -> Result<()> {
        fs::write(run_dir.join("run.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Centroids and final training archive of a saved run.
pub fn load_run_archive(run_dir: &Path, manifest: &RunManifest) -> Result<Archive> {
    let centroids = Arc::new(Centroids::read_csv(File::open(run_dir.join("centroids.csv"))?)?);
    let archive = manifest.algorithm_config().new_archive(centroids)?;
    Ok(archive.read_csv_into(File::open(run_dir.join("archive.csv"))?)?)
}

pub fn evaluator(task: Arc<dyn Task>, threads: usize) -> Result<Evaluator> {
    Ok(if threads == 0 {
        Evaluator::new(task)
    } else {
        Evaluator::with_threads(task, threads)?
    })
}

/// One finished or failed run.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub key: RunKey,
    pub variant: Variant,
    pub dir: PathBuf,
    pub failed: Option<String>,
    pub generations: u64,
    pub evaluations: u64,
    /// Last logged row; its reproducibility scores use the run's own variances.
    pub last: Option<MetricsReport>,
    pub final_results: Vec<(usize, ReevalResult)>,
    /// Generation, evaluations and seconds at which the corrected QD-Score
    /// first reached 95% of its final value.
    pub convergence: Option<(u64, u64, f64)>,
    pub wall_clock_s: f64,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    pub skipped: Vec<String>,
    pub summary: Vec<SummaryRow>,
}

/// Tessellation shared by every algorithm and sampling size of a replication.
pub fn tessellation(config: &ExperimentConfig, replication: usize, descriptor_dim: usize) -> Result<Centroids> {
    let stream = RngStream::new(config.seed, 0).path(&[label::CVT, replication as u64]);
    Ok(generate_cvt(config.niches, descriptor_dim, config.cvt.samples, config.cvt.iterations, &stream)?)
}

/// Algorithm root stream; shared by the algorithms of one (sampling size, replication).
pub fn run_stream(seed: u64, sampling_size: usize, replication: usize) -> RngStream {
    RngStream::new(seed, 0).path(&[RUN, sampling_size as u64, replication as u64])
}

pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<ExperimentOutcome> {
    config.validate()?;
    fs::create_dir_all(out.join("runs")).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.toml"), config.to_toml()?)?;
    let task = config.task.build()?;
    let mut records = Vec::new();
    let mut skipped = Vec::new();

    for replication in 0..config.replications {
        let centroids = Arc::new(tessellation(config, replication, task.spec().descriptor_dim)?);
        for entry in &config.algorithms {
            for &s in config.sampling_sizes_for(entry) {
                let algo = entry.algorithm_config(s);
                let key = RunKey {
                    task: config.task.label().to_string(),
                    algorithm: entry.label(),
                    sampling_size: s,
                    replication,
                };
                if algo.variant.reevaluates_archive() && s <= algo.capacity(config.niches) {
                    let notice = format!(
                        "skipping {}: sampling size {s} does not exceed the archive capacity k*D = {}",
                        key.dir_name(),
                        algo.capacity(config.niches)
                    );
                    if replication == 0 {
                        warn!("{notice}");
                    }
                    skipped.push(notice);
                    continue;
                }
                info!("running {}", key.dir_name());
                let record = run_one(config, entry, key, Arc::clone(&task), Arc::clone(&centroids), out)?;
                if let Some(e) = &record.failed {
                    warn!("{} failed: {e}", record.key.dir_name());
                }
                records.push(record);
            }
        }
    }

    let summary = summary::summarise(&records);
    summary::write_summary(&summary, out)?;
    summary::write_timing(&records, out)?;
    crate::plot_experiment(out)?;
    crate::compare(out, summary::TimeAxis::Evaluations)?;
    Ok(ExperimentOutcome { records, skipped, summary })
}

fn open_csv(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    )))
}

/// Corrected metrics for the current archive; the reproducibility scores
/// use the run's own variances.
fn corrected_row(
    opt: &Optimizer,
    config: &ExperimentConfig,
    root: &RngStream,
) -> Result<(CorrectedArchive, CorrectedMetrics)> {
    let archive = opt.archive();
    let offset = opt.evaluator().spec().qd_offset;
    let stream = root.child(opt.generation());
    let corrected = corrected_archive(archive, opt.evaluator(), config.m_reevals, config.corrected_mode, &stream)?;
    let metrics = CorrectedMetrics::compute(&corrected, archive.qd_score(offset), offset, None);
    Ok((corrected, metrics))
}

fn run_one(
    config: &ExperimentConfig,
    entry: &AlgorithmEntry,
    key: RunKey,
    task: Arc<dyn Task>,
    centroids: Arc<Centroids>,
    out: &Path,
) -> Result<RunRecord> {
    let dir = out.join("runs").join(key.dir_name());
    fs::create_dir_all(&dir)?;
    let algo = entry.algorithm_config(key.sampling_size);
    let mut manifest = RunManifest {
        key: key.clone(),
        variant: algo.variant,
        samples_per_offspring: algo.samples_per_offspring,
        depth: algo.depth,
        variation: algo.variation,
        task: config.task.clone(),
        niches: config.niches,
        seed: config.seed,
        generations: config.generations,
        m_reevals: config.m_reevals,
        corrected_mode: config.corrected_mode,
        completed_generations: 0,
        evaluations: 0,
        failed: None,
    };
    manifest.save(&dir)?;
    centroids.write_csv(BufWriter::new(File::create(dir.join("centroids.csv"))?))?;

    let mut record = RunRecord {
        key,
        variant: algo.variant,
        dir: dir.clone(),
        failed: None,
        generations: 0,
        evaluations: 0,
        last: None,
        final_results: Vec::new(),
        convergence: None,
        wall_clock_s: 0.0,
    };
    let mut rows: Vec<MetricsReport> = Vec::new();
    let result = drive(config, algo, task, centroids, &dir, &mut record, &mut rows);
    if let Err(e) = result {
        record.failed = Some(format!("{e:#}"));
    }

    let series: Vec<f64> = rows.iter().filter_map(|r| r.corrected.as_ref().map(|c| c.qd_score)).collect();
    let logged: Vec<&MetricsReport> = rows.iter().filter(|r| r.corrected.is_some()).collect();
    if let Ok(i) = time_to_convergence(&series) {
        let r = logged[i];
        record.convergence = Some((r.generation, r.evals_consumed, r.wall_clock_s));
    }
    record.last = rows.last().cloned();
    manifest.completed_generations = record.generations;
    manifest.evaluations = record.evaluations;
    manifest.failed = record.failed.clone();
    manifest.save(&dir)?;
    Ok(record)
}

fn drive(
    config: &ExperimentConfig,
    algo: AlgorithmConfig,
    task: Arc<dyn Task>,
    centroids: Arc<Centroids>,
    dir: &Path,
    record: &mut RunRecord,
    rows: &mut Vec<MetricsReport>,
) -> Result<()> {
    let root = run_stream(config.seed, record.key.sampling_size, record.key.replication);
    let mut metrics = open_csv(&dir.join("metrics.csv"))?;
    metrics.write_record(METRICS_HEADER)?;
    let mut timing = open_csv(&dir.join("timing.csv"))?;
    timing.write_record(["generation", "evals_consumed", "wall_clock_s"])?;

    let clock = Instant::now();
    let mut opt = Optimizer::new(algo, centroids, evaluator(task, config.threads)?, root)?;
    let mut metric_evals = 0u64;
    let mut last_results = Vec::new();
    let mut corrected_archive_final = None;
    loop {
        let g = opt.generation();
        let elapsed = clock.elapsed().as_secs_f64();
        timing.write_record([g.to_string(), opt.evaluations().to_string(), format!("{elapsed:.6}")])?;
        let is_last = g == config.generations;
        let due = is_last || (config.metric_cadence > 0 && g % config.metric_cadence == 0);
        if due {
            let offset = opt.evaluator().spec().qd_offset;
            let (corrected, c) = corrected_row(&opt, config, &root)?;
            metric_evals += corrected.evaluations as u64;
            let row = MetricsReport {
                generation: g,
                evals_consumed: opt.evaluations(),
                metric_evals,
                qd_score: opt.archive().qd_score(offset),
                coverage: opt.archive().coverage(),
                max_fitness: opt.archive().max_fitness().ok(),
                corrected: Some(c),
                wall_clock_s: elapsed,
            };
            metrics.write_record(row.csv_fields(false))?;
            metrics.flush()?;
            rows.push(row);
            if is_last {
                last_results = corrected.results.clone();
                corrected_archive_final = Some(corrected);
            }
        }
        record.generations = g;
        record.evaluations = opt.evaluations();
        if is_last {
            break;
        }
        opt.step()?;
    }
    timing.flush()?;
    record.wall_clock_s = clock.elapsed().as_secs_f64();

    opt.archive().write_csv(BufWriter::new(File::create(dir.join("archive.csv"))?))?;
    if let Some(c) = corrected_archive_final {
        c.archive.write_csv(BufWriter::new(File::create(dir.join("corrected.csv"))?))?;
    }
    let mut reeval = BufWriter::new(File::create(dir.join("reeval.csv"))?);
    write_reeval_csv(&last_results, &mut reeval)?;
    reeval.flush()?;
    record.final_results = last_results;
    Ok(())
}

/// Corrected metrics of a saved run, recomputed with `m` reevaluations.
pub fn recompute_metrics(run_dir: &Path, m: usize, seed: u64, threads: usize) -> Result<(MetricsReport, CorrectedArchive)> {
    let manifest = RunManifest::load(run_dir)?;
    if let Some(e) = &manifest.failed {
        bail!("run {} failed and has no final archive: {e}", manifest.key.dir_name());
    }
    let archive = load_run_archive(run_dir, &manifest)?;
    let ev = evaluator(manifest.task.build()?, threads)?;
    let offset = ev.spec().qd_offset;
    let stream = RngStream::new(seed, 0).child(label::METRICS);
    let corrected = corrected_archive(&archive, &ev, m, manifest.corrected_mode, &stream)?;
    let c = CorrectedMetrics::compute(&corrected, archive.qd_score(offset), offset, None);
    let report = MetricsReport {
        generation: manifest.completed_generations,
        evals_consumed: manifest.evaluations,
        metric_evals: corrected.evaluations as u64,
        qd_score: archive.qd_score(offset),
        coverage: archive.coverage(),
        max_fitness: archive.max_fitness().ok(),
        corrected: Some(c),
        wall_clock_s: 0.0,
    };
    Ok((report, corrected))
}
