//! Experiment harness for `uqd-core`: TOML configs, replicated runs, CSV logs,
//! SVG plots and the Pareto / rank-sum comparison of finished experiments.

pub mod analysis;
pub mod config;
pub mod experiment;
pub mod plot;
pub mod summary;

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use uqd_core::metrics::{collect_max_variance, read_reeval_csv, VarianceKind};
use uqd_core::{Archive, ReevalResult};

pub use config::{AlgorithmEntry, ExperimentConfig, TaskConfig, TaskName};
pub use experiment::{run_experiment, ExperimentOutcome, RunKey, RunManifest, RunRecord};
pub use summary::{SummaryRow, TimeAxis};

type LoadedRun = (PathBuf, RunManifest, Vec<(usize, ReevalResult)>);

/// Run directories under `out/runs`, in name order.
pub fn run_dirs(out: &Path) -> Result<Vec<PathBuf>> {
    let runs = out.join("runs");
    let mut dirs: Vec<PathBuf> = fs::read_dir(&runs)
        .with_context(|| format!("listing {}", runs.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("run.json").is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Redraw the heatmaps of every completed run. Reproducibility maps share
/// per-cell normalisers across all runs of the directory.
pub fn plot_experiment(out: &Path) -> Result<()> {
    let mut done: Vec<LoadedRun> = Vec::new();
    for dir in run_dirs(out)? {
        let manifest = RunManifest::load(&dir)?;
        if manifest.failed.is_some() {
            continue;
        }
        let results = read_reeval_csv(File::open(dir.join("reeval.csv"))?)?;
        done.push((dir, manifest, results));
    }
    let Some(cells) = done.first().map(|d| d.1.niches) else {
        return Ok(());
    };
    let norm = collect_max_variance(cells, done.iter().map(|d| d.2.as_slice()));
    for (dir, manifest, results) in &done {
        let task = manifest.task.build()?;
        let range = task.spec().fitness_range;
        let training = experiment::load_run_archive(dir, manifest)?;
        if training.centroids().dim() != 2 {
            warn!("{}: descriptor space is not 2-D, no heatmaps", manifest.key.dir_name());
            continue;
        }
        let corrected = Archive::flat(std::sync::Arc::clone(training.centroids()))
            .read_csv_into(File::open(dir.join("corrected.csv"))?)?;
        let name = manifest.key.dir_name();
        let svgs = [
            ("fitness.svg", plot::fitness_heatmap(&training, range, &format!("{name}: training fitness"))?),
            ("corrected_fitness.svg", plot::fitness_heatmap(&corrected, range, &format!("{name}: corrected fitness"))?),
            (
                "reproducibility.svg",
                plot::reproducibility_heatmap(
                    training.centroids(),
                    results,
                    &norm,
                    VarianceKind::Descriptor,
                    &format!("{name}: 1 - normalised descriptor variance"),
                )?,
            ),
            (
                "fitness_reproducibility.svg",
                plot::reproducibility_heatmap(
                    training.centroids(),
                    results,
                    &norm,
                    VarianceKind::Fitness,
                    &format!("{name}: 1 - normalised fitness variance"),
                )?,
            ),
        ];
        for (file, svg) in svgs {
            fs::write(dir.join(file), svg)?;
        }
    }
    Ok(())
}

/// `pareto.svg` and `significance.csv` from `summary.csv`.
pub fn compare(out: &Path, axis: TimeAxis) -> Result<Vec<summary::Comparison>> {
    let rows = summary::read_summary(out)?;
    summary::check_single_task(&rows)?;
    let seconds = match axis {
        TimeAxis::Seconds => Some(summary::read_convergence_seconds(out)?),
        TimeAxis::Evaluations => None,
    };
    let markers = summary::pareto_markers(&rows, seconds.as_ref());
    if markers.is_empty() {
        info!("no completed runs, skipping pareto.svg");
    } else {
        fs::write(out.join("pareto.svg"), plot::render_pareto_plot(&markers, axis.label())?)?;
    }
    let sig = summary::significance(&rows);
    summary::write_significance(&sig, out)?;
    Ok(sig)
}
