//! `summary.csv`, `timing.csv` and the comparison tables built from them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};
use uqd_core::io::{format_float, parse_float};
use uqd_core::metrics::{collect_max_variance, reproducibility_score, VarianceKind};
use uqd_core::VarianceNormalizers;

use crate::analysis::{bonferroni, median, rank_sum_test, ParetoPoint};
use crate::experiment::RunRecord;
use crate::plot::ParetoMarker;

pub const SUMMARY_HEADER: [&str; 21] = [
    "key",
    "task",
    "algorithm",
    "variant",
    "sampling_size",
    "replication",
    "status",
    "generations",
    "evals_consumed",
    "metric_evals",
    "qd_score",
    "coverage",
    "max_fitness",
    "corrected_qd_score",
    "corrected_coverage",
    "corrected_max_fitness",
    "qd_score_loss",
    "reproducibility_score",
    "fitness_reproducibility_score",
    "convergence_generation",
    "convergence_evals",
];

/// Final numbers of one run. Reproducibility scores are normalised by the
/// largest variance any run of the experiment reached in each cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub key: String,
    pub task: String,
    pub algorithm: String,
    pub variant: String,
    pub sampling_size: usize,
    pub replication: usize,
    pub ok: bool,
    pub generations: u64,
    pub evals_consumed: u64,
    pub metric_evals: u64,
    pub qd_score: Option<f64>,
    pub coverage: Option<f64>,
    pub max_fitness: Option<f64>,
    pub corrected_qd_score: Option<f64>,
    pub corrected_coverage: Option<f64>,
    pub corrected_max_fitness: Option<f64>,
    pub qd_score_loss: Option<f64>,
    pub reproducibility_score: Option<f64>,
    pub fitness_reproducibility_score: Option<f64>,
    pub convergence_generation: Option<u64>,
    pub convergence_evals: Option<u64>,
}

impl SummaryRow {
    /// Values compared across algorithms in `significance.csv`.
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "corrected_qd_score" => self.corrected_qd_score,
            "qd_score_loss" => self.qd_score_loss,
            "reproducibility_score" => self.reproducibility_score,
            "fitness_reproducibility_score" => self.fitness_reproducibility_score,
            _ => None,
        }
    }

    fn fields(&self) -> Vec<String> {
        let f = |x: Option<f64>| x.map(format_float).unwrap_or_default();
        let i = |x: Option<u64>| x.map(|v| v.to_string()).unwrap_or_default();
        vec![
            self.key.clone(),
            self.task.clone(),
            self.algorithm.clone(),
            self.variant.clone(),
            self.sampling_size.to_string(),
            self.replication.to_string(),
            if self.ok { "ok" } else { "failed" }.to_string(),
            self.generations.to_string(),
            self.evals_consumed.to_string(),
            self.metric_evals.to_string(),
            f(self.qd_score),
            f(self.coverage),
            f(self.max_fitness),
            f(self.corrected_qd_score),
            f(self.corrected_coverage),
            f(self.corrected_max_fitness),
            f(self.qd_score_loss),
            f(self.reproducibility_score),
            f(self.fitness_reproducibility_score),
            i(self.convergence_generation),
            i(self.convergence_evals),
        ]
    }
}

pub const METRICS_COMPARED: [&str; 4] = [
    "corrected_qd_score",
    "qd_score_loss",
    "reproducibility_score",
    "fitness_reproducibility_score",
];

/// Per-cell maxima over every completed run.
pub fn comparison_normalizers(records: &[RunRecord]) -> Option<VarianceNormalizers> {
    let done: Vec<&RunRecord> = records.iter().filter(|r| r.failed.is_none()).collect();
    let cells = done.iter().flat_map(|r| r.final_results.iter().map(|(c, _)| c + 1)).max()?;
    Some(collect_max_variance(cells, done.iter().map(|r| r.final_results.as_slice())))
}

pub fn summarise(records: &[RunRecord]) -> Vec<SummaryRow> {
    let norm = comparison_normalizers(records);
    records
        .iter()
        .map(|r| {
            let ok = r.failed.is_none();
            let last = r.last.as_ref().filter(|_| ok);
            let c = last.and_then(|l| l.corrected.as_ref());
            let repro = |kind| match (&norm, ok) {
                (Some(n), true) => Some(reproducibility_score(&r.final_results, n, kind)),
                _ => None,
            };
            SummaryRow {
                key: r.key.dir_name(),
                task: r.key.task.clone(),
                algorithm: r.key.algorithm.clone(),
                variant: r.variant.name().to_string(),
                sampling_size: r.key.sampling_size,
                replication: r.key.replication,
                ok,
                generations: r.generations,
                evals_consumed: r.evaluations,
                metric_evals: r.last.as_ref().map_or(0, |l| l.metric_evals),
                qd_score: last.map(|l| l.qd_score),
                coverage: last.map(|l| l.coverage),
                max_fitness: last.and_then(|l| l.max_fitness),
                corrected_qd_score: c.map(|c| c.qd_score),
                corrected_coverage: c.map(|c| c.coverage),
                corrected_max_fitness: c.and_then(|c| c.max_fitness),
                qd_score_loss: c.and_then(|c| c.qd_score_loss),
                reproducibility_score: repro(VarianceKind::Descriptor),
                fitness_reproducibility_score: repro(VarianceKind::Fitness),
                convergence_generation: r.convergence.filter(|_| ok).map(|c| c.0),
                convergence_evals: r.convergence.filter(|_| ok).map(|c| c.1),
            }
        })
        .collect()
}

pub fn write_summary(rows: &[SummaryRow], out: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out.join("summary.csv"))?));
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

fn column<'a>(headers: &'a csv::StringRecord, rec: &'a csv::StringRecord) -> impl Fn(&str) -> Result<&'a str> {
    move |name: &str| {
        let i = headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("missing column {name}"))?;
        Ok(rec.get(i).unwrap_or(""))
    }
}

fn opt_float(s: &str) -> Result<Option<f64>> {
    Ok(if s.is_empty() { None } else { Some(parse_float(s)?) })
}

fn opt_int(s: &str) -> Result<Option<u64>> {
    Ok(if s.is_empty() { None } else { Some(s.parse()?) })
}

pub fn read_summary(out: &Path) -> Result<Vec<SummaryRow>> {
    let path = out.join("summary.csv");
    let mut r = csv::Reader::from_reader(File::open(&path).with_context(|| format!("opening {}", path.display()))?);
    let headers = r.headers()?.clone();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let get = column(&headers, &rec);
        let row = (|| -> Result<SummaryRow> {
            Ok(SummaryRow {
                key: get("key")?.to_string(),
                task: get("task")?.to_string(),
                algorithm: get("algorithm")?.to_string(),
                variant: get("variant")?.to_string(),
                sampling_size: get("sampling_size")?.parse()?,
                replication: get("replication")?.parse()?,
                ok: get("status")? == "ok",
                generations: get("generations")?.parse()?,
                evals_consumed: get("evals_consumed")?.parse()?,
                metric_evals: get("metric_evals")?.parse()?,
                qd_score: opt_float(get("qd_score")?)?,
                coverage: opt_float(get("coverage")?)?,
                max_fitness: opt_float(get("max_fitness")?)?,
                corrected_qd_score: opt_float(get("corrected_qd_score")?)?,
                corrected_coverage: opt_float(get("corrected_coverage")?)?,
                corrected_max_fitness: opt_float(get("corrected_max_fitness")?)?,
                qd_score_loss: opt_float(get("qd_score_loss")?)?,
                reproducibility_score: opt_float(get("reproducibility_score")?)?,
                fitness_reproducibility_score: opt_float(get("fitness_reproducibility_score")?)?,
                convergence_generation: opt_int(get("convergence_generation")?)?,
                convergence_evals: opt_int(get("convergence_evals")?)?,
            })
        })()
        .with_context(|| format!("{} row {}", path.display(), line + 1))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Wall-clock numbers, kept out of `summary.csv` so that it is reproducible.
pub fn write_timing(records: &[RunRecord], out: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out.join("timing.csv"))?));
    w.write_record(["key", "wall_clock_s", "convergence_s"])?;
    for r in records {
        let conv = r.convergence.filter(|_| r.failed.is_none()).map(|c| format!("{:.6}", c.2));
        w.write_record([r.key.dir_name(), format!("{:.6}", r.wall_clock_s), conv.unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_convergence_seconds(out: &Path) -> Result<HashMap<String, f64>> {
    let path = out.join("timing.csv");
    let mut r = csv::Reader::from_reader(File::open(&path).with_context(|| format!("opening {}", path.display()))?);
    let mut map = HashMap::new();
    for rec in r.records() {
        let rec = rec?;
        if let (Some(key), Some(s)) = (rec.get(0), rec.get(2)) {
            if !s.is_empty() {
                map.insert(key.to_string(), s.parse()?);
            }
        }
    }
    Ok(map)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeAxis {
    Evaluations,
    Seconds,
}

impl TimeAxis {
    pub fn label(self) -> &'static str {
        match self {
            TimeAxis::Evaluations => "evaluations to convergence",
            TimeAxis::Seconds => "seconds to convergence",
        }
    }
}

/// Coordinate-wise median over replications of every (algorithm, sampling size).
pub fn pareto_markers(rows: &[SummaryRow], seconds: Option<&HashMap<String, f64>>) -> Vec<ParetoMarker> {
    let mut groups: BTreeMap<(String, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.ok) {
        let time = match seconds {
            Some(map) => map.get(&r.key).copied(),
            None => r.convergence_evals.map(|e| e as f64),
        };
        if let (Some(qd), Some(t)) = (r.corrected_qd_score, time) {
            let g = groups.entry((r.algorithm.clone(), r.sampling_size)).or_default();
            g.0.push(qd);
            g.1.push(t);
        }
    }
    groups
        .into_iter()
        .map(|((algorithm, sampling_size), (qd, t))| ParetoMarker {
            algorithm,
            sampling_size,
            point: ParetoPoint::new(median(&qd).unwrap(), median(&t).unwrap()),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub task: String,
    pub metric: String,
    pub sampling_size: usize,
    pub algorithm_a: String,
    pub algorithm_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub median_a: f64,
    pub median_b: f64,
    pub u: f64,
    pub p_value: f64,
    pub p_adjusted: f64,
    pub comparisons: usize,
}

/// Pairwise rank-sum tests between algorithms at each sampling size, with
/// Bonferroni correction over the pairs of one (task, metric, sampling size).
/// Groups with fewer than 3 values are left out.
pub fn significance(rows: &[SummaryRow]) -> Vec<Comparison> {
    let mut out = Vec::new();
    let tasks: BTreeSet<&str> = rows.iter().map(|r| r.task.as_str()).collect();
    let sizes: BTreeSet<usize> = rows.iter().map(|r| r.sampling_size).collect();
    for task in tasks {
        for metric in METRICS_COMPARED {
            for &s in &sizes {
                let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
                for r in rows.iter().filter(|r| r.ok && r.task == task && r.sampling_size == s) {
                    if let Some(v) = r.metric(metric) {
                        groups.entry(r.algorithm.as_str()).or_default().push(v);
                    }
                }
                groups.retain(|_, v| v.len() >= 3);
                let names: Vec<&str> = groups.keys().copied().collect();
                let mut family = Vec::new();
                for (i, a) in names.iter().enumerate() {
                    for b in &names[i + 1..] {
                        let (xa, xb) = (&groups[a], &groups[b]);
                        if let Ok(t) = rank_sum_test(xa, xb) {
                            family.push(Comparison {
                                task: task.to_string(),
                                metric: metric.to_string(),
                                sampling_size: s,
                                algorithm_a: a.to_string(),
                                algorithm_b: b.to_string(),
                                n_a: xa.len(),
                                n_b: xb.len(),
                                median_a: median(xa).unwrap(),
                                median_b: median(xb).unwrap(),
                                u: t.u,
                                p_value: t.p_value,
                                p_adjusted: 0.0,
                                comparisons: 0,
                            });
                        }
                    }
                }
                let m = family.len();
                for c in &mut family {
                    c.p_adjusted = bonferroni(c.p_value, m);
                    c.comparisons = m;
                }
                out.extend(family);
            }
        }
    }
    out
}

pub fn write_significance(comparisons: &[Comparison], out: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out.join("significance.csv"))?));
    w.write_record([
        "task",
        "metric",
        "sampling_size",
        "algorithm_a",
        "algorithm_b",
        "n_a",
        "n_b",
        "median_a",
        "median_b",
        "u",
        "p_value",
        "p_adjusted",
        "comparisons",
    ])?;
    for c in comparisons {
        w.write_record([
            c.task.clone(),
            c.metric.clone(),
            c.sampling_size.to_string(),
            c.algorithm_a.clone(),
            c.algorithm_b.clone(),
            c.n_a.to_string(),
            c.n_b.to_string(),
            format_float(c.median_a),
            format_float(c.median_b),
            format_float(c.u),
            format_float(c.p_value),
            format_float(c.p_adjusted),
            c.comparisons.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn check_single_task(rows: &[SummaryRow]) -> Result<()> {
    let tasks: BTreeSet<&str> = rows.iter().map(|r| r.task.as_str()).collect();
    if tasks.len() > 1 {
        bail!("summary mixes tasks {tasks:?}; compare one task at a time");
    }
    Ok(())
}
