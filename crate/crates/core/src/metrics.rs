//! Metrics for uncertain domains, computed from fresh reevaluations that are
//! never charged to the algorithm's budget.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archive::{in_cell_select, Archive, InCellSelector};
use crate::error::{Error, Result};
use crate::io::{format_float, format_vector, parse_float, parse_vector};
use crate::model::{Evaluation, SolutionRecord};
use crate::rng::{label, RngStream};
use crate::tasks::{EvalRequest, Evaluator};

pub const DEFAULT_REEVALUATIONS: usize = 512;

/// Median with the two middle values averaged for even lengths. Reorders `xs`.
pub fn median_in_place(xs: &mut [f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("median of no values"));
    }
    let n = xs.len();
    let (lower, &mut upper, _) = xs.select_nth_unstable_by(n / 2, f64::total_cmp);
    if n % 2 == 1 {
        Ok(upper)
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok((below + upper) / 2.0)
    }
}

pub fn median(xs: &[f64]) -> Result<f64> {
    median_in_place(&mut xs.to_vec())
}

/// Component-wise median of equal-length vectors.
pub fn median_per_dimension(samples: &[Vec<f64>]) -> Result<Vec<f64>> {
    let dim = samples.first().ok_or(Error::EmptyInput("median of no vectors"))?.len();
    let mut column = Vec::with_capacity(samples.len());
    (0..dim)
        .map(|j| {
            column.clear();
            for s in samples {
                Error::check_dim("median sample", dim, s.len())?;
                column.push(s[j]);
            }
            median_in_place(&mut column)
        })
        .collect()
}

/// Welford mean and sum of squared deviations. Identical inputs give their
/// value and exactly 0.
fn welford(xs: impl IntoIterator<Item = f64>) -> (f64, f64, usize) {
    let (mut mean, mut m2, mut n) = (0.0, 0.0, 0usize);
    for x in xs {
        n += 1;
        let delta = x - mean;
        mean += delta / n as f64;
        m2 += delta * (x - mean);
    }
    (mean, m2, n)
}

fn mean(xs: &[f64]) -> f64 {
    welford(xs.iter().copied()).0
}

/// Unbiased sample variance; 0 for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let (_, m2, n) = welford(xs.iter().copied());
    if n < 2 {
        0.0
    } else {
        m2 / (n - 1) as f64
    }
}

/// Summary of `m` reevaluations of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ReevalResult {
    pub median_fitness: f64,
    pub median_descriptor: Vec<f64>,
    pub fitness_variance: f64,
    pub descriptor_variance: Vec<f64>,
    pub m: usize,
}

impl ReevalResult {
    pub fn from_evaluations(evals: &[Evaluation]) -> Result<Self> {
        if evals.is_empty() {
            return Err(Error::EmptyInput("reevaluations"));
        }
        let fitness: Vec<f64> = evals.iter().map(|e| e.fitness).collect();
        let descriptors: Vec<Vec<f64>> = evals.iter().map(|e| e.descriptor.clone()).collect();
        let dim = descriptors[0].len();
        let descriptor_variance = (0..dim)
            .map(|j| sample_variance(&descriptors.iter().map(|d| d[j]).collect::<Vec<_>>()))
            .collect();
        Ok(Self {
            median_fitness: median(&fitness)?,
            median_descriptor: median_per_dimension(&descriptors)?,
            fitness_variance: sample_variance(&fitness),
            descriptor_variance,
            m: evals.len(),
        })
    }

    /// Mean of the per-dimension descriptor variances.
    pub fn scalar_descriptor_variance(&self) -> f64 {
        if self.descriptor_variance.is_empty() {
            0.0
        } else {
            mean(&self.descriptor_variance)
        }
    }

    pub fn variance(&self, kind: VarianceKind) -> f64 {
        match kind {
            VarianceKind::Descriptor => self.scalar_descriptor_variance(),
            VarianceKind::Fitness => self.fitness_variance,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarianceKind {
    Descriptor,
    Fitness,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectedMode {
    /// Draw each reevaluation's record with the archive's own in-cell selector.
    #[default]
    InCellSelector,
    /// Always reevaluate the best record of the cell.
    BestOfCell,
}

/// Flat archive rebuilt from per-cell medians, plus the per-cell statistics,
/// keyed by the training archive's cell index.
#[derive(Clone, Debug)]
pub struct CorrectedArchive {
    pub archive: Archive,
    pub results: Vec<(usize, ReevalResult)>,
    /// Evaluations spent, kept apart from the algorithm's counters.
    pub evaluations: usize,
}

/// Reevaluate every occupied cell `m` times and refill a fresh flat archive
/// with the median fitness and per-dimension median descriptor of each cell.
///
/// Draw `t` of cell `c` selects its record and noise from `METRICS / c / t`.
pub fn corrected_archive(
    archive: &Archive,
    evaluator: &Evaluator,
    m: usize,
    mode: CorrectedMode,
    stream: &RngStream,
) -> Result<CorrectedArchive> {
    if m < 2 {
        return Err(Error::config(format!("corrected metrics need M >= 2 reevaluations, got {m}")));
    }
    let selector = match mode {
        CorrectedMode::InCellSelector => archive.selector(),
        CorrectedMode::BestOfCell => InCellSelector::Best,
    };
    let occupied = archive.occupied_cells();
    let base = stream.child(label::METRICS);
    let mut requests = Vec::with_capacity(occupied.len() * m);
    for &c in &occupied {
        let cell_stream = base.child(c as u64);
        for t in 0..m {
            let draw = cell_stream.child(t as u64);
            let rec = in_cell_select(archive.cell(c), selector, &mut draw.rng())?;
            requests.push(EvalRequest {
                genotype: &rec.genotype,
                count: 1,
                stream: draw.child(label::EVAL),
            });
        }
    }
    let evals: Vec<Evaluation> = evaluator.evaluate_batch(&requests)?.into_iter().flatten().collect();
    let results: Vec<(usize, ReevalResult)> = evaluator.install(|| {
        occupied
            .par_iter()
            .zip(evals.par_chunks_exact(m))
            .map(|(&c, draws)| Ok((c, ReevalResult::from_evaluations(draws)?)))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut corrected = Archive::flat(std::sync::Arc::clone(archive.centroids()));
    let mut unused = stream.rng();
    for (c, r) in &results {
        let best = archive.best_of_cell(*c).expect("occupied cell");
        let phantom = SolutionRecord {
            genotype: best.genotype.clone(),
            eval_count: u32::try_from(m).unwrap_or(u32::MAX),
            mean_fitness: r.median_fitness,
            mean_descriptor: r.median_descriptor.clone(),
        };
        corrected.try_add(phantom, &mut unused)?;
    }
    Ok(CorrectedArchive {
        archive: corrected,
        evaluations: occupied.len() * m,
        results,
    })
}

/// `(training - corrected) / training`, `None` when the training score is 0.
pub fn qd_score_loss(training_qd: f64, corrected_qd: f64) -> Option<f64> {
    if training_qd == 0.0 {
        None
    } else {
        Some((training_qd - corrected_qd) / training_qd)
    }
}

/// Per-cell maxima of the observed variances across a comparison set.
/// A cell never observed keeps a normaliser of 0.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceNormalizers {
    pub descriptor: Vec<f64>,
    pub fitness: Vec<f64>,
}

impl VarianceNormalizers {
    pub fn new(num_cells: usize) -> Self {
        Self {
            descriptor: vec![0.0; num_cells],
            fitness: vec![0.0; num_cells],
        }
    }

    pub fn observe(&mut self, results: &[(usize, ReevalResult)]) {
        for (c, r) in results {
            self.descriptor[*c] = self.descriptor[*c].max(r.scalar_descriptor_variance());
            self.fitness[*c] = self.fitness[*c].max(r.fitness_variance);
        }
    }

    pub fn get(&self, kind: VarianceKind) -> &[f64] {
        match kind {
            VarianceKind::Descriptor => &self.descriptor,
            VarianceKind::Fitness => &self.fitness,
        }
    }
}

pub fn collect_max_variance<'a>(
    num_cells: usize,
    runs: impl IntoIterator<Item = &'a [(usize, ReevalResult)]>,
) -> VarianceNormalizers {
    let mut n = VarianceNormalizers::new(num_cells);
    for r in runs {
        n.observe(r);
    }
    n
}

/// `Σ_cells (1 - v / max_v)`; a cell whose normaliser is 0 contributes 1.
pub fn reproducibility_score(results: &[(usize, ReevalResult)], normalizers: &VarianceNormalizers, kind: VarianceKind) -> f64 {
    let norm = normalizers.get(kind);
    results
        .iter()
        .map(|(c, r)| {
            let max = norm[*c];
            if max > 0.0 {
                1.0 - (r.variance(kind) / max).min(1.0)
            } else {
                1.0
            }
        })
        .sum()
}

/// Index of the first value reaching 95% of the last value, measured from 0.
pub fn time_to_convergence(values: &[f64]) -> Result<usize> {
    let last = *values.last().ok_or(Error::EmptyInput("convergence series"))?;
    let target = 0.95 * last;
    let reached = |v: f64| if last >= 0.0 { v >= target } else { v <= target };
    Ok(values.iter().position(|&v| reached(v)).unwrap_or(values.len() - 1))
}

/// One training-time metrics row, with corrected metrics when computed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub generation: u64,
    pub evals_consumed: u64,
    pub metric_evals: u64,
    pub qd_score: f64,
    pub coverage: f64,
    pub max_fitness: Option<f64>,
    pub corrected: Option<CorrectedMetrics>,
    pub wall_clock_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrectedMetrics {
    pub qd_score: f64,
    pub coverage: f64,
    pub max_fitness: Option<f64>,
    pub qd_score_loss: Option<f64>,
    pub reproducibility_score: f64,
    pub fitness_reproducibility_score: f64,
}

impl CorrectedMetrics {
    /// Scores of a corrected archive. Reproducibility uses `normalizers`, or
    /// the run's own variances when none are given.
    pub fn compute(
        corrected: &CorrectedArchive,
        training_qd: f64,
        qd_offset: f64,
        normalizers: Option<&VarianceNormalizers>,
    ) -> Self {
        let own;
        let norm = match normalizers {
            Some(n) => n,
            None => {
                own = collect_max_variance(corrected.archive.num_cells(), [corrected.results.as_slice()]);
                &own
            }
        };
        let qd_score = corrected.archive.qd_score(qd_offset);
        Self {
            qd_score,
            coverage: corrected.archive.coverage(),
            max_fitness: corrected.archive.max_fitness().ok(),
            qd_score_loss: qd_score_loss(training_qd, qd_score),
            reproducibility_score: reproducibility_score(&corrected.results, norm, VarianceKind::Descriptor),
            fitness_reproducibility_score: reproducibility_score(&corrected.results, norm, VarianceKind::Fitness),
        }
    }
}

pub const METRICS_HEADER: [&str; 14] = [
    "generation",
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
    "has_corrected",
    "wall_clock_s",
];

impl MetricsReport {
    /// CSV fields in [`METRICS_HEADER`] order; undefined values are empty.
    /// `with_clock = false` blanks the wall-clock column.
    pub fn csv_fields(&self, with_clock: bool) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(format_float).unwrap_or_default();
        let c = self.corrected.as_ref();
        vec![
            self.generation.to_string(),
            self.evals_consumed.to_string(),
            self.metric_evals.to_string(),
            format_float(self.qd_score),
            format_float(self.coverage),
            opt(self.max_fitness),
            opt(c.map(|c| c.qd_score)),
            opt(c.map(|c| c.coverage)),
            opt(c.and_then(|c| c.max_fitness)),
            opt(c.and_then(|c| c.qd_score_loss)),
            opt(c.map(|c| c.reproducibility_score)),
            opt(c.map(|c| c.fitness_reproducibility_score)),
            u8::from(c.is_some()).to_string(),
            if with_clock { format_float(self.wall_clock_s) } else { String::new() },
        ]
    }
}

/// Per-cell reevaluation statistics as CSV, for variance heatmaps.
pub fn write_reeval_csv<W: Write>(results: &[(usize, ReevalResult)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "cell",
        "m",
        "median_fitness",
        "median_descriptor",
        "fitness_variance",
        "descriptor_variance",
    ])?;
    for (c, r) in results {
        w.write_record([
            c.to_string(),
            r.m.to_string(),
            format_float(r.median_fitness),
            format_vector(&r.median_descriptor),
            format_float(r.fitness_variance),
            format_vector(&r.descriptor_variance),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_reeval_csv`].
pub fn read_reeval_csv<R: Read>(reader: R) -> Result<Vec<(usize, ReevalResult)>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::Parse(format!("reeval row has {} fields", rec.len())));
        let int = |i: usize| -> Result<usize> {
            field(i)?.parse().map_err(|e| Error::Parse(format!("{e}")))
        };
        out.push((
            int(0)?,
            ReevalResult {
                m: int(1)?,
                median_fitness: parse_float(field(2)?)?,
                median_descriptor: parse_vector(field(3)?)?,
                fitness_variance: parse_float(field(4)?)?,
                descriptor_variance: parse_vector(field(5)?)?,
            },
        ));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Estimator {
    Mean,
    Median,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    /// Linear-interpolation quartiles of a nonempty sample.
    pub fn of(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptyInput("quartiles of no values"));
        }
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Ok(Self {
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
        })
    }
}

/// Estimation errors for one candidate `M`, summarised over solutions.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorRow {
    pub m: usize,
    pub estimator: Estimator,
    pub fitness_error: Quartiles,
    pub descriptor_error: Quartiles,
}

fn estimate(evals: &[Evaluation], estimator: Estimator) -> Result<(f64, Vec<f64>)> {
    let f: Vec<f64> = evals.iter().map(|e| e.fitness).collect();
    let d: Vec<Vec<f64>> = evals.iter().map(|e| e.descriptor.clone()).collect();
    match estimator {
        Estimator::Mean => {
            let dim = d[0].len();
            let dm = (0..dim).map(|j| welford(d.iter().map(|x| x[j])).0).collect();
            Ok((mean(&f), dm))
        }
        Estimator::Median => Ok((median(&f)?, median_per_dimension(&d)?)),
    }
}

/// For every stored record: ground truth from `m_max` draws, then for each
/// candidate `M` the distance of fresh `M`-draw mean and median estimates to
/// the ground truth of the same estimator.
pub fn estimator_study(
    archive: &Archive,
    evaluator: &Evaluator,
    m_max: usize,
    candidate_ms: &[usize],
    stream: &RngStream,
) -> Result<Vec<EstimatorRow>> {
    if candidate_ms.is_empty() || candidate_ms.iter().any(|&m| m == 0 || m > m_max) {
        return Err(Error::config(format!(
            "candidate M values must lie in 1..={m_max}, got {candidate_ms:?}"
        )));
    }
    if archive.is_empty() {
        return Err(Error::EmptyArchive);
    }
    let records: Vec<&SolutionRecord> = archive.records().collect();
    let base = stream.child(label::STUDY);
    let estimators = [Estimator::Mean, Estimator::Median];

    // errors[solution][candidate][estimator] = (fitness, descriptor)
    let errors: Vec<Vec<[(f64, f64); 2]>> = evaluator.install(|| {
        records
            .par_iter()
            .enumerate()
            .map(|(s, rec)| {
                let draw = |m: usize, batch: u64| -> Result<Vec<Evaluation>> {
                    let st = base.path(&[s as u64, batch]);
                    let mut rng_evals = Vec::with_capacity(m);
                    for t in 0..m {
                        let mut rng = st.child(t as u64).rng();
                        rng_evals.push(evaluator.task().evaluate(rec.genotype.genes(), &mut rng)?);
                    }
                    Ok(rng_evals)
                };
                let truth_draws = draw(m_max, 0)?;
                let truth = [estimate(&truth_draws, Estimator::Mean)?, estimate(&truth_draws, Estimator::Median)?];
                drop(truth_draws);
                candidate_ms
                    .iter()
                    .enumerate()
                    .map(|(ci, &m)| {
                        let evals = draw(m, 1 + ci as u64)?;
                        let mut out = [(0.0, 0.0); 2];
                        for (ei, &est) in estimators.iter().enumerate() {
                            let (f, d) = estimate(&evals, est)?;
                            let (tf, td) = &truth[ei];
                            let dd = d.iter().zip(td).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                            out[ei] = ((f - tf).abs(), dd);
                        }
                        Ok(out)
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut rows = Vec::new();
    for (ci, &m) in candidate_ms.iter().enumerate() {
        for (ei, &estimator) in estimators.iter().enumerate() {
            let f: Vec<f64> = errors.iter().map(|e| e[ci][ei].0).collect();
            let d: Vec<f64> = errors.iter().map(|e| e[ci][ei].1).collect();
            rows.push(EstimatorRow {
                m,
                estimator,
                fitness_error: Quartiles::of(&f)?,
                descriptor_error: Quartiles::of(&d)?,
            });
        }
    }
    Ok(rows)
}
