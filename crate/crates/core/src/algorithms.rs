//! Generation steps of every algorithm variant under a per-generation
//! sampling budget.
//!
//! A generation draws all of its randomness from `root.child(generation)`:
//!
//! * offspring `i` is produced from `SELECT / i`,
//! * sample `j` of offspring `i` is evaluated on `EVAL / i / j`,
//! * the `r`-th drained record is reevaluated on `REEVAL / r / 0`,
//! * deep-replace-random victims come from a single `ADD` stream consumed in
//!   offspring order.
//!
//! Generation 0 is the initial population. Variants that share a stage share
//! its streams, which is what makes e.g. MAP-Elites-sampling with `N = 1`
//! coincide with MAP-Elites.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archive::{AddOutcome, AdditionRule, Archive, InCellSelector};
use crate::error::{Error, Result};
use crate::model::{Genotype, SolutionRecord};
use crate::rng::{label, RngStream};
use crate::tasks::{EvalRequest, Evaluator};
use crate::tessellation::Centroids;
use crate::variation::{iso_line_mutation, random_genotype, select_parent_uniform, VariationParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[serde(rename = "me")]
    MapElites,
    #[serde(rename = "me-random")]
    MapElitesRandom,
    #[serde(rename = "me-sampling")]
    MapElitesSampling,
    DeepGrid,
    DeepGridSampling,
    ArchiveSampling,
    #[serde(rename = "pas")]
    ParallelAdaptiveSampling,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::MapElites,
        Variant::MapElitesRandom,
        Variant::MapElitesSampling,
        Variant::DeepGrid,
        Variant::DeepGridSampling,
        Variant::ArchiveSampling,
        Variant::ParallelAdaptiveSampling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::MapElites => "me",
            Variant::MapElitesRandom => "me-random",
            Variant::MapElitesSampling => "me-sampling",
            Variant::DeepGrid => "deep-grid",
            Variant::DeepGridSampling => "deep-grid-sampling",
            Variant::ArchiveSampling => "archive-sampling",
            Variant::ParallelAdaptiveSampling => "pas",
        }
    }

    pub fn default_samples(self) -> u32 {
        match self {
            Variant::MapElitesSampling => 32,
            Variant::DeepGridSampling => 8,
            _ => 1,
        }
    }

    pub fn default_depth(self) -> usize {
        match self {
            Variant::DeepGrid | Variant::DeepGridSampling => 32,
            Variant::ArchiveSampling | Variant::ParallelAdaptiveSampling => 2,
            _ => 1,
        }
    }

    pub fn addition_rule(self) -> AdditionRule {
        match self {
            Variant::MapElites | Variant::MapElitesRandom | Variant::MapElitesSampling => AdditionRule::ElitistFlat,
            Variant::DeepGrid | Variant::DeepGridSampling => AdditionRule::DeepReplaceRandom,
            Variant::ArchiveSampling | Variant::ParallelAdaptiveSampling => AdditionRule::DeepElitist,
        }
    }

    pub fn in_cell_selector(self) -> InCellSelector {
        match self.addition_rule() {
            AdditionRule::DeepReplaceRandom => InCellSelector::Roulette,
            _ => InCellSelector::Best,
        }
    }

    /// Whether the variant reevaluates its whole archive every generation.
    pub fn reevaluates_archive(self) -> bool {
        matches!(self, Variant::ArchiveSampling | Variant::ParallelAdaptiveSampling)
    }

    /// Whether `samples_per_offspring` is a free parameter of the variant.
    pub fn uses_samples(self) -> bool {
        matches!(self, Variant::MapElitesSampling | Variant::DeepGridSampling)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::config(format!("unknown algorithm `{s}`, expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmConfig {
    pub variant: Variant,
    /// Per-generation evaluation budget `S`.
    pub sampling_size: usize,
    /// `N`, used by the two sampling variants only.
    pub samples_per_offspring: u32,
    pub depth: usize,
    pub variation: VariationParams,
}

impl AlgorithmConfig {
    pub fn new(variant: Variant, sampling_size: usize) -> Self {
        Self {
            variant,
            sampling_size,
            samples_per_offspring: variant.default_samples(),
            depth: variant.default_depth(),
            variation: VariationParams::default(),
        }
    }

    pub fn with_samples(mut self, n: u32) -> Self {
        self.samples_per_offspring = n;
        self
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    /// Maximum number of records the archive can hold: `k * D`.
    pub fn capacity(&self, num_cells: usize) -> usize {
        num_cells * self.depth
    }

    pub fn validate(&self, num_cells: usize) -> Result<()> {
        if self.sampling_size == 0 {
            return Err(Error::config("sampling_size must be positive"));
        }
        if self.samples_per_offspring == 0 {
            return Err(Error::config("samples_per_offspring must be positive"));
        }
        if self.depth == 0 {
            return Err(Error::config("depth must be positive"));
        }
        if self.variant.addition_rule() == AdditionRule::ElitistFlat && self.depth != 1 {
            return Err(Error::config(format!("{} uses a flat archive, depth must be 1", self.variant)));
        }
        if !self.variant.uses_samples() && self.samples_per_offspring != 1 {
            return Err(Error::config(format!(
                "{} evaluates offspring once, samples_per_offspring must be 1",
                self.variant
            )));
        }
        self.variation.validate()?;
        if self.variant.reevaluates_archive() && self.sampling_size <= self.capacity(num_cells) {
            return Err(Error::config(format!(
                "{} needs sampling_size > k*D = {}, got {}",
                self.variant,
                self.capacity(num_cells),
                self.sampling_size
            )));
        }
        Ok(())
    }

    pub fn new_archive(&self, centroids: Arc<Centroids>) -> Result<Archive> {
        Archive::new(centroids, self.depth, self.variant.addition_rule(), self.variant.in_cell_selector())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BudgetPlan {
    pub n_offspring: usize,
    pub evals_per_offspring: u32,
    pub reeval_budget_reserved: usize,
}

impl BudgetPlan {
    pub fn offspring_evaluations(&self) -> usize {
        self.n_offspring * self.evals_per_offspring as usize
    }
}

/// Split the sampling budget between offspring and archive reevaluation.
/// `n_evals` is only read by Parallel-Adaptive-Sampling.
pub fn plan_budget(config: &AlgorithmConfig, num_cells: usize, n_evals: u32) -> Result<BudgetPlan> {
    let s = config.sampling_size;
    let (n_offspring, evals_per_offspring, reserved) = match config.variant {
        Variant::MapElites | Variant::MapElitesRandom | Variant::DeepGrid => (s, 1, 0),
        Variant::MapElitesSampling | Variant::DeepGridSampling => {
            let n = config.samples_per_offspring;
            (s / n as usize, n, 0)
        }
        Variant::ArchiveSampling | Variant::ParallelAdaptiveSampling => {
            let reserved = config.capacity(num_cells);
            let left = s.saturating_sub(reserved);
            let n = if config.variant == Variant::ArchiveSampling { 1 } else { n_evals.max(1) };
            (left / n as usize, n, reserved)
        }
    };
    if n_offspring == 0 {
        return Err(Error::config(format!(
            "{} with sampling_size {s} leaves no offspring ({evals_per_offspring} evaluations each, {reserved} reserved)",
            config.variant
        )));
    }
    Ok(BudgetPlan {
        n_offspring,
        evals_per_offspring,
        reeval_budget_reserved: reserved,
    })
}

/// Lower median of the evaluation counts of every stored record; 1 when empty.
pub fn median_evals_number(archive: &Archive) -> u32 {
    let mut counts: Vec<u32> = archive.records().map(|r| r.eval_count).collect();
    if counts.is_empty() {
        return 1;
    }
    let mid = (counts.len() - 1) / 2;
    let (_, m, _) = counts.select_nth_unstable(mid);
    *m
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationReport {
    pub generation: u64,
    /// Every evaluation charged to the sampling budget this generation.
    pub evaluations: usize,
    /// Of which spent reevaluating archived records.
    pub reevaluations: usize,
    pub offspring: usize,
    pub evals_per_offspring: u32,
    pub added: usize,
    pub replaced: usize,
    pub rejected: usize,
    pub qd_score: f64,
    pub coverage: f64,
    pub max_fitness: Option<f64>,
}

enum Source {
    Mutation,
    Uniform,
}

fn produce_offspring(
    archive: &Archive,
    n: usize,
    source: Source,
    params: &VariationParams,
    evaluator: &Evaluator,
    gen_stream: &RngStream,
) -> Result<Vec<Genotype>> {
    let dim = evaluator.spec().genotype_dim;
    let occupied = archive.occupied_cells();
    let select = gen_stream.child(label::SELECT);
    evaluator.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = select.child(i as u64).rng();
                match source {
                    Source::Uniform => Ok(random_genotype(dim, &mut rng)),
                    Source::Mutation => {
                        let x = select_parent_uniform(archive, &occupied, &mut rng)?;
                        let y = select_parent_uniform(archive, &occupied, &mut rng)?;
                        iso_line_mutation(&x.genotype, &y.genotype, params, &mut rng)
                    }
                }
            })
            .collect()
    })
}

#[derive(Default)]
struct Tally {
    added: usize,
    replaced: usize,
    rejected: usize,
}

impl Tally {
    fn record(&mut self, outcome: &AddOutcome) {
        match outcome {
            AddOutcome::Added => self.added += 1,
            AddOutcome::Replaced(_) => self.replaced += 1,
            AddOutcome::Rejected => self.rejected += 1,
        }
    }
}

/// Drain, reevaluate each record once, fold the draw into its means and re-add in drain order.
fn reevaluate_archive(
    archive: &mut Archive,
    evaluator: &Evaluator,
    gen_stream: &RngStream,
    add_rng: &mut crate::rng::StreamRng,
) -> Result<usize> {
    let records = archive.drain();
    let stream = gen_stream.child(label::REEVAL);
    let requests: Vec<EvalRequest> = records
        .iter()
        .enumerate()
        .map(|(r, rec)| EvalRequest {
            genotype: &rec.genotype,
            count: 1,
            stream: stream.child(r as u64),
        })
        .collect();
    let evals = evaluator.evaluate_batch(&requests)?;
    let n = records.len();
    for (mut rec, e) in records.into_iter().zip(evals) {
        rec.update(&e[0])?;
        archive.try_add(rec, add_rng)?;
    }
    Ok(n)
}

struct StepPlan {
    reevaluate: bool,
    source: Source,
    budget: BudgetPlan,
}

fn run_generation(
    archive: &mut Archive,
    config: &AlgorithmConfig,
    evaluator: &Evaluator,
    root: &RngStream,
    generation: u64,
    plan: StepPlan,
) -> Result<GenerationReport> {
    let gen_stream = root.child(generation);
    let mut add_rng = gen_stream.child(label::ADD).rng();

    let reevaluations = if plan.reevaluate && generation > 0 {
        reevaluate_archive(archive, evaluator, &gen_stream, &mut add_rng)?
    } else {
        0
    };

    let budget = plan.budget;
    let offspring = produce_offspring(archive, budget.n_offspring, plan.source, &config.variation, evaluator, &gen_stream)?;
    let eval_stream = gen_stream.child(label::EVAL);
    let requests: Vec<EvalRequest> = offspring
        .iter()
        .enumerate()
        .map(|(i, g)| EvalRequest {
            genotype: g,
            count: budget.evals_per_offspring,
            stream: eval_stream.child(i as u64),
        })
        .collect();
    let evals = evaluator.evaluate_batch(&requests)?;
    drop(requests);

    let mut tally = Tally::default();
    for (g, e) in offspring.into_iter().zip(evals) {
        let record = SolutionRecord::from_evaluations(g, &e)?;
        let outcome = archive.try_add(record, &mut add_rng)?;
        tally.record(&outcome);
    }

    Ok(GenerationReport {
        generation,
        evaluations: reevaluations + budget.offspring_evaluations(),
        reevaluations,
        offspring: budget.n_offspring,
        evals_per_offspring: budget.evals_per_offspring,
        added: tally.added,
        replaced: tally.replaced,
        rejected: tally.rejected,
        qd_score: archive.qd_score(evaluator.spec().qd_offset),
        coverage: archive.coverage(),
        max_fitness: archive.max_fitness().ok(),
    })
}

fn expect_variant(config: &AlgorithmConfig, archive: &Archive, allowed: &[Variant]) -> Result<()> {
    if !allowed.contains(&config.variant) {
        return Err(Error::config(format!("step for {allowed:?} called with {}", config.variant)));
    }
    if archive.rule() != config.variant.addition_rule() || archive.depth() != config.depth {
        return Err(Error::config(format!(
            "{} expects a {:?} archive of depth {}, got {:?} of depth {}",
            config.variant,
            config.variant.addition_rule(),
            config.depth,
            archive.rule(),
            archive.depth()
        )));
    }
    Ok(())
}

fn fixed_step(
    archive: &mut Archive,
    config: &AlgorithmConfig,
    evaluator: &Evaluator,
    root: &RngStream,
    generation: u64,
    allowed: &[Variant],
    source: Source,
) -> Result<GenerationReport> {
    expect_variant(config, archive, allowed)?;
    let budget = plan_budget(config, archive.num_cells(), 1)?;
    run_generation(
        archive,
        config,
        evaluator,
        root,
        generation,
        StepPlan {
            reevaluate: false,
            source,
            budget,
        },
    )
}

/// MAP-Elites: `S` mutated offspring, one evaluation each, elitist addition.
pub fn step_map_elites(
    archive: &mut Archive,
    config: &AlgorithmConfig,
    evaluator: &Evaluator,
    root: &RngStream,
    generation: u64,
) -> Result<GenerationReport> {
    fixed_step(archive, config, evaluator, root, generation, &[Variant::MapElites], Source::Mutation)
}

/// Uniform random genotypes added to a MAP-Elites grid.
pub fn step_me_random(
    archive: &mut Archive,
    config: &AlgorithmConfig,
    evaluator: &Evaluator,
    root: &RngStream,
    generation: u64,
) -> Result<GenerationReport> {
    fixed_step(archive, config, evaluator, root, generation, &[Variant::MapElitesRandom], Source::Uniform)
}

/// `S / N` offspring, each added with the means of its `N` samples.
pub fn step_me_sampling(
    archive: &mut Archive,
    config: &AlgorithmConfig,
    evaluator: &Evaluator,
    root: &RngStream,
    generation: u64,
) -> Result<GenerationReport> {
    fixed_step(archive, config, evaluator, root, generation, &[Variant::MapElitesSampling], Source::Mutation)
}

/// Deep archive where any occupant may be overwritten; parents drawn by roulette.
pub fn step_deep_grid(
    archive: &mut Archive,
    config: &AlgorithmConfig,
    evaluator: &Evaluator,
    root: &RngStream,
    generation: u64,
) -> Result<GenerationReport> {
    fixed_step(archive, config, evaluator, root, generation, &[Variant::DeepGrid], Source::Mutation)
}

pub fn step_dg_sampling(
    archive: &mut Archive,
    config: &AlgorithmConfig,
    evaluator: &Evaluator,
    root: &RngStream,
    generation: u64,
) -> Result<GenerationReport> {
    fixed_step(archive, config, evaluator, root, generation, &[Variant::DeepGridSampling], Source::Mutation)
}

/// Reevaluate and re-add the whole archive, then add `S - k*D` single-evaluation offspring.
///
/// Reevaluation is skipped on generation 0, which holds the initial population.
pub fn step_archive_sampling(
    archive: &mut Archive,
    config: &AlgorithmConfig,
    evaluator: &Evaluator,
    root: &RngStream,
    generation: u64,
) -> Result<GenerationReport> {
    expect_variant(config, archive, &[Variant::ArchiveSampling])?;
    config.validate(archive.num_cells())?;
    let budget = plan_budget(config, archive.num_cells(), 1)?;
    run_generation(
        archive,
        config,
        evaluator,
        root,
        generation,
        StepPlan {
            reevaluate: true,
            source: Source::Mutation,
            budget,
        },
    )
}

/// Evaluation count for PAS offspring: the archive's median count, capped so
/// that at least one offspring fits in the budget.
pub fn pas_evals_number(archive: &Archive, config: &AlgorithmConfig) -> u32 {
    let room = config.sampling_size.saturating_sub(config.capacity(archive.num_cells())).max(1);
    median_evals_number(archive).min(u32::try_from(room).unwrap_or(u32::MAX))
}

/// Archive-Sampling whose offspring are evaluated as many times as the
/// archive's median record, chosen before the reevaluation.
pub fn step_pas(
    archive: &mut Archive,
    config: &AlgorithmConfig,
    evaluator: &Evaluator,
    root: &RngStream,
    generation: u64,
) -> Result<GenerationReport> {
    expect_variant(config, archive, &[Variant::ParallelAdaptiveSampling])?;
    config.validate(archive.num_cells())?;
    let n_evals = pas_evals_number(archive, config);
    let budget = plan_budget(config, archive.num_cells(), n_evals)?;
    run_generation(
        archive,
        config,
        evaluator,
        root,
        generation,
        StepPlan {
            reevaluate: true,
            source: Source::Mutation,
            budget,
        },
    )
}

/// One generation of `config.variant`.
pub fn step(
    archive: &mut Archive,
    config: &AlgorithmConfig,
    evaluator: &Evaluator,
    root: &RngStream,
    generation: u64,
) -> Result<GenerationReport> {
    let f = match config.variant {
        Variant::MapElites => step_map_elites,
        Variant::MapElitesRandom => step_me_random,
        Variant::MapElitesSampling => step_me_sampling,
        Variant::DeepGrid => step_deep_grid,
        Variant::DeepGridSampling => step_dg_sampling,
        Variant::ArchiveSampling => step_archive_sampling,
        Variant::ParallelAdaptiveSampling => step_pas,
    };
    f(archive, config, evaluator, root, generation)
}

/// Generation 0: the variant's offspring budget spent on uniform random genotypes.
pub fn initialize(
    config: &AlgorithmConfig,
    centroids: Arc<Centroids>,
    evaluator: &Evaluator,
    root: &RngStream,
) -> Result<(Archive, GenerationReport)> {
    Error::check_dim("task descriptor vs centroids", centroids.dim(), evaluator.spec().descriptor_dim)?;
    config.validate(centroids.len())?;
    let mut archive = config.new_archive(centroids)?;
    let budget = plan_budget(config, archive.num_cells(), 1)?;
    let report = run_generation(
        &mut archive,
        config,
        evaluator,
        root,
        0,
        StepPlan {
            reevaluate: false,
            source: Source::Uniform,
            budget,
        },
    )?;
    Ok((archive, report))
}

/// Owns one run's archive and counters.
pub struct Optimizer {
    config: AlgorithmConfig,
    evaluator: Evaluator,
    archive: Archive,
    root: RngStream,
    generation: u64,
    evaluations: u64,
    last: GenerationReport,
}

impl Optimizer {
    /// Validates the configuration and evaluates the initial population.
    pub fn new(config: AlgorithmConfig, centroids: Arc<Centroids>, evaluator: Evaluator, root: RngStream) -> Result<Self> {
        let (archive, report) = initialize(&config, centroids, &evaluator, &root)?;
        Ok(Self {
            evaluations: report.evaluations as u64,
            config,
            evaluator,
            archive,
            root,
            generation: 0,
            last: report,
        })
    }

    pub fn step(&mut self) -> Result<&GenerationReport> {
        let generation = self.generation + 1;
        let report = step(&mut self.archive, &self.config, &self.evaluator, &self.root, generation)?;
        self.generation = generation;
        self.evaluations += report.evaluations as u64;
        self.last = report;
        Ok(&self.last)
    }

    pub fn config(&self) -> &AlgorithmConfig {
        &self.config
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.evaluator
    }

    pub fn archive(&self) -> &Archive {
        &self.archive
    }

    pub fn into_archive(self) -> Archive {
        self.archive
    }

    /// Index of the last completed generation; 0 right after initialisation.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Evaluations charged to the algorithm so far, initial population included.
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn last_report(&self) -> &GenerationReport {
        &self.last
    }
}
