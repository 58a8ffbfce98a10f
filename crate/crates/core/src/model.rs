//! Domain values shared by every module.

use crate::error::{Error, Result};

/// A point of the search space, each gene in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Genotype(Vec<f64>);

impl Genotype {
    pub fn new(genes: Vec<f64>) -> Self {
        Self(genes)
    }

    pub fn genes(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for Genotype {
    fn from(genes: Vec<f64>) -> Self {
        Self(genes)
    }
}

/// One noisy draw of fitness and descriptor.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    pub descriptor: Vec<f64>,
}

impl Evaluation {
    pub fn new(fitness: f64, descriptor: Vec<f64>) -> Self {
        Self {
            fitness,
            descriptor,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.fitness.is_finite() && self.descriptor.iter().all(|d| d.is_finite())
    }
}

/// A genotype together with the running means of every evaluation it consumed.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionRecord {
    pub genotype: Genotype,
    pub eval_count: u32,
    pub mean_fitness: f64,
    pub mean_descriptor: Vec<f64>,
}

impl SolutionRecord {
    /// Record built from a single evaluation.
    pub fn fresh(genotype: Genotype, eval: &Evaluation) -> Self {
        Self {
            genotype,
            eval_count: 1,
            mean_fitness: eval.fitness,
            mean_descriptor: eval.descriptor.clone(),
        }
    }

    /// Record whose means fold `evals` in order. The first evaluation seeds the
    /// record, so a single evaluation yields exactly [`SolutionRecord::fresh`].
    pub fn from_evaluations(genotype: Genotype, evals: &[Evaluation]) -> Result<Self> {
        let (first, rest) = evals
            .split_first()
            .ok_or(Error::EmptyInput("evaluations of a record"))?;
        let mut record = Self::fresh(genotype, first);
        for e in rest {
            record.update(e)?;
        }
        Ok(record)
    }

    /// Fold one more evaluation into the running means: `m' = m + (x - m) / (k + 1)`.
    pub fn update(&mut self, eval: &Evaluation) -> Result<()> {
        Error::check_dim(
            "evaluation descriptor",
            self.mean_descriptor.len(),
            eval.descriptor.len(),
        )?;
        let k1 = f64::from(self.eval_count) + 1.0;
        self.mean_fitness += (eval.fitness - self.mean_fitness) / k1;
        for (m, x) in self.mean_descriptor.iter_mut().zip(&eval.descriptor) {
            *m += (x - *m) / k1;
        }
        self.eval_count += 1;
        Ok(())
    }

    /// Value-returning form of [`SolutionRecord::update`].
    pub fn updated(mut self, eval: &Evaluation) -> Result<Self> {
        self.update(eval)?;
        Ok(self)
    }
}
