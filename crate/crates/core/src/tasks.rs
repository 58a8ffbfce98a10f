//! Noisy evaluation functions and parallel batch evaluation.

use std::f64::consts::PI;
use std::sync::Arc;

use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Evaluation, Genotype};
use crate::rng::{RngStream, StreamRng};

/// Gaussian noise applied to a task's clean outputs, as standard deviations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub fitness_std: f64,
    pub descriptor_std: f64,
    /// Scale of the solution-dependent noise; 0 disables it.
    pub heteroscedastic_gain: f64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn gaussian(fitness_std: f64, descriptor_std: f64) -> Self {
        Self {
            fitness_std,
            descriptor_std,
            heteroscedastic_gain: 0.0,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.fitness_std == 0.0 && self.descriptor_std == 0.0 && self.heteroscedastic_gain == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("fitness_std", self.fitness_std),
            ("descriptor_std", self.descriptor_std),
            ("heteroscedastic_gain", self.heteroscedastic_gain),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("noise {name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub genotype_dim: usize,
    pub descriptor_dim: usize,
    /// Colour range for fitness heatmaps.
    pub fitness_range: (f64, f64),
    /// Added to every fitness when summing a QD-Score, so that each cell
    /// contributes a nonnegative amount.
    pub qd_offset: f64,
    pub noise: NoiseModel,
}

pub trait Task: Send + Sync {
    fn name(&self) -> &str;

    fn spec(&self) -> &TaskSpec;

    /// Draw one evaluation of `genes`.
    fn evaluate(&self, genes: &[f64], rng: &mut StreamRng) -> Result<Evaluation>;
}

fn gaussian(std: f64, rng: &mut StreamRng) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    }
}

fn clip_unit(xs: &mut [f64]) {
    for x in xs {
        *x = x.clamp(0.0, 1.0);
    }
}

/// Redundant planar arm with equal links, base at the centre of the unit square.
///
/// Fitness is minus the population variance of the genes; the descriptor is
/// the end-effector position.
#[derive(Clone, Debug)]
pub struct Arm {
    spec: TaskSpec,
}

pub const ARM_DEFAULT_DOFS: usize = 8;

impl Arm {
    pub fn new(dofs: usize, noise: NoiseModel) -> Result<Self> {
        if dofs == 0 {
            return Err(Error::config("arm needs at least one joint"));
        }
        noise.validate()?;
        Ok(Self {
            spec: TaskSpec {
                genotype_dim: dofs,
                descriptor_dim: 2,
                fitness_range: (-0.24, 0.00027),
                qd_offset: 0.25,
                noise,
            },
        })
    }

    /// Noise-free fitness and end-effector position.
    pub fn clean(genes: &[f64]) -> (f64, [f64; 2]) {
        let n = genes.len() as f64;
        let mean = genes.iter().sum::<f64>() / n;
        let var = genes.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / n;
        let link = 0.5 / n;
        let (mut x, mut y, mut angle) = (0.5, 0.5, 0.0);
        for g in genes {
            angle += PI * (2.0 * g - 1.0);
            x += link * angle.cos();
            y += link * angle.sin();
        }
        (-var, [x, y])
    }
}

impl Task for Arm {
    fn name(&self) -> &str {
        "arm"
    }

    fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    fn evaluate(&self, genes: &[f64], rng: &mut StreamRng) -> Result<Evaluation> {
        Error::check_dim("arm genotype", self.spec.genotype_dim, genes.len())?;
        let (f, [x, y]) = Self::clean(genes);
        let noise = &self.spec.noise;
        let fitness = f + gaussian(noise.fitness_std, rng);
        let mut descriptor = vec![x + gaussian(noise.descriptor_std, rng), y + gaussian(noise.descriptor_std, rng)];
        clip_unit(&mut descriptor);
        Ok(Evaluation::new(fitness, descriptor))
    }
}

/// Sphere whose noise grows with the last gene, so solutions differ in how
/// reproducible they are.
#[derive(Clone, Debug)]
pub struct HetSphere {
    spec: TaskSpec,
}

pub const HET_SPHERE_DEFAULT_DIM: usize = 8;
pub const HET_SPHERE_DEFAULT_GAIN: f64 = 0.1;

impl HetSphere {
    pub fn new(dim: usize, noise: NoiseModel) -> Result<Self> {
        if dim < 3 {
            return Err(Error::config(format!("het-sphere needs genotype_dim >= 3, got {dim}")));
        }
        noise.validate()?;
        let worst = (dim - 1) as f64 * 0.25;
        Ok(Self {
            spec: TaskSpec {
                genotype_dim: dim,
                descriptor_dim: 2,
                fitness_range: (-worst, 0.0),
                qd_offset: worst,
                noise,
            },
        })
    }

    /// Standard deviation added to this solution's fitness and descriptor.
    pub fn noise_std(&self, genes: &[f64]) -> (f64, f64) {
        let noise = &self.spec.noise;
        let own = noise.heteroscedastic_gain * genes[genes.len() - 1];
        (noise.fitness_std.hypot(own), noise.descriptor_std.hypot(own))
    }
}

impl Task for HetSphere {
    fn name(&self) -> &str {
        "het-sphere"
    }

    fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    fn evaluate(&self, genes: &[f64], rng: &mut StreamRng) -> Result<Evaluation> {
        Error::check_dim("het-sphere genotype", self.spec.genotype_dim, genes.len())?;
        let n = genes.len();
        let clean: f64 = -genes[..n - 1].iter().map(|g| (g - 0.5) * (g - 0.5)).sum::<f64>();
        let (f_std, d_std) = self.noise_std(genes);
        let fitness = clean + gaussian(f_std, rng);
        let mut descriptor = vec![genes[0] + gaussian(d_std, rng), genes[1] + gaussian(d_std, rng)];
        clip_unit(&mut descriptor);
        Ok(Evaluation::new(fitness, descriptor))
    }
}

/// Gaussian noise added on top of any task's outputs. Descriptors are not clipped.
pub struct GaussianNoise<T> {
    inner: T,
    spec: TaskSpec,
    fitness: Normal<f64>,
    descriptor: Normal<f64>,
}

impl<T: Task> GaussianNoise<T> {
    pub fn new(inner: T, fitness_std: f64, descriptor_std: f64) -> Result<Self> {
        let extra = NoiseModel::gaussian(fitness_std, descriptor_std);
        extra.validate()?;
        let mut spec = inner.spec().clone();
        spec.noise.fitness_std = spec.noise.fitness_std.hypot(fitness_std);
        spec.noise.descriptor_std = spec.noise.descriptor_std.hypot(descriptor_std);
        Ok(Self {
            inner,
            spec,
            fitness: Normal::new(0.0, fitness_std).map_err(|e| Error::config(e.to_string()))?,
            descriptor: Normal::new(0.0, descriptor_std).map_err(|e| Error::config(e.to_string()))?,
        })
    }
}

impl<T: Task> Task for GaussianNoise<T> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    fn evaluate(&self, genes: &[f64], rng: &mut StreamRng) -> Result<Evaluation> {
        let mut e = self.inner.evaluate(genes, rng)?;
        e.fitness += self.fitness.sample(rng);
        for d in &mut e.descriptor {
            *d += self.descriptor.sample(rng);
        }
        Ok(e)
    }
}

/// One genotype to evaluate `count` times, sample `j` drawn from `stream.child(j)`.
#[derive(Clone, Debug)]
pub struct EvalRequest<'a> {
    pub genotype: &'a Genotype,
    pub count: u32,
    pub stream: RngStream,
}

/// Runs evaluation batches on a fixed-size thread pool.
///
/// Every draw is tied to its request's stream, so results are identical for
/// any thread count.
#[derive(Clone)]
pub struct Evaluator {
    task: Arc<dyn Task>,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl Evaluator {
    /// Evaluator running on rayon's global pool.
    pub fn new(task: Arc<dyn Task>) -> Self {
        Self { task, pool: None }
    }

    pub fn with_threads(task: Arc<dyn Task>, threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
        Ok(Self {
            task,
            pool: Some(Arc::new(pool)),
        })
    }

    pub fn task(&self) -> &dyn Task {
        self.task.as_ref()
    }

    pub fn task_arc(&self) -> &Arc<dyn Task> {
        &self.task
    }

    pub fn spec(&self) -> &TaskSpec {
        self.task.spec()
    }

    /// Run `f` inside this evaluator's pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(pool) => pool.install(f),
            None => f(),
        }
    }

    fn evaluate_one(&self, genotype: &Genotype, stream: RngStream) -> Result<Evaluation> {
        let spec = self.task.spec();
        Error::check_dim("genotype", spec.genotype_dim, genotype.len())?;
        let e = self.task.evaluate(genotype.genes(), &mut stream.rng())?;
        Error::check_dim("task descriptor", spec.descriptor_dim, e.descriptor.len())?;
        if !e.is_finite() {
            return Err(Error::NonFiniteEvaluation {
                task: self.task.name().to_string(),
            });
        }
        Ok(e)
    }

    /// All draws of every request, grouped per request in request order.
    pub fn evaluate_batch(&self, requests: &[EvalRequest<'_>]) -> Result<Vec<Vec<Evaluation>>> {
        let mut jobs = Vec::with_capacity(requests.iter().map(|r| r.count as usize).sum());
        for (i, r) in requests.iter().enumerate() {
            if r.count == 0 {
                return Err(Error::config(format!("evaluation request {i} has a zero sample count")));
            }
            for j in 0..r.count {
                jobs.push((i, r.genotype, r.stream.child(u64::from(j))));
            }
        }
        let flat: Vec<(usize, Evaluation)> = self.install(|| {
            jobs.par_iter()
                .map(|&(i, g, s)| self.evaluate_one(g, s).map(|e| (i, e)))
                .collect::<Result<Vec<_>>>()
        })?;
        let mut grouped: Vec<Vec<Evaluation>> = requests.iter().map(|r| Vec::with_capacity(r.count as usize)).collect();
        for (i, e) in flat {
            grouped[i].push(e);
        }
        Ok(grouped)
    }
}
