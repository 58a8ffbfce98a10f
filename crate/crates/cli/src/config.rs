//! Experiment configuration, read from TOML.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use uqd_core::metrics::DEFAULT_REEVALUATIONS;
use uqd_core::tasks::{ARM_DEFAULT_DOFS, HET_SPHERE_DEFAULT_DIM, HET_SPHERE_DEFAULT_GAIN};
use uqd_core::tessellation::{DEFAULT_CVT_ITERATIONS, DEFAULT_CVT_SAMPLES};
use uqd_core::{AlgorithmConfig, Arm, CorrectedMode, HetSphere, NoiseModel, Task, Variant, VariationParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskName {
    Arm,
    HetSphere,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub name: TaskName,
    /// Defaults to 8 for both tasks.
    pub genotype_dim: Option<usize>,
    #[serde(default)]
    pub fitness_std: f64,
    #[serde(default)]
    pub descriptor_std: f64,
    /// het-sphere only; defaults to 0.1 there.
    pub heteroscedastic_gain: Option<f64>,
}

impl TaskConfig {
    pub fn arm(fitness_std: f64, descriptor_std: f64) -> Self {
        Self {
            name: TaskName::Arm,
            genotype_dim: None,
            fitness_std,
            descriptor_std,
            heteroscedastic_gain: None,
        }
    }

    pub fn het_sphere(gain: f64) -> Self {
        Self {
            name: TaskName::HetSphere,
            genotype_dim: None,
            fitness_std: 0.0,
            descriptor_std: 0.0,
            heteroscedastic_gain: Some(gain),
        }
    }

    pub fn label(&self) -> &'static str {
        match self.name {
            TaskName::Arm => "arm",
            TaskName::HetSphere => "het-sphere",
        }
    }

    pub fn noise(&self) -> NoiseModel {
        let gain = match self.name {
            TaskName::Arm => 0.0,
            TaskName::HetSphere => self.heteroscedastic_gain.unwrap_or(HET_SPHERE_DEFAULT_GAIN),
        };
        NoiseModel {
            fitness_std: self.fitness_std,
            descriptor_std: self.descriptor_std,
            heteroscedastic_gain: gain,
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Task>> {
        let noise = self.noise();
        Ok(match self.name {
            TaskName::Arm => {
                if self.heteroscedastic_gain.is_some() {
                    bail!("task.heteroscedastic_gain: only het-sphere has a heteroscedastic gain");
                }
                Arc::new(Arm::new(self.genotype_dim.unwrap_or(ARM_DEFAULT_DOFS), noise).context("task")?)
            }
            TaskName::HetSphere => {
                Arc::new(HetSphere::new(self.genotype_dim.unwrap_or(HET_SPHERE_DEFAULT_DIM), noise).context("task")?)
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmEntry {
    pub variant: Variant,
    /// Samples per offspring `N`, sampling variants only.
    pub samples: Option<u32>,
    /// Cell depth `D`.
    pub depth: Option<usize>,
    /// Replaces the experiment's sampling sizes for this algorithm.
    pub sampling_sizes: Option<Vec<usize>>,
    pub variation: Option<VariationParams>,
}

impl AlgorithmEntry {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            samples: None,
            depth: None,
            sampling_sizes: None,
            variation: None,
        }
    }

    pub fn at(mut self, sampling_sizes: &[usize]) -> Self {
        self.sampling_sizes = Some(sampling_sizes.to_vec());
        self
    }

    pub fn label(&self) -> String {
        let mut s = self.variant.name().to_string();
        if let Some(n) = self.samples {
            s.push_str(&format!("-n{n}"));
        }
        if let Some(d) = self.depth {
            s.push_str(&format!("-d{d}"));
        }
        s
    }

    pub fn algorithm_config(&self, sampling_size: usize) -> AlgorithmConfig {
        let mut c = AlgorithmConfig::new(self.variant, sampling_size);
        if let Some(n) = self.samples {
            c.samples_per_offspring = n;
        }
        if let Some(d) = self.depth {
            c.depth = d;
        }
        if let Some(v) = self.variation {
            c.variation = v;
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvtConfig {
    pub samples: usize,
    pub iterations: usize,
}

impl Default for CvtConfig {
    fn default() -> Self {
        Self {
            samples: DEFAULT_CVT_SAMPLES,
            iterations: DEFAULT_CVT_ITERATIONS,
        }
    }
}

fn default_sampling_sizes() -> Vec<usize> {
    vec![256, 1024, 4096, 16384]
}

fn default_niches() -> usize {
    1024
}

fn default_m() -> usize {
    DEFAULT_REEVALUATIONS
}

fn default_one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub generations: u64,
    #[serde(default = "default_one")]
    pub replications: usize,
    #[serde(default = "default_niches")]
    pub niches: usize,
    #[serde(default = "default_sampling_sizes")]
    pub sampling_sizes: Vec<usize>,
    /// Generations between corrected-metric rows; 0 logs the final generation only.
    #[serde(default)]
    pub metric_cadence: u64,
    #[serde(default = "default_m")]
    pub m_reevals: usize,
    #[serde(default)]
    pub corrected_mode: CorrectedMode,
    /// Evaluation threads per run; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub cvt: CvtConfig,
    pub task: TaskConfig,
    pub algorithms: Vec<AlgorithmEntry>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn sampling_sizes_for<'a>(&'a self, entry: &'a AlgorithmEntry) -> &'a [usize] {
        entry.sampling_sizes.as_deref().unwrap_or(&self.sampling_sizes)
    }

    /// Checks everything that does not depend on the sampling size. Entries
    /// whose archive cannot fit in the budget are skipped when running.
    pub fn validate(&self) -> Result<()> {
        if self.generations == 0 {
            bail!("generations: must be positive");
        }
        if self.replications == 0 {
            bail!("replications: must be at least 1");
        }
        if self.niches == 0 {
            bail!("niches: must be positive");
        }
        if self.m_reevals < 2 {
            bail!("m_reevals: need at least 2 reevaluations per cell, got {}", self.m_reevals);
        }
        if self.cvt.samples < self.niches {
            bail!("cvt.samples: {} is fewer than niches = {}", self.cvt.samples, self.niches);
        }
        if self.cvt.iterations == 0 {
            bail!("cvt.iterations: must be positive");
        }
        if self.sampling_sizes.is_empty() || self.sampling_sizes.contains(&0) {
            bail!("sampling_sizes: need at least one positive value");
        }
        self.task.noise().validate().context("task")?;
        let task = self.task.build()?;
        if task.spec().descriptor_dim == 0 {
            bail!("task: descriptor dimension is 0");
        }
        if self.algorithms.is_empty() {
            bail!("algorithms: list at least one algorithm");
        }
        let mut labels = std::collections::HashSet::new();
        for (i, entry) in self.algorithms.iter().enumerate() {
            if !labels.insert(entry.label()) {
                bail!("algorithms[{i}]: duplicate entry {}", entry.label());
            }
            let sizes = self.sampling_sizes_for(entry);
            if sizes.is_empty() || sizes.contains(&0) {
                bail!("algorithms[{i}].sampling_sizes: need at least one positive value");
            }
            for &s in sizes {
                let c = entry.algorithm_config(s);
                // budget shortfalls for the reevaluating variants are skipped, not rejected
                if let Err(e) = c.validate(self.niches) {
                    if !(c.variant.reevaluates_archive() && s <= c.capacity(self.niches)) {
                        bail!("algorithms[{i}] ({}): {e}", entry.label());
                    }
                }
                if c.samples_per_offspring as usize > s {
                    bail!("algorithms[{i}] ({}): {} samples per offspring exceed sampling size {s}", entry.label(), c.samples_per_offspring);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
generations = 10
[task]
name = "arm"
fitness_std = 0.01
descriptor_std = 0.01

[[algorithms]]
variant = "me"
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.sampling_sizes, vec![256, 1024, 4096, 16384]);
        assert_eq!(c.niches, 1024);
        assert_eq!(c.m_reevals, 512);
        assert_eq!(c.replications, 1);
        assert_eq!(c.corrected_mode, CorrectedMode::InCellSelector);
        assert_eq!(c.cvt, CvtConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        c.algorithms.push(AlgorithmEntry {
            samples: Some(4),
            ..AlgorithmEntry::new(Variant::MapElitesSampling).at(&[64])
        });
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    fn error_of(text: &str) -> String {
        format!("{:#}", ExperimentConfig::from_toml(text).unwrap_err())
    }

    #[test]
    fn errors_name_the_field() {
        assert!(error_of(&MINIMAL.replace("generations = 10", "generations = 0")).contains("generations"));
        assert!(error_of(&format!("replications = 0\n{MINIMAL}")).contains("replications"));
        assert!(error_of(&format!("m_reevals = 1\n{MINIMAL}")).contains("m_reevals"));
        assert!(error_of(&format!("niches = 100\ncvt = {{ samples = 10 }}\n{MINIMAL}")).contains("cvt.samples"));
        assert!(error_of(&MINIMAL.replace("0.01\ndescriptor", "-1.0\ndescriptor")).contains("fitness_std"));
        assert!(error_of(&MINIMAL.replace("\"me\"", "\"nope\"")).contains("nope"));
        assert!(error_of(&format!("{MINIMAL}depth = 4\n")).contains("algorithms[0]"));
        assert!(error_of(&format!("bogus = 1\n{MINIMAL}")).contains("bogus"));
        assert!(error_of(&format!("{MINIMAL}\n[[algorithms]]\nvariant = \"me\"\n")).contains("duplicate"));
    }

    #[test]
    fn archive_sampling_below_capacity_is_not_a_config_error() {
        let text = format!("sampling_sizes = [256]\n{}", MINIMAL.replace("\"me\"", "\"pas\""));
        ExperimentConfig::from_toml(&text).unwrap();
    }
}
