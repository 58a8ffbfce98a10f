//! Parent selection and the iso+line mutation operator.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::archive::Archive;
use crate::error::{Error, Result};
use crate::model::{Genotype, SolutionRecord};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariationParams {
    /// Isotropic Gaussian scale.
    pub iso_sigma: f64,
    /// Scale of the shared draw along the parent-to-parent line.
    pub line_sigma: f64,
}

impl Default for VariationParams {
    fn default() -> Self {
        Self {
            iso_sigma: 0.005,
            line_sigma: 0.05,
        }
    }
}

impl VariationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.iso_sigma >= 0.0 && self.line_sigma >= 0.0) {
            return Err(Error::config(format!(
                "mutation scales must be nonnegative, got iso {} line {}",
                self.iso_sigma, self.line_sigma
            )));
        }
        Ok(())
    }
}

/// Uniform over occupied cells, then the archive's in-cell selector.
///
/// `occupied` must list the archive's occupied cells; callers compute it once
/// per generation.
pub fn select_parent_uniform<'a, R: Rng + ?Sized>(
    archive: &'a Archive,
    occupied: &[usize],
    rng: &mut R,
) -> Result<&'a SolutionRecord> {
    if occupied.is_empty() {
        return Err(Error::EmptyArchive);
    }
    let cell = occupied[rng.random_range(0..occupied.len())];
    archive.select_in_cell(cell, rng)
}

/// `child_j = clip(x_j + iso * eps_j + line * zeta * (y_j - x_j), 0, 1)` with one
/// `zeta ~ N(0, 1)` shared across genes.
pub fn iso_line_mutation<R: Rng + ?Sized>(
    x: &Genotype,
    y: &Genotype,
    params: &VariationParams,
    rng: &mut R,
) -> Result<Genotype> {
    Error::check_dim("second parent", x.len(), y.len())?;
    let zeta: f64 = rng.sample(StandardNormal);
    let genes = x
        .genes()
        .iter()
        .zip(y.genes())
        .map(|(&xj, &yj)| {
            let eps: f64 = rng.sample(StandardNormal);
            (xj + params.iso_sigma * eps + params.line_sigma * zeta * (yj - xj)).clamp(0.0, 1.0)
        })
        .collect();
    Ok(Genotype::new(genes))
}

pub fn random_genotype<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Genotype {
    Genotype::new((0..dim).map(|_| rng.random::<f64>()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::{AdditionRule, InCellSelector};
    use crate::model::Evaluation;
    use crate::tessellation::Centroids;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn two_cell_archive(depth: usize, rule: AdditionRule, selector: InCellSelector) -> Archive {
        let c = Arc::new(Centroids::from_rows(vec![vec![0.25], vec![0.75]]).unwrap());
        Archive::new(c, depth, rule, selector).unwrap()
    }

    fn rec(f: f64, d: f64) -> SolutionRecord {
        SolutionRecord::fresh(Genotype::new(vec![d]), &Evaluation::new(f, vec![d]))
    }

    #[test]
    fn empty_archive_has_no_parent() {
        let a = two_cell_archive(1, AdditionRule::ElitistFlat, InCellSelector::Best);
        assert!(matches!(select_parent_uniform(&a, &[], &mut rng(0)), Err(Error::EmptyArchive)));
    }

    #[test]
    fn single_cell_always_selected() {
        let mut a = two_cell_archive(1, AdditionRule::ElitistFlat, InCellSelector::Best);
        a.try_add(rec(1.0, 0.2), &mut rng(0)).unwrap();
        let occ = a.occupied_cells();
        let mut r = rng(1);
        for _ in 0..100 {
            assert_eq!(select_parent_uniform(&a, &occ, &mut r).unwrap(), &rec(1.0, 0.2));
        }
    }

    #[test]
    fn two_cells_chosen_evenly() {
        let mut a = two_cell_archive(3, AdditionRule::DeepElitist, InCellSelector::Best);
        for (f, d) in [(1.0, 0.2), (0.5, 0.1), (0.1, 0.8)] {
            a.try_add(rec(f, d), &mut rng(0)).unwrap();
        }
        let occ = a.occupied_cells();
        let mut r = rng(2);
        let n = 10_000;
        let left = (0..n)
            .filter(|_| select_parent_uniform(&a, &occ, &mut r).unwrap().mean_descriptor[0] < 0.5)
            .count();
        // 3 sigma of a fair binomial at n = 1e4 is 1.5%
        assert!((left as f64 / n as f64 - 0.5).abs() < 0.03, "{left}");
    }

    #[test]
    fn zero_scales_copy_parent() {
        let x = Genotype::new(vec![0.1, 0.7, 0.3]);
        let y = Genotype::new(vec![0.9, 0.2, 0.5]);
        let p = VariationParams {
            iso_sigma: 0.0,
            line_sigma: 0.0,
        };
        assert_eq!(iso_line_mutation(&x, &y, &p, &mut rng(3)).unwrap(), x);
    }

    #[test]
    fn children_are_clipped() {
        let x = Genotype::new(vec![0.0; 16]);
        let y = Genotype::new(vec![1.0; 16]);
        let p = VariationParams {
            iso_sigma: 5.0,
            line_sigma: 5.0,
        };
        let mut r = rng(4);
        let mut saw_zero = false;
        for _ in 0..100 {
            let c = iso_line_mutation(&x, &y, &p, &mut r).unwrap();
            assert!(c.genes().iter().all(|g| (0.0..=1.0).contains(g)));
            saw_zero |= c.genes().contains(&0.0);
        }
        assert!(saw_zero);
    }

    #[test]
    fn length_mismatch() {
        let x = Genotype::new(vec![0.1, 0.2]);
        let y = Genotype::new(vec![0.1]);
        assert!(matches!(
            iso_line_mutation(&x, &y, &VariationParams::default(), &mut rng(0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn child_mean_is_first_parent() {
        let x = Genotype::new(vec![0.3, 0.5, 0.6]);
        let y = Genotype::new(vec![0.5, 0.4, 0.7]);
        let p = VariationParams::default();
        let n = 100_000;
        let mut sums = [0.0; 3];
        let mut r = rng(5);
        for _ in 0..n {
            let c = iso_line_mutation(&x, &y, &p, &mut r).unwrap();
            for (s, g) in sums.iter_mut().zip(c.genes()) {
                *s += g;
            }
        }
        for j in 0..3 {
            let dy = y.genes()[j] - x.genes()[j];
            let sd = (p.iso_sigma.powi(2) + (p.line_sigma * dy).powi(2)).sqrt();
            let mean = sums[j] / n as f64;
            assert!((mean - x.genes()[j]).abs() < 3.0 * sd / (n as f64).sqrt(), "gene {j}: {mean}");
        }
    }

    #[test]
    fn without_line_term_is_isotropic() {
        let x = Genotype::new(vec![0.5; 4]);
        let y = Genotype::new(vec![0.9; 4]);
        let p = VariationParams {
            iso_sigma: 0.01,
            line_sigma: 0.0,
        };
        let n = 50_000;
        let mut r = rng(6);
        let mut sq = [0.0; 4];
        for _ in 0..n {
            let c = iso_line_mutation(&x, &y, &p, &mut r).unwrap();
            for (s, g) in sq.iter_mut().zip(c.genes()) {
                *s += (g - 0.5).powi(2);
            }
        }
        for s in sq {
            let var = s / n as f64;
            assert!((var / 1e-4 - 1.0).abs() < 0.03, "{var}");
        }
    }

    proptest! {
        #[test]
        fn children_stay_in_unit_cube(
            xs in prop::collection::vec(0.0f64..=1.0, 1..20),
            seed in any::<u64>(),
            iso in 0.0f64..2.0,
            line in 0.0f64..2.0,
        ) {
            let ys: Vec<f64> = xs.iter().map(|v| 1.0 - v).collect();
            let p = VariationParams { iso_sigma: iso, line_sigma: line };
            let c = iso_line_mutation(&Genotype::new(xs.clone()), &Genotype::new(ys), &p, &mut rng(seed)).unwrap();
            prop_assert_eq!(c.len(), xs.len());
            prop_assert!(c.genes().iter().all(|g| (0.0..=1.0).contains(g)));
        }
    }
}
