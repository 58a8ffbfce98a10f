//! Pareto fronts and rank-sum significance tests over finished runs.

use anyhow::{bail, Result};
use statrs::distribution::{ContinuousCDF, Normal};

/// A run summarised by the score to maximise and the time to minimise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParetoPoint {
    pub qd: f64,
    pub time: f64,
}

impl ParetoPoint {
    pub fn new(qd: f64, time: f64) -> Self {
        Self { qd, time }
    }

    pub fn dominates(&self, other: &ParetoPoint) -> bool {
        self.qd >= other.qd && self.time <= other.time && (self.qd > other.qd || self.time < other.time)
    }
}

/// Indices of the non-dominated points, in order of increasing time.
/// Duplicated points are all kept.
pub fn pareto_front(points: &[ParetoPoint]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    // time ascending, then qd descending, so a point can only be dominated by earlier ones
    order.sort_by(|&a, &b| {
        points[a]
            .time
            .total_cmp(&points[b].time)
            .then(points[b].qd.total_cmp(&points[a].qd))
    });
    let mut front: Vec<usize> = Vec::new();
    let mut best_qd = f64::NEG_INFINITY;
    for i in order {
        let p = points[i];
        match front.last().map(|&j| points[j]) {
            Some(q) if q == p => front.push(i),
            _ if p.qd > best_qd => {
                best_qd = p.qd;
                front.push(i);
            }
            _ => {}
        }
    }
    front
}

/// Average ranks (1-based) of the pooled sample, plus the tie term `sum(t^3 - t)`.
fn pooled_ranks(pooled: &[f64]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    idx.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && pooled[idx[j]] == pooled[idx[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = avg;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankSum {
    /// Mann-Whitney U of the first sample.
    pub u: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Two-sided Mann-Whitney U test, normal approximation with tie and
/// continuity corrections.
pub fn rank_sum_test(a: &[f64], b: &[f64]) -> Result<RankSum> {
    if a.len() < 3 || b.len() < 3 {
        bail!("rank-sum test needs at least 3 values per sample, got {} and {}", a.len(), b.len());
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        bail!("rank-sum test samples must be finite");
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = pooled_ranks(&pooled);
    let r1: f64 = ranks[..a.len()].iter().sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;
    let n = n1 + n2;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if var <= 0.0 {
        return Ok(RankSum { u, z: 0.0, p_value: 1.0 });
    }
    let diff = u - mean;
    let z = (diff.abs() - 0.5).max(0.0).copysign(diff) / var.sqrt();
    let normal = Normal::standard();
    let p_value = (2.0 * normal.sf(z.abs())).min(1.0);
    Ok(RankSum { u, z, p_value })
}

/// Bonferroni adjustment for `m` comparisons.
pub fn bonferroni(p: f64, m: usize) -> f64 {
    (p * m as f64).min(1.0)
}

/// Median with the two middle values averaged.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn pts(v: &[(f64, f64)]) -> Vec<ParetoPoint> {
        v.iter().map(|&(q, t)| ParetoPoint::new(q, t)).collect()
    }

    fn brute_front(points: &[ParetoPoint]) -> Vec<usize> {
        (0..points.len())
            .filter(|&i| !points.iter().any(|q| q.dominates(&points[i])))
            .collect()
    }

    #[test]
    fn small_fronts() {
        let p = pts(&[(10.0, 5.0), (8.0, 3.0), (12.0, 4.0)]);
        let mut f = pareto_front(&p);
        f.sort();
        assert_eq!(f, vec![1, 2]);
        assert_eq!(pareto_front(&pts(&[(1.0, 1.0)])), vec![0]);
        assert!(pareto_front(&[]).is_empty());
        // duplicates do not dominate each other
        let mut f = pareto_front(&pts(&[(2.0, 2.0), (2.0, 2.0), (1.0, 3.0)]));
        f.sort();
        assert_eq!(f, vec![0, 1]);
    }

    #[test]
    fn front_matches_quadratic_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for instance in 0..100 {
            let n = rng.random_range(1..60);
            // coarse grid values force ties on either axis
            let p: Vec<ParetoPoint> = (0..n)
                .map(|_| ParetoPoint::new(rng.random_range(0..20) as f64, rng.random_range(0..20) as f64))
                .collect();
            let mut f = pareto_front(&p);
            f.sort();
            assert_eq!(f, brute_front(&p), "instance {instance}");
        }
    }

    /// Exact two-sided p-value of U for tie-free samples by counting rank subsets.
    fn exact_p(u: f64, n1: usize, n2: usize) -> f64 {
        // counts[i][u] = number of ways to choose i of the first k ranks with U = u
        let max_u = n1 * n2;
        let mut counts = vec![vec![0u128; max_u + 1]; n1 + 1];
        counts[0][0] = 1;
        for k in 0..n1 + n2 {
            for i in (0..n1.min(k + 1)).rev() {
                // picking rank k+1 as the (i+1)-th element of sample 1 adds k - i to U
                let add = k - i;
                for v in (0..=max_u).rev() {
                    if counts[i][v] > 0 && v + add <= max_u {
                        let c = counts[i][v];
                        counts[i + 1][v + add] += c;
                    }
                }
            }
        }
        let row = &counts[n1];
        let total: u128 = row.iter().sum();
        let u = u.round() as usize;
        let lower: u128 = row[..=u].iter().sum();
        let upper: u128 = row[u..].iter().sum();
        (2.0 * lower.min(upper) as f64 / total as f64).min(1.0)
    }

    #[test]
    fn exact_oracle_sanity() {
        // C(20, 10) = 184756 arrangements, U = 0 is one of them
        assert!((exact_p(0.0, 10, 10) - 2.0 / 184_756.0).abs() < 1e-15);
        assert_eq!(exact_p(50.0, 10, 10), 1.0);
    }

    #[test]
    fn separated_samples_are_significant() {
        let a: Vec<f64> = (1..=10).map(f64::from).collect();
        let b: Vec<f64> = (101..=110).map(f64::from).collect();
        let r = rank_sum_test(&a, &b).unwrap();
        assert_eq!(r.u, 0.0);
        assert!(r.p_value < 0.01, "{}", r.p_value);
        assert!(exact_p(r.u, 10, 10) < 0.01);
        let swapped = rank_sum_test(&b, &a).unwrap();
        assert_eq!(swapped.u, 100.0);
        assert_eq!(swapped.p_value, r.p_value);
    }

    #[test]
    fn normal_approximation_tracks_exact_u_at_n10() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut worst = 0.0f64;
        for _ in 0..300 {
            let shift = rng.random_range(0.0..2.0);
            let a: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..10).map(|_| rng.random::<f64>() * 0.8 + shift * 0.3).collect();
            let r = rank_sum_test(&a, &b).unwrap();
            worst = worst.max((r.p_value - exact_p(r.u, 10, 10)).abs());
        }
        assert!(worst < 0.01, "{worst}");
    }

    #[test]
    fn degenerate_and_identical_samples() {
        assert_eq!(rank_sum_test(&[3.0; 5], &[3.0; 4]).unwrap().p_value, 1.0);
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(rank_sum_test(&a, &a).unwrap().p_value, 1.0);
        assert!(rank_sum_test(&[1.0, 2.0], &a).is_err());
    }

    #[test]
    fn ties_use_average_ranks() {
        let (r, t) = pooled_ranks(&[1.0, 2.0, 2.0, 4.0, 2.0]);
        assert_eq!(r, vec![1.0, 3.0, 3.0, 5.0, 3.0]);
        assert_eq!(t, 24.0);
        // same ordering evidence, with ties the variance shrinks and p does not grow
        let tied = rank_sum_test(&[1.0, 1.0, 2.0, 2.0], &[3.0, 3.0, 4.0, 4.0]).unwrap();
        let untied = rank_sum_test(&[1.0, 1.1, 2.0, 2.1], &[3.0, 3.1, 4.0, 4.1]).unwrap();
        assert!(tied.p_value <= untied.p_value);
    }

    #[test]
    fn bonferroni_scales_and_caps() {
        assert!((bonferroni(0.03, 5) - 0.15).abs() < 1e-15);
        assert_eq!(bonferroni(0.4, 5), 1.0);
    }

    #[test]
    fn median_matches_sort() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
