use std::sync::Arc;

use uqd_core::{generate_cvt, AlgorithmConfig, Arm, Centroids, Evaluator, NoiseModel, Optimizer, RngStream, SolutionRecord, Task, Variant};

fn centroids() -> Arc<Centroids> {
    Arc::new(generate_cvt(64, 2, 5_000, 30, &RngStream::new(11, 0)).unwrap())
}

fn evaluator(noise: NoiseModel, threads: usize) -> Evaluator {
    let task: Arc<dyn Task> = Arc::new(Arm::new(8, noise).unwrap());
    Evaluator::with_threads(task, threads).unwrap()
}

fn run(config: AlgorithmConfig, noise: NoiseModel, threads: usize, generations: usize, seed: u64) -> Vec<Vec<SolutionRecord>> {
    let mut opt = Optimizer::new(config, centroids(), evaluator(noise, threads), RngStream::new(seed, 0)).unwrap();
    for _ in 0..generations {
        opt.step().unwrap();
    }
    opt.archive().cells().map(<[SolutionRecord]>::to_vec).collect()
}

fn small(variant: Variant) -> AlgorithmConfig {
    let mut c = AlgorithmConfig::new(variant, 256);
    if variant.uses_samples() {
        c = c.with_samples(4);
    }
    c
}

#[test]
fn thread_count_does_not_change_results() {
    let noise = NoiseModel::gaussian(0.01, 0.01);
    for v in Variant::ALL {
        let a = run(small(v), noise, 1, 50, 5);
        let b = run(small(v), noise, 8, 50, 5);
        assert!(a.iter().any(|c| !c.is_empty()), "{v}");
        assert_eq!(a, b, "{v} differs between 1 and 8 threads");
    }
}

#[test]
fn seed_changes_results() {
    let noise = NoiseModel::gaussian(0.01, 0.01);
    let a = run(small(Variant::MapElites), noise, 2, 5, 1);
    let b = run(small(Variant::MapElites), noise, 2, 5, 2);
    assert_ne!(a, b);
}

#[test]
fn sampling_variants_with_one_sample_reduce_to_their_base() {
    let noise = NoiseModel::gaussian(0.01, 0.01);
    let pairs = [
        (Variant::MapElitesSampling, Variant::MapElites),
        (Variant::DeepGridSampling, Variant::DeepGrid),
    ];
    for (sampling, base) in pairs {
        let a = run(AlgorithmConfig::new(sampling, 256).with_samples(1), noise, 4, 30, 7);
        let b = run(AlgorithmConfig::new(base, 256), noise, 4, 30, 7);
        assert_eq!(a, b, "{sampling} with N = 1 vs {base}");
    }
}

#[test]
fn without_noise_sampling_matches_map_elites_with_fewer_offspring() {
    // N identical draws average to the single draw, so ME-sampling(N, N*S')
    // makes the same S' offspring as ME(S') and keeps the same elites.
    let noise = NoiseModel::none();
    let n = 4;
    let a = run(AlgorithmConfig::new(Variant::MapElites, 64), noise, 4, 40, 3);
    let b = run(AlgorithmConfig::new(Variant::MapElitesSampling, 64 * n).with_samples(n as u32), noise, 4, 40, 3);
    let strip = |cells: Vec<Vec<SolutionRecord>>| -> Vec<Vec<(Vec<f64>, f64, Vec<f64>)>> {
        cells
            .into_iter()
            .map(|c| c.into_iter().map(|r| (r.genotype.into_inner(), r.mean_fitness, r.mean_descriptor)).collect())
            .collect()
    };
    let b_counts: Vec<u32> = b.iter().flatten().map(|r| r.eval_count).collect();
    assert!(b_counts.iter().all(|&c| c == n as u32));
    assert_eq!(strip(a), strip(b));
}
