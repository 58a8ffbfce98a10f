use std::fs;
use std::path::Path;
use std::process::Command;

use uqd_cli::{run_experiment, ExperimentConfig};

const SMALL: &str = r#"
seed = 11
generations = 6
niches = 16
sampling_sizes = [64]
metric_cadence = 3
m_reevals = 8
threads = 1

[cvt]
samples = 2000
iterations = 10

[task]
name = "arm"
genotype_dim = 4
fitness_std = 0.01
descriptor_std = 0.01

[[algorithms]]
variant = "me"
"#;

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn single_run_layout() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::from_toml(SMALL).unwrap();
    let outcome = run_experiment(&config, dir.path()).unwrap();
    assert_eq!(outcome.records.len(), 1);
    assert!(outcome.skipped.is_empty());
    let runs: Vec<_> = fs::read_dir(dir.path().join("runs")).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let run = &outcome.records[0].dir;
    for f in ["metrics.csv", "archive.csv", "timing.csv", "run.json", "fitness.svg", "reproducibility.svg"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    for f in ["summary.csv", "pareto.svg", "significance.csv", "timing.csv", "config.toml"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let metrics = read(&run.join("metrics.csv"));
    // header plus generations 0, 3 and 6
    let gens: Vec<&str> = metrics.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(gens, ["0", "3", "6"]);
    let summary = read(&dir.path().join("summary.csv"));
    assert_eq!(summary.lines().count(), 2);
}

#[test]
fn archive_reevaluating_variants_below_capacity_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace("niches = 16", "niches = 64")
        .replace("\"me\"", "\"pas\"\ndepth = 2");
    let config = ExperimentConfig::from_toml(&text).unwrap();
    let outcome = run_experiment(&config, dir.path()).unwrap();
    assert!(outcome.records.is_empty());
    assert_eq!(outcome.skipped.len(), 1);
    assert!(outcome.skipped[0].contains("k*D = 128"), "{}", outcome.skipped[0]);
}

#[test]
fn reruns_are_bit_identical() {
    let config = ExperimentConfig::from_toml(&SMALL.replace("threads = 1", "threads = 3")).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_experiment(&config, a.path()).unwrap();
    run_experiment(&config, b.path()).unwrap();
    let name = ra.records[0].dir.file_name().unwrap();
    for f in ["metrics.csv", "archive.csv", "reeval.csv", "corrected.csv"] {
        let pa = a.path().join("runs").join(name).join(f);
        let pb = b.path().join("runs").join(name).join(f);
        assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap(), "{f} differs");
    }
    assert_eq!(
        fs::read(a.path().join("summary.csv")).unwrap(),
        fs::read(b.path().join("summary.csv")).unwrap()
    );
}

fn uqd(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_uqd")).args(args).output().unwrap()
}

#[test]
fn cli_validate_and_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, SMALL).unwrap();
    let ok = uqd(&["run", "--config", cfg.to_str().unwrap(), "--validate"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(!dir.path().join("out").exists());

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, SMALL.replace("generations = 6", "generations = 0")).unwrap();
    let err = uqd(&["run", "--config", bad.to_str().unwrap(), "--validate"]);
    assert!(!err.status.success());
    assert!(String::from_utf8_lossy(&err.stderr).contains("generations"));

    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    let run = uqd(&["run", "--config", cfg.to_str().unwrap(), "--out", o, "--seed", "3", "--m-reevals", "4"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let run_dir = fs::read_dir(out.join("runs")).unwrap().next().unwrap().unwrap().path();
    let rd = run_dir.to_str().unwrap();

    let m = uqd(&["metrics", "--run", rd, "--m-reevals", "4"]);
    assert!(m.status.success(), "{}", String::from_utf8_lossy(&m.stderr));
    assert_eq!(read(&run_dir.join("metrics_recomputed.csv")).lines().count(), 2);

    let s = uqd(&["estimator-study", "--run", rd, "--m-max", "64", "--ms", "4,16"]);
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    // header plus two estimators at two values of M
    assert_eq!(read(&run_dir.join("estimator_study.csv")).lines().count(), 5);

    fs::remove_file(run_dir.join("fitness.svg")).unwrap();
    assert!(uqd(&["plot", "--out", o]).status.success());
    assert!(run_dir.join("fitness.svg").is_file());

    fs::remove_file(out.join("pareto.svg")).unwrap();
    let c = uqd(&["compare", "--out", o, "--time", "seconds"]);
    assert!(c.status.success(), "{}", String::from_utf8_lossy(&c.stderr));
    assert!(out.join("pareto.svg").is_file());
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e:#}", path.display()));
        n += 1;
    }
    assert!(n >= 2);
}
