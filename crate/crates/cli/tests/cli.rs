use std::path::Path;
use std::process::Command;

use emc_bench::{run_experiment, ExperimentConfig, Overrides, Sample};

fn emc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_emc"))
}

fn small(experiment: &str, extra: &str) -> String {
    format!("experiment = \"{experiment}\"\n[emc]\niters = 2\npaths = 200\nsa_iters = 20\nseed = 3\n{extra}")
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for rel in ["trace.csv", "policy.csv", "stats.csv", "plotdata/objective.csv", "plotdata/substeps.csv"] {
        out.push((rel.to_string(), std::fs::read(dir.join(rel)).unwrap()));
    }
    let mut grids: Vec<_> = std::fs::read_dir(dir.join("plotdata"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("policy_"))
        .collect();
    grids.sort();
    for g in grids {
        out.push((g.file_name().unwrap().to_string_lossy().into(), std::fs::read(&g).unwrap()));
    }
    out
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "experiment = \"growth\"\n[emc]\niters = 0\npaths = 10\nsa_iters = 1\nseed = 1\n");
    assert_eq!(emc().args(["run", bad.to_str().unwrap()]).output().unwrap().status.code(), Some(1));
    let missing = dir.path().join("missing.toml");
    assert_eq!(emc().args(["run", missing.to_str().unwrap()]).output().unwrap().status.code(), Some(1));
    assert_eq!(emc().arg("frobnicate").output().unwrap().status.code(), Some(1));
    assert_eq!(emc().arg("--help").output().unwrap().status.code(), Some(0));
    let custom = write(dir.path(), "custom.toml", &small("custom", ""));
    let out = emc().args(["run", custom.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("custom"));

    // the output path is a regular file, so writing below it fails at run time
    let blocker = write(dir.path(), "blocker", "");
    let ok = write(dir.path(), "ok.toml", &small("growth", "[growth]\nbases = [\"affine\"]\n"));
    let out = emc()
        .args(["run", ok.to_str().unwrap(), "--out", blocker.join("sub").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    let good = emc()
        .args(["run", ok.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap(), "--iters", "1"])
        .output()
        .unwrap();
    assert_eq!(good.status.code(), Some(0));
    let trace = std::fs::read_to_string(dir.path().join("o/trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        ("growth", small("growth", "")),
        ("single", small("pricing-single", "[pricing_single]\ncapacities = [5]\n")),
        (
            "multi",
            small(
                "pricing-multi",
                "[pricing_multi]\ncapacities = [30, 20]\nlambda0 = [30.0, 30.0, 30.0]\nperiods = 3\ninitial_level = 10.0\nreport_periods = [1, 3]\n[grid]\npoints = 3\n",
            ),
        ),
        ("rbc", small("rbc", "[rbc]\nhorizon = 3\n[grid]\npoints = 3\n")),
    ];
    for (name, text) in configs {
        let cfg = write(dir.path(), &format!("{name}.toml"), &text);
        let mut runs = Vec::new();
        for threads in ["1", "3"] {
            let out = dir.path().join(format!("{name}_{threads}"));
            let run = emc()
                .args(["run", cfg.to_str().unwrap(), "--threads", threads, "--out", out.to_str().unwrap()])
                .output()
                .unwrap();
            assert!(run.status.success(), "{name}: {}", String::from_utf8_lossy(&run.stderr));
            runs.push(read_all(&out));
        }
        assert_eq!(runs[0], runs[1], "{name} differs between thread counts");
    }
}

#[test]
fn evaluation_seed_is_disjoint_from_training() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::from_toml(&small("growth", "[growth]\nbases = [\"affine\"]\n")).unwrap();
    cfg.apply(&Overrides {
        output_dir: Some(dir.path().to_path_buf()),
        seed: Some(40),
        ..Default::default()
    })
    .unwrap();
    let report = run_experiment(&cfg).unwrap();
    let v = report.variant("affine").unwrap();
    let seeds: Vec<(Sample, u64)> = v.stats.iter().map(|r| (r.sample, r.seed)).collect();
    assert!(seeds.iter().all(|(s, seed)| match s {
        Sample::In => *seed == 40,
        Sample::Out => *seed == 41,
    }));
    assert_ne!(
        v.stat("emc", "total", Sample::In).unwrap().mean,
        v.stat("emc", "total", Sample::Out).unwrap().mean
    );
    let stats = std::fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    assert!(stats.lines().skip(1).all(|l| l.contains(",40,") || l.contains(",41,")));
}

#[test]
fn multi_grid_has_flat_fixed_price_columns_and_period_rows() {
    let dir = tempfile::tempdir().unwrap();
    let text = small(
        "pricing-multi",
        "[pricing_multi]\ncapacities = [30, 20]\nlambda0 = [30.0, 30.0, 30.0]\nperiods = 3\ninitial_level = 10.0\nreport_periods = [1, 3]\n[grid]\nperiod = 2\npoints = 4\n",
    );
    let mut cfg = ExperimentConfig::from_toml(&text).unwrap();
    cfg.output_dir = dir.path().to_path_buf();
    let report = run_experiment(&cfg).unwrap();
    let grid = std::fs::read_to_string(dir.path().join("plotdata/policy_network.csv")).unwrap();
    let mut lines = grid.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 16);
    for name in ["mto_price_1", "mto_price_2", "mto_price_3", "mts_price_1"] {
        let c = header.iter().position(|h| *h == name).unwrap();
        assert!(rows.iter().all(|r| r[c] == rows[0][c]), "{name} varies");
    }
    let mto = header.iter().position(|h| *h == "mto_price_1").unwrap();
    let mts = header.iter().position(|h| *h == "mts_price_1").unwrap();
    assert_eq!(rows[0][mto], rows[0][mts]);
    let v = report.variant("network").unwrap();
    for policy in ["emc", "mto", "mts"] {
        for q in ["total", "period_1", "period_3"] {
            assert!(v.stat(policy, q, Sample::Out).is_some(), "{policy} {q}");
        }
    }
}

#[test]
fn rbc_grid_contains_the_lq_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::from_toml(&small("rbc", "[rbc]\nhorizon = 3\n[grid]\nperiod = 1\npoints = 3\n")).unwrap();
    cfg.output_dir = dir.path().to_path_buf();
    run_experiment(&cfg).unwrap();
    let p = emc_core::models::rbc::RbcParams {
        horizon: 3,
        ..Default::default()
    };
    let k = emc_core::models::rbc::rbc_steady_state(&p).unwrap().k_star;
    let grid = std::fs::read_to_string(dir.path().join("plotdata/policy_T3.csv")).unwrap();
    let header: Vec<&str> = grid.lines().next().unwrap().split(',').collect();
    let lq = header.iter().position(|h| *h == "lq_consumption").unwrap();
    // middle of a 3x3 grid is (k*, 0)
    let mid: Vec<&str> = grid.lines().nth(5).unwrap().split(',').collect();
    assert_eq!(mid[1].parse::<f64>().unwrap(), k);
    assert_eq!(mid[2].parse::<f64>().unwrap(), 0.0);
    let expected = k.powf(p.gamma) + (1.0 - p.delta) * k - k;
    assert!((mid[lq].parse::<f64>().unwrap() - expected).abs() < 1e-10 * expected);
}
