use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use cnnsense::operator::write_filterbank;
use cnnsense::{Dims, FilterBank};
use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cnnsense"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

/// Parses a CSV, checking the header and that every cell is numeric.
fn csv(path: PathBuf, header: &str) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(header));
    let width = header.split(',').count();
    lines
        .map(|l| {
            let row: Vec<f64> = l.split(',').map(|c| c.parse().unwrap()).collect();
            assert_eq!(row.len(), width);
            row
        })
        .collect()
}

const SMALL_1D: &[&str] = &[
    "--num-filters", "8", "--channels", "4", "--filter-len", "3", "--input-len", "12",
    "--k", "3", "--trials", "40",
];
const SMALL_2D: &[&str] = &[
    "--channels", "8", "--num-filters", "8", "--input-len", "8", "--trials", "100",
];

fn args<'a>(cmd: &'a str, out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd, "--seed", "7", "--out", out];
    v.extend_from_slice(extra);
    v
}

#[test]
fn reruns_are_bitwise_identical() {
    let tmp = TempDir::new().unwrap();
    let cases: [(&str, &[&str]); 5] = [
        ("rip-1d", SMALL_1D),
        ("rip-2d", SMALL_2D),
        ("iht", SMALL_1D),
        ("recover", &["--trials", "2"]),
        ("coherence", &["--channels", "3", "--num-filters", "16"]),
    ];
    for (cmd, extra) in cases {
        let a = tmp.path().join(format!("{cmd}-a"));
        let b = tmp.path().join(format!("{cmd}-b"));
        let cfg = tmp.path().join(format!("{cmd}.json"));
        let dumped = run_ok(&args(cmd, a.to_str().unwrap(), extra).iter().copied().chain(["--dump-config"]).collect::<Vec<_>>());
        fs::write(&cfg, &dumped.stdout).unwrap();
        run_ok(&args(cmd, a.to_str().unwrap(), extra));
        // the second run is driven by the dumped config file alone
        run_ok(&[cmd, "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]);
        let (fa, mut fb) = (files(&a), files(&b));
        // config.json records the output directory, which differs
        let (mut ca, cb) = (json(a.join("config.json")), json(b.join("config.json")));
        ca["out"] = cb["out"].clone();
        assert_eq!(ca, cb, "{cmd}");
        fb.insert("config.json".into(), fa["config.json"].clone());
        assert_eq!(fa, fb, "{cmd}");
    }
}

#[test]
fn dump_config_round_trips() {
    let tmp = TempDir::new().unwrap();
    for cmd in ["rip-1d", "rip-2d", "recover", "coherence", "iht"] {
        let first = run_ok(&[cmd, "--seed", "3", "--dump-config"]);
        let path = tmp.path().join("c.json");
        fs::write(&path, &first.stdout).unwrap();
        let second = run_ok(&[cmd, "--config", path.to_str().unwrap(), "--dump-config"]);
        assert_eq!(first.stdout, second.stdout, "{cmd}");
        let v: Value = serde_json::from_slice(&first.stdout).unwrap();
        assert_eq!(v["command"], cmd);
    }
}

#[test]
fn config_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("x");
    let out = out.to_str().unwrap();
    assert_eq!(run(&["rip-1d", "--seed", "1", "--trials", "0", "--out", out]).status.code(), Some(2));
    assert_eq!(run(&["rip-1d", "--out", out]).status.code(), Some(2), "seed is mandatory");
    assert_eq!(run(&["rip-2d", "--seed", "1", "--input-len", "15", "--out", out]).status.code(), Some(2));
    assert_eq!(run(&["iht", "--seed", "1", "--k", "97", "--out", out]).status.code(), Some(2));

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"trials": 5, "colour": "red"}"#).unwrap();
    assert_eq!(run(&["rip-1d", "--seed", "1", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    fs::write(&bad, r#"{"command": "iht"}"#).unwrap();
    assert_eq!(run(&["rip-1d", "--seed", "1", "--config", bad.to_str().unwrap()]).status.code(), Some(2));

    let x = tmp.path().join("x.txt");
    fs::write(&x, "1 2 3\n4 5\n").unwrap();
    let r = run(&["recover", "--seed", "1", "--input", x.to_str().unwrap(), "--out", out]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("1024"));
    assert!(!Path::new(out).exists());
}

#[test]
fn rip_1d_outputs_parse_back() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("r");
    run_ok(&args("rip-1d", out.to_str().unwrap(), SMALL_1D));
    let hist = "bin_lo,bin_hi,count";
    for name in ["ratio_hist.csv", "wwt_ratio_hist.csv", "recon_error_hist.csv"] {
        let rows = csv(out.join(name), hist);
        assert_eq!(rows.len(), 50);
    }
    let counted: f64 = csv(out.join("ratio_hist.csv"), hist).iter().map(|r| r[2]).sum();
    assert_eq!(counted, 40.0);
    let trials = csv(out.join("trials.csv"), "trial,rip_ratio,wwt_ratio,wwt_full_ratio,error");
    assert_eq!(trials.len(), 40);
    let report = json(out.join("report.json"));
    let ratios = report["rip"]["ratios"].as_array().unwrap();
    for (row, r) in trials.iter().zip(ratios) {
        assert_eq!(row[1], r.as_f64().unwrap());
    }
    assert_eq!(report["rip"]["params"]["k"], 3);
}

#[test]
fn single_iht_step_matches_rip_1d_error() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let mut extra = SMALL_1D.to_vec();
    extra.extend(["--upsampling", "switches"]);
    run_ok(&args("rip-1d", a.to_str().unwrap(), &extra));
    extra.extend(["--iht-iters", "1"]);
    run_ok(&args("iht", b.to_str().unwrap(), &extra));
    let errors = csv(a.join("trials.csv"), "trial,rip_ratio,wwt_ratio,wwt_full_ratio,error");
    let resid = csv(b.join("trial_residuals.csv"), "trial,iter,relative_residual");
    assert_eq!(errors.len(), resid.len());
    for (e, r) in errors.iter().zip(&resid) {
        assert_eq!(r[1], 1.0);
        assert!((e[4] - r[2]).abs() <= 1e-14);
    }
}

#[test]
fn iht_default_setup_improves() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("i");
    run_ok(&["iht", "--seed", "2", "--trials", "200", "--out", out.to_str().unwrap()]);
    let hist = csv(out.join("residual_history.csv"), "iter,relative_residual");
    assert_eq!(hist.len(), 10);
    assert!(hist.windows(2).all(|w| w[1][1] <= w[0][1]));
    let report = json(out.join("report.json"));
    assert!(report["improved_fraction"].as_f64().unwrap() >= 0.9);
}

#[test]
fn reduced_rip_2d_is_fast_and_centred() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("r");
    let start = Instant::now();
    run_ok(&args("rip-2d", out.to_str().unwrap(), SMALL_2D));
    assert!(start.elapsed() < Duration::from_secs(5));
    let report = json(out.join("report.json"));
    let mean = report["mean"].as_f64().unwrap();
    assert!((mean - 1.0).abs() < 0.1, "{mean}");
    assert_eq!(report["params"]["pooling"]["mode"], "regions");
    let rows = csv(out.join("ratios.csv"), "trial,ratio");
    assert_eq!(rows.len(), 100);
}

#[test]
fn recover_planted_and_from_file() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("p");
    run_ok(&["recover", "--seed", "4", "--trials", "2", "--out", out.to_str().unwrap()]);
    let report = json(out.join("report.json"));
    assert!(report["mean_recall"].as_f64().unwrap() >= 0.9);
    let support = csv(out.join("support.csv"), "trial,index,block,position,value");
    let planted = csv(out.join("planted.csv"), "trial,index,block,position,value");
    assert_eq!(planted.len(), 20);
    assert!(support.iter().all(|r| r[1] == r[2] * 28.0 + r[3]));

    let huge = tmp.path().join("h");
    run_ok(&["recover", "--seed", "4", "--lambda", "1e6", "--out", huge.to_str().unwrap()]);
    let report = json(huge.join("report.json"));
    assert_eq!(report["trials"][0]["nnz"], 0);
    assert_eq!(report["trials"][0]["recall"], 0.0);
    assert_eq!(report["mean_recall"], 0.0);

    // an input file made from the planted code recovers the same support
    let x_path = tmp.path().join("x.txt");
    let file_out = tmp.path().join("f");
    // rebuild x = W^T z from the planted code with the same bank
    let bank = cnnsense::operator::new_random_filterbank(96, 32, 5, Dims::One, 4).unwrap();
    let op = cnnsense::operator::build_operator(bank, cnnsense::InputGeometry::new(Dims::One, 32, 1).unwrap()).unwrap();
    let mut z = vec![0.0; op.row_count()];
    for r in planted.iter().filter(|r| r[0] == 0.0) {
        z[r[1] as usize] = r[4];
    }
    let x = op.apply_adjoint(&z).unwrap();
    let text: Vec<String> = x.iter().map(|v| format!("{v:e}")).collect();
    fs::write(&x_path, text.join("\n")).unwrap();
    run_ok(&["recover", "--seed", "4", "--input", x_path.to_str().unwrap(), "--out", file_out.to_str().unwrap()]);
    let report = json(file_out.join("report.json"));
    assert_eq!(report["planted"], false);
    assert!(report["trials"][0]["recall"].is_null());
    let found: Vec<f64> = csv(file_out.join("support.csv"), "trial,index,block,position,value")
        .iter()
        .map(|r| r[1])
        .collect();
    let want: Vec<f64> = planted.iter().filter(|r| r[0] == 0.0).map(|r| r[1]).collect();
    assert_eq!(found, want);
}

#[test]
fn coherence_of_imported_banks() {
    let tmp = TempDir::new().unwrap();
    // four one-hot filters over four channels: distinct rows never overlap
    let mut w = vec![0.0; 16];
    for i in 0..4 {
        w[i * 5] = 1.0;
    }
    let bank = FilterBank::new(4, 4, 1, Dims::Two, w).unwrap();
    let path = tmp.path().join("eye.mripfb");
    let mut bytes = Vec::new();
    write_filterbank(&mut bytes, &bank).unwrap();
    fs::write(&path, bytes).unwrap();
    let out = tmp.path().join("c");
    let res = run_ok(&["coherence", "--filters", path.to_str().unwrap(), "--input-len", "4", "--out", out.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&res.stdout).contains("mu = 0"));
    let report = json(out.join("report.json"));
    assert_eq!(report["mu"], 0.0);
    assert_eq!(report["source"], "file");
    assert_eq!(fs::read(out.join("filters.mripfb")).unwrap(), fs::read(&path).unwrap());

    let small = tmp.path().join("s");
    run_ok(&["coherence", "--seed", "1", "--channels", "3", "--num-filters", "64", "--out", small.to_str().unwrap()]);
    let mu = json(small.join("report.json"))["mu"].as_f64().unwrap();
    assert!((mu - 0.670).abs() <= 0.15, "{mu}");
}
