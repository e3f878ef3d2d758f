//! End-to-end CLI checks: outputs, exit codes, and reproducibility.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dfqfd"))
}

const HUBBARD_MO: &str = "\
&FCI NORB=2,NELEC=2,MS2=0,
&END
2.0 1 1 1 1
2.0 2 2 2 2
2.0 1 1 2 2
2.0 1 2 1 2
-1.0 1 1 0 0
1.0 2 2 0 0
0.25 0 0 0 0
";

fn write_fcidump(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("hub.fcidump");
    std::fs::write(&path, HUBBARD_MO).unwrap();
    path
}

#[test]
fn factorize_xdf_writes_exact_decomposition_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let fcidump = write_fcidump(dir.path());
    let out = dir.path().join("d.json");
    let diag = dir.path().join("diag.csv");
    let status = bin()
        .args(["factorize"])
        .arg(&fcidump)
        .args(["--ndf", "2", "--method", "xdf"])
        .arg("--out")
        .arg(&out)
        .arg("--diagnostics")
        .arg(&diag)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&diag).unwrap();
    let last = csv.lines().last().unwrap();
    let mad: f64 = last.split(',').nth(3).unwrap().parse().unwrap();
    assert!(mad < 1e-10, "exact two-layer factorization, mad = {mad}");
    assert!(out.exists());
    assert!(dir.path().join("d.json.manifest.json").exists());
}

#[test]
fn cdf_improves_on_xdf_at_rank_one() {
    let dir = tempfile::tempdir().unwrap();
    let fcidump = write_fcidump(dir.path());
    let out = dir.path().join("d.json");
    let diag = dir.path().join("diag.csv");
    let status = bin()
        .args(["factorize"])
        .arg(&fcidump)
        .args(["--ndf", "1", "--method", "cdf", "--max-epochs", "2000"])
        .arg("--out")
        .arg(&out)
        .arg("--diagnostics")
        .arg(&diag)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&diag).unwrap();
    let objectives: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(objectives.len(), 3, "stages 0..2");
    assert!(objectives[1] <= objectives[0] + 1e-15);
    assert!(objectives[2] <= objectives[1] + 1e-15);
}

#[test]
fn missing_input_exits_with_io_code_and_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.json");
    let status = bin()
        .args(["factorize", "does-not-exist.fcidump", "--ndf", "1"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(5));
    assert!(!out.exists());
}

#[test]
fn malformed_fcidump_exits_with_parse_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.fcidump");
    std::fs::write(&path, "this is not an fcidump\n").unwrap();
    let status = bin()
        .args(["factorize"])
        .arg(&path)
        .args(["--ndf", "1"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn bad_sweep_spec_exits_with_parse_code() {
    let dir = tempfile::tempdir().unwrap();
    let fcidump = write_fcidump(dir.path());
    let status = bin()
        .args(["qfd"])
        .arg(&fcidump)
        .args(["--sweep", "bogus=1..3"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn oracle_single_site_returns_u() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.fcidump");
    std::fs::write(&path, "&FCI NORB=1,NELEC=2,MS2=0,\n&END\n1.7 1 1 1 1\n").unwrap();
    let out = dir.path().join("eig.json");
    let status = bin()
        .args(["oracle"])
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let vals = json["eigenvalues"].as_array().unwrap();
    assert_eq!(vals.len(), 1);
    assert!((vals[0].as_f64().unwrap() - 1.7).abs() < 1e-12);
}

#[test]
fn oracle_rejects_oversized_sector() {
    let dir = tempfile::tempdir().unwrap();
    let fcidump = write_fcidump(dir.path());
    let status = bin()
        .args(["oracle"])
        .arg(&fcidump)
        .args(["--cap", "1"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));
}

#[test]
fn qfd_exact_matches_oracle_ground_energy() {
    let dir = tempfile::tempdir().unwrap();
    let fcidump = write_fcidump(dir.path());
    let eig = dir.path().join("eig.json");
    assert!(bin()
        .args(["oracle"])
        .arg(&fcidump)
        .arg("--out")
        .arg(&eig)
        .status()
        .unwrap()
        .success());
    let spec = dir.path().join("spec.json");
    assert!(bin()
        .args(["qfd"])
        .arg(&fcidump)
        .args(["--ndf", "2", "--nqfd", "2", "--dt", "0.1"])
        .arg("--out")
        .arg(&spec)
        .status()
        .unwrap()
        .success());
    let oracle: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&eig).unwrap()).unwrap();
    let qfd: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&spec).unwrap()).unwrap();
    let fci0 = oracle["eigenvalues"][0].as_f64().unwrap();
    let s0 = qfd["gaps"]["s0"].as_f64().unwrap();
    assert!((fci0 - s0).abs() < 1e-8, "qfd {s0} vs fci {fci0}");
}

#[test]
fn sweep_emits_csv_table() {
    let dir = tempfile::tempdir().unwrap();
    let fcidump = write_fcidump(dir.path());
    let out = dir.path().join("sweep.json");
    let csv = dir.path().join("sweep.csv");
    assert!(bin()
        .args(["qfd"])
        .arg(&fcidump)
        .args(["--ndf", "2", "--sweep", "nqfd=1..3"])
        .arg("--out")
        .arg(&out)
        .arg("--csv")
        .arg(&csv)
        .status()
        .unwrap()
        .success());
    let table = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(table.lines().count(), 4, "header plus three rows");
    assert!(table.starts_with("param,value,s0"));
}

#[test]
fn gatecount_reports_formula_saving() {
    let dir = tempfile::tempdir().unwrap();
    let fcidump = write_fcidump(dir.path());
    let decomp = dir.path().join("d.json");
    assert!(bin()
        .args(["factorize"])
        .arg(&fcidump)
        .args(["--ndf", "1", "--method", "xdf"])
        .arg("--out")
        .arg(&decomp)
        .arg("--diagnostics")
        .arg(dir.path().join("diag.csv"))
        .status()
        .unwrap()
        .success());
    let out = dir.path().join("gc.json");
    assert!(bin()
        .args(["gatecount"])
        .arg(&decomp)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(json["cnot_saving"].as_u64().unwrap(), 8, "2 * N * n_DF = 2*4*1");
    assert_eq!(json["cnot_saving_formula"].as_u64().unwrap(), 8);
}

#[test]
fn identical_seeds_give_byte_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let fcidump = write_fcidump(dir.path());
    let run = |out: &Path, threads: &str| {
        assert!(bin()
            .args(["qfd"])
            .arg(&fcidump)
            .args([
                "--ndf",
                "2",
                "--nqfd",
                "2",
                "--mode",
                "hadamard-shots",
                "--shots",
                "400",
                "--post-select",
                "--echo",
                "2",
                "--seed",
                "42",
                "--threads",
                threads,
            ])
            .arg("--out")
            .arg(out)
            .status()
            .unwrap()
            .success());
    };
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    run(&a, "1");
    run(&b, "4");
    let ta = std::fs::read(&a).unwrap();
    let tb = std::fs::read(&b).unwrap();
    assert_eq!(ta, tb, "shot-mode output depends on thread count or rerun");
}
