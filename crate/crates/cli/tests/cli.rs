use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hsf(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsf"))
        .env_remove("HSF_OUT_DIR")
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("spawn hsf")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn sectors_partition_small_chain() {
    let dir = tempfile::tempdir().unwrap();
    let o = hsf(dir.path(), &["sectors", "--L", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("16 states"));
    let doc = read_json(&dir.path().join("sectors.json"));
    assert_eq!(doc["result"]["total"], 16);
    assert_eq!(doc["config"]["experiment"]["kind"], "sectors");
    let csv = std::fs::read_to_string(dir.path().join("sectors.csv")).unwrap();
    assert!(csv.starts_with("# config: {"));
    let dims: usize = csv.lines().skip(2).map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(dims, 16);
}

#[test]
fn sectors_with_fragments_reports_frozen_states() {
    let dir = tempfile::tempdir().unwrap();
    let o = hsf(dir.path(), &["sectors", "--L", "12", "--fragments"]);
    assert!(o.status.success(), "{}", stderr(&o));
    // largest sector at L=12 holds L^2/32 + 3L/8 + 1 = 10 frozen states
    assert!(stdout(&o).contains(", 10 frozen"), "{}", stdout(&o));
}

#[test]
fn template_fragment_at_twenty_six_sites() {
    let dir = tempfile::tempdir().unwrap();
    let o = hsf(
        dir.path(),
        &["fragment", "--root-template", "cluster-block-odd", "--L", "26", "--regime", "nn", "--summary-only"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("dimension 27132"));
    let doc = read_json(&dir.path().join("fragment.json"));
    assert_eq!(doc["result"]["summary"]["dimension"], 27132);
    assert_eq!(doc["config"]["experiment"]["root"]["bits"], "11011011011011011010000000");
}

#[test]
fn incompatible_template_length_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = hsf(dir.path(), &["fragment", "--root-template", "cluster-block", "--L", "26"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("experiment.root.template"), "{}", stderr(&o));
    assert!(!dir.path().join("fragment.json").exists());
}

#[test]
fn fragment_cap_is_a_resource_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = hsf(dir.path(), &["fragment", "--root", "110110110000", "--cap", "10"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn quench_compare_exact_pairs_densities() {
    let dir = tempfile::tempdir().unwrap();
    let o = hsf(
        dir.path(),
        &[
            "quench",
            "--init",
            "110110110000",
            "--L",
            "12",
            "--delta-over-omega",
            "5",
            "--v-over-delta",
            "0.5",
            "--compare-exact",
            "--grid",
            "linear",
            "--t-start",
            "0",
            "--t-stop",
            "10",
            "--points",
            "21",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let paired = std::fs::read_to_string(dir.path().join("densities_paired.csv")).unwrap();
    let mut lines = paired.lines().skip(1);
    assert_eq!(lines.next(), Some("t,site,n_eff,n_exact,diff"));
    assert_eq!(lines.count(), 21 * 12);
    let dev = read_json(&dir.path().join("quench.json"))["result"]["max_density_deviation"].as_f64().unwrap();
    assert!(dev > 0.0 && dev <= 0.15, "{dev}");
    let eff = std::fs::read_to_string(dir.path().join("quench.csv")).unwrap();
    assert_eq!(eff.lines().nth(1), Some("t,I,F_Q,S,n_1,n_2,n_3,n_4,n_5,n_6,n_7,n_8,n_9,n_10,n_11,n_12"));
}

#[test]
fn rerunning_the_echoed_config_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let o = hsf(dir.path(), &["spectrum", "--root", "1101101100000000", "--window", "mid:20", "--entropy"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let names = ["spectrum.csv", "r_histogram.csv", "spectrum.json"];
    let first: Vec<Vec<u8>> = names.iter().map(|n| std::fs::read(dir.path().join(n)).unwrap()).collect();
    let config = dir.path().join("config.json");
    let o = hsf(dir.path(), &["run", config.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for (n, bytes) in names.iter().zip(first) {
        assert_eq!(std::fs::read(dir.path().join(n)).unwrap(), bytes, "{n}");
    }
}

#[test]
fn inversion_needs_a_reversal_closed_fragment() {
    let dir = tempfile::tempdir().unwrap();
    let o = hsf(dir.path(), &["spectrum", "--root", "1101101100000000", "--inversion"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hsf(dir.path(), &["spectrum", "--root-template", "neel3-magnon", "--L", "15", "--inversion", "--entropy"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"experiment": {"kind": "sectors", "length": 4, "legnth": 5}}"#).unwrap();
    let o = hsf(dir.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("legnth"));
}

#[test]
fn dry_run_echoes_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = hsf(
        dir.path(),
        &["--dry-run", "spectrum", "--root-template", "neel3-magnon", "--L", "12", "--interaction", "vdw:3"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(cfg["experiment"]["root"]["bits"], "100100100100");
    assert_eq!(cfg["model"]["regime"], "weak_nonlocal");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_hsf"))
        .env("HSF_OUT_DIR", dir.path())
        .args(["--prefix", "small_", "sectors", "--L", "6"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("small_sectors.csv").exists());
}

#[test]
fn disorder_sweep_records_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = hsf(
        dir.path(),
        &[
            "--jobs",
            "1",
            "disorder-sweep",
            "--delta-over-omega",
            "4",
            "--v-over-delta",
            "0.2",
            "--interaction",
            "vdw:3",
            "--lengths",
            "8,11",
            "--widths",
            "0.001,0.1",
            "--realizations",
            "4",
            "--seed",
            "9",
            "--window",
            "10",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = read_json(&dir.path().join("sweep.json"));
    let cells = doc["result"]["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 4);
    assert!(cells.iter().all(|c| c["seeds"].as_array().unwrap().len() == 4));
    assert_eq!(doc["config"]["jobs"], 1);

    let o = hsf(dir.path(), &["fss", "--input", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("experiment.input"));
}

#[test]
fn recipe_configs_validate() {
    let dir = tempfile::tempdir().unwrap();
    let recipes = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(recipes).unwrap() {
        let path = entry.unwrap().path();
        let o = hsf(dir.path(), &["--dry-run", "run", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}: {}", path.display(), stderr(&o));
        n += 1;
    }
    assert!(n >= 10);
}
