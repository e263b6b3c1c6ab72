use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn katolab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_katolab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("KATOLAB_OUTPUT")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn hypotheses_pass_for_free_case() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("free.toml");
    let out = katolab(&["-c", cfg.to_str().unwrap(), "hypotheses"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json(&dir.path().join("hypotheses.json"));
    let result = &rep["result"];
    for key in ["selfadjoint", "thm_main_ii", "thm_main_iii", "heat_ok", "heat_full"] {
        assert_eq!(result[key]["ok"], true, "{key}");
        assert_eq!(result[key]["value"], 0.0, "{key}");
    }
    assert_eq!(result["thm_main_i"], true);
    let csv = std::fs::read_to_string(dir.path().join("hypotheses.csv")).unwrap();
    let hash = rep["config_hash"].as_str().unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with(hash) && l.ends_with("true")));
}

#[test]
fn critical_well_flags_a_dip_at_zero_energy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("critical_well.toml");
    let out = katolab(&["-c", cfg.to_str().unwrap(), "resonance-scan"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json(&dir.path().join("resonance.json"));
    assert_eq!(rep["result"]["dip_flag"], true);
    let dip = &rep["result"]["minima"][0];
    assert!(dip["lambda"].as_f64().unwrap() < 0.25);
    assert!(dip["sigma"].as_f64().unwrap() < rep["result"]["tau"].as_f64().unwrap());
    assert!(dir.path().join("resonance_dips.csv").exists());

    // the shallow well has no dip
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("well.toml");
    let out = katolab(&["-c", cfg.to_str().unwrap(), "resonance-scan"], dir.path());
    assert!(out.status.success());
    assert_eq!(json(&dir.path().join("resonance.json"))["result"]["dip_flag"], false);
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = configs().join("well.toml");
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for (k, dir) in runs.iter().enumerate() {
        let jobs = if k == 0 { "1" } else { "3" };
        let out = katolab(
            &[
                "-c",
                cfg.to_str().unwrap(),
                "--tolerance-profile",
                "fast",
                "--jobs",
                jobs,
                "fk-mc",
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = json(&runs[0].path().join("manifest.json"));
    let b = json(&runs[1].path().join("manifest.json"));
    assert_eq!(a["config_hash"], b["config_hash"]);
    assert_eq!(a["files"], b["files"]);
    for name in ["fk_mc.csv", "fk_mc.json"] {
        let x = std::fs::read(runs[0].path().join(name)).unwrap();
        let y = std::fs::read(runs[1].path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn seed_changes_the_hash() {
    let cfg = configs().join("well.toml");
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, seed) in dirs.iter().zip(["1", "2"]) {
        let out = katolab(&["-c", cfg.to_str().unwrap(), "--seed", seed, "kato-norm"], dir.path());
        assert!(out.status.success());
    }
    let a = json(&dirs[0].path().join("manifest.json"));
    let b = json(&dirs[1].path().join("manifest.json"));
    assert_ne!(a["config_hash"], b["config_hash"]);
}

#[test]
fn malformed_config_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = \"seven\"\n").unwrap();
    let out = katolab(&["-c", bad.to_str().unwrap(), "hypotheses"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("malformed config"));
}

#[test]
fn unknown_subcommand_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = katolab(&["frobnicate"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn precondition_failure_has_its_own_code() {
    let dir = tempfile::tempdir().unwrap();
    let src = std::fs::read_to_string(configs().join("free.toml")).unwrap();
    let cfg = src.replace("[scan.t]\nstart = 1.0", "[scan.t]\nstart = 0.1");
    assert_ne!(cfg, src);
    let path = dir.path().join("early.toml");
    std::fs::write(&path, cfg).unwrap();
    let out = katolab(&["-c", path.to_str().unwrap(), "dispersive-run"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t >= 0.5"));
}

#[test]
fn output_root_from_environment() {
    let root = tempfile::tempdir().unwrap();
    let cfg = configs().join("free.toml");
    let out = Command::new(env!("CARGO_BIN_EXE_katolab"))
        .args(["-c", cfg.to_str().unwrap(), "kato-norm"])
        .env("KATOLAB_OUTPUT", root.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let runs: Vec<_> = std::fs::read_dir(root.path()).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let run = runs[0].as_ref().unwrap().path();
    let manifest = json(&run.join("manifest.json"));
    let hash = manifest["config_hash"].as_str().unwrap();
    assert!(run.file_name().unwrap().to_str().unwrap().starts_with(&hash[..12]));
}
