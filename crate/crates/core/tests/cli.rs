use std::fs;
use std::path::Path;
use std::process::Command;

use porodyn::scenario::ScenarioConfig;

fn porodyn() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_porodyn"));
    c.env_remove("PORODYN_OUT");
    c
}

fn write_config(dir: &Path, cfg: &ScenarioConfig) -> std::path::PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn small(name: &str) -> ScenarioConfig {
    let mut c = ScenarioConfig::preset(name).unwrap();
    c.domain.n = 8;
    c.time.t_end = 0.01;
    c
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn completed_run_exits_zero_with_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small("damage-pulse"));
    let out = tmp.path().join("run");
    let st = porodyn().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    for f in ["energy.csv", "audit.csv", "manifest.json", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(summary(&out)["status"], "completed");
}

#[test]
fn environment_overrides_config_dir_and_flag_overrides_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small("equilibrium"));
    let env_dir = tmp.path().join("from_env");
    let st = porodyn().env("PORODYN_OUT", &env_dir).args(["simulate", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(env_dir.join("manifest.json").exists());
    let flag_dir = tmp.path().join("from_flag");
    let st = porodyn()
        .env("PORODYN_OUT", tmp.path().join("unused"))
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&flag_dir)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(flag_dir.join("manifest.json").exists());
    assert!(!tmp.path().join("unused").exists());
}

#[test]
fn overrides_apply_before_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small("equilibrium"));
    let out = tmp.path().join("run");
    let st = porodyn()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--cells", "6", "--tau", "0.005", "--seed", "3", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    assert_eq!(summary(&out)["steps"], 2);
    let st = porodyn().args(["simulate", "--config"]).arg(&cfg).args(["--cells", "2"]).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn invalid_configs_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.json");
    fs::write(&p, r#"{"moduli": {"kv": 0.0}}"#).unwrap();
    let o = porodyn().args(["simulate", "--config"]).arg(&p).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("(ass:4)"));
    fs::write(&p, "{\"domain\": {\n  \"d\": 2,,\n}}").unwrap();
    let o = porodyn().args(["simulate", "--config"]).arg(&p).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let o = porodyn().args(["simulate", "--config"]).arg(tmp.path().join("missing.json")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stiff_load_with_no_halving_room_aborts_with_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small("damage-pulse");
    c.solver.picard_max = 1;
    c.time.tau_min = c.time.tau;
    let cfg = write_config(tmp.path(), &c);
    let out = tmp.path().join("run");
    let st = porodyn().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(1));
    let s = summary(&out);
    assert_eq!(s["status"], "aborted");
    assert!(s["message"].as_str().unwrap().contains("no convergence"));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn norm_ceiling_breach_is_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small("damage-pulse");
    c.time.t_end = 0.05;
    c.solver.norm_ceiling = 1e-6;
    let cfg = write_config(tmp.path(), &c);
    let out = tmp.path().join("run");
    let st = porodyn().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(1));
    let s = summary(&out);
    assert_eq!(s["status"], "norm-ceiling");
    assert!(!s["norms_over_ceiling"].as_array().unwrap().is_empty());
}

#[test]
fn verify_reports_are_machine_readable() {
    let o = porodyn().args(["verify", "gradients", "--samples", "200", "--seed", "4"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["passed"], true);
    assert_eq!(r["checks"].as_array().unwrap().len(), 3);
    let o = porodyn().args(["verify", "lemma", "--levels", "1"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_energy_accepts_a_config() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small("viscous-decay");
    c.time.t_end = 0.02;
    let cfg = write_config(tmp.path(), &c);
    let o = porodyn().args(["verify", "energy", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn shipped_configs_match_presets() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in porodyn::scenario::PRESETS {
        let text = fs::read_to_string(dir.join(format!("{name}.json"))).unwrap();
        let cfg = porodyn::scenario::parse_config(&text).unwrap();
        let mut want = ScenarioConfig::preset(name).unwrap();
        want.output.dir = format!("out/{name}");
        assert_eq!(cfg, want, "{name}");
    }
}
