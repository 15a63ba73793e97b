use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_bpre-lab");

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("BPRE_LAB_OUT")
        .output()
        .expect("binary runs")
}

fn only_run_dir(out: &Path) -> PathBuf {
    let mut dirs: Vec<_> = std::fs::read_dir(out.join("runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.pop().unwrap()
}

fn tables(run_dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for stage in std::fs::read_dir(run_dir).unwrap() {
        let stage = stage.unwrap().path();
        if !stage.is_dir() {
            continue;
        }
        for f in std::fs::read_dir(&stage).unwrap() {
            let f = f.unwrap().path();
            let key = f.strip_prefix(run_dir).unwrap().display().to_string();
            out.insert(key, std::fs::read(&f).unwrap());
        }
    }
    out
}

#[test]
fn bad_delta_fails_conditions_with_exit_2() {
    let out = tempfile::tempdir().unwrap();
    let res = run(
        &["conditions", "--config", config("bad_delta.toml").to_str().unwrap()],
        out.path(),
    );
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
    let dir = only_run_dir(out.path());
    let hyp = std::fs::read_to_string(dir.join("conditions/hypotheses.tsv")).unwrap();
    let h2 = hyp.lines().find(|l| l.starts_with("H2")).unwrap();
    assert_eq!(h2.split('\t').nth(1), Some("false"));
    let manifest: toml::Value = toml::from_str(&std::fs::read_to_string(dir.join("manifest.toml")).unwrap()).unwrap();
    assert_eq!(manifest["stages"]["conditions"]["status"].as_str(), Some("fail"));
    assert_eq!(manifest["stages"]["conditions"]["values"]["h2"].as_bool(), Some(false));
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("smoke.toml");
    let cfg = cfg.to_str().unwrap();
    let ra = run(&["all", "--config", cfg, "--workers", "1"], a.path());
    let rb = run(&["all", "--config", cfg, "--workers", "4"], b.path());
    assert_eq!(ra.status.code(), rb.status.code());
    assert_ne!(ra.status.code(), Some(1), "{}", String::from_utf8_lossy(&ra.stderr));
    let (da, db) = (only_run_dir(a.path()), only_run_dir(b.path()));
    assert_eq!(da.file_name(), db.file_name());
    let (ta, tb) = (tables(&da), tables(&db));
    assert!(ta.len() >= 15, "{:?}", ta.keys());
    assert_eq!(ta, tb);
}

#[test]
fn manifest_lists_every_table_with_row_counts() {
    let out = tempfile::tempdir().unwrap();
    let res = run(
        &["survival", "--config", config("smoke.toml").to_str().unwrap()],
        out.path(),
    );
    assert_ne!(res.status.code(), Some(1), "{}", String::from_utf8_lossy(&res.stderr));
    let dir = only_run_dir(out.path());
    let manifest: toml::Value = toml::from_str(&std::fs::read_to_string(dir.join("manifest.toml")).unwrap()).unwrap();
    let artifacts = manifest["stages"]["survival"]["artifacts"].as_array().unwrap();
    assert_eq!(artifacts.len(), 4);
    for a in artifacts {
        let text = std::fs::read_to_string(dir.join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(text.lines().count() - 1, a["rows"].as_integer().unwrap() as usize);
    }
    let est = std::fs::read_to_string(dir.join("survival/estimates.tsv")).unwrap();
    assert_eq!(est.lines().next(), Some("n\ti\tmethod\testimate\tse\ta_n\tN\tseed"));
    assert!(dir.join("config.toml").exists());
}

#[test]
fn stages_merge_into_one_manifest() {
    let out = tempfile::tempdir().unwrap();
    let cfg = config("smoke.toml");
    let cfg = cfg.to_str().unwrap();
    run(&["conditions", "--config", cfg], out.path());
    run(&["lyapunov", "--config", cfg], out.path());
    let dir = only_run_dir(out.path());
    let manifest: toml::Value = toml::from_str(&std::fs::read_to_string(dir.join("manifest.toml")).unwrap()).unwrap();
    let stages = manifest["stages"].as_table().unwrap();
    assert!(stages.contains_key("conditions") && stages.contains_key("lyapunov"));
}

#[test]
fn seed_override_changes_run_directory() {
    let out = tempfile::tempdir().unwrap();
    let cfg = config("smoke.toml");
    let cfg = cfg.to_str().unwrap();
    run(&["lyapunov", "--config", cfg], out.path());
    run(&["lyapunov", "--config", cfg, "--seed", "99"], out.path());
    assert_eq!(std::fs::read_dir(out.path().join("runs")).unwrap().count(), 2);
}

#[test]
fn output_env_var_is_used_without_flag() {
    let out = tempfile::tempdir().unwrap();
    let res = Command::new(BIN)
        .args(["lyapunov", "--config", config("smoke.toml").to_str().unwrap()])
        .env("BPRE_LAB_OUT", out.path())
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    only_run_dir(out.path());
}

#[test]
fn schema_errors_name_the_key_path() {
    let out = tempfile::tempdir().unwrap();
    let bad = out.path().join("bad.toml");
    let text = std::fs::read_to_string(config("smoke.toml"))
        .unwrap()
        .replace("samples = 4000\nenum_max_n", "samples = \"many\"\nenum_max_n");
    std::fs::write(&bad, text).unwrap();
    let res = run(&["survival", "--config", bad.to_str().unwrap()], out.path());
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("survival.samples"), "{err}");

    let text = std::fs::read_to_string(config("smoke.toml"))
        .unwrap()
        .replace("n_list = [10, 20, 40]", "n_list = [10, 40, 20]");
    std::fs::write(&bad, text).unwrap();
    let res = run(&["survival", "--config", bad.to_str().unwrap()], out.path());
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("survival.n_list"));
}

#[test]
fn missing_config_is_an_error() {
    let out = tempfile::tempdir().unwrap();
    let res = run(&["all", "--config", "/nonexistent/config.toml"], out.path());
    assert_eq!(res.status.code(), Some(1));
}
