use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hrgm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrgm"))
        .args(args)
        .current_dir(cwd)
        .env_remove("HRGM_OUT_ROOT")
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = hrgm(&[], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = hrgm(&["select", "--bogus"], dir.path());
    assert_eq!(code(&o), 2);
    let o = hrgm(&["fit-cluster", "--flavor", "nope"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn failure_classes_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "fdr = 2.0\n").unwrap();
    assert_eq!(code(&hrgm(&["select", "--config", "bad.toml"], dir.path())), 3);

    fs::write(dir.path().join("y.csv"), "g1,g2\n1,2\n3,x\n").unwrap();
    fs::write(dir.path().join("x.csv"), "c1,c2\n1,2\n3,4\n").unwrap();
    fs::write(dir.path().join("data.toml"), "flavor = \"dm\"\n[data]\ny = \"y.csv\"\nx = \"x.csv\"\n").unwrap();
    let o = hrgm(&["fit-cluster", "--config", "data.toml", "--out", "o"], dir.path());
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2"));
}

#[test]
fn pipeline_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "chains = 2\n[chain]\niterations = 400\nburn_in = 200\nthin = 4\nseed = 5\ncheckpoint_every = 100\n",
    )
    .unwrap();
    let cfg = ["--config", "run.toml"];
    for stage in ["simulate", "fit-known", "select", "evaluate", "report"] {
        let o = hrgm(&[&[stage][..], &cfg[..]].concat(), dir.path());
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let out = dir.path().join("hrgm-out");
    for f in ["truth.json", "samples-0.jsonl", "samples-1.jsonl", "network.json", "network.dot", "evaluation.json", "report.txt"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    // Same config and seed, fresh directory: byte-identical samples and networks.
    let again = dir.path().join("again");
    let args = |stage: &'static str| vec![stage, "--config", "run.toml", "--out", "again"];
    for stage in ["simulate", "fit-known", "select"] {
        assert_eq!(code(&hrgm(&args(stage), dir.path())), 0);
    }
    for f in ["y.csv", "samples-0.jsonl", "samples-1.jsonl", "network.json", "network.dot", "summary.json"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_hrgm"))
        .args(["simulate", "--seed", "4"])
        .current_dir(dir.path())
        .env("HRGM_OUT_ROOT", "envroot")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("envroot/truth.json").is_file());
}

#[test]
fn select_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let samples = fixture("select_samples.jsonl");
    let o = hrgm(&["select", "--fdr", "0.01", "--out", "sel", samples.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sel = dir.path().join("sel");
    assert_eq!(fs::read_to_string(sel.join("network.json")).unwrap(), fs::read_to_string(fixture("select_golden.json")).unwrap());
    assert_eq!(fs::read_to_string(sel.join("network.dot")).unwrap(), fs::read_to_string(fixture("select_golden.dot")).unwrap());
}

fn write_cluster_config(dir: &Path, name: &str, extra: &str) {
    fs::write(
        dir.join(name),
        format!(
            "flavor = \"py\"\n[scenario]\nk = 2\np = 3\nq = 6\nn_per_group = [20, 20]\nedge_density = 0.3\n\
             shared_fraction = 0.0\nomega_true = \"diagonal\"\n[chain]\niterations = 120\nburn_in = 60\nthin = 2\n\
             checkpoint_every = 50\n{extra}"
        ),
    )
    .unwrap();
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    write_cluster_config(dir.path(), "c.toml", "");
    for stage in ["simulate", "fit-cluster"] {
        let o = hrgm(&[stage, "--config", "c.toml", "--out", "full"], dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let full = dir.path().join("full");
    // The checkpoint left behind was taken at sweep 100 of 120.
    let ck = dir.path().join("saved.json");
    fs::copy(full.join("checkpoint-0.json"), &ck).unwrap();
    fs::create_dir(dir.path().join("res")).unwrap();
    for f in ["y.csv", "x.csv"] {
        fs::copy(full.join(f), dir.path().join("res").join(f)).unwrap();
    }
    let o = hrgm(&["fit-cluster", "--config", "c.toml", "--out", "res", "--resume", "saved.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(full.join("samples-0.jsonl")).unwrap(), fs::read(dir.path().join("res/samples-0.jsonl")).unwrap());

    write_cluster_config(dir.path(), "other.toml", "[hyper]\nalpha = 2.0\n");
    let o = hrgm(&["fit-cluster", "--config", "other.toml", "--out", "res", "--resume", "saved.json"], dir.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("different configuration"));
}
