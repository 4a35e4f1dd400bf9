use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmgd-sim"))
        .args(args)
        .env_remove("DMGD_SIM_SEED")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_mixing_path3_passes_all_four() {
    let dir = tempfile::tempdir().unwrap();
    let w = write(
        dir.path(),
        "w.txt",
        "# Metropolis path-3\n0.66666666666666663 0.33333333333333331 0\n0.33333333333333331 0.33333333333333331 0.33333333333333331\n0 0.33333333333333331 0.66666666666666663\n",
    );
    let o = sim(&["validate-mixing", &w]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.matches("PASS").count(), 4, "{out}");
}

#[test]
fn validate_mixing_rejects_identity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.txt", "topology=path\nnodes=2\n");
    let w = write(dir.path(), "w.txt", "1 0\n0 1\n");
    let o = sim(&["validate-mixing", &w, "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn chain_spectra_periodic_fails() {
    let dir = tempfile::tempdir().unwrap();
    let h = write(dir.path(), "h.txt", "0 1 0\n0 0 1\n1 0 0\n");
    let o = sim(&["chain-spectra", &h]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("aperiodicity: FAIL"), "{}", stderr(&o));
}

#[test]
fn chain_spectra_reports_stationary_law_and_dumps_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let h = write(dir.path(), "h.txt", "0.9 0.1\n0.2 0.8\n");
    let out = dir.path().join("out");
    let o = sim(&[
        "chain-spectra",
        &h,
        "--trajectory",
        "50",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let field = |name: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(name)).unwrap();
        line[name.len()..].split_whitespace().next().unwrap().parse().unwrap()
    };
    assert!((field("lambda2:") - 0.7).abs() < 1e-12, "{text}");
    assert!((field("stationary:") - 2.0 / 3.0).abs() < 1e-12, "{text}");
    let traj = fs::read_to_string(out.join("trajectory.txt")).unwrap();
    assert_eq!(traj.lines().filter(|l| !l.starts_with('#')).count(), 50);
}

#[test]
fn run_rejects_theta_out_of_range() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.txt", "theta=0.4\n");
    let o = sim(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("1/2 < theta < 1"), "{}", stderr(&o));
}

#[test]
fn usage_and_config_errors_exit_two() {
    assert_eq!(sim(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(sim(&["run"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.txt", "mystery=1\n");
    assert_eq!(sim(&["run", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn run_is_byte_reproducible_and_seed_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.txt", "nodes=4\ndim=3\niterations=50\nseed=1\n");
    let a = sim(&["run", "--config", &cfg]);
    let b = sim(&["run", "--config", &cfg]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("# config_sha256="));

    let env = Command::new(env!("CARGO_BIN_EXE_dmgd-sim"))
        .args(["run", "--config", &cfg])
        .env("DMGD_SIM_SEED", "7")
        .output()
        .unwrap();
    let flag = Command::new(env!("CARGO_BIN_EXE_dmgd-sim"))
        .args(["run", "--config", &cfg, "--seed", "7"])
        .env("DMGD_SIM_SEED", "3")
        .output()
        .unwrap();
    assert_ne!(env.stdout, a.stdout);
    assert_eq!(env.stdout, flag.stdout);
}

#[test]
fn run_writes_csv_to_out_dir_with_cadence_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.txt",
        "algorithm=dsgd_t\nt=2\nnodes=3\ndim=2\niterations=20\n",
    );
    let out = dir.path().join("o");
    let o = sim(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--cadence",
        "5",
        "--jobs",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("dsgd_t2_seed0.csv")).unwrap();
    let ks: Vec<&str> = text.lines().skip(2).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ks, ["0", "1", "5", "10", "15", "20"]);
}

#[test]
fn gradcheck_passes_on_default_workload() {
    let o = sim(&["gradcheck", "--probes", "20"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("failures: 0"));
}

#[test]
fn every_subcommand_help_lists_all_config_keys() {
    for sub in ["validate-mixing", "chain-spectra", "run", "figure1", "gradcheck"] {
        let o = sim(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        let text = stdout(&o);
        for (key, _, _) in dmgd_core::config::CONFIG_KEYS {
            assert!(text.contains(&format!("  {key} ")), "{sub} --help misses {key}");
        }
    }
}

#[test]
fn figure1_tiny_run_writes_per_algorithm_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.txt",
        "workload=logistic\nref_samples=2000\nsample_budget=32\nseeds=2\ncadence=16\n",
    );
    let out = dir.path().join("f1");
    let o = sim(&["figure1", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("dsgd_t16"));
    assert!(out.join("summary.csv").exists());
    for name in ["dmgd_seed0.csv", "mcgd_seed1.csv", "dsgd_t16_seed1.csv"] {
        assert!(out.join("m5_n10").join(name).exists(), "{name}");
    }
}
