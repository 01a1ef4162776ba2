use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn srw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srw"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn allocate_inline_sds() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "f.csv", "group,size\ng1,10000\ng2,10000\n");
    let o = srw(&["allocate", "--frame", &f, "--n", "1000", "--sd", "1,3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "group,n_i\ng1,250\ng2,750\n");
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("config") && err.contains("method=Optimal"), "{err}");
}

#[test]
fn allocate_proportional_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "f.csv", "group,size\na,300\nb,100\n");
    let o = srw(&["allocate", "--frame", &f, "--n", "40", "--sd", "proportional"]);
    assert_eq!(stdout(&o), "group,n_i\na,30\nb,10\n");
    let out = dir.path().join("plan.json");
    let o = srw(&["allocate", "--frame", &f, "--n", "40", "--format", "json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(doc["budget"], 40);
    assert_eq!(doc["counts"], serde_json::json!([30, 10]));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "f.csv", "group,size\ng1,100\ng2,100\n");
    assert_eq!(srw(&["allocate", "--frame", &f, "--n", "0"]).status.code(), Some(1));
    assert_eq!(srw(&["allocate", "--frame", &f, "--n", "10", "--sd", "1,x"]).status.code(), Some(1));
    assert_eq!(srw(&["allocate", "--frame", &f, "--n", "10", "--sd", "1,2,3"]).status.code(), Some(1));
    assert_eq!(srw(&["bogus"]).status.code(), Some(1));
    let bad = write(dir.path(), "bad.csv", "group,size\ng1,-5\n");
    assert_eq!(srw(&["allocate", "--frame", &bad, "--n", "10"]).status.code(), Some(2));
    assert_eq!(srw(&["allocate", "--frame", "/nonexistent.csv", "--n", "10"]).status.code(), Some(2));
    assert_eq!(srw(&["allocate", "--frame", &f, "--n", "1000"]).status.code(), Some(3));
}

#[test]
fn help_exits_zero_everywhere() {
    for sub in ["allocate", "estimate", "twostage", "bayes-srw", "simulate"] {
        let o = srw(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
        assert!(stdout(&o).contains("--"), "{sub}");
    }
    let o = srw(&["simulate", "--help"]);
    let text = stdout(&o);
    for flag in ["--sweep", "--seed", "--reps", "--threads", "--out", "--method", "--level", "--n", "--p", "--t"] {
        assert!(text.contains(flag), "{flag}");
    }
    assert_eq!(srw(&["--help"]).status.code(), Some(0));
}

#[test]
fn estimate_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "f.csv", "group,size\na,100\nb,300\n");
    let obs = write(dir.path(), "o.csv", "group,stage,value\na,2,1\na,2,3\nb,2,10\nb,2,14\n");
    let o = srw(&["estimate", "--frame", &f, "--obs", &obs]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("mu_hat,se,ci_low,ci_high,level"));
    let mu: f64 = lines.next().unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((mu - 9.5).abs() < 1e-12);
    let o = srw(&["estimate", "--frame", &f, "--obs", &obs, "--level", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    let unknown = write(dir.path(), "u.csv", "group,stage,value\nz,1,1\n");
    assert_eq!(srw(&["estimate", "--frame", &f, "--obs", &unknown]).status.code(), Some(2));
}

#[test]
fn twostage_and_bayes_are_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "f.csv", "group,size,mean,sd\na,10000,0,1\nb,10000,0,5\n");
    let a = srw(&["twostage", "--frame", &f, "--n", "1000", "--p", "0.1", "--seed", "42"]);
    let b = srw(&["twostage", "--frame", &f, "--n", "1000", "--p", "0.1", "--seed", "42"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let trace: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(trace["stage1_plan"]["counts"], serde_json::json!([50, 50]));

    let o = srw(&["bayes-srw", "--frame", &f, "--n", "1000", "--p", "0.1", "--seed", "42", "--mu-grid", "21"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(out["prior"]["mu_grid"].as_array().unwrap().len(), 21);
    assert!(out["mu_hat_bayes"].is_f64());

    let tight = write(dir.path(), "t.csv", "group,size,mean,sd\na,100,0,1\nb,100,0,1\n");
    let o = srw(&["twostage", "--frame", &tight, "--n", "20", "--p", "0.1", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(3));
    let o = srw(&["twostage", "--frame", &tight, "--n", "20", "--p", "1.0", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let bare = write(dir.path(), "bare.csv", "group,size\na,100\n");
    assert_eq!(srw(&["twostage", "--frame", &bare, "--n", "20", "--seed", "1"]).status.code(), Some(2));
    assert_eq!(srw(&["twostage", "--frame", &f, "--n", "20"]).status.code(), Some(1));
}

#[test]
fn simulate_outputs_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = srw(&[
        "simulate", "--sweep", "p", "--t", "1,10", "--p", "0,0.1", "--reps", "50", "--seed", "3", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["sweep_p_manifest.json", "sweep_p_t_1.csv", "sweep_p_t_10.csv"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("sweep_p_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["settings"]["seed"], 3);
    assert_eq!(manifest["p_grid"], serde_json::json!([0.0, 0.1]));

    // Infeasible pilot: 2 groups need 4 pilot units, 0.002 × 1000 gives 2.
    let bad = dir.path().join("bad");
    let o = srw(&[
        "simulate", "--sweep", "p", "--t", "2", "--p", "0.002", "--reps", "10", "--seed", "3", "--out",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!bad.exists());

    let o = srw(&["simulate", "--sweep", "t", "--reps", "2", "--seed", "3", "--out", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!bad.exists());
    assert_eq!(srw(&["simulate", "--sweep", "t", "--reps", "10"]).status.code(), Some(1));
    assert_eq!(srw(&["simulate", "--sweep", "nope", "--seed", "1"]).status.code(), Some(1));
}

#[test]
fn simulate_k_and_size_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = srw(&["simulate", "--sweep", "k", "--k", "1,2,10", "--draws", "20", "--seed", "5", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("sweep_k.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().nth(1).unwrap().starts_with("1,Theory,1,"));

    let o = srw(&[
        "simulate", "--sweep", "size-ratio", "--size-ratio", "0.1,10", "--t", "1,2", "--reps", "20", "--seed", "5",
        "--out", out,
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("sweep_size_ratio_0.1.csv").exists());
    assert!(dir.path().join("sweep_size_ratio_10.csv").exists());
}
