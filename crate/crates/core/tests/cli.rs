use std::path::PathBuf;
use std::process::{Command, Output};

fn seprank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seprank")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn config(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .display()
        .to_string()
}

#[test]
fn bounds_prints_exact_values() {
    let o = seprank(&["bounds", "--L", "1", "--dx", "8", "--r", "1", "--re", "1", "--H", "1"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("upper bound: 1280 "));
    let o = seprank(&["bounds", "--L", "2", "--dx", "8", "--r", "5", "--re", "1", "--H", "1", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["lower"]["value"]["exact"], "2");
    assert_eq!(v["lower"]["flags"]["heads_ok"], true);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&seprank(&["bounds", "--dx", "8", "--r", "1", "--H", "1"])), 2);
    assert_eq!(code(&seprank(&["bounds", "--L", "0", "--dx", "8", "--r", "1", "--H", "1"])), 2);
    assert_eq!(code(&seprank(&["frobnicate"])), 2);
}

#[test]
fn help_lists_flags_with_defaults() {
    for (sub, flags) in [
        ("bounds", vec!["--L", "--dx", "--r", "--re", "--H", "--V"]),
        ("audit", vec!["--config", "--strict", "--json-out", "--compare"]),
        ("grid", vec!["--L", "--dx", "--Z", "--N", "--seed", "--tol", "--partition", "--threads"]),
        ("sweep", vec!["--param", "--values", "--seeds", "--out"]),
        ("witness", vec!["--mode", "--d", "--lambda", "--da", "--H", "--seed"]),
        ("replay", vec![]),
    ] {
        let o = seprank(&[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub}");
        let text = stdout(&o);
        for f in flags {
            assert!(text.contains(f), "{sub} help lacks {f}");
        }
    }
    assert!(stdout(&seprank(&["grid", "--help"])).contains("[default: 5]"));
}

#[test]
fn audit_strict_exit_codes() {
    let o = seprank(&["audit", "--config", &config("t5-11b.json"), "--strict"]);
    assert_eq!(code(&o), 3);
    assert!(stdout(&o).contains("H*d_a/d_x = 16"));
    assert_eq!(code(&seprank(&["audit", "--config", &config("bert.json"), "--strict"])), 0);
    let o = seprank(&["audit", "--config", &config("albert.json")]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("25%"));
}

#[test]
fn audit_schema_error_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, r#"{"name": "x", "vocab_size": 3, "width": 4, "depth": 1, "heads": 1, "embedding_rank": 9}"#).unwrap();
    let o = seprank(&["audit", "--config", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("$.embedding_rank"));
}

#[test]
fn audit_inline_and_compare() {
    let o = seprank(&["audit", "--V", "2000", "--dx", "680", "--L", "12", "--H", "2", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["config"]["embedding_rank"], 680);
    assert_eq!(v["config"]["attention_dim"], 340);
    let o = seprank(&["audit", "--config", &config("bert.json"), "--compare", &config("bert.json"), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["param_delta"], 0);
}

#[test]
fn grid_sandwich_and_determinism() {
    let args = ["grid", "--L", "2", "--dx", "6", "--r", "5", "--H", "1", "--da", "3", "--N", "4", "--Z", "5", "--seed", "0"];
    let a = seprank(&args);
    assert_eq!(code(&a), 0);
    assert!(stdout(&a).contains("sandwich holds: true"));
    assert_eq!(a.stdout, seprank(&args).stdout);
    let mut r1 = args.to_vec();
    r1[6] = "1";
    let o = seprank(&r1);
    let rank: usize = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("empirical rank: "))
        .unwrap()
        .parse()
        .unwrap();
    let upper: u64 = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("upper bound: "))
        .and_then(|s| s.split(' ').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(rank as u64 <= upper && rank < 25, "{rank}");
}

#[test]
fn grid_cap_exit_4() {
    let o = Command::new(env!("CARGO_BIN_EXE_seprank"))
        .args(["grid", "--N", "4", "--Z", "5"])
        .env("SEPRANK_GRID_CAP", "100")
        .output()
        .unwrap();
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("use N <= 2"));
}

#[test]
fn sweep_rows_and_atomic_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let o = seprank(&["sweep", "--param", "r", "--values", "1..4", "--seeds", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 13);
    assert!(text.starts_with("swept_param,value,seed,L,d_x,r,H,d_a,N,Z,empirical_rank,log_upper_bound,log_lower_bound"));
    let mut rows: Vec<&str> = text.lines().skip(1).collect();
    let before = rows.clone();
    rows.sort_by_key(|l| {
        let f: Vec<usize> = l.split(',').skip(1).take(2).map(|x| x.parse().unwrap()).collect();
        (f[0], f[1])
    });
    assert_eq!(rows, before);
    assert!(dir.path().join("s.csv.manifest.json").exists());

    let failed = dir.path().join("f.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_seprank"))
        .args(["sweep", "--param", "Z", "--values", "4,40", "--seeds", "1", "--out", failed.to_str().unwrap()])
        .env("SEPRANK_GRID_CAP", "1000")
        .output()
        .unwrap();
    assert_eq!(code(&o), 4);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2, "no partial output");
}

#[test]
fn witness_exit_codes() {
    let o = seprank(&["witness", "--mode", "hadamard", "--d", "2", "--lambda", "2", "--seed", "0"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("PASS exact rank"));
    assert_eq!(code(&seprank(&["witness", "--mode", "vocab", "--d", "1", "--lambda", "1"])), 0);
    let o = seprank(&["witness", "--mode", "largeN", "--d", "2", "--lambda", "2", "--N", "4"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("required minimum"));
    // ones slots of three blocks exceed the H=1 rank budget
    let o = seprank(&["witness", "--mode", "conv", "--d", "1", "--da", "3", "--H", "1", "--dx", "9"]);
    assert_eq!(code(&o), 5);
    assert!(stdout(&o).contains("FAIL embedding rank"));
    assert_eq!(code(&seprank(&["witness", "--mode", "hadamard", "--d", "3", "--lambda", "2", "--trials", "0"])), 6);
}

#[test]
fn replay_reproduces_output() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    let first = seprank(&["--manifest", m.to_str().unwrap(), "witness", "--mode", "large-n", "--d", "1", "--seed", "4"]);
    assert_eq!(code(&first), 0);
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(&m).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "witness");
    assert_eq!(manifest["seed"], 4);
    let again = seprank(&["replay", "--manifest", m.to_str().unwrap()]);
    assert_eq!(code(&again), 0);
    assert_eq!(first.stdout, again.stdout);
    assert_eq!(code(&seprank(&["replay"])), 2);
}

#[test]
fn default_sweep_medians_grow_with_rank() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = seprank(&["sweep", "--param", "r", "--values", "1..6", "--seeds", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut by_r = vec![Vec::new(); 7];
    for l in text.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        by_r[f[1].parse::<usize>().unwrap()].push(f[10].parse::<usize>().unwrap());
    }
    let medians: Vec<usize> = by_r[1..]
        .iter_mut()
        .map(|v| {
            v.sort_unstable();
            v[(v.len() - 1) / 2]
        })
        .collect();
    assert!(medians.windows(2).all(|w| w[0] <= w[1]), "{medians:?}");
}
