use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn netfe(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_netfe"));
    c.args(args).env_remove("NETFE_THREADS").env("RUST_LOG", "warn");
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn example_cfg() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/hypercube.cfg")
}

#[test]
fn diag_star_reports_harmonic_rows() {
    let dir = TempDir::new().unwrap();
    let edges = write(dir.path(), "star.csv", "i,j\n0,1\n0,2\n0,3\n0,4\n0,5\n");
    let out_json = dir.path().join("r.json");
    let out_csv = dir.path().join("v.csv");
    let o = netfe(&["diag", s(&edges), "--json", s(&out_json), "--csv", s(&out_csv)], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    for row in ["\nd ", "\nh_i ", "\nH_i "] {
        assert!(text.contains(row), "{text}");
    }
    let r = json(&out_json);
    let conn = &r["body"]["report"]["connectivity"];
    assert!((conn["global"]["lambda2"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert_eq!(conn["vertices"][0]["h_i"].as_f64().unwrap(), 1.0);
    assert_eq!(conn["vertices"][1]["h_i"].as_f64().unwrap(), 5.0);
    assert_eq!(r["body"]["manifest"]["n"], 6);
    let csv = fs::read_to_string(out_csv).unwrap();
    assert!(csv.starts_with("id,d,h_i,H_i,h_i2,Sdag_ii"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn disconnected_input_is_reduced_or_rejected() {
    let dir = TempDir::new().unwrap();
    let edges = write(dir.path(), "e.csv", "i,j\n1,2\n2,3\n3,1\n7,8\n");
    let out_json = dir.path().join("r.json");
    let o = netfe(&["diag", s(&edges), "--json", s(&out_json)], &[]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("dropped 2 of 5 vertices and 1 of 4 edges"), "{}", stderr(&o));
    let r = json(&out_json);
    assert_eq!(r["body"]["report"]["reduction"]["dropped_vertices"], 2);
    assert_eq!(r["body"]["manifest"]["m"], 3);

    let o = netfe(&["diag", s(&edges), "--no-reduce"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("disconnected"));
}

#[test]
fn parse_errors_name_the_row() {
    let dir = TempDir::new().unwrap();
    let edges = write(dir.path(), "e.csv", "i,j,w\n1,2,1\n2,3,x\n");
    let o = netfe(&["diag", s(&edges)], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));
    let empty = write(dir.path(), "empty.csv", "i,j\n");
    assert_eq!(netfe(&["diag", s(&empty)], &[]).status.code(), Some(2));
}

/// Planted effects on a small graph; some rows are listed "backwards".
fn planted(dir: &Path, noise: bool) -> (PathBuf, Vec<f64>) {
    let alpha_raw = [0.5, -1.0, 2.0, 0.0, 1.5, -0.75];
    let pairs = [(1, 2), (3, 1), (2, 3), (4, 3), (5, 4), (6, 5), (1, 6), (2, 5), (6, 3)];
    let mut deg = [0.0; 6];
    for &(a, b) in &pairs {
        deg[a - 1] += 1.0;
        deg[b - 1] += 1.0;
    }
    let shift: f64 = alpha_raw.iter().zip(&deg).map(|(a, d)| a * d).sum::<f64>() / deg.iter().sum::<f64>();
    let alpha: Vec<f64> = alpha_raw.iter().map(|a| a - shift).collect();
    let mut text = String::from("i,j,y\n");
    for (k, &(a, b)) in pairs.iter().enumerate() {
        let e = if noise { 0.1 * ((k * 7 % 5) as f64 - 2.0) } else { 0.0 };
        text.push_str(&format!("{a},{b},{}\n", alpha[a - 1] - alpha[b - 1] + e));
    }
    (write(dir, "data.csv", &text), alpha)
}

#[test]
fn noiseless_fit_recovers_planted_effects() {
    let dir = TempDir::new().unwrap();
    let (data, alpha) = planted(dir.path(), false);
    let fits = dir.path().join("fits.csv");
    let o = netfe(&["fit", s(&data), "--out", s(&fits)], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(fits).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("vertex_id,alpha,se"));
    for (k, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0], (k + 1).to_string());
        assert!((f[1].parse::<f64>().unwrap() - alpha[k]).abs() < 1e-10);
    }
}

#[test]
fn fit_normalization_and_se_flags() {
    let dir = TempDir::new().unwrap();
    let (data, _) = planted(dir.path(), true);
    for (norm, se) in [("d", "plugin"), ("mean", "homosked"), ("mean", "plugin-unscaled")] {
        let j = dir.path().join(format!("{norm}-{se}.json"));
        let fits = dir.path().join(format!("{norm}-{se}.csv"));
        let o = netfe(
            &["fit", s(&data), "--normalization", norm, "--se", se, "--out", s(&fits), "--json", s(&j)],
            &[],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let alpha: Vec<f64> = fs::read_to_string(&fits)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        if norm == "mean" {
            assert!(alpha.iter().sum::<f64>().abs() < 1e-10);
        }
        assert!(json(&j)["body"]["report"]["sigma2_hat"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn missing_outcome_column_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "d.csv", "i,j,z\n1,2,0.5\n2,3,1\n");
    let o = netfe(&["fit", s(&data)], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing column `y`"));
}

#[test]
fn covariate_in_network_span_is_a_numerical_failure() {
    let dir = TempDir::new().unwrap();
    // x equals the difference of vertex labels, i.e. lies in the span of B
    let data = write(
        dir.path(),
        "d.csv",
        "i,j,y,x\n1,2,0.1,-1\n2,3,0.4,-1\n1,3,-0.2,-2\n3,4,0.3,-1\n1,4,0.0,-3\n",
    );
    let o = netfe(&["fit", s(&data)], &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("rank deficiency 1"), "{}", stderr(&o));
}

fn two_way_csv(dir: &Path) -> PathBuf {
    let mut text = String::from("i,j,y,x1\n");
    for k in 0..48 {
        let i = k % 16;
        let j = (i + k / 16 * 3) % 5;
        let x = ((k * 37) % 11) as f64 / 11.0 - 0.5;
        let y = (i as f64 * 0.3).sin() + (j as f64) * 0.4 + 0.8 * x + 0.05 * ((k * 13 % 7) as f64 - 3.0);
        text.push_str(&format!("s{i},t{j},{y},{x}\n"));
    }
    write(dir, "tw.csv", &text)
}

fn eta_rows(path: &Path) -> Vec<(String, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| l.starts_with("eta,"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn two_way_routes_give_identical_eta() {
    let dir = TempDir::new().unwrap();
    let data = two_way_csv(dir.path());
    let mut all = Vec::new();
    for route in ["joint", "profiled", "weightedfd"] {
        let out = dir.path().join(format!("{route}.csv"));
        let o = netfe(&["fit", "--two-way", "--route", route, s(&data), "--out", s(&out)], &[]);
        assert!(o.status.success(), "{}", stderr(&o));
        all.push(eta_rows(&out));
    }
    assert_eq!(all[0].len(), 5);
    for other in &all[1..] {
        for ((ja, a), (jb, b)) in all[0].iter().zip(other) {
            assert_eq!(ja, jb);
            assert!((a - b).abs() < 1e-8);
        }
    }
    let header = fs::read_to_string(dir.path().join("joint.csv")).unwrap();
    assert!(header.starts_with("side,vertex_id,effect,se\nmu,s0,"));
}

#[test]
fn project_hand_computed_weights() {
    let dir = TempDir::new().unwrap();
    // s1: {t1,t2}, s2: {t1,t2,t3}, s3: {t2,t3}, s4: {t3}
    let data = write(
        dir.path(),
        "m.csv",
        "i,j,y\ns1,t1,0\ns1,t2,0\ns2,t1,0\ns2,t2,0\ns2,t3,0\ns3,t2,0\ns3,t3,0\ns4,t3,0\n",
    );
    let out = dir.path().join("p.csv");
    let j = dir.path().join("p.json");
    let o = netfe(&["project", s(&data), "--out", s(&out), "--json", s(&j)], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<(String, String, f64)> = fs::read_to_string(&out)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].into(), f[1].into(), f[2].parse().unwrap())
        })
        .collect();
    let expect = [("t1", "t2", 5.0 / 6.0), ("t1", "t3", 1.0 / 3.0), ("t2", "t3", 5.0 / 6.0)];
    assert_eq!(rows.len(), 3);
    for ((a, b, w), (ea, eb, ew)) in rows.iter().zip(expect) {
        assert_eq!((a.as_str(), b.as_str()), (ea, eb));
        assert!((w - ew).abs() < 1e-15);
    }
    // 1 + 3 + 1 within-student pairs
    assert_eq!(json(&j)["body"]["report"]["m_prime"], 5);

    // the projection is itself a valid edge list
    let o = netfe(&["diag", s(&out)], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn single_match_students_give_empty_projection() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "m.csv", "i,j\n1,1\n2,2\n3,1\n");
    let out = dir.path().join("p.csv");
    let o = netfe(&["project", s(&data), "--out", s(&out)], &[]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("projection is empty"));
    assert_eq!(fs::read_to_string(out).unwrap(), "j,jprime,w\n");
}

#[test]
fn shipped_config_contains_every_vertex() {
    let dir = TempDir::new().unwrap();
    let j = dir.path().join("s.json");
    let o = netfe(&["simulate", s(&example_cfg()), "--json", s(&j)], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&j);
    let b = &r["body"]["report"]["bounds"];
    assert_eq!(b["exact_rate"].as_f64(), Some(1.0));
    assert_eq!(b["empirical_rate"].as_f64(), Some(1.0));
    assert_eq!(r["body"]["manifest"]["seed"], 20240501);
}

#[test]
fn simulate_is_byte_identical_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "c.cfg",
        "family = \"erdos_renyi\"\nsize = 40\nedge_prob = 0.2\nseed = 17\nreps = 300\nerrors = \"heteroskedastic\"\ncovariates = 1\n",
    );
    let mut bodies = Vec::new();
    for threads in ["1", "4", "4"] {
        let j = dir.path().join(format!("out{}.json", bodies.len()));
        let o = netfe(&["simulate", s(&cfg), "--json", s(&j)], &[("NETFE_THREADS", threads)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let v = json(&j);
        assert_eq!(v["threads"].as_u64().unwrap().to_string(), threads);
        bodies.push((serde_json::to_string(&v["body"]).unwrap(), v["body_sha256"].clone()));
    }
    assert_eq!(bodies[0], bodies[1]);
    assert_eq!(bodies[1], bodies[2]);
}

#[test]
fn unknown_config_keys_are_listed() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.cfg", "family = \"star\"\nsize = 5\nseed = 1\nsigma = 1\nrepetitions = 3\n");
    let o = netfe(&["simulate", s(&cfg)], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown config keys: repetitions, sigma"), "{}", stderr(&o));
}

#[test]
fn zero_variance_config_recovers_exactly() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.cfg", "family = \"wheel\"\nsize = 9\nseed = 2\nerrors = \"none\"\nreps = 4\n");
    let o = netfe(&["simulate", s(&cfg)], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["body"]["report"]["exact_recovery"], true);
}

#[test]
fn exported_fixture_fits_cleanly() {
    let dir = TempDir::new().unwrap();
    let exp = dir.path().join("exp");
    let cfg = write(
        dir.path(),
        "c.cfg",
        "family = \"random_connected\"\nsize = 12\nextra_edges = 20\nseed = 5\nreps = 3\ncovariates = 1\n",
    );
    let o = netfe(&["simulate", s(&cfg), "--export-dir", s(&exp), "--json", s(&dir.path().join("s.json"))], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = netfe(&["diag", s(&exp.join("edges.csv"))], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let j = dir.path().join("fit.json");
    let o = netfe(&["fit", s(&exp.join("data.csv")), "--json", s(&j), "--out", s(&dir.path().join("f.csv"))], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&j);
    assert_eq!(r["body"]["report"]["covariates"][0], "x1");
    assert_eq!(r["body"]["manifest"]["n"], 12);
    // the canonical config written alongside parses back
    let o = netfe(&["simulate", s(&exp.join("config.cfg")), "--reps", "2"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
}
