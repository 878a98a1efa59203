use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mixcut(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixcut")).args(args).output().unwrap()
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# units:"), "missing units line");
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn col(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<String> {
    let k = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[k].clone()).collect()
}

fn num(s: &str) -> f64 {
    match s {
        "inf" => f64::INFINITY,
        other => other.parse().unwrap(),
    }
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn two_state_curve_has_51_monotone_rows() {
    let out = mixcut(&["distance-curve", "--model", "two-state", "-p", "alpha=0.5,beta=0.5", "--t-grid", "0:5:50", "--start", "0"]);
    assert!(out.status.success());
    let (h, rows) = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 51);
    let v: Vec<f64> = col(&h, &rows, "value").iter().map(|s| num(s)).collect();
    assert!(v.windows(2).all(|w| w[1] < w[0]));
    // d_TV(0, t) = ½ e^{−t}
    let t: Vec<f64> = col(&h, &rows, "t").iter().map(|s| num(s)).collect();
    for (t, v) in t.iter().zip(&v) {
        assert!((v - 0.5 * (-t).exp()).abs() < 1e-12);
    }
}

#[test]
fn empty_grid_is_an_input_error() {
    let out = mixcut(&["distance-curve", "--model", "cycle", "-p", "n=4", "--t-grid", "3:1:10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
}

#[test]
fn stationary_start_gives_zero_curve() {
    let out = mixcut(&["distance-curve", "--model", "ehrenfest", "-p", "n=6", "--t-grid", "0:3:6", "--start", "stationary", "--kind", "hellinger"]);
    assert!(out.status.success());
    let (h, rows) = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert!(col(&h, &rows, "value").iter().all(|v| num(v).abs() < 1e-12));
}

#[test]
fn output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = mixcut(&["distance-curve", "--model", "lazy-path", "-p", "n=10", "--t-grid", "0:40:20", "--out", p.to_str().unwrap()]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn mix_time_matches_closed_form() {
    let out = mixcut(&["mix-time", "--model", "two-state", "-p", "alpha=0.5,beta=0.5", "--start", "0", "--epsilon", "0.25,0.1"]);
    assert!(out.status.success());
    let (h, rows) = csv_rows(&String::from_utf8(out.stdout).unwrap());
    let t: Vec<f64> = col(&h, &rows, "T").iter().map(|s| num(s)).collect();
    assert!((t[0] - 2f64.ln()).abs() < 1e-5);
    assert!((t[1] - 5f64.ln()).abs() < 1e-5);
    let out = mixcut(&["mix-time", "--model", "two-state", "-p", "alpha=0.25,beta=0.25", "--discrete", "--epsilon", "0.01"]);
    let (h, rows) = csv_rows(&String::from_utf8(out.stdout).unwrap());
    // ½·(½)^m ≤ 0.01 first at m = 6.
    assert_eq!(num(&col(&h, &rows, "T")[0]), 6.0);
}

fn scan(model: &str, indices: &str, dir: &Path) -> (i32, serde_json::Value, String) {
    let out_path = dir.join(format!("{model}.csv"));
    let out = mixcut(&[
        "cutoff-scan", "--model", model, "--n-list", indices, "--epsilon", "0.1", "--delta", "0.9", "--out", out_path.to_str().unwrap(),
    ]);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_path.with_extension("json")).unwrap()).unwrap();
    (out.status.code().unwrap(), json, fs::read_to_string(out_path).unwrap())
}

#[test]
fn cutoff_scan_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let (code, json, csv) = scan("ehrenfest", "8,16,32,64", dir.path());
    assert_eq!(code, 0);
    assert_eq!(json["cutoff"]["verdict"], "consistent-with-cutoff");
    let (h, rows) = csv_rows(&csv);
    assert_eq!(h, ["n", "T", "T_delta", "ratio", "window"]);
    assert_eq!(rows.len(), 4);

    let (_, json, csv) = scan("lazy-path", "8,16,32,64", dir.path());
    assert_eq!(json["cutoff"]["verdict"], "consistent-with-no-cutoff");
    // T(0.9) is 0 at n = 8: the ratio is written as "inf".
    assert!(csv.contains(",inf,"));

    let (_, json, _) = scan("ehrenfest", "32", dir.path());
    assert_eq!(json["cutoff"]["verdict"], "inconclusive");
}

#[test]
fn scan_with_tail_sums_and_d_n() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("psrw.csv");
    let out = mixcut(&[
        "cutoff-scan", "--model", "cycle", "--n-range", "4:8", "--sequence-gamma", "2", "--r-c", "0.5", "--m-list", "0,1",
        "--out", out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = csv_rows(&fs::read_to_string(&out_path).unwrap());
    assert_eq!(&h[5..], ["S(m=0)", "S(m=1)", "log_S(m=0)", "log_S(m=1)", "D_n"]);
    let log_s1: Vec<f64> = col(&h, &rows, "log_S(m=1)").iter().map(|s| num(s)).collect();
    assert!(log_s1.windows(2).all(|w| w[1] < w[0]), "{log_s1:?}");
    let d: Vec<f64> = col(&h, &rows, "D_n").iter().map(|s| num(s)).collect();
    assert!(d.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn mostly_failing_scan_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("l2.csv");
    let out = mixcut(&[
        "cutoff-scan", "--model", "two-state", "-p", "alpha=0.5,beta=0.5", "--kind", "l2", "--n-list", "2,4,8",
        "--out", out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let csv = fs::read_to_string(&out_path).unwrap();
    assert!(csv.lines().skip(2).all(|l| l.ends_with(",NA")));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_path.with_extension("json")).unwrap()).unwrap();
    assert_eq!(json["partial"], true);
}

const TWO_STATE_A: &str = r#"{"label":"a","matrix":[[0.5,0.5],[0.5,0.5]]}"#;
const TWO_STATE_B: &str = r#"{"label":"b","matrix":[[0.7,0.3],[0.1,0.9]]}"#;

#[test]
fn product_eval_brackets_contain_dense_oracle() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "a.json", TWO_STATE_A);
    let spec = write(dir.path(), "p.json", &format!(r#"{{"coords":["a.json",{TWO_STATE_B}],"weights":[1.0,1.0]}}"#));
    let out = mixcut(&["product-eval", "--product", &spec, "--t-grid", "0:30:30", "--epsilon", "0.1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = csv_rows(&String::from_utf8(out.stdout).unwrap());
    let get = |name: &str| col(&h, &rows, name).iter().map(|s| num(s)).collect::<Vec<f64>>();
    let dense = get("tv_dense");
    for (lo, hi) in [("tv_lower", "tv_upper"), ("prod_tv_lower", "prod_tv_upper")] {
        for ((l, u), d) in get(lo).iter().zip(get(hi)).zip(&dense) {
            assert!(*l <= d + 1e-12 && *d <= u + 1e-12, "{lo}: {l} <= {d} <= {u}");
        }
    }
    for (a, b) in get("hellinger_exact").iter().zip(get("hellinger_dense")) {
        assert!((a - b).abs() < 1e-10);
    }
    // Tail bounds need t past max_i u_i q / p_i; t = 0 never qualifies.
    assert_eq!(col(&h, &rows, "tail_tv")[0], "NA");
    assert!(col(&h, &rows, "tail_tv").iter().any(|s| s != "NA"));
}

#[test]
fn single_coordinate_product_matches_curve() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "p.json", &format!(r#"{{"coords":[{TWO_STATE_B}],"weights":[2.5]}}"#));
    let chain = write(dir.path(), "b.json", TWO_STATE_B);
    let p = mixcut(&["product-eval", "--product", &spec, "--t-grid", "0:4:8"]);
    let c = mixcut(&["distance-curve", "--chain", &chain, "--t-grid", "0:4:8", "--kind", "hellinger"]);
    let (ph, prow) = csv_rows(&String::from_utf8(p.stdout).unwrap());
    let (ch, crow) = csv_rows(&String::from_utf8(c.stdout).unwrap());
    assert_eq!(col(&ph, &prow, "hellinger_exact"), col(&ch, &crow, "value"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.json",
        r#"{"model":"two-state","params":{"alpha":0.5,"beta":0.5},"t-grid":"0:1:4","kind":"hellinger","start":"0"}"#,
    );
    let out = mixcut(&["distance-curve", "--config", &cfg, "--kind", "tv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 5);
    assert!(col(&h, &rows, "kind").iter().all(|k| k == "tv"));
    let bad = write(dir.path(), "bad.json", r#"{"modle":"cycle"}"#);
    assert_eq!(mixcut(&["distance-curve", "--config", &bad]).status.code(), Some(2));
}

#[test]
fn validate_and_emit() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("lacoin.json");
    let out = mixcut(&["model-emit", "--model", "lacoin", "-p", "n=4,a=0.01,b=0.1", "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success());
    let v = mixcut(&["validate", "--chain", out_path.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&v.stdout).unwrap();
    assert_eq!(report["report"]["ok"], true);
    assert_eq!(report["reversible"], true);

    let bad = write(dir.path(), "bad.json", r#"{"label":"x","matrix":[[0.5,0.6],[0.5,0.5]]}"#);
    let v = mixcut(&["validate", "--chain", &bad]);
    assert_eq!(v.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&v.stdout).unwrap();
    assert_eq!(report["report"]["violations"][0]["kind"], "NonStochasticRow");

    assert_eq!(mixcut(&["model-emit", "--model", "torus"]).status.code(), Some(2));
    assert_eq!(mixcut(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn lacoin_bounds_columns() {
    let out = mixcut(&["lacoin-bounds", "-p", "n=5,a=0.01,b=0.1", "--t-grid", "1:30:29"]);
    assert!(out.status.success());
    let (h, rows) = csv_rows(&String::from_utf8(out.stdout).unwrap());
    let h2 = col(&h, &rows, "max_hellinger_sq");
    let up = col(&h, &rows, "hellinger_sq_upper_2");
    let tvl = col(&h, &rows, "tv_lower");
    assert_eq!(tvl[0] != "NA", true);
    assert_eq!(tvl.last().unwrap(), "NA");
    for (x, u) in h2.iter().zip(&up) {
        if u != "NA" {
            assert!(num(x) <= num(u));
        }
    }
}
