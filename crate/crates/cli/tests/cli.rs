use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn proxyport(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proxyport")).args(args).output().unwrap()
}

fn error_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or_default().to_string()
}

/// Rows of a proxyport CSV, skipping the metadata line and header.
fn records(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn scenario(dir: &Path, body: &str) -> String {
    let p = dir.join("scenario.toml");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn simulate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "n = 80\nseed = 3\nbias.kind = \"constant\"\nbias.u0 = 1\nbias.delta = 2\n");
    let sim = dir.path().join("sim");
    let out = proxyport(&["simulate", "--scenario", &sc, "--out", sim.to_str().unwrap()]);
    assert!(out.status.success(), "{}", error_line(&out));
    let data = fs::read_to_string(sim.join("data.csv")).unwrap();
    assert!(data.starts_with("# proxyport version=0.1.0 seed=3 config_hash="));
    assert_eq!(records(&sim.join("data.csv")).len(), 160);
    assert_eq!(records(&sim.join("counterfactuals.csv")).len(), 160);
    let truth = records(&sim.join("truth.csv"));
    assert_eq!(truth[0][..2], ["overall".to_string(), "5".to_string()]);

    let est = dir.path().join("est");
    let out = proxyport(&[
        "estimate", "--data", sim.join("data.csv").to_str().unwrap(),
        "--out", est.to_str().unwrap(), "--n-boot", "50", "--seed", "1",
    ]);
    assert!(out.status.success(), "{}", error_line(&out));
    let rows = records(&est.join("ate.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2][1], "overall");
    let lo: f64 = rows[2][6].parse().unwrap();
    let hi: f64 = rows[2][7].parse().unwrap();
    let ate: f64 = rows[2][2].parse().unwrap();
    assert!(lo <= hi && (ate - 4.0).abs() < 2.0);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(est.join("run.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "estimate");
    assert_eq!(meta["seed"], 1);
}

/// Closed-form simple regression prediction averaged over `ws`.
fn simple_ols_mean(xs: &[f64], ys: &[f64], ws: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    ws.iter().map(|w| a + b * w).sum::<f64>() / ws.len() as f64
}

#[test]
fn single_study_matches_g_formula() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("study,arm,y,w1\n");
    let mut rows = Vec::new();
    for i in 0..24 {
        let a = (i % 2) as u8;
        let w = (i as f64 * 0.37).sin() * 2.0;
        let y = 1.0 + 2.5 * a as f64 + 0.8 * w + (i as f64 * 1.3).cos();
        csv.push_str(&format!("1,{a},{y},{w}\n"));
        rows.push((a, w, y));
    }
    let path = dir.path().join("one.csv");
    fs::write(&path, csv).unwrap();
    let out = proxyport(&["estimate", "--data", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--n-boot", "0"]);
    assert!(out.status.success(), "{}", error_line(&out));
    let got: f64 = records(&dir.path().join("ate.csv"))[1][2].parse().unwrap();

    let ws: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let arm = |a: u8| -> (Vec<f64>, Vec<f64>) {
        rows.iter().filter(|r| r.0 == a).map(|r| (r.1, r.2)).unzip()
    };
    let (x1, y1) = arm(1);
    let (x0, y0) = arm(0);
    let expected = simple_ols_mean(&x1, &y1, &ws) - simple_ols_mean(&x0, &y0, &ws);
    assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
}

#[test]
fn sensitivity_rows_are_affine_in_delta() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "n = 60\nseed = 4\n");
    let d = dir.path().to_str().unwrap();
    assert!(proxyport(&["simulate", "--scenario", &sc, "--out", d]).status.success());
    let data = dir.path().join("data.csv");
    let out = proxyport(&[
        "sensitivity", "--data", data.to_str().unwrap(), "--out", d,
        "--delta-grid", "-3:3:1", "--n-boot", "40",
    ]);
    assert!(out.status.success(), "{}", error_line(&out));
    let ate = records(&dir.path().join("ate.csv"));
    let mass: f64 = ate
        .iter()
        .filter(|r| r[5] == "false")
        .map(|r| r[3].parse::<f64>().unwrap())
        .sum();
    let overall: Vec<(f64, f64)> = records(&dir.path().join("sensitivity.csv"))
        .into_iter()
        .filter(|r| r[2] == "overall")
        .map(|r| (r[3].parse().unwrap(), r[4].parse().unwrap()))
        .collect();
    assert_eq!(overall.len(), 7);
    let base = overall.iter().find(|(d, _)| *d == 0.0).unwrap().1;
    for (delta, value) in overall {
        assert!((value - base - mass * delta).abs() < 1e-12);
    }
}

#[test]
fn bounds_widen_with_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "n = 60\nseed = 5\nbias.kind = \"functional\"\nbias.b0 = 2\nbias.b1 = 1\n");
    let d = dir.path().to_str().unwrap();
    assert!(proxyport(&["simulate", "--scenario", &sc, "--out", d]).status.success());
    let data = dir.path().join("data.csv");
    let out = proxyport(&["bounds", "--data", data.to_str().unwrap(), "--out", d, "--gamma-grid", "0:2:0.5", "--n-boot", "0"]);
    assert!(out.status.success(), "{}", error_line(&out));
    let rows: Vec<Vec<String>> = records(&dir.path().join("bounds.csv"))
        .into_iter()
        .filter(|r| r[2] == "overall")
        .collect();
    assert_eq!(rows[0][4], rows[0][5]);
    for r in &rows {
        let (g, lo, hi): (f64, f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap(), r[5].parse().unwrap());
        assert!((hi - lo - 4.0 * g).abs() < 1e-12);
        assert!(r[6].is_empty());
    }
}

#[test]
fn failures_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p.to_str().unwrap().to_string()
    };

    let out = proxyport(&["estimate", "--unknown"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_line(&out).starts_with("error: kind=usage message="));

    let out = proxyport(&["estimate", "--data", &format!("{d}/absent.csv"), "--out", d]);
    assert_eq!(out.status.code(), Some(3));
    assert!(error_line(&out).starts_with("error: kind=io "));

    let bad = write("bad.csv", "study,arm,y,w1\n1,0,1.0,0.5\n1,2,1.0,0.5\n");
    let out = proxyport(&["estimate", "--data", &bad, "--out", d]);
    assert_eq!(out.status.code(), Some(4));
    assert!(error_line(&out).contains("line 3"), "{}", error_line(&out));

    let mut one_arm = String::from("study,arm,y,w1\n");
    for i in 0..6 {
        one_arm.push_str(&format!("1,{},{i},{}\n", i % 2, i as f64 * 0.5));
        one_arm.push_str(&format!("2,0,,{}\n", i as f64 * 0.5));
    }
    let p = write("one_arm.csv", &one_arm);
    let out = proxyport(&["estimate", "--data", &p, "--out", d]);
    assert_eq!(out.status.code(), Some(5));
    assert!(error_line(&out).starts_with("error: kind=validation"));

    let mut collinear = String::from("study,arm,y,w1,w2\n");
    for i in 0..8 {
        collinear.push_str(&format!("1,{},{},{i},{}\n", i % 2, i * i, 2 * i));
    }
    let p = write("collinear.csv", &collinear);
    let out = proxyport(&["estimate", "--data", &p, "--out", d, "--n-boot", "0"]);
    assert_eq!(out.status.code(), Some(6));
    let line = error_line(&out);
    assert!(line.contains("kind=estimation") && line.contains("collinear columns: w"), "{line}");
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 1);
}

#[test]
fn reproduce_writes_csv_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = proxyport(&["reproduce", "--figure", "6", "--seed", "2", "--out", d, "--plot", "--gamma-grid", "0:4:1"]);
    assert!(out.status.success(), "{}", error_line(&out));
    let rows = records(&dir.path().join("figure6.csv"));
    assert_eq!(rows.len(), 9 * 5);
    assert!(rows.iter().all(|r| r[1] == "0"));
    let svg = fs::read_to_string(dir.path().join("figure6.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(proxyport(&["reproduce", "--figure", "11"]).status.code(), Some(2));
}
