use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use aif_cli::{ingest_str, CliError};
use aif_core::{aif_population, DesignedPsi, DistributionModel, NormOrder, PopulationContext};
use serde_json::Value;

fn aif(dir: &Path, args: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aif"))
        .current_dir(dir)
        .args(args.split_whitespace())
        .output()
        .expect("binary runs")
}

fn report(dir: &Path, out: &str) -> Value {
    let text = fs::read_to_string(dir.join(out).join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn csv_column(path: &Path, col: usize) -> (Vec<String>, Vec<String>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let col = r
        .records()
        .map(|rec| rec.unwrap()[col].to_string())
        .collect();
    (header, col)
}

#[test]
fn ingest_examples() {
    assert_eq!(ingest_str("1\n2\n3\n").unwrap(), vec![1.0, 2.0, 3.0]);
    assert_eq!(ingest_str("x\n1\n2\n").unwrap(), vec![1.0, 2.0]);
    match ingest_str("1\nfoo\n") {
        Err(CliError::Parse(m)) => assert!(m.contains("line 2"), "{m}"),
        other => panic!("{other:?}"),
    }
    assert!(ingest_str("1\nNaN\n").is_err());
    assert!(ingest_str("x\ny\n").is_err());
    assert!(ingest_str("1\ninf\n").is_err());
}

#[test]
fn fit_mean_on_three_points() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("d.csv"), "1\n2\n3\n").unwrap();
    let out = aif(dir.path(), "--command fit --psi mean --data d.csv --out o");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = report(dir.path(), "o");
    assert_eq!(r["results"]["estimate"]["value"], 2.0);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["command"], "fit");
}

#[test]
fn reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("d.csv"), "x\n0.3\n-1.2\n2.5\n0.9\n").unwrap();
    let args = |o: &str| {
        format!(
            "--command attack --psi huber --b 1.0 --data d.csv --eta 0.01 --p 2 --seed 7 --out {o}"
        )
    };
    assert!(aif(dir.path(), &args("a")).status.success());
    assert!(aif(dir.path(), &args("b")).status.success());
    let a = fs::read(dir.path().join("a/report.json")).unwrap();
    let b = fs::read(dir.path().join("b/report.json")).unwrap();
    assert_eq!(a, b);
    let (header, _) = csv_column(&dir.path().join("a/attack.csv"), 0);
    assert_eq!(header, ["n", "x", "delta", "x_attacked"]);
}

#[test]
fn exponential_design_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = aif(
        dir.path(),
        "--command design-tradeoff --model exponential-rate-1 --xi 3 --out d",
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = report(dir.path(), "d");
    let a = r["results"]["boundary_a"].as_f64().unwrap();
    assert!((a - 4.8).abs() < 0.05, "a = {a}");
    assert_eq!(r["results"]["kkt_failures"].as_array().unwrap().len(), 0);
    let (header, psi) = csv_column(&dir.path().join("d/psi.csv"), 1);
    assert_eq!(header, ["x", "psi"]);
    let psi: Vec<f64> = psi.iter().map(|v| v.parse().unwrap()).collect();
    assert!(psi.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    assert!((psi[0] + 1.0).abs() < 1e-6 && (psi.last().unwrap() - 3.0).abs() < 1e-6);

    let text = fs::read_to_string(dir.path().join("d/design.json")).unwrap();
    let design: DesignedPsi = serde_json::from_str(&text).unwrap();
    let ctx =
        PopulationContext::new(DistributionModel::ExponentialRate1, design.to_psi_spec()).unwrap();
    let direct = aif_population(&ctx, NormOrder::new(2.0).unwrap())
        .unwrap()
        .value;

    let out = aif(
        dir.path(),
        "--command aif-pop --psi d/design.json --model exponential --out p",
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = report(dir.path(), "p");
    let reimported = r["results"]["aif_value"].as_f64().unwrap();
    assert!((reimported - direct).abs() < 1e-8);
    let gamma = r["results"]["gamma_star"].as_f64().unwrap();
    assert!((gamma - 3.0).abs() < 1e-3);

    let closed = aif(
        dir.path(),
        "--command design-tradeoff --closed-form --xi 3 --out c",
    );
    assert!(closed.status.success());
    let c = report(dir.path(), "c")["results"]["boundary_a"]
        .as_f64()
        .unwrap();
    assert!((c - a).abs() < 1e-4);
}

#[test]
fn tradeoff_curve_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = aif(
        dir.path(),
        "--command tradeoff-curve --model shifted-exponential --xi-grid 1.5,2,3,5,10,50 --out t",
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, aifs) = csv_column(&dir.path().join("t/tradeoff_curve.csv"), 1);
    assert_eq!(header, ["xi", "aif", "gamma_star"]);
    let aifs: Vec<f64> = aifs.iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(aifs.len(), 6);
    assert!(aifs.windows(2).all(|w| w[1] <= w[0] + 1e-8));
    assert!(aifs[5] <= 1.01 && aifs.iter().all(|&v| v >= 1.0));
}

#[test]
fn convergence_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = aif(dir.path(), "--command converge --psi huber --b 1.5 --model standard-normal --n-grid 100,1000 --seed 3 --out c");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, n) = csv_column(&dir.path().join("c/convergence.csv"), 0);
    assert_eq!(
        header,
        ["N", "empirical_aif", "population_aif", "rel_error"]
    );
    assert_eq!(n, ["100", "1000"]);
}

#[test]
fn min_scale_design_and_l_aif() {
    let dir = tempfile::tempdir().unwrap();
    let out = aif(
        dir.path(),
        "--command design-min --kind scale --model uniform(0,1) --out m",
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let aif_value = report(dir.path(), "m")["results"]["design"]["summary"]["aif"]
        .as_f64()
        .unwrap();
    assert!((aif_value - 3f64.sqrt()).abs() < 1e-8);

    let out = aif(
        dir.path(),
        "--command l-aif --trim 0.25 --n 8 --p 2 --out l",
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = report(dir.path(), "l")["results"]["aif"]["value"]
        .as_f64()
        .unwrap();
    assert!((v - 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.csv"), "1\nfoo\n").unwrap();
    let parse = aif(dir.path(), "--command fit --psi mean --data bad.csv");
    assert_eq!(parse.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&parse.stderr).contains("line 2"));

    let missing = aif(dir.path(), "--command fit --psi mean");
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("--data"));

    let infeasible = aif(
        dir.path(),
        "--command design-tradeoff --model standard-normal --xi 1.1",
    );
    assert_eq!(infeasible.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&infeasible.stderr).contains("1.25"));

    fs::write(dir.path().join("flat.csv"), "1\n1\n1\n").unwrap();
    let no_root = aif(
        dir.path(),
        "--command fit --psi gaussian-scale-mle --data flat.csv --out x",
    );
    assert!(no_root.status.success());
    fs::write(dir.path().join("zeros.csv"), "0\n0\n").unwrap();
    let zeros = aif(
        dir.path(),
        "--command fit --psi gaussian-scale-mle --data zeros.csv",
    );
    assert_eq!(zeros.status.code(), Some(1));

    let unknown = aif(dir.path(), "--command nope");
    assert_eq!(unknown.status.code(), Some(2));
}
