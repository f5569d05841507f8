use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_wrcp");

fn wrcp(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = wrcp(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_bundle(dir: &Path, seed: &str) {
    ok(&[
        "gen", "--seed", seed, "--n-per-source", "60", "--n-cal", "90", "--n-test-sets", "4", "--m-per-test", "80",
        "--out", p(dir),
    ]);
}

/// Column `col` of a metrics CSV, parsed.
fn column(csv: &Path, col: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    let idx = lines.next().unwrap().split(',').position(|c| c == col).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

fn files_of(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                if rel != "config.txt" {
                    out.push((rel, std::fs::read(&path).unwrap()));
                }
            }
        }
    }
    out.sort();
    out
}

#[test]
fn default_gen_has_three_sources() {
    let t = tempfile::tempdir().unwrap();
    let out = ok(&["gen", "--n-test-sets", "3", "--out", p(&t.path().join("b"))]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("k=3"));
    for i in 0..3 {
        assert!(t.path().join(format!("b/sources/source_{i}.csv")).exists());
    }
    assert!(t.path().join("b/config.txt").exists());
}

#[test]
fn gen_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    small_bundle(&a, "7");
    small_bundle(&b, "7");
    assert_eq!(files_of(&a), files_of(&b));
}

#[test]
fn single_source_is_a_validation_error() {
    let t = tempfile::tempdir().unwrap();
    let out = wrcp(&["gen", "--k", "1", "--out", p(t.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 2 sources"));
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("c.txt");
    std::fs::write(&cfg, "bta=3\n").unwrap();
    let out = wrcp(&["train", "--config", p(&cfg), "--bundle", p(t.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_bundle_is_reported_with_path() {
    let out = wrcp(&["train", "--bundle", "/nonexistent/bundle"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/bundle"));
}

#[test]
fn config_file_is_overridden_by_flags_and_echoed() {
    let t = tempfile::tempdir().unwrap();
    let bundle = t.path().join("b");
    small_bundle(&bundle, "1");
    let cfg = t.path().join("c.txt");
    std::fs::write(&cfg, "epochs=3\nbeta=5\nvariant=erm\n").unwrap();
    let out = t.path().join("m");
    ok(&["train", "--config", p(&cfg), "--bundle", p(&bundle), "--epochs", "2", "--out", p(&out)]);
    assert_eq!(column(&out.join("metrics.csv"), "epoch").len(), 2);
    let echo = std::fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(echo.contains("epochs=2  # flag"));
    assert!(echo.contains("beta=5  # file"));
    assert!(echo.contains("lr=0.001  # default"));
}

#[test]
fn training_variants() {
    let t = tempfile::tempdir().unwrap();
    let bundle = t.path().join("b");
    small_bundle(&bundle, "3");
    let run = |name: &str, variant: &str, beta: &str| {
        let out = t.path().join(name);
        ok(&[
            "train", "--bundle", p(&bundle), "--variant", variant, "--beta", beta, "--epochs", "40", "--lr", "0.01",
            "--out", p(&out),
        ]);
        out
    };
    let erm = run("erm", "erm", "1");
    assert!(column(&erm.join("metrics.csv"), "wass_sum").iter().all(|&w| w == 0.0));

    let wr0 = run("wr0", "wrcp", "0");
    assert_eq!(
        column(&erm.join("metrics.csv"), "mse_sum"),
        column(&wr0.join("metrics.csv"), "mse_sum")
    );
    assert_eq!(
        std::fs::read(erm.join("model.ckpt")).unwrap(),
        std::fs::read(wr0.join("model.ckpt")).unwrap()
    );

    let wr8 = run("wr8", "wrcp", "8");
    let last = |d: &Path| *column(&d.join("metrics.csv"), "wass_sum").last().unwrap();
    assert!(last(&wr8) < last(&wr0), "{} vs {}", last(&wr8), last(&wr0));
}

#[test]
fn eval_requires_the_checkpoint_of_each_method() {
    let t = tempfile::tempdir().unwrap();
    let bundle = t.path().join("b");
    small_bundle(&bundle, "4");
    let erm = t.path().join("erm");
    ok(&["train", "--bundle", p(&bundle), "--variant", "erm", "--epochs", "5", "--out", p(&erm)]);
    let ckpt = erm.join("model.ckpt");
    let out = wrcp(&[
        "eval", "--bundle", p(&bundle), "--checkpoint", p(&ckpt), "--methods", "cp,wrcp", "--out",
        p(&t.path().join("e")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("WR-CP checkpoint"));

    let e = t.path().join("ok");
    ok(&["eval", "--bundle", p(&bundle), "--checkpoint", p(&ckpt), "--alphas", "0.1,0.5", "--out", p(&e)]);
    let eval = std::fs::read_to_string(e.join("eval.csv")).unwrap();
    assert_eq!(
        eval.lines().next().unwrap(),
        "trial,test_set,method,alpha,coverage,gap,avg_size,tau,cal_gap"
    );
    // 4 test sets x 3 methods x 2 levels
    assert_eq!(eval.lines().count(), 1 + 4 * 3 * 2);

    let gaps = column(&e.join("eval.csv"), "gap");
    let methods: Vec<String> = eval.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().to_string()).collect();
    let summary = std::fs::read_to_string(e.join("summary.csv")).unwrap();
    for line in summary.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let mine: Vec<f64> = gaps.iter().zip(&methods).filter(|(_, m)| *m == f[0]).map(|(g, _)| *g).collect();
        let mean = mine.iter().sum::<f64>() / mine.len() as f64;
        let reported: f64 = f[1].parse().unwrap();
        assert!((mean - reported).abs() <= 1e-8 * mean.abs().max(1.0), "{line}");
    }
}

#[test]
fn eval_rejects_dimension_mismatch() {
    let t = tempfile::tempdir().unwrap();
    let b2 = t.path().join("b2");
    small_bundle(&b2, "5");
    let b3 = t.path().join("b3");
    ok(&["gen", "--d", "3", "--n-per-source", "30", "--n-cal", "30", "--n-test-sets", "2", "--out", p(&b3)]);
    let erm = t.path().join("erm");
    ok(&["train", "--bundle", p(&b3), "--variant", "erm", "--epochs", "2", "--out", p(&erm)]);
    let out = wrcp(&[
        "eval", "--bundle", p(&b2), "--checkpoint", p(&erm.join("model.ckpt")), "--out", p(&t.path().join("e")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("features"));
}

#[test]
fn pareto_single_beta_is_iw_cp_and_svg_parses() {
    let t = tempfile::tempdir().unwrap();
    let bundle = t.path().join("b");
    small_bundle(&bundle, "6");
    let runs: Vec<_> = ["p1", "p2"]
        .iter()
        .map(|name| {
            let out = t.path().join(name);
            ok(&["pareto", "--bundle", p(&bundle), "--betas", "0", "--epochs", "5", "--out", p(&out)]);
            out
        })
        .collect();
    let csv = std::fs::read_to_string(runs[0].join("pareto.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].contains(",IW-CP,"), "{}", rows[0]);
    let svg = std::fs::read_to_string(runs[0].join("pareto.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).expect("well-formed XML");
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    assert!(!svg.contains("href"), "no external assets");
    assert_eq!(
        std::fs::read(runs[0].join("pareto.svg")).unwrap(),
        std::fs::read(runs[1].join("pareto.svg")).unwrap()
    );
}

#[test]
fn correlate_on_calibration_copies_is_undefined() {
    // Every test set equals the calibration set: all distances vanish and
    // every gap is identical, so no rank correlation exists.
    let t = tempfile::tempdir().unwrap();
    let bundle = t.path().join("b");
    small_bundle(&bundle, "8");
    let cal = std::fs::read(bundle.join("calibration.csv")).unwrap();
    for j in 0..4 {
        std::fs::write(bundle.join(format!("tests/test_{j}.csv")), &cal).unwrap();
    }
    let erm = t.path().join("erm");
    ok(&["train", "--bundle", p(&bundle), "--variant", "erm", "--epochs", "3", "--out", p(&erm)]);
    let out = t.path().join("c");
    ok(&["correlate", "--bundle", p(&bundle), "--checkpoint", p(&erm.join("model.ckpt")), "--out", p(&out)]);
    let text = std::fs::read_to_string(out.join("correlate.csv")).unwrap();
    for line in text.lines().skip(1) {
        assert!(line.ends_with(",undefined"), "{line}");
    }
    assert!(column(&out.join("distances.csv"), "wasserstein").iter().all(|&w| w == 0.0));
}

#[test]
fn correlate_refuses_two_test_sets() {
    let t = tempfile::tempdir().unwrap();
    let bundle = t.path().join("b");
    ok(&["gen", "--n-per-source", "30", "--n-cal", "30", "--n-test-sets", "2", "--out", p(&bundle)]);
    let erm = t.path().join("erm");
    ok(&["train", "--bundle", p(&bundle), "--variant", "erm", "--epochs", "2", "--out", p(&erm)]);
    let out = wrcp(&[
        "correlate", "--bundle", p(&bundle), "--checkpoint", p(&erm.join("model.ckpt")), "--out",
        p(&t.path().join("c")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bounds_with_zero_distance_are_zero() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("b");
    ok(&["bounds", "--out", p(&out)]);
    let text = std::fs::read_to_string(out.join("bounds.csv")).unwrap();
    assert!(text.contains("wasserstein_bound,0.00000000e0"));
    assert!(text.contains("shift_bound,0.00000000e0"));
    assert!(text.contains("finite_sample_bound,0.00000000e0"));

    let bad = wrcp(&["bounds", "--l", "-1", "--out", p(&out)]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("L = -1"));
}
