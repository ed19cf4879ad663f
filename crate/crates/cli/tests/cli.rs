use std::path::Path;
use std::process::{Command, Output};

fn dfvm(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dfvm"))
        .args(args)
        .env("DFVM_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Header and records of a CSV file or string.
fn read_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn without_seconds(rows: &[Vec<String>], col: usize) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .filter(|(i, _)| *i != col)
                .map(|(_, v)| v.clone())
                .collect()
        })
        .collect()
}

const METRICS: [&str; 7] = [
    "step", "loss", "interior", "boundary", "re", "re0", "seconds",
];

#[test]
fn train_smoke_writes_run_directory() {
    let root = tempfile::tempdir().unwrap();
    let out = dfvm(
        &[
            "train",
            "--problem",
            "poisson-lshape",
            "--method",
            "dfvm-cube",
            "--steps",
            "200",
            "--n-eval",
            "2000",
        ],
        root.path(),
    );
    let stdout = ok(&out);
    let dir = root.path().join("poisson-lshape-dfvm-cube-s0");
    assert!(
        stdout.contains("re=") && stdout.contains("seconds="),
        "{stdout}"
    );
    assert!(stdout.contains(&dir.display().to_string()), "{stdout}");

    let (header, rows) = read_csv(&std::fs::read_to_string(dir.join("metrics.csv")).unwrap());
    assert_eq!(header, METRICS);
    assert!(rows.len() >= 2);
    assert_eq!(rows.last().unwrap()[0], "200");
    for r in &rows {
        assert!(r[5].is_empty());
        for (i, v) in r.iter().enumerate().filter(|(i, _)| *i != 5) {
            let x: f64 = v.parse().unwrap_or_else(|_| panic!("column {i}: {v}"));
            assert!(x.is_finite());
        }
    }
    assert!(dir.join("checkpoint.bin").is_file());
    assert!(dir.join("config.toml").is_file());
}

fn quick(extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = [
        "--steps",
        "12",
        "--eval-every",
        "4",
        "--n-interior",
        "40",
        "--n-boundary",
        "20",
        "--n-eval",
        "300",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run_quick(root: &Path, out: &Path, extra: &[&str]) -> String {
    let mut args = vec![
        "train".to_string(),
        "--out".into(),
        out.display().to_string(),
    ];
    args.extend(quick(extra));
    let a: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(&dfvm(&a, root));
    std::fs::read_to_string(out.join("metrics.csv")).unwrap()
}

#[test]
fn same_seed_gives_identical_metrics() {
    let root = tempfile::tempdir().unwrap();
    let args = ["--problem", "black-scholes", "--seed", "7"];
    let a = run_quick(root.path(), &root.path().join("a"), &args);
    let b = run_quick(root.path(), &root.path().join("b"), &args);
    let ((ha, ra), (hb, rb)) = (read_csv(&a), read_csv(&b));
    assert_eq!(ha, hb);
    assert_eq!(ra.len(), 4);
    assert!(
        ra.iter().all(|r| !r[5].is_empty()),
        "parabolic runs report re0"
    );
    // wall-clock seconds are the only column allowed to differ
    assert_eq!(without_seconds(&ra, 6), without_seconds(&rb, 6));

    let c = run_quick(
        root.path(),
        &root.path().join("c"),
        &["--problem", "black-scholes", "--seed", "8"],
    );
    assert_ne!(without_seconds(&read_csv(&c).1, 6), without_seconds(&ra, 6));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let root = tempfile::tempdir().unwrap();
    let first = root.path().join("first");
    let a = run_quick(
        root.path(),
        &first,
        &[
            "--problem",
            "poisson-hd",
            "--dim",
            "3",
            "--method",
            "dfvm-sphere",
            "--k",
            "6",
        ],
    );
    let text = std::fs::read_to_string(first.join("config.toml")).unwrap();
    let edited = root.path().join("edited.toml");
    let second = root.path().join("second");
    std::fs::write(
        &edited,
        text.replace(&first.display().to_string(), &second.display().to_string()),
    )
    .unwrap();
    ok(&dfvm(
        &["train", "--config", edited.to_str().unwrap()],
        root.path(),
    ));
    let b = std::fs::read_to_string(second.join("metrics.csv")).unwrap();
    assert_eq!(
        without_seconds(&read_csv(&a).1, 6),
        without_seconds(&read_csv(&b).1, 6)
    );
}

#[test]
fn invalid_configuration_exits_with_two() {
    let root = tempfile::tempdir().unwrap();
    let out = dfvm(&["train", "--steps", "5"], root.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("problem.name"));

    let bad = root.path().join("bad.toml");
    std::fs::write(
        &bad,
        "[problem]\nname = \"poisson-lshape\"\n\n[loss]\nradius = 0.1\n",
    )
    .unwrap();
    let out = dfvm(&["train", "--config", bad.to_str().unwrap()], root.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("radius") && err.contains("line 5"), "{err}");

    for args in [
        &["train", "--problem", "poisson-lshape", "--eps", "-1"][..],
        &["train", "--problem", "poisson-lshape", "--dim", "3"][..],
        &["train", "--problem", "heat"][..],
        &["train", "--problem", "poisson-lshape", "--method", "fem"][..],
        &[
            "train",
            "--problem",
            "poisson-lshape",
            "--estimator",
            "exact",
        ][..],
        &["train", "--problem", "poisson-lshape", "--lr", "0"][..],
        &[
            "compare",
            "--problem",
            "poisson-lshape",
            "--methods",
            "pinn",
        ][..],
    ] {
        assert_eq!(dfvm(args, root.path()).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn compare_emits_one_row_per_method() {
    let root = tempfile::tempdir().unwrap();
    let mut args = vec!["compare", "--problem", "poisson-hd", "--dim", "10"];
    let q = quick(&[]);
    args.extend(q.iter().map(String::as_str));
    let stdout = ok(&dfvm(&args, root.path()));
    let (header, rows) = read_csv(&stdout);
    assert_eq!(header, ["method", "re", "re0", "seconds", "timing"]);
    let methods: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(methods, ["dfvm-cube", "dfvm-sphere", "pinn"]);
    assert!(rows.iter().all(|r| r[2].is_empty() && r[4] == "sequential"));
    let file =
        std::fs::read_to_string(root.path().join("compare-poisson-hd-s0/compare.csv")).unwrap();
    assert_eq!(file, stdout);
}

#[test]
fn compare_of_parabolic_problem_reports_re0_and_repeats_exactly() {
    let root = tempfile::tempdir().unwrap();
    let mut args = vec![
        "compare",
        "--problem",
        "black-scholes",
        "--methods",
        "dfvm-cube,dfvm-cube,pinn",
    ];
    let q = quick(&[]);
    args.extend(q.iter().map(String::as_str));
    let (_, rows) = read_csv(&ok(&dfvm(&args, root.path())));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[2].parse::<f64>().is_ok()));
    assert_eq!(rows[0][..3], rows[1][..3]);
    assert_ne!(rows[0][1], rows[2][1]);

    args.push("--parallel");
    let (_, par) = read_csv(&ok(&dfvm(&args, root.path())));
    assert!(par.iter().all(|r| r[4] == "parallel"));
    assert_eq!(without_seconds(&par, 3)[0][..3], rows[0][..3]);
}

#[test]
fn bench_ad_has_one_row_per_dimension() {
    let root = tempfile::tempdir().unwrap();
    let args = [
        "bench-ad",
        "--dims",
        "2,5",
        "--width",
        "8",
        "--n-points",
        "2",
        "--min-ms",
        "1",
        "--step-dim",
        "3",
        "--step-iters",
        "1",
    ];
    let stdout = ok(&dfvm(&args, root.path()));
    let dir = root.path().join("bench-ad");
    let (header, rows) = read_csv(&std::fs::read_to_string(dir.join("bench_ad.csv")).unwrap());
    assert_eq!(
        header,
        ["d", "forward", "gradient", "second_order", "cube_flux"]
    );
    assert_eq!(
        rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(),
        ["2", "5"]
    );
    assert!(rows
        .iter()
        .flatten()
        .all(|v| v.parse::<f64>().unwrap() > 0.0));
    let (header, rows) = read_csv(&std::fs::read_to_string(dir.join("bench_steps.csv")).unwrap());
    assert_eq!(header, ["d", "method", "seconds_per_step"]);
    assert_eq!(rows.len(), 3);
    assert!(stdout.starts_with("d,forward,"));
}

fn estimate(args: &[&str]) -> (f64, f64, f64) {
    let root = tempfile::tempdir().unwrap();
    let mut all = vec!["estimate"];
    all.extend(args);
    let stdout = ok(&dfvm(&all, root.path()));
    let field = |key: &str| -> f64 {
        stdout
            .split_whitespace()
            .find_map(|kv| kv.strip_prefix(key))
            .unwrap_or_else(|| panic!("{key} in {stdout}"))
            .parse()
            .unwrap()
    };
    (field("estimate="), field("oracle="), field("gap="))
}

#[test]
fn estimate_reports_value_oracle_and_gap() {
    for est in ["q4", "q1"] {
        let (v, oracle, gap) =
            estimate(&["--field", "sumsq", "--est", est, "--d", "10", "--r", "1e-3"]);
        assert!((v - 20.0).abs() <= 1e-8, "{est}: {v}");
        assert!((oracle - 20.0).abs() <= 1e-6);
        // printed values carry 10 significant digits
        assert!((gap - (v - oracle).abs()).abs() <= 2e-8);
    }
    let (v, _, _) = estimate(&["--field", "linear", "--est", "cube", "--d", "4", "--k", "2"]);
    assert!(v.abs() <= 1e-8);

    let root = tempfile::tempdir().unwrap();
    let out = dfvm(
        &["estimate", "--field", "sumsq", "--est", "q7", "--d", "3"],
        root.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let out = dfvm(
        &["estimate", "--field", "cubic", "--est", "q1", "--d", "3"],
        root.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn list_problems_is_csv() {
    let root = tempfile::tempdir().unwrap();
    let (header, rows) = read_csv(&ok(&dfvm(&["list-problems"], root.path())));
    assert_eq!(
        header,
        [
            "name",
            "dim",
            "kind",
            "eps",
            "n_interior",
            "n_boundary",
            "width"
        ]
    );
    let names: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(
        names,
        ["poisson-hd", "poisson-lshape", "nonlinear", "black-scholes"]
    );
    assert_eq!(rows[3][2], "parabolic");
}
