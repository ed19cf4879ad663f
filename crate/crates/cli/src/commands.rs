use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use dfvm_core::bench::{bench_ad as run_bench_ad, bench_steps, AdSettings, AD_HEADER, STEP_HEADER};
use dfvm_core::divest::fields::{Const, Linear, Sin1, SinAvg, SumSq};
use dfvm_core::divest::{
    brute_divergence, q1_sphere_ad, q2_sphere_diff, q3_sphere_onesided, q4_constant_alpha,
    q5_split, Diffusion, ScalarField,
};
use dfvm_core::loss::{flux_cube, CvSpec, Method};
use dfvm_core::problems::{by_name, NAMES};
use dfvm_core::sampling::sphere_directions;
use dfvm_core::train::{fmt_sig, train_with, MetricsRow, TrainError, TrainOutput, METRICS_HEADER};

use crate::config::{default_output_root, FileConfig, Resolved};
use crate::{BenchArgs, CliError, DiffusionName, EstimateArgs, Estimator, FieldName};

pub const COMPARE_HEADER: &str = "method,re,re0,seconds,timing";
pub const PROBLEMS_HEADER: &str = "name,dim,kind,eps,n_interior,n_boundary,width";

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Run(format!("{}: {e}", path.display()))
}

fn run_err(e: TrainError) -> CliError {
    match e {
        TrainError::Config { .. } => CliError::Usage(e.to_string()),
        e => CliError::Run(e.to_string()),
    }
}

/// Trains `r`, writing config.toml, metrics.csv (row by row) and checkpoint.bin
/// into its run directory.
fn run(r: &Resolved) -> Result<TrainOutput, CliError> {
    let dir = &r.output;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let cfg_path = dir.join("config.toml");
    fs::write(&cfg_path, r.to_toml()).map_err(io_err(&cfg_path))?;

    let metrics_path = dir.join("metrics.csv");
    let mut metrics = BufWriter::new(File::create(&metrics_path).map_err(io_err(&metrics_path))?);
    writeln!(metrics, "{METRICS_HEADER}").map_err(io_err(&metrics_path))?;
    let mut write_err = None;
    let mut train = r.train.clone();
    train.checkpoint = Some(dir.join("checkpoint.bin"));
    let out = train_with(
        &r.problem,
        &r.network,
        &r.loss,
        &train,
        |row: &MetricsRow, _| {
            if let Err(e) = writeln!(metrics, "{}", row.to_csv()).and_then(|_| metrics.flush()) {
                write_err.get_or_insert(e);
            }
        },
    )
    .map_err(run_err)?;
    if let Some(e) = write_err {
        return Err(io_err(&metrics_path)(e));
    }
    Ok(out)
}

fn re0_text(re0: Option<f64>) -> String {
    re0.map(fmt_sig).unwrap_or_default()
}

pub fn train(cfg: &FileConfig) -> Result<(), CliError> {
    let r = Resolved::from_file(cfg)?;
    let out = run(&r)?;
    let last = out.final_row();
    let re0 = last
        .re0
        .map(|v| format!(" re0={}", fmt_sig(v)))
        .unwrap_or_default();
    println!(
        "{} {} steps={} re={}{re0} seconds={:.3} dir={}",
        r.problem.name,
        r.loss.method.name(),
        last.step,
        fmt_sig(last.re),
        out.timings.total.as_secs_f64(),
        r.output.display()
    );
    Ok(())
}

pub fn compare(cfg: &FileConfig, methods: &[Method], parallel: bool) -> Result<(), CliError> {
    if methods.len() < 2 {
        return Err(CliError::Usage(
            "`methods`: compare needs at least two methods".into(),
        ));
    }
    let base = Resolved::from_file(cfg)?;
    let root = cfg.output.clone().unwrap_or_else(|| {
        default_output_root().join(format!(
            "compare-{}-s{}",
            base.problem.name, base.train.seed
        ))
    });
    let runs = methods
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let mut c = cfg.clone();
            c.method = Some(m);
            c.output = Some(root.join(format!("{i}-{}", m.name())));
            Resolved::from_file(&c)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let results: Vec<Result<TrainOutput, CliError>> = if parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = runs.iter().map(|r| s.spawn(move || run(r))).collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(CliError::Run("training thread panicked".into())))
                })
                .collect()
        })
    } else {
        runs.iter().map(run).collect()
    };

    let timing = if parallel { "parallel" } else { "sequential" };
    let mut text = format!("{COMPARE_HEADER}\n");
    for (r, out) in runs.iter().zip(results) {
        let out = out?;
        let last = out.final_row();
        text.push_str(&format!(
            "{},{},{},{},{timing}\n",
            r.loss.method.name(),
            fmt_sig(last.re),
            re0_text(last.re0),
            fmt_sig(out.timings.total.as_secs_f64())
        ));
    }
    let path = root.join("compare.csv");
    fs::write(&path, &text).map_err(io_err(&path))?;
    print!("{text}");
    Ok(())
}

pub fn bench_ad(a: &BenchArgs) -> Result<(), CliError> {
    let s = AdSettings {
        width: a.width,
        depth: a.depth,
        n_points: a.n_points,
        min_time: Duration::from_millis(a.min_ms),
        seed: a.seed,
        ..AdSettings::default()
    };
    let usage = |e: dfvm_core::bench::BenchError| CliError::Usage(e.to_string());
    let rows = run_bench_ad(&a.dims, &s).map_err(usage)?;
    let dir = a
        .out
        .clone()
        .unwrap_or_else(|| default_output_root().join("bench-ad"));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    let mut text = format!("{AD_HEADER}\n");
    for r in &rows {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    let path = dir.join("bench_ad.csv");
    fs::write(&path, &text).map_err(io_err(&path))?;
    print!("{text}");

    if let Some(d) = a.step_dim {
        let methods = [Method::DfvmCube, Method::DfvmSphere, Method::Pinn];
        let rows = bench_steps(d, &methods, a.step_iters, a.seed).map_err(usage)?;
        let mut text = format!("{STEP_HEADER}\n");
        for r in &rows {
            text.push_str(&r.to_csv());
            text.push('\n');
        }
        let path = dir.join("bench_steps.csv");
        fs::write(&path, &text).map_err(io_err(&path))?;
        print!("{text}");
    }
    Ok(())
}

pub fn estimate(a: &EstimateArgs) -> Result<(), CliError> {
    let d = a.d;
    if d == 0 {
        return Err(CliError::Usage("`d` must be positive".into()));
    }
    let field: Box<dyn ScalarField> = match a.field {
        FieldName::Sumsq => Box::new(SumSq(d)),
        FieldName::Sin1 => Box::new(Sin1(d)),
        FieldName::Sinavg => Box::new(SinAvg(d)),
        FieldName::Linear => Box::new(Linear {
            w: (1..=d).map(|i| i as f64 / d as f64).collect(),
            b: 0.5,
        }),
        FieldName::Const => Box::new(Const { dim: d, value: 1.0 }),
    };
    let u: &dyn ScalarField = field.as_ref();
    let diffusion = match a.diffusion {
        DiffusionName::Identity => Diffusion::Identity,
        DiffusionName::Quadratic => Diffusion::quadratic(),
    };
    let x = a.x.clone().unwrap_or_else(|| vec![0.3; d]);
    if x.len() != d {
        return Err(CliError::Usage(format!(
            "`x` has {} coordinates, expected {d}",
            x.len()
        )));
    }
    let usage = |e: &dyn std::fmt::Display| CliError::Usage(e.to_string());
    let dirs = || sphere_directions(d, a.k, true, a.seed).map_err(|e| usage(&e));
    let value = match a.est {
        Estimator::Q1 => q1_sphere_ad(&u, &diffusion, &x, a.r, &dirs()?),
        Estimator::Q2 => q2_sphere_diff(&u, &diffusion, &x, a.r, a.r, &dirs()?),
        Estimator::Q3 => q3_sphere_onesided(&u, &diffusion, &x, a.r, &dirs()?),
        Estimator::Q4 => {
            if !diffusion.is_identity() {
                return Err(CliError::Usage(
                    "q4 estimates the Laplacian; use --diffusion identity".into(),
                ));
            }
            q4_constant_alpha(&u, &x, a.r, &dirs()?)
        }
        Estimator::Q5 => q5_split(&u, &diffusion, &x, a.r, &dirs()?),
        Estimator::Cube => {
            let cv = CvSpec {
                eps: a.r,
                k: a.k,
                antithetic: true,
                qmc: true,
            };
            let flux = flux_cube(&u, &diffusion, &x, d, &cv, a.seed).map_err(|e| usage(&e))?;
            Ok(-flux)
        }
    }
    .map_err(|e| usage(&e))?;
    let oracle = brute_divergence(&u, &diffusion, &x, 1e-4).map_err(|e| usage(&e))?;
    println!(
        "estimate={} oracle={} gap={}",
        fmt_sig(value),
        fmt_sig(oracle),
        fmt_sig((value - oracle).abs())
    );
    Ok(())
}

pub fn list_problems() -> Result<(), CliError> {
    println!("{PROBLEMS_HEADER}");
    for name in NAMES {
        let p = by_name(name, None).map_err(|e| CliError::Run(e.to_string()))?;
        let kind = match p.is_parabolic() {
            true => "parabolic",
            false => "elliptic",
        };
        let d = &p.defaults;
        println!(
            "{},{},{kind},{},{},{},{}",
            p.name,
            p.spatial_dim(),
            d.eps,
            d.n_interior,
            d.n_boundary,
            d.width
        );
    }
    Ok(())
}
