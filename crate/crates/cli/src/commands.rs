use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::Serialize;
use ssgp::dataset::{read_csv, RegressionDataset};
use ssgp::engine::{posterior, Engine};
use ssgp::kalman::train_hyperparameters;
use ssgp::kernels::KernelSpec;
use ssgp::quad::{compute_residuals, load_flight, synthesize_flight, write_flight_csv, Disturbance, SensorNoise, ShapeParams, Vehicle};
use ssgp::residual::{aligned_truth, rmse, FeatureSet, LearnerConfig, ResidualModel};
use ssgp::ssm::ModelFile;
use ssgp::timing::{run_bench, write_timing_csv, BenchConfig};
use ssgp::{Error, Result};

use crate::spec_file::SpecFile;
use crate::{BenchArgs, ConvertArgs, FitArgs, Mode, SynthArgs, TrainArgs};

fn output(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Validation(format!("cannot open {}: {e}", path.display())))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = output(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn load_dataset(path: &Path) -> Result<RegressionDataset> {
    read_csv(open(path)?).map_err(|e| match e {
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn mode_label(mode: Mode) -> &'static str {
    match mode {
        Mode::Filter => "filter",
        Mode::Smooth => "smooth",
    }
}

pub fn convert(a: ConvertArgs) -> Result<()> {
    let spec = SpecFile::load(&a.kernel)?;
    let gp = spec.gp(spec.input_dim().unwrap_or(1), a.order.approx())?;
    let model = gp.build()?;
    let sigma2: f64 = gp.kernels.iter().map(|k| k.sigma2).sum();
    let variance_residual = (model.prior_variance() - sigma2).abs() / sigma2;
    let file = ModelFile::from_model(&model, &gp.noise, &gp.kernels, Some(gp.order));
    write_json(&a.out, "model.json", &file)?;
    println!("state dimension: {}", model.state_dim());
    println!("stability margin: {:.6e}", model.stability_margin());
    println!("variance-match residual: {variance_residual:.3e}");
    println!("lyapunov residual: {:.3e}", model.lyapunov_residual());
    for w in &model.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {}", a.out.join("model.json").display());
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let spec = SpecFile::load(&a.kernel)?;
    let data = load_dataset(&a.data)?;
    let gp = spec.gp(data.input_dim(), a.order.approx())?;
    // Bad orders are input errors, not optimizer failures.
    gp.build()?;
    let mut trace = output(&a.out, "trace.csv")?;
    writeln!(trace, "evaluation,best_loglik")?;
    let result = match train_hyperparameters(&gp, &data, a.budget) {
        Ok(r) => r,
        Err(e) => {
            trace.flush()?;
            return Err(e);
        }
    };
    for (i, ll) in result.trace.iter().enumerate() {
        writeln!(trace, "{},{ll}", i + 1)?;
    }
    trace.flush()?;
    write_json(&a.out, "spec.json", &SpecFile::from_gp(&result.spec))?;
    println!(
        "loglik {:.6} -> {:.6} in {} evaluations",
        result.initial_loglik, result.loglik, result.evaluations
    );
    println!("wrote {} and {}", a.out.join("spec.json").display(), a.out.join("trace.csv").display());
    Ok(())
}

fn is_flight_log(path: &Path) -> Result<bool> {
    let mut header = String::new();
    BufReader::new(open(path)?).read_line(&mut header)?;
    Ok(header.split(',').any(|h| h.trim() == "qw"))
}

#[derive(Serialize)]
struct RegressionMetrics<'a> {
    command: &'a str,
    kind: &'a str,
    engine: Engine,
    mode: &'a str,
    input_dim: usize,
    n_train: usize,
    n_queries: usize,
    loglik: f64,
    rmse: Option<f64>,
    wall_time_ms: f64,
}

#[derive(Serialize)]
struct AxisMetrics {
    loglik: f64,
    evaluations: usize,
    kernels: Vec<KernelSpec>,
    sigma_noise2: f64,
}

#[derive(Serialize)]
struct FlightMetrics<'a> {
    command: &'a str,
    kind: &'a str,
    engine: Engine,
    mode: &'a str,
    features: FeatureSet,
    n_train: usize,
    n_queries: usize,
    skipped_steps: usize,
    rmse: Option<f64>,
    nominal_rmse: Option<f64>,
    axes: Vec<AxisMetrics>,
    wall_time_ms: f64,
}

pub fn fit(a: FitArgs) -> Result<()> {
    if a.engine == Engine::Exact && a.mode == Mode::Filter {
        eprintln!("note: the exact engine ignores --mode");
    }
    if is_flight_log(&a.data)? {
        fit_flight(a)
    } else {
        fit_regression(a)
    }
}

fn fit_regression(a: FitArgs) -> Result<()> {
    let spec = SpecFile::load(&a.kernel)?;
    let data = load_dataset(&a.data)?;
    let (qx, qy): (DMatrix<f64>, DVector<f64>) = match &a.queries {
        Some(p) => {
            let q = load_dataset(p)?;
            (q.x, q.y)
        }
        None => (data.x.clone(), data.y.clone()),
    };
    let gp = spec.gp(data.input_dim(), a.order.approx())?;
    let start = Instant::now();
    let post = posterior(&gp, &data, &qx, a.engine, a.mode.into(), None)?;
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let rmse = ((&post.mean - &qy).norm_squared() / qy.len() as f64).sqrt();

    let d = data.input_dim();
    let mut w = csv::Writer::from_writer(output(&a.out, "predictions.csv")?);
    let mut header: Vec<String> = (0..d).map(|c| if d == 1 { "x".into() } else { format!("x{c}") }).collect();
    header.extend(["mean", "var", "y"].map(String::from));
    w.write_record(&header)?;
    for i in 0..qx.nrows() {
        let mut row: Vec<String> = (0..d).map(|c| qx[(i, c)].to_string()).collect();
        row.extend([post.mean[i], post.var[i], qy[i]].map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;

    write_json(
        &a.out,
        "metrics.json",
        &RegressionMetrics {
            command: "fit",
            kind: "regression",
            engine: a.engine,
            mode: mode_label(a.mode),
            input_dim: d,
            n_train: data.len(),
            n_queries: qx.nrows(),
            loglik: post.loglik,
            rmse: Some(rmse),
            wall_time_ms,
        },
    )?;
    println!("loglik {:.6}, rmse {rmse:.6} over {} queries", post.loglik, qx.nrows());
    Ok(())
}

fn fit_flight(a: FitArgs) -> Result<()> {
    let spec = SpecFile::load(&a.kernel)?;
    let sidecar = a.vehicle.clone().unwrap_or_else(|| {
        a.data.parent().map_or_else(|| PathBuf::from("vehicle.json"), |p| p.join("vehicle.json"))
    });
    let vehicle = Vehicle::load(&sidecar).map_err(|e| match e {
        Error::Io(io) => Error::Validation(format!("cannot read vehicle sidecar {}: {io}", sidecar.display())),
        other => other,
    })?;
    let train_log = load_flight(&a.data, &vehicle)?;
    let train = compute_residuals(&train_log.samples)?;
    let test_log = match &a.queries {
        Some(p) => load_flight(p, &vehicle)?,
        None => train_log.clone(),
    };
    let test = compute_residuals(&test_log.samples)?;

    let config = LearnerConfig {
        features: a.features,
        kernel: spec.template().clone(),
        order: a.order.approx(),
        budget: a.budget,
        stride: a.stride,
        engine: a.engine,
        mode: a.mode.into(),
    };
    let start = Instant::now();
    let model = ResidualModel::fit(&train.records, &config)?;
    let forces = model.predict_forces(&test.records)?;
    let accel = model.predict_accel(&test.records)?;
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let truth = test_log.truth.as_ref().map(|t| aligned_truth(&test.records, t));

    let mut w = csv::Writer::from_writer(output(&a.out, "predictions.csv")?);
    let mut header = vec!["t", "dax", "day", "daz", "var_fx", "var_fy", "var_fz"];
    if truth.is_some() {
        header.extend(["gt_dax", "gt_day", "gt_daz"]);
    }
    w.write_record(&header)?;
    for (i, r) in test.records.iter().enumerate() {
        let mut row = vec![r.t];
        row.extend(accel[i].iter());
        row.extend(forces.var[i].iter());
        if let Some(t) = &truth {
            row.extend(t[i].iter());
        }
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;

    let model_rmse = truth.as_ref().map(|t| rmse(&accel, t));
    let nominal_rmse = truth.as_ref().map(|t| rmse(&vec![Vector3::zeros(); t.len()], t));
    write_json(
        &a.out,
        "metrics.json",
        &FlightMetrics {
            command: "fit",
            kind: "flight",
            engine: a.engine,
            mode: mode_label(a.mode),
            features: a.features,
            n_train: train.records.len().div_ceil(a.stride),
            n_queries: test.records.len(),
            skipped_steps: train.skipped + test.skipped,
            rmse: model_rmse,
            nominal_rmse,
            axes: model
                .axes
                .iter()
                .map(|m| AxisMetrics {
                    loglik: m.loglik,
                    evaluations: m.evaluations,
                    kernels: m.spec.kernels.clone(),
                    sigma_noise2: m.spec.noise.sigma_noise2,
                })
                .collect(),
            wall_time_ms,
        },
    )?;
    match (model_rmse, nominal_rmse) {
        (Some(m), Some(n)) => println!("residual rmse {m:.6} (nominal model {n:.6}) over {} steps", test.records.len()),
        _ => println!("predicted {} steps (no ground truth in the log)", test.records.len()),
    }
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    if a.reps < 3 {
        return Err(Error::Validation(format!("--reps must be at least 3, got {}", a.reps)));
    }
    if a.sizes.is_empty() || a.sizes.contains(&0) {
        return Err(Error::Validation("--sizes must list positive sizes".into()));
    }
    if a.dims.is_empty() || a.dims.contains(&0) {
        return Err(Error::Validation("--dims must list positive dimensions".into()));
    }
    let kernel = match &a.kernel {
        Some(p) => SpecFile::load(p)?.template().clone(),
        None => KernelSpec::rbf(1.0, 1.0),
    };
    let config = BenchConfig {
        sizes: a.sizes,
        reps: a.reps,
        kernels: vec![kernel],
        dims: a.dims,
        engines: a.engine.map_or_else(|| vec![Engine::Ssgp, Engine::Exact], |e| vec![e]),
        order: a.order.approx(),
        mode: a.mode.into(),
        seed: a.seed,
    };
    let rows = run_bench(&config, |c| {
        eprintln!(
            "{:>5} {:>9} d={} n={:<5} {:?}: {:.5} ± {:.5} ms/point",
            c.engine.to_string(),
            c.kernel,
            c.d,
            c.n,
            c.cache,
            c.mean_ms,
            c.std_ms
        )
    })?;
    write_timing_csv(output(&a.out, "timing.csv")?, &rows)?;
    println!("wrote {}", a.out.join("timing.csv").display());
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let vehicle = match &a.vehicle {
        Some(p) => Vehicle::load(p)?,
        None => Vehicle::default(),
    };
    let flight = synthesize_flight(
        a.shape,
        &ShapeParams::default(),
        &Disturbance { drag: a.drag, thrust_error: a.thrust_error },
        &vehicle,
        a.n,
        a.dt,
        &SensorNoise { velocity_std: a.noise, seed: a.seed },
    )?;
    write_flight_csv(output(&a.out, "flight.csv")?, &flight.samples, Some(&flight.truth))?;
    write_json(&a.out, "vehicle.json", &vehicle)?;
    println!("wrote {} samples to {}", flight.samples.len(), a.out.join("flight.csv").display());
    Ok(())
}
