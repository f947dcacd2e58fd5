//! Per-point inference timing of the state-space and dense engines.
//!
//! A cell times posterior inference for `n` training points and `n` query
//! points, excluding conversion and training, and reports wall time divided
//! by `n`. State-space runs are timed with a fresh step cache (`cold`) and
//! with a cache already holding every step of the workload (`warm`).

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{synthetic_sine, RegressionDataset};
use crate::engine::Engine;
use crate::error::{ensure, Result};
use crate::exact::ExactGp;
use crate::kalman::{predict_at_cached, GpSpec, PredictMode};
use crate::kernels::{KernelFamily, KernelSpec, NoiseSpec};
use crate::ssm::{ApproxOrder, StepCache};

/// Short workloads are repeated until one timing sample spans at least this.
pub const MIN_SAMPLE_MS: f64 = 20.0;

/// Sizes of the published timing table.
pub const DEFAULT_SIZES: [usize; 6] = [10, 50, 200, 1000, 2500, 6000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheState {
    Cold,
    Warm,
}

/// One row of the timing table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingCell {
    pub engine: Engine,
    pub kernel: String,
    pub d: usize,
    pub n: usize,
    pub cache: CacheState,
    pub reps: usize,
    /// Mean and sample standard deviation of per-point time, milliseconds.
    pub mean_ms: f64,
    pub std_ms: f64,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub reps: usize,
    /// Kernel applied to every input column.
    pub kernels: Vec<KernelSpec>,
    pub dims: Vec<usize>,
    pub engines: Vec<Engine>,
    pub order: ApproxOrder,
    pub mode: PredictMode,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: DEFAULT_SIZES.to_vec(),
            reps: 3,
            kernels: vec![KernelSpec::rbf(1.0, 1.0)],
            dims: vec![1],
            engines: vec![Engine::Ssgp, Engine::Exact],
            order: ApproxOrder::default(),
            mode: PredictMode::Smoothed,
            seed: 0,
        }
    }
}

/// Short label such as `rbf`, `matern32` or `periodic`.
pub fn kernel_label(spec: &KernelSpec) -> String {
    match spec.nu {
        Some(nu) if spec.family == KernelFamily::Matern => format!("matern{}2", (2.0 * nu).round() as i64),
        _ => spec.family.to_string(),
    }
}

/// Training data and queries for a timing cell: noisy sines with inputs
/// spread so the sample density stays fixed as `n` grows.
pub fn workload(n: usize, d: usize, seed: u64) -> Result<(RegressionDataset, DMatrix<f64>)> {
    let span = 0.1 * n as f64;
    let (data, _) = synthetic_sine(n, d, span, 10.0, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let queries = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>() * span);
    Ok((data, queries))
}

fn summarize(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Wall time in milliseconds of one inference run.
pub fn time_inference(
    spec: &GpSpec,
    data: &RegressionDataset,
    queries: &DMatrix<f64>,
    engine: Engine,
    mode: PredictMode,
    cache: Option<&StepCache>,
) -> Result<f64> {
    match engine {
        Engine::Ssgp => {
            let model = spec.build()?;
            let start = Instant::now();
            std::hint::black_box(predict_at_cached(&model, data, &spec.noise, queries, mode, cache)?);
            Ok(start.elapsed().as_secs_f64() * 1e3)
        }
        Engine::Exact => {
            let start = Instant::now();
            let gp = ExactGp::fit(&spec.kernels, &spec.noise, data)?;
            std::hint::black_box(gp.predict(queries)?);
            Ok(start.elapsed().as_secs_f64() * 1e3)
        }
    }
}

/// Times one `(engine, kernel, d, n)` cell. State-space cells return a cold
/// and a warm row; dense cells a single cold row.
pub fn time_cell(
    engine: Engine,
    kernel: &KernelSpec,
    d: usize,
    n: usize,
    config: &BenchConfig,
) -> Result<Vec<TimingCell>> {
    ensure!(config.reps >= 1, Validation, "reps must be >= 1");
    ensure!(n >= 1 && d >= 1, Validation, "n and d must be >= 1");
    let spec = GpSpec { kernels: vec![kernel.clone(); d], noise: NoiseSpec::new(0.1)?, order: config.order };
    let (data, queries) = workload(n, d, config.seed)?;
    let cell = |cache: CacheState, samples: &[f64]| {
        let (mean, std) = summarize(samples);
        TimingCell {
            engine,
            kernel: kernel_label(kernel),
            d,
            n,
            cache,
            reps: samples.len(),
            mean_ms: mean / n as f64,
            std_ms: std / n as f64,
        }
    };
    // One sample: enough back-to-back runs to reach MIN_SAMPLE_MS, with a
    // fresh cache per run unless `shared` is given.
    let sample = |shared: Option<&StepCache>, runs: usize| -> Result<f64> {
        let mut total = 0.0;
        for _ in 0..runs {
            let fresh = StepCache::new();
            let cache = match engine {
                Engine::Exact => None,
                Engine::Ssgp => Some(shared.unwrap_or(&fresh)),
            };
            total += time_inference(&spec, &data, &queries, engine, config.mode, cache)?;
        }
        Ok(total / runs as f64)
    };
    // The calibration run doubles as the first sample when it is long enough.
    let collect = |shared: Option<&StepCache>| -> Result<Vec<f64>> {
        let first = sample(shared, 1)?;
        let runs = ((MIN_SAMPLE_MS / first.max(1e-6)).ceil() as usize).clamp(1, 10_000);
        let mut out = if runs == 1 { vec![first] } else { Vec::new() };
        while out.len() < config.reps {
            out.push(sample(shared, runs)?);
        }
        Ok(out)
    };

    let mut rows = vec![cell(CacheState::Cold, &collect(None)?)];
    if engine == Engine::Ssgp {
        let cache = StepCache::new();
        sample(Some(&cache), 1)?;
        rows.push(cell(CacheState::Warm, &collect(Some(&cache))?));
    }
    Ok(rows)
}

/// Runs every cell of `config`, calling `progress` after each.
pub fn run_bench(config: &BenchConfig, mut progress: impl FnMut(&TimingCell)) -> Result<Vec<TimingCell>> {
    let mut rows = Vec::new();
    for &engine in &config.engines {
        for kernel in &config.kernels {
            for &d in &config.dims {
                for &n in &config.sizes {
                    for cell in time_cell(engine, kernel, d, n, config)? {
                        progress(&cell);
                        rows.push(cell);
                    }
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_timing_csv<W: Write>(writer: W, rows: &[TimingCell]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(kernel_label(&KernelSpec::rbf(1.0, 1.0)), "rbf");
        assert_eq!(kernel_label(&KernelSpec::matern(0.5, 1.0, 1.0)), "matern12");
        assert_eq!(kernel_label(&KernelSpec::matern(1.5, 1.0, 1.0)), "matern32");
        assert_eq!(kernel_label(&KernelSpec::matern(2.5, 1.0, 1.0)), "matern52");
        assert_eq!(kernel_label(&KernelSpec::periodic(1.0, 1.0, 1.0)), "periodic");
    }

    #[test]
    fn small_bench_runs() {
        let config = BenchConfig { sizes: vec![10, 20], reps: 2, ..BenchConfig::default() };
        let mut seen = 0;
        let rows = run_bench(&config, |_| seen += 1).unwrap();
        // ssgp: cold + warm per size; exact: cold only
        assert_eq!(rows.len(), 6);
        assert_eq!(seen, 6);
        assert!(rows.iter().all(|r| r.mean_ms > 0.0 && r.std_ms >= 0.0 && r.reps == 2));
        let mut buf = Vec::new();
        write_timing_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("engine,kernel,d,n,cache,reps,mean_ms,std_ms"));
    }

    #[test]
    fn summary_statistics() {
        let (m, s) = summarize(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert_eq!(summarize(&[4.0]), (4.0, 0.0));
    }
}
