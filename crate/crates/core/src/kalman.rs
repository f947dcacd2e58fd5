//! Sequential GP regression on a state-space model.
//!
//! A sweep walks the samples in order, advancing each block of the state by
//! its own input increment `|x_d[k] - x_d[k-1]|` and updating on the scalar
//! target. The RTS backward pass turns filtered marginals into posteriors
//! conditioned on the whole dataset, which for Markovian kernels coincide
//! with the batch GP posterior.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{RegressionDataset, SweepOrder};
use crate::error::{ensure, Error, Result};
use crate::kernels::{KernelFamily, KernelSpec, NoiseSpec};
use crate::optim;
use crate::ssm::{convert_additive, symmetrize, ApproxOrder, DiscreteStep, Lssm, StepCache};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Past iterates kept by the accelerated backfitting loop.
const ANDERSON_DEPTH: usize = 8;

/// Which data a prediction conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictMode {
    /// Only samples preceding the query in sweep order (streaming use).
    FilterOnly,
    /// All samples, via the backward smoothing pass.
    Smoothed,
}

/// Where a sweep event came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventSource {
    Data(usize),
    Query(usize),
}

/// Forward-pass output, one entry per event in sweep order.
#[derive(Debug, Clone)]
pub struct FilteredStates {
    pub sources: Vec<EventSource>,
    /// Input row of each event.
    pub inputs: Vec<Vec<f64>>,
    /// Predicted (prior-to-update) moments.
    pub pred_mean: Vec<DVector<f64>>,
    pub pred_cov: Vec<DMatrix<f64>>,
    /// Filtered moments (equal to the predicted ones at query events).
    pub mean: Vec<DVector<f64>>,
    pub cov: Vec<DMatrix<f64>>,
    /// Transition into each event from the previous one (identity for the first).
    pub transitions: Vec<DMatrix<f64>>,
    /// Innovations-form log-marginal likelihood of the observed events.
    pub loglik: f64,
}

/// Backward-pass output aligned with [`FilteredStates`].
#[derive(Debug, Clone)]
pub struct SmoothedStates {
    pub mean: Vec<DVector<f64>>,
    pub cov: Vec<DMatrix<f64>>,
}

/// Predictive moments of the latent function at query inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorResult {
    pub mean: DVector<f64>,
    pub var: DVector<f64>,
    pub loglik: f64,
    /// Number of slightly negative variances clamped to zero.
    pub clamped: usize,
}

/// A complete model description: kernels (one per input column), noise and
/// approximation orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSpec {
    pub kernels: Vec<KernelSpec>,
    pub noise: NoiseSpec,
    pub order: ApproxOrder,
}

impl GpSpec {
    pub fn siso(kernel: KernelSpec, noise: NoiseSpec, order: ApproxOrder) -> Self {
        GpSpec { kernels: vec![kernel], noise, order }
    }

    pub fn build(&self) -> Result<Lssm> {
        convert_additive(&self.kernels, &self.order)
    }
}

struct Event<'a> {
    source: EventSource,
    input: &'a [f64],
    y: Option<f64>,
}

fn row(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

fn check_model(model: &Lssm, d: usize) -> Result<()> {
    model.validate_dims()?;
    ensure!(
        model.n_inputs() == d,
        Dimension,
        "model has {} input block(s) but data has {d} column(s)",
        model.n_inputs()
    );
    Ok(())
}

/// Step for every block between two input rows, assembled block-diagonally.
fn assemble_step(
    model: &Lssm,
    prev: &[f64],
    next: &[f64],
    cache: Option<&StepCache>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let s = model.state_dim();
    let mut phi = DMatrix::identity(s, s);
    let mut qd = DMatrix::zeros(s, s);
    for (i, b) in model.blocks.iter().enumerate() {
        let delta = (next[b.input] - prev[b.input]).abs();
        if delta == 0.0 {
            continue;
        }
        let step: Arc<DiscreteStep> = match cache {
            Some(c) => c.get_or_insert(model, i, delta)?,
            None => Arc::new(model.discretize_block(i, delta)?),
        };
        phi.view_mut((b.offset, b.offset), (b.size, b.size)).copy_from(&step.phi);
        qd.view_mut((b.offset, b.offset), (b.size, b.size)).copy_from(&step.qd);
    }
    Ok((phi, qd))
}

fn sweep(model: &Lssm, noise: &NoiseSpec, events: &[Event<'_>], cache: Option<&StepCache>) -> Result<FilteredStates> {
    let s = model.state_dim();
    let n = events.len();
    let r = noise.sigma_noise2;
    let prior_var = model.prior_variance().abs().max(f64::MIN_POSITIVE);
    let ht = model.h.transpose();
    let eye = DMatrix::<f64>::identity(s, s);

    let mut out = FilteredStates {
        sources: Vec::with_capacity(n),
        inputs: Vec::with_capacity(n),
        pred_mean: Vec::with_capacity(n),
        pred_cov: Vec::with_capacity(n),
        mean: Vec::with_capacity(n),
        cov: Vec::with_capacity(n),
        transitions: Vec::with_capacity(n),
        loglik: 0.0,
    };

    let mut m = DVector::zeros(s);
    let mut p = model.pinf.clone();
    for (k, ev) in events.iter().enumerate() {
        let phi = if k == 0 {
            eye.clone()
        } else {
            let (phi, qd) = assemble_step(model, events[k - 1].input, ev.input, cache)?;
            m = &phi * &m;
            p = symmetrize(&phi * &p * phi.transpose() + qd);
            phi
        };
        out.pred_mean.push(m.clone());
        out.pred_cov.push(p.clone());

        if let Some(y) = ev.y {
            let ph = &p * &ht;
            let innov_var = (&model.h * &ph)[(0, 0)] + r;
            if !innov_var.is_finite() || innov_var <= 1e-12 * prior_var {
                return Err(Error::Divergence(format!(
                    "innovation variance {innov_var:e} at event {k} is singular or non-finite"
                )));
            }
            let innov = y - (&model.h * &m)[0];
            let gain = ph / innov_var;
            m += &gain * innov;
            // Joseph form keeps P symmetric positive semidefinite.
            let ikh = &eye - &gain * &model.h;
            p = symmetrize(&ikh * &p * ikh.transpose() + &gain * gain.transpose() * r);
            out.loglik -= 0.5 * (LN_2PI + innov_var.ln() + innov * innov / innov_var);
        }

        out.sources.push(ev.source);
        out.inputs.push(ev.input.to_vec());
        out.mean.push(m.clone());
        out.cov.push(p.clone());
        out.transitions.push(phi);
    }
    if !out.loglik.is_finite() {
        return Err(Error::Divergence("log-likelihood is not finite".into()));
    }
    Ok(out)
}

fn data_events(data: &RegressionDataset, rows: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    if data.ordering == SweepOrder::SortByInput {
        order.sort_by(|&a, &b| rows[a][0].total_cmp(&rows[b][0]));
    }
    order
}

/// Forward Kalman pass over the training data, started from the GP prior
/// `N(0, P∞)`.
pub fn filter_sweep(model: &Lssm, data: &RegressionDataset, noise: &NoiseSpec) -> Result<FilteredStates> {
    filter_sweep_cached(model, data, noise, None)
}

pub fn filter_sweep_cached(
    model: &Lssm,
    data: &RegressionDataset,
    noise: &NoiseSpec,
    cache: Option<&StepCache>,
) -> Result<FilteredStates> {
    data.validate()?;
    noise.validate()?;
    check_model(model, data.input_dim())?;
    let rows: Vec<Vec<f64>> = (0..data.len()).map(|i| row(&data.x, i)).collect();
    let events: Vec<Event<'_>> = data_events(data, &rows)
        .into_iter()
        .map(|i| Event { source: EventSource::Data(i), input: &rows[i], y: Some(data.y[i]) })
        .collect();
    sweep(model, noise, &events, cache)
}

/// Rauch–Tung–Striebel backward pass.
pub fn smooth(filtered: &FilteredStates) -> SmoothedStates {
    let n = filtered.mean.len();
    let mut mean = filtered.mean.clone();
    let mut cov = filtered.cov.clone();
    for k in (0..n.saturating_sub(1)).rev() {
        let phi = &filtered.transitions[k + 1];
        let cross = &filtered.cov[k] * phi.transpose();
        let gain = solve_right(&cross, &filtered.pred_cov[k + 1]);
        mean[k] = &filtered.mean[k] + &gain * (&mean[k + 1] - &filtered.pred_mean[k + 1]);
        cov[k] = symmetrize(&filtered.cov[k] + &gain * (&cov[k + 1] - &filtered.pred_cov[k + 1]) * gain.transpose());
    }
    SmoothedStates { mean, cov }
}

/// `X = B A⁻¹` for symmetric PSD `A`, falling back to a pseudo-inverse when
/// `A` is singular (noise-free steps).
fn solve_right(b: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = a.clone().cholesky() {
        return chol.solve(&b.transpose()).transpose();
    }
    let pinv = a.clone().pseudo_inverse(1e-12 * a.amax().max(f64::MIN_POSITIVE)).expect("non-negative tolerance");
    b * pinv
}

fn moments(model: &Lssm, m: &DVector<f64>, p: &DMatrix<f64>) -> (f64, f64) {
    let mean = (&model.h * m)[0];
    let var = (&model.h * p * model.h.transpose())[(0, 0)];
    (mean, var)
}

/// Predictive mean and latent variance at `queries` (`q × d`).
///
/// Scalar inputs with [`SweepOrder::SortByInput`] merge the queries into the
/// sorted sweep; otherwise they are appended after the data in the order
/// given. For additive multi-input models whose queries lie away from the
/// end of the training sweep, [`predict_additive`] is far more accurate.
pub fn predict_at(
    model: &Lssm,
    data: &RegressionDataset,
    noise: &NoiseSpec,
    queries: &DMatrix<f64>,
    mode: PredictMode,
) -> Result<PosteriorResult> {
    predict_at_cached(model, data, noise, queries, mode, None)
}

pub fn predict_at_cached(
    model: &Lssm,
    data: &RegressionDataset,
    noise: &NoiseSpec,
    queries: &DMatrix<f64>,
    mode: PredictMode,
    cache: Option<&StepCache>,
) -> Result<PosteriorResult> {
    data.validate()?;
    noise.validate()?;
    let d = data.input_dim();
    check_model(model, d)?;
    ensure!(
        queries.ncols() == d,
        Dimension,
        "queries have {} column(s), data has {d}",
        queries.ncols()
    );
    ensure!(queries.iter().all(|v| v.is_finite()), Validation, "queries contain NaN or infinite values");

    let q = queries.nrows();
    let mut mean = DVector::zeros(q);
    let mut var = DVector::zeros(q);

    let rows: Vec<Vec<f64>> = (0..data.len()).map(|i| row(&data.x, i)).collect();
    let qrows: Vec<Vec<f64>> = (0..q).map(|j| row(queries, j)).collect();

    let mut events: Vec<Event<'_>> = data_events(data, &rows)
        .into_iter()
        .map(|i| Event { source: EventSource::Data(i), input: &rows[i], y: Some(data.y[i]) })
        .chain(
            qrows
                .iter()
                .enumerate()
                .map(|(j, r)| Event { source: EventSource::Query(j), input: r, y: None }),
        )
        .collect();
    if data.ordering == SweepOrder::SortByInput {
        // Stable sort: data before queries at equal inputs.
        events.sort_by(|a, b| a.input[0].total_cmp(&b.input[0]));
    }
    let filtered = sweep(model, noise, &events, cache)?;
    let smoothed = (mode == PredictMode::Smoothed).then(|| smooth(&filtered));
    for (k, src) in filtered.sources.iter().enumerate() {
        if let EventSource::Query(j) = *src {
            let (mk, pk) = match &smoothed {
                Some(s) => (&s.mean[k], &s.cov[k]),
                None => (&filtered.mean[k], &filtered.cov[k]),
            };
            (mean[j], var[j]) = moments(model, mk, pk);
        }
    }
    let loglik = filtered.loglik;

    let mut clamped = 0;
    for v in var.iter_mut() {
        if *v < 0.0 {
            clamped += 1;
            *v = 0.0;
        }
    }
    Ok(PosteriorResult { mean, var, loglik, clamped })
}

/// Stopping rule for [`predict_additive`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackfitOptions {
    pub max_iterations: usize,
    /// Stop when no component changes by more than `tol · std(y)`.
    pub tol: f64,
}

impl Default for BackfitOptions {
    fn default() -> Self {
        BackfitOptions { max_iterations: 500, tol: 1e-9 }
    }
}

/// Output of [`predict_additive`].
#[derive(Debug, Clone)]
pub struct AdditivePosterior {
    /// `var` sums per-component conditional variances, which understates
    /// the joint posterior variance when components are confounded.
    pub posterior: PosteriorResult,
    pub iterations: usize,
    pub converged: bool,
}

/// Smoothed means of a scalar model at the training inputs.
fn smoothed_at_data(model: &Lssm, data: &RegressionDataset, noise: &NoiseSpec, cache: &StepCache) -> Result<DVector<f64>> {
    let filtered = filter_sweep_cached(model, data, noise, Some(cache))?;
    let smoothed = smooth(&filtered);
    let mut out = DVector::zeros(data.len());
    for (k, src) in filtered.sources.iter().enumerate() {
        if let EventSource::Data(i) = *src {
            out[i] = (&model.h * &smoothed.mean[k])[0];
        }
    }
    Ok(out)
}

/// Posterior of an additive GP (one kernel per input column) by backfitting.
///
/// Each pass refits every component with a scalar smoother on its own
/// sorted input against the partial residual of the others. The fixed point
/// is the exact additive-GP posterior mean, so the cost is linear in `n` per
/// pass; Anderson acceleration keeps the number of passes small when inputs
/// are correlated. The reported log-likelihood is that of the given-order sweep used
/// for training.
pub fn predict_additive(
    spec: &GpSpec,
    data: &RegressionDataset,
    queries: &DMatrix<f64>,
    options: &BackfitOptions,
) -> Result<AdditivePosterior> {
    data.validate()?;
    spec.noise.validate()?;
    let d = data.input_dim();
    ensure!(spec.kernels.len() == d, Dimension, "{} kernel(s) for {d} input column(s)", spec.kernels.len());
    ensure!(queries.ncols() == d, Dimension, "queries have {} column(s), data has {d}", queries.ncols());
    ensure!(queries.iter().all(|v| v.is_finite()), Validation, "queries contain NaN or infinite values");

    let models = spec
        .kernels
        .iter()
        .map(|k| crate::ssm::convert(k, &spec.order))
        .collect::<Result<Vec<_>>>()?;
    let caches: Vec<StepCache> = (0..d).map(|_| StepCache::new()).collect();
    let column = |c: usize, y: DVector<f64>| {
        RegressionDataset::with_ordering(data.x.columns(c, 1).into_owned(), y, SweepOrder::SortByInput)
    };
    let n = data.len();
    let scale = (data.y.norm_squared() / n as f64).sqrt().max(f64::MIN_POSITIVE);

    // One Gauss–Seidel pass over the components, stacked as `d` blocks of `n`.
    let pass = |stacked: &DVector<f64>| -> Result<DVector<f64>> {
        let mut out = stacked.clone();
        let mut total = DVector::<f64>::zeros(n);
        for c in 0..d {
            total += out.rows(c * n, n);
        }
        for c in 0..d {
            let old = out.rows(c * n, n).into_owned();
            let partial = &data.y - &total + &old;
            let fitted = smoothed_at_data(&models[c], &column(c, partial)?, &spec.noise, &caches[c])?;
            total += &fitted - &old;
            out.rows_mut(c * n, n).copy_from(&fitted);
        }
        Ok(out)
    };

    // Anderson acceleration of the (linear) pass map.
    let mut x = DVector::<f64>::zeros(n * d);
    let mut history: VecDeque<(DVector<f64>, DVector<f64>)> = VecDeque::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iterations {
        iterations += 1;
        let gx = pass(&x)?;
        let residual = &gx - &x;
        if d == 1 || residual.amax() <= options.tol * scale {
            x = gx;
            converged = true;
            break;
        }
        history.push_back((gx.clone(), residual.clone()));
        if history.len() > ANDERSON_DEPTH + 1 {
            history.pop_front();
        }
        x = if history.len() >= 2 {
            let m = history.len() - 1;
            let df = DMatrix::from_fn(n * d, m, |i, j| history[j + 1].1[i] - history[j].1[i]);
            let dg = DMatrix::from_fn(n * d, m, |i, j| history[j + 1].0[i] - history[j].0[i]);
            let svd = df.svd(true, true);
            let eps = 1e-12 * svd.singular_values.max();
            match svd.solve(&residual, eps) {
                Ok(gamma) if gamma.iter().all(|g| g.is_finite()) => &gx - dg * gamma,
                _ => gx,
            }
        } else {
            gx
        };
    }
    let parts: Vec<DVector<f64>> = (0..d).map(|c| x.rows(c * n, n).into_owned()).collect();
    let total = parts.iter().fold(DVector::<f64>::zeros(n), |acc, p| acc + p);

    let q = queries.nrows();
    let mut mean = DVector::zeros(q);
    let mut var = DVector::zeros(q);
    let mut clamped = 0;
    for c in 0..d {
        let partial = &data.y - &total + &parts[c];
        let post = predict_at_cached(
            &models[c],
            &column(c, partial)?,
            &spec.noise,
            &queries.columns(c, 1).into_owned(),
            PredictMode::Smoothed,
            Some(&caches[c]),
        )?;
        mean += post.mean;
        var += post.var;
        clamped += post.clamped;
    }
    let loglik = filter_sweep(&spec.build()?, data, &spec.noise)?.loglik;
    Ok(AdditivePosterior { posterior: PosteriorResult { mean, var, loglik, clamped }, iterations, converged })
}

/// Result of [`train_hyperparameters`].
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub spec: GpSpec,
    pub initial_loglik: f64,
    pub loglik: f64,
    pub evaluations: usize,
    /// Best-so-far log-likelihood after each evaluation.
    pub trace: Vec<f64>,
}

fn pack(spec: &GpSpec) -> Vec<f64> {
    let mut theta = Vec::new();
    for k in &spec.kernels {
        theta.push(k.z.ln());
        theta.push(k.qc.map_or(k.sigma2.ln(), f64::ln));
        if k.family == KernelFamily::Periodic {
            theta.push(k.omega0.unwrap_or(1.0).ln());
        }
    }
    if spec.noise.sigma_noise2 > 0.0 {
        theta.push(spec.noise.sigma_noise2.ln());
    }
    theta
}

fn unpack(template: &GpSpec, theta: &[f64]) -> GpSpec {
    let mut it = theta.iter().map(|t| t.exp());
    let mut spec = template.clone();
    for k in &mut spec.kernels {
        k.z = it.next().unwrap();
        let magnitude = it.next().unwrap();
        match k.qc {
            Some(_) => k.qc = Some(magnitude),
            None => k.sigma2 = magnitude,
        }
        if k.family == KernelFamily::Periodic {
            k.omega0 = it.next();
        }
    }
    if template.noise.sigma_noise2 > 0.0 {
        spec.noise.sigma_noise2 = it.next().unwrap();
    }
    spec
}

/// Innovations log-likelihood of `data` under `spec`, re-running the conversion.
pub fn log_likelihood(spec: &GpSpec, data: &RegressionDataset) -> Result<f64> {
    let model = spec.build()?;
    Ok(filter_sweep(&model, data, &spec.noise)?.loglik)
}

/// Maximizes the innovations log-likelihood over log-hyperparameters with a
/// Nelder–Mead search limited to `budget` objective evaluations.
///
/// Lengthscales, magnitudes (`sigma2`, or `qc` when set), periodic base
/// frequencies and a non-zero noise variance are trained; Matérn smoothness
/// stays fixed.
pub fn train_hyperparameters(spec: &GpSpec, data: &RegressionDataset, budget: usize) -> Result<TrainResult> {
    data.validate()?;
    ensure!(data.len() >= 4, Validation, "training needs at least 4 samples, got {}", data.len());
    for k in &spec.kernels {
        k.validate()?;
    }
    if budget == 0 {
        return Ok(TrainResult {
            spec: spec.clone(),
            initial_loglik: f64::NAN,
            loglik: f64::NAN,
            evaluations: 0,
            trace: Vec::new(),
        });
    }

    let mut last_error = None;
    let objective = |theta: &[f64]| -> f64 {
        match log_likelihood(&unpack(spec, theta), data) {
            Ok(ll) => -ll,
            Err(e) => {
                last_error = Some(e.to_string());
                f64::INFINITY
            }
        }
    };
    let result = optim::minimize(objective, &pack(spec), 0.5, budget);
    if !result.value.is_finite() {
        return Err(Error::Optimization(format!(
            "all {} evaluations were non-finite; last error: {}",
            result.evaluations,
            last_error.unwrap_or_else(|| "none".into())
        )));
    }
    let trace: Vec<f64> = result.trace.iter().map(|v| -v).collect();
    Ok(TrainResult {
        spec: unpack(spec, &result.x),
        initial_loglik: trace[0],
        loglik: -result.value,
        evaluations: result.evaluations,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::convert;
    use approx::assert_relative_eq;

    fn ou() -> Lssm {
        convert(&KernelSpec::matern(0.5, 1.0, 1.0), &ApproxOrder::default()).unwrap()
    }

    #[test]
    fn single_update() {
        let noise = NoiseSpec::new(0.1).unwrap();
        let data = RegressionDataset::from_scalar(&[0.0], &[2.0]).unwrap();
        let f = filter_sweep(&ou(), &data, &noise).unwrap();
        assert_relative_eq!(f.mean[0][0], 2.0 / 1.1, epsilon = 1e-14);
        let expected = -0.5 * (LN_2PI + 1.1f64.ln() + 4.0 / 1.1);
        assert_relative_eq!(f.loglik, expected, epsilon = 1e-14);
        let s = smooth(&f);
        assert_eq!(s.mean, f.mean);
        assert_eq!(s.cov, f.cov);
    }

    #[test]
    fn conflicting_duplicates_without_noise_diverge() {
        let noise = NoiseSpec::new(0.0).unwrap();
        let data = RegressionDataset::from_scalar(&[1.0, 1.0], &[0.0, 1.0]).unwrap();
        let err = filter_sweep(&ou(), &data, &noise).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)), "{err}");
    }

    #[test]
    fn smoothed_last_equals_filtered_last() {
        let noise = NoiseSpec::new(0.1).unwrap();
        let data = RegressionDataset::from_scalar(&[0.0, 0.4, 1.3, 2.0], &[0.1, 0.5, -0.2, 0.3]).unwrap();
        let f = filter_sweep(&ou(), &data, &noise).unwrap();
        let s = smooth(&f);
        assert_eq!(s.mean[3], f.mean[3]);
        assert_eq!(s.cov[3], f.cov[3]);
        for k in 0..4 {
            assert!(s.cov[k][(0, 0)] <= f.cov[k][(0, 0)] + 1e-15);
        }
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let noise = NoiseSpec::new(0.1).unwrap();
        let data = RegressionDataset::from_scalar(&[0.0, 0.5], &[1.0, 1.2]).unwrap();
        let qs = DMatrix::from_column_slice(2, 1, &[-60.0, 80.0]);
        for mode in [PredictMode::FilterOnly, PredictMode::Smoothed] {
            let post = predict_at(&ou(), &data, &noise, &qs, mode).unwrap();
            for j in 0..2 {
                assert!(post.mean[j].abs() < 1e-12);
                assert_relative_eq!(post.var[j], 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn query_dimension_checked() {
        let noise = NoiseSpec::new(0.1).unwrap();
        let data = RegressionDataset::from_scalar(&[0.0, 0.5], &[1.0, 1.2]).unwrap();
        let qs = DMatrix::zeros(1, 2);
        assert!(predict_at(&ou(), &data, &noise, &qs, PredictMode::Smoothed).is_err());
    }

    #[test]
    fn pack_roundtrip() {
        let spec = GpSpec {
            kernels: vec![KernelSpec::periodic(1.2, 0.7, 2.0), KernelSpec::matern(1.5, 0.4, 0.3)],
            noise: NoiseSpec::new(0.05).unwrap(),
            order: ApproxOrder::default(),
        };
        let theta = pack(&spec);
        assert_eq!(theta.len(), 6);
        let back = unpack(&spec, &theta);
        for (a, b) in back.kernels.iter().zip(&spec.kernels) {
            assert_relative_eq!(a.z, b.z, epsilon = 1e-14);
            assert_relative_eq!(a.sigma2, b.sigma2, epsilon = 1e-14);
        }
        assert_relative_eq!(back.noise.sigma_noise2, 0.05, epsilon = 1e-15);
    }

    #[test]
    fn zero_budget_returns_input() {
        let spec = GpSpec::siso(KernelSpec::rbf(1.0, 1.0), NoiseSpec::new(0.1).unwrap(), ApproxOrder::default());
        let data = RegressionDataset::from_scalar(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 0.0, -1.0]).unwrap();
        let r = train_hyperparameters(&spec, &data, 0).unwrap();
        assert_eq!(r.spec, spec);
        assert_eq!(r.evaluations, 0);
    }

    #[test]
    fn too_few_samples() {
        let spec = GpSpec::siso(KernelSpec::rbf(1.0, 1.0), NoiseSpec::new(0.1).unwrap(), ApproxOrder::default());
        let data = RegressionDataset::from_scalar(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!(train_hyperparameters(&spec, &data, 10).is_err());
    }
}
