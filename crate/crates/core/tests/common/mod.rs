//! Randomized invariants shared by the property suite and the acceptance run.
#![allow(dead_code)]

use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestCaseError};
use ssgp::dataset::RegressionDataset;
use ssgp::kalman::{predict_at, PredictMode};
use ssgp::kernels::{gram_matrix, KernelSpec, NoiseSpec};
use ssgp::ssm::{convert, discretize, ApproxOrder};

pub const CASES: u32 = 128;
pub const SEED: u64 = 0x5eed;

pub fn config() -> Config {
    Config { cases: CASES, rng_seed: RngSeed::Fixed(SEED), failure_persistence: None, ..Config::default() }
}

pub fn matern_nu() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.5), Just(1.5), Just(2.5)]
}

/// RBF (m = 6) or a Matérn kernel with moderate hyperparameters.
pub fn diffusion_kernel() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (0.3f64..3.0, 0.2f64..5.0).prop_map(|(z, s)| KernelSpec::rbf(z, s)),
        (matern_nu(), 0.3f64..3.0, 0.2f64..5.0).prop_map(|(nu, z, s)| KernelSpec::matern(nu, z, s)),
    ]
}

pub fn any_kernel() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        3 => diffusion_kernel(),
        1 => (0.3f64..2.0, 0.5f64..4.0, 0.2f64..5.0).prop_map(|(z, w, s)| KernelSpec::periodic(z, w, s)),
    ]
}

pub fn sorted_inputs(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, n).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v
    })
}

pub fn col(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}

fn fail(e: ssgp::Error) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

pub fn gram_case() -> impl Strategy<Value = (KernelSpec, Vec<f64>, f64)> {
    (any_kernel(), prop::collection::vec(-5.0f64..5.0, 1..64), 0.0f64..0.5)
}

pub fn gram_is_psd((spec, xs, noise): (KernelSpec, Vec<f64>, f64)) -> Result<(), TestCaseError> {
    let noise = NoiseSpec::new(noise).map_err(fail)?;
    let k = gram_matrix(&spec, &xs, &noise);
    prop_assert_eq!(&k, &k.transpose());
    let min = k.clone().symmetric_eigenvalues().min();
    prop_assert!(min >= -1e-8 * k.trace(), "min eigenvalue {min}");
    Ok(())
}

pub fn lyapunov_and_prior_variance(spec: KernelSpec) -> Result<(), TestCaseError> {
    let model = convert(&spec, &ApproxOrder::default()).map_err(fail)?;
    prop_assert!(model.lyapunov_residual() <= 1e-8, "{}", model.lyapunov_residual());
    let v = model.prior_variance();
    prop_assert!((v - spec.sigma2).abs() <= 1e-6 * spec.sigma2, "{v} vs {}", spec.sigma2);
    let pinf = &model.pinf;
    prop_assert!((pinf - pinf.transpose()).amax() <= 1e-12 * pinf.amax());
    prop_assert!(pinf.clone().symmetric_eigenvalues().min() >= -1e-10 * pinf.amax());
    Ok(())
}

pub fn semigroup_case() -> impl Strategy<Value = (KernelSpec, f64, f64)> {
    (any_kernel(), 0.0f64..2.0, 0.0f64..2.0)
}

pub fn semigroup_and_process_noise((spec, a, b): (KernelSpec, f64, f64)) -> Result<(), TestCaseError> {
    let model = convert(&spec, &ApproxOrder::default()).map_err(fail)?;
    let ell = spec.characteristic_length();
    let (d1, d2) = (a * ell, b * ell);
    let s1 = discretize(&model, d1).map_err(fail)?;
    let s2 = discretize(&model, d2).map_err(fail)?;
    let s12 = discretize(&model, d1 + d2).map_err(fail)?;
    let scale = s12.phi.amax().max(1.0);
    prop_assert!((&s1.phi * &s2.phi - &s12.phi).amax() <= 1e-10 * scale);
    let qd = &s12.qd;
    let qscale = model.pinf.amax().max(f64::MIN_POSITIVE);
    prop_assert!((qd - qd.transpose()).amax() <= 1e-12 * qscale);
    prop_assert!(qd.clone().symmetric_eigenvalues().min() >= -1e-10 * qscale);
    Ok(())
}

#[derive(Debug, Clone)]
pub struct MonotoneCase {
    pub spec: KernelSpec,
    pub xs: Vec<f64>,
    pub extra: f64,
    pub noise: f64,
    pub queries: Vec<f64>,
}

pub fn monotone_case() -> impl Strategy<Value = MonotoneCase> {
    (diffusion_kernel(), sorted_inputs(2..30), -5.0f64..5.0, 0.01f64..0.5, prop::collection::vec(-6.0f64..6.0, 1..10))
        .prop_map(|(spec, xs, extra, noise, queries)| MonotoneCase { spec, xs, extra, noise, queries })
}

/// Adding an observation never increases posterior variance, which stays
/// within `[0, σ²]`.
pub fn more_data_never_increases_variance(c: MonotoneCase) -> Result<(), TestCaseError> {
    let model = convert(&c.spec, &ApproxOrder::default()).map_err(fail)?;
    let noise = NoiseSpec::new(c.noise).map_err(fail)?;
    let ys: Vec<f64> = c.xs.iter().map(|x| x.sin()).collect();
    let base = RegressionDataset::from_scalar(&c.xs, &ys).map_err(fail)?;
    let mut xs2 = c.xs.clone();
    xs2.push(c.extra);
    let mut ys2 = ys.clone();
    ys2.push(0.3);
    let more = RegressionDataset::from_scalar(&xs2, &ys2).map_err(fail)?;
    let q = col(&c.queries);
    let before = predict_at(&model, &base, &noise, &q, PredictMode::Smoothed).map_err(fail)?;
    let after = predict_at(&model, &more, &noise, &q, PredictMode::Smoothed).map_err(fail)?;
    let s2 = c.spec.sigma2;
    for j in 0..c.queries.len() {
        prop_assert!(after.var[j] <= before.var[j] + 1e-9 * s2, "{} > {}", after.var[j], before.var[j]);
        prop_assert!(before.var[j] <= s2 * (1.0 + 1e-6));
        prop_assert!(before.var[j] >= 0.0);
    }
    Ok(())
}

pub fn reversion_case() -> impl Strategy<Value = (KernelSpec, Vec<f64>, f64, bool)> {
    (diffusion_kernel(), sorted_inputs(1..30), 0.01f64..0.5, prop::bool::ANY)
}

/// Ten length scales away from the data the posterior is the prior.
pub fn reverts_to_prior_far_from_data(
    (spec, xs, noise, side): (KernelSpec, Vec<f64>, f64, bool),
) -> Result<(), TestCaseError> {
    let model = convert(&spec, &ApproxOrder::default()).map_err(fail)?;
    let noise = NoiseSpec::new(noise).map_err(fail)?;
    let ys: Vec<f64> = xs.iter().map(|x| 1.0 + x.cos()).collect();
    let data = RegressionDataset::from_scalar(&xs, &ys).map_err(fail)?;
    let far = 10.0 * spec.characteristic_length();
    let q = if side { xs[xs.len() - 1] + far } else { xs[0] - far };
    let post = predict_at(&model, &data, &noise, &col(&[q]), PredictMode::Smoothed).map_err(fail)?;
    prop_assert!(post.mean[0].abs() <= 1e-3, "mean {}", post.mean[0]);
    prop_assert!((post.var[0] - spec.sigma2).abs() <= 1e-3 * spec.sigma2, "var {} vs {}", post.var[0], spec.sigma2);
    Ok(())
}
