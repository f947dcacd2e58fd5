//! Dense O(n³) Gaussian-process regression.
//!
//! This is the correctness oracle for the state-space path and the cubic
//! baseline in timing runs. It shares kernel evaluation with the rest of the
//! crate so any disagreement isolates the conversion.

use faer::linalg::solvers::Llt;
use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Mat, Par, Side};
use nalgebra::{DMatrix, DVector};

use crate::dataset::RegressionDataset;
use crate::error::{ensure, Error, Result};
use crate::kernels::{KernelSpec, NoiseSpec};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Queries per block when forming `L⁻¹ K*`, bounding peak memory.
const QUERY_CHUNK: usize = 512;

/// A factorized training set: `K + σ²_noise I = L Lᵀ` and `α = (K + σ²I)⁻¹ y`.
pub struct ExactGp {
    kernels: Vec<KernelSpec>,
    x: DMatrix<f64>,
    chol: Llt<f64>,
    alpha: Mat<f64>,
    /// Log-marginal likelihood of the training targets.
    pub loglik: f64,
    /// Diagonal jitter that had to be added (0 when none).
    pub jitter: f64,
}

impl std::fmt::Debug for ExactGp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExactGp")
            .field("n", &self.x.nrows())
            .field("loglik", &self.loglik)
            .field("jitter", &self.jitter)
            .finish()
    }
}

/// Predictive moments at query points plus the training log-likelihood.
#[derive(Debug)]
pub struct ExactPosterior {
    pub mean: DVector<f64>,
    pub var: DVector<f64>,
    pub loglik: f64,
    pub gp: ExactGp,
}

impl ExactGp {
    /// Factorizes the training covariance of an additive kernel
    /// (one kernel per input column).
    ///
    /// Jitter escalates from `1e-12` to `1e-8` times the prior variance if the
    /// plain factorization fails.
    pub fn fit(kernels: &[KernelSpec], noise: &NoiseSpec, data: &RegressionDataset) -> Result<Self> {
        data.validate()?;
        noise.validate()?;
        ensure!(
            kernels.len() == data.input_dim(),
            Dimension,
            "{} kernel(s) for {} input column(s)",
            kernels.len(),
            data.input_dim()
        );
        for k in kernels {
            k.validate()?;
        }
        let n = data.len();
        let x = &data.x;
        let scale: f64 = kernels.iter().map(|k| k.sigma2).sum();

        let mut cov = Mat::<f64>::from_fn(n, n, |i, j| {
            if j > i {
                return 0.0;
            }
            let mut v: f64 = kernels.iter().enumerate().map(|(d, k)| k.eval(x[(i, d)] - x[(j, d)])).sum();
            if i == j {
                v += noise.sigma_noise2;
            }
            v
        });

        let mut jitter = 0.0;
        let chol = loop {
            match Llt::new(cov.as_ref(), Side::Lower) {
                Ok(chol) => break chol,
                Err(_) => {
                    let next = if jitter == 0.0 { 1e-12 * scale } else { jitter * 10.0 };
                    if next > 1e-8 * scale * (1.0 + 1e-9) {
                        return Err(Error::Conditioning(format!(
                            "covariance matrix is not positive definite even with jitter {jitter:e}"
                        )));
                    }
                    for i in 0..n {
                        cov[(i, i)] += next - jitter;
                    }
                    jitter = next;
                }
            }
        };
        drop(cov);

        let mut alpha = Mat::<f64>::from_fn(n, 1, |i, _| data.y[i]);
        solve_lower_triangular_in_place(chol.L(), alpha.as_mut(), Par::Seq);
        let quad: f64 = (0..n).map(|i| alpha[(i, 0)] * alpha[(i, 0)]).sum();
        solve_upper_triangular_in_place(chol.L().transpose(), alpha.as_mut(), Par::Seq);
        let logdet: f64 = (0..n).map(|i| 2.0 * chol.L()[(i, i)].ln()).sum();
        let loglik = -0.5 * logdet - 0.5 * quad - 0.5 * n as f64 * LN_2PI;

        Ok(ExactGp { kernels: kernels.to_vec(), x: data.x.clone(), chol, alpha, loglik, jitter })
    }

    /// Predictive mean `k*ᵀ α` and latent variance `k(x*, x*) - k*ᵀ (K + σ²I)⁻¹ k*`.
    pub fn predict(&self, queries: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        ensure!(
            queries.ncols() == self.x.ncols(),
            Dimension,
            "queries have {} column(s), model expects {}",
            queries.ncols(),
            self.x.ncols()
        );
        let n = self.x.nrows();
        let q = queries.nrows();
        let prior: f64 = self.kernels.iter().map(|k| k.eval(0.0)).sum();
        let mut mean = DVector::zeros(q);
        let mut var = DVector::zeros(q);

        let mut start = 0;
        while start < q {
            let width = QUERY_CHUNK.min(q - start);
            let mut kstar = Mat::<f64>::from_fn(n, width, |i, j| {
                self.kernels
                    .iter()
                    .enumerate()
                    .map(|(d, k)| k.eval(self.x[(i, d)] - queries[(start + j, d)]))
                    .sum()
            });
            for j in 0..width {
                mean[start + j] = (0..n).map(|i| kstar[(i, j)] * self.alpha[(i, 0)]).sum();
            }
            solve_lower_triangular_in_place(self.chol.L(), kstar.as_mut(), Par::Seq);
            for j in 0..width {
                let explained: f64 = (0..n).map(|i| kstar[(i, j)] * kstar[(i, j)]).sum();
                var[start + j] = (prior - explained).max(0.0);
            }
            start += width;
        }
        Ok((mean, var))
    }
}

/// Exact posterior of a single-input GP at `queries` (`q × 1`).
pub fn exact_posterior(
    spec: &KernelSpec,
    noise: &NoiseSpec,
    data: &RegressionDataset,
    queries: &DMatrix<f64>,
) -> Result<ExactPosterior> {
    exact_posterior_additive(std::slice::from_ref(spec), noise, data, queries)
}

pub fn exact_posterior_additive(
    kernels: &[KernelSpec],
    noise: &NoiseSpec,
    data: &RegressionDataset,
    queries: &DMatrix<f64>,
) -> Result<ExactPosterior> {
    let gp = ExactGp::fit(kernels, noise, data)?;
    let (mean, var) = gp.predict(queries)?;
    Ok(ExactPosterior { mean, var, loglik: gp.loglik, gp })
}

/// `-½ log|K| - ½ yᵀ K⁻¹ y - (n/2) log 2π` with `K = k(X, X) + σ²_noise I`.
pub fn exact_loglik(spec: &KernelSpec, noise: &NoiseSpec, data: &RegressionDataset) -> Result<f64> {
    Ok(ExactGp::fit(std::slice::from_ref(spec), noise, data)?.loglik)
}
